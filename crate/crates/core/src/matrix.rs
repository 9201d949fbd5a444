//! Dense real and complex matrices plus the small set of primitives every
//! solver in this crate is built from: compact SVD, Procrustes
//! orthonormalization, entrywise sign, L1 norms and realification.

use std::fmt;
use std::io::{BufRead, Write};
use std::ops::Deref;

use nalgebra::{DMatrix, DVector, SVD};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::rng;
use crate::tol;

/// Dense real matrix whose entries are all finite.
///
/// Dereferences to [`nalgebra::DMatrix<f64>`] for read-only arithmetic.
#[derive(Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Wraps `m`, rejecting empty shapes and non-finite entries.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Dimension(format!(
                "matrix must be non-empty, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if let Some((i, _)) = m.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            let (row, col) = (i % m.nrows(), i / m.nrows());
            return Err(Error::NonFinite { row, col });
        }
        Ok(Matrix(m))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "{} entries supplied for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        Self::new(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some(i) = rows.iter().position(|r| r.len() != ncols) {
            return Err(Error::Dimension(format!(
                "row {i} has {} entries, expected {ncols}",
                rows[i].len()
            )));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::from_row_slice(rows.len(), ncols, &flat)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        Matrix(DMatrix::identity(n, n))
    }

    /// Internal constructor for results of arithmetic on finite inputs.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.iter().all(|v| v.is_finite()));
        Matrix(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    pub fn matmul(&self, rhs: &Matrix) -> Matrix {
        Matrix::wrap(&self.0 * &rhs.0)
    }

    /// Frobenius norm.
    pub fn frobenius(&self) -> f64 {
        self.0.norm()
    }

    /// Largest absolute deviation of `selfᵀ·self` from the identity.
    pub fn orthonormality_residual(&self) -> f64 {
        let g = self.0.transpose() * &self.0;
        let n = g.nrows();
        (&g - DMatrix::<f64>::identity(n, n)).amax()
    }

    pub fn is_orthonormal(&self) -> bool {
        self.rows() >= self.cols() && self.orthonormality_residual() <= tol::ORTHONORMAL
    }

    /// Reads the matrix CSV format: one row per line, comma-separated
    /// decimals, no header. Blank lines are ignored; ragged rows are rejected.
    pub fn read_csv<R: BufRead>(reader: R) -> Result<Matrix> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() {
                continue;
            }
            let row = trimmed
                .split(',')
                .map(|field| {
                    field.trim().parse::<f64>().map_err(|e| Error::Parse {
                        line: i + 1,
                        msg: format!("{field:?}: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: i + 1,
                        msg: format!("ragged row: {} fields, expected {}", row.len(), first.len()),
                    });
                }
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse { line: 0, msg: "no data rows".into() });
        }
        Matrix::from_rows(&rows).map_err(|e| match e {
            Error::NonFinite { row, col } => Error::Parse {
                line: row + 1,
                msg: format!("non-finite value in column {}", col + 1),
            },
            other => other,
        })
    }

    /// Writes the matrix CSV format using shortest round-trip float formatting.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.rows() {
            let line: Vec<String> = self.0.row(i).iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

impl Deref for Matrix {
    type Target = DMatrix<f64>;
    fn deref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl AsRef<DMatrix<f64>> for Matrix {
    fn as_ref(&self) -> &DMatrix<f64> {
        &self.0
    }
}

impl TryFrom<DMatrix<f64>> for Matrix {
    type Error = Error;
    fn try_from(m: DMatrix<f64>) -> Result<Self> {
        Matrix::new(m)
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Matrix({}x{}){}", self.rows(), self.cols(), self.0)
    }
}

/// Dense complex matrix with finite real and imaginary parts.
#[derive(Clone, PartialEq, Debug)]
pub struct ComplexMatrix(DMatrix<Complex64>);

impl ComplexMatrix {
    pub fn new(m: DMatrix<Complex64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Dimension("complex matrix must be non-empty".into()));
        }
        if let Some((i, _)) = m
            .iter()
            .enumerate()
            .find(|(_, z)| !(z.re.is_finite() && z.im.is_finite()))
        {
            return Err(Error::NonFinite { row: i % m.nrows(), col: i / m.nrows() });
        }
        Ok(ComplexMatrix(m))
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        ComplexMatrix(DMatrix::zeros(rows, cols))
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn matmul(&self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix(&self.0 * &rhs.0)
    }

    pub fn frobenius(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn as_dmatrix(&self) -> &DMatrix<Complex64> {
        &self.0
    }
}

impl Deref for ComplexMatrix {
    type Target = DMatrix<Complex64>;
    fn deref(&self) -> &DMatrix<Complex64> {
        &self.0
    }
}

/// Compact SVD `X ≈ U·diag(σ)·Vᵀ` restricted to the top `k` triplets.
#[derive(Clone, Debug)]
pub struct CompactSvd {
    pub u: Matrix,
    pub sigma: Vec<f64>,
    pub v: Matrix,
}

impl CompactSvd {
    pub fn rank(&self) -> usize {
        self.sigma.len()
    }

    pub fn reconstruct(&self) -> Matrix {
        let s = DMatrix::from_diagonal(&DVector::from_column_slice(&self.sigma));
        Matrix::wrap(&self.u.0 * s * self.v.0.transpose())
    }
}

/// Numerical rank of `x` relative to its largest singular value.
pub fn numerical_rank(x: &DMatrix<f64>) -> usize {
    let sv = x.singular_values();
    let smax = sv.max();
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > tol::RANK_RELATIVE * smax).count()
}

fn full_svd(x: &DMatrix<f64>) -> Result<SVD<f64, nalgebra::Dyn, nalgebra::Dyn>> {
    SVD::try_new(x.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Convergence(format!("SVD of {}x{} matrix", x.nrows(), x.ncols())))
}

/// Top-`k` singular triplets of `x`, σ descending.
///
/// Column signs are fixed so that the largest-magnitude entry of every
/// column of `u` is positive (first such entry on ties); the matching `v`
/// column is flipped with it. Trailing σ may be zero when `rank(x) < k`.
pub fn compact_svd(x: &Matrix, k: usize) -> Result<CompactSvd> {
    let (d, n) = x.shape();
    if k == 0 || k > d.min(n) {
        return Err(Error::Dimension(format!(
            "k = {k} must lie in 1..={} for a {d}x{n} matrix",
            d.min(n)
        )));
    }
    let svd = full_svd(&x.0)?;
    let mut u = svd.u.expect("u requested").columns(0, k).into_owned();
    let mut v = svd.v_t.expect("v requested").rows(0, k).transpose();
    let sigma: Vec<f64> = svd.singular_values.iter().take(k).copied().collect();
    for j in 0..k {
        let col = u.column(j);
        let mut best = 0;
        for i in 1..col.len() {
            if col[i].abs() > col[best].abs() {
                best = i;
            }
        }
        if col[best] < 0.0 {
            u.column_mut(j).neg_mut();
            v.column_mut(j).neg_mut();
        }
    }
    Ok(CompactSvd { u: Matrix::wrap(u), sigma, v: Matrix::wrap(v) })
}

/// Polar factor `U′V′ᵀ` of `m` without a rank check. The result is
/// orthonormal even when `m` is rank deficient (the factor is then not unique).
pub(crate) fn polar_factor(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let svd = full_svd(m)?;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v requested");
    Ok(u * vt)
}

/// Closest orthonormal matrix to `m` in Frobenius norm, i.e. the maximizer of
/// `trace(Qᵀm)` over matrices with orthonormal columns.
pub fn procrustes_orthonormalize(m: &Matrix) -> Result<Matrix> {
    let (rows, cols) = m.shape();
    if rows < cols {
        return Err(Error::Dimension(format!("Procrustes needs rows >= cols, got {rows}x{cols}")));
    }
    let svd = full_svd(&m.0)?;
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax <= 0.0 || smin <= tol::RANK_RELATIVE * smax {
        return Err(Error::Degenerate(format!(
            "Procrustes input is rank deficient (σ_min = {smin:e}, σ_max = {smax:e})"
        )));
    }
    Ok(Matrix::wrap(svd.u.expect("u requested") * svd.v_t.expect("v requested")))
}

#[inline]
pub(crate) fn sgn(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Entrywise sign with `sgn(0) = +1`, so the result is always antipodal.
pub fn sign_matrix(m: &Matrix) -> Matrix {
    Matrix::wrap(m.0.map(sgn))
}

pub(crate) fn sign_of(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.map(sgn)
}

/// `Σ|m_ij|`.
pub fn l1_entrywise_norm(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v.abs()).sum()
}

/// Sum of singular values.
pub fn nuclear_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().sum()
}

/// Stacks real parts above imaginary parts: `M×T` complex → `2M×T` real.
pub fn realify(y: &ComplexMatrix) -> Matrix {
    let (m, t) = y.shape();
    let out = DMatrix::from_fn(2 * m, t, |i, j| if i < m { y[(i, j)].re } else { y[(i - m, j)].im });
    Matrix::wrap(out)
}

/// Haar-distributed matrix with orthonormal columns, drawn from `rng`.
pub fn random_orthonormal_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Matrix> {
    if cols == 0 || rows < cols {
        return Err(Error::Dimension(format!("random orthonormal needs rows >= cols >= 1, got {rows}x{cols}")));
    }
    let g = DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    // Fix the QR sign ambiguity so the distribution is exactly Haar.
    for j in 0..cols {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    Ok(Matrix::wrap(q))
}

/// Seeded random orthonormal `rows×cols` matrix.
pub fn random_orthonormal(rows: usize, cols: usize, seed: u64) -> Result<Matrix> {
    let mut r = rng::substream(seed, "random-orthonormal", 0);
    random_orthonormal_with(rows, cols, &mut r)
}

/// Seeded `rows×cols` matrix of i.i.d. standard normal entries.
pub fn random_gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut r = rng::substream(seed, "random-gaussian", 0);
    Matrix::wrap(DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal)))
}
