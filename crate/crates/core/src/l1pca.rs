//! L1-norm principal components: maximize `‖QᵀX‖₁,₁` over orthonormal `Q`.
//!
//! Three approximate solvers are provided (greedy fixed-point with nullspace
//! deflation, joint alternating sign/Procrustes, single-bit flipping) plus an
//! exhaustive single-component oracle for small `N`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{compact_svd, l1_entrywise_norm, numerical_rank, polar_factor, sgn, sign_of, Matrix};
use crate::rng;
use crate::tol;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Solver {
    Greedy,
    Joint,
    BitFlip,
    Exhaustive,
}

/// How the antipodal binary matrix `B` is initialized.
#[derive(Clone, Debug, Default)]
pub enum InitPolicy {
    /// `B = sgn(Xᵀ U_L2)` from the top-`k` left singular vectors.
    #[default]
    L2,
    /// Uniform random `±1` entries from the solver seed.
    Random,
    /// An explicit `N×k` matrix; entries are passed through `sgn`.
    Binary(Matrix),
    /// `B = sgn(XᵀQ)` for an explicit `D×k` basis.
    Basis(Matrix),
}

#[derive(Clone, Debug)]
pub struct L1PcaOptions {
    pub init: InitPolicy,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for L1PcaOptions {
    fn default() -> Self {
        L1PcaOptions { init: InitPolicy::L2, max_iter: 1000, seed: 0 }
    }
}

#[derive(Clone, Debug)]
pub struct L1PcaResult {
    /// `D×K` orthonormal basis.
    pub q: Matrix,
    /// `‖QᵀX‖₁,₁` of the returned basis.
    pub metric: f64,
    pub iterations: usize,
    pub converged: bool,
    pub solver: Solver,
    /// Final binary matrix (`N×K`). For the greedy solver column `c` holds the
    /// fixed point found on the `c`-times deflated data.
    pub b: Matrix,
    /// Objective value after every iteration (bit flips for [`Solver::BitFlip`]).
    pub trace: Vec<f64>,
}

/// `‖QᵀX‖₁,₁` for orthonormal `q`.
pub fn l1_metric(q: &Matrix, x: &Matrix) -> Result<f64> {
    if q.rows() != x.rows() {
        return Err(Error::Dimension(format!("q has {} rows but x has {}", q.rows(), x.rows())));
    }
    if !q.is_orthonormal() {
        return Err(Error::Contract(format!(
            "q is not orthonormal (residual {:e})",
            q.orthonormality_residual()
        )));
    }
    Ok(metric_unchecked(q, x))
}

fn metric_unchecked(q: &DMatrix<f64>, x: &DMatrix<f64>) -> f64 {
    l1_entrywise_norm(&(q.transpose() * x))
}

fn check_k(x: &Matrix, k: usize) -> Result<()> {
    if k == 0 || k > x.rows().min(x.cols()) {
        return Err(Error::Dimension(format!(
            "k = {k} must lie in 1..={} for a {}x{} matrix",
            x.rows().min(x.cols()),
            x.rows(),
            x.cols()
        )));
    }
    let rank = numerical_rank(x);
    if k > rank {
        return Err(Error::Rank { requested: k, rank });
    }
    Ok(())
}

fn initial_binary(x: &Matrix, k: usize, opts: &L1PcaOptions) -> Result<DMatrix<f64>> {
    let n = x.cols();
    let b = match &opts.init {
        InitPolicy::L2 => {
            let svd = compact_svd(x, k)?;
            sign_of(&(x.transpose() * svd.u.as_dmatrix()))
        }
        InitPolicy::Random => {
            let mut r = rng::substream(opts.seed, "l1pca-init", 0);
            DMatrix::from_fn(n, k, |_, _| if r.random::<bool>() { 1.0 } else { -1.0 })
        }
        InitPolicy::Binary(b) => {
            if b.shape() != (n, k) {
                return Err(Error::Dimension(format!("initial B must be {n}x{k}, got {}x{}", b.rows(), b.cols())));
            }
            sign_of(b)
        }
        InitPolicy::Basis(q) => {
            if q.shape() != (x.rows(), k) {
                return Err(Error::Dimension(format!(
                    "initial basis must be {}x{k}, got {}x{}",
                    x.rows(),
                    q.rows(),
                    q.cols()
                )));
            }
            sign_of(&(x.transpose() * q.as_dmatrix()))
        }
    };
    Ok(b)
}

/// Greedy L1-PCA: one component at a time by the fixed-point iteration
/// `b ← sgn(XᵀXb)`, `q = Xb/‖Xb‖₂`, deflating `X` onto the orthogonal
/// complement of the components already found.
///
/// If a component does not reach a fixed point within `max_iter` iterations,
/// the best iterate is kept and `converged` is false.
pub fn l1pca_greedy(x: &Matrix, k: usize, opts: &L1PcaOptions) -> Result<L1PcaResult> {
    check_k(x, k)?;
    let (d, n) = x.shape();
    let b_init = initial_binary(x, k, opts)?;
    let mut q = DMatrix::<f64>::zeros(d, k);
    let mut b_all = DMatrix::<f64>::zeros(n, k);
    let mut xc = x.as_dmatrix().clone();
    let mut iterations = 0;
    let mut converged = true;
    let mut trace = Vec::new();

    for c in 0..k {
        if c > 0 {
            let qc = q.column(c - 1).into_owned();
            // xc ← (I − q qᵀ) xc
            let proj = qc.transpose() * &xc;
            xc -= &qc * proj;
        }
        let gram = xc.transpose() * &xc;
        let mut b: DVector<f64> = b_init.column(c).into_owned();
        let floor = tol::RANK_RELATIVE * x.as_dmatrix().norm();
        if (&xc * &b).norm() <= floor && xc.norm() > floor {
            // The start lies in the deflated-out span (e.g. all-ones on the
            // identity). sgn(xcᵀu₁) gives ‖xc b‖ ≥ ‖xcᵀu₁‖₁ > 0.
            let u1 = compact_svd(&Matrix::wrap(xc.clone()), 1)?.u.column(0).into_owned();
            b = (xc.transpose() * u1).map(sgn);
        }
        let mut best_b = b.clone();
        let mut best = (&xc * &b).norm();
        let mut fixed = false;
        for _ in 0..opts.max_iter {
            iterations += 1;
            let next = (&gram * &b).map(sgn);
            let val = (&xc * &next).norm();
            trace.push(val);
            if val > best {
                best = val;
                best_b = next.clone();
            }
            if next == b {
                fixed = true;
                break;
            }
            b = next;
        }
        converged &= fixed;
        let xb = &xc * &best_b;
        let norm = xb.norm();
        if norm <= floor {
            return Err(Error::Rank { requested: k, rank: c });
        }
        q.set_column(c, &(xb / norm));
        b_all.set_column(c, &best_b);
    }
    // Deflation keeps q orthogonal up to rounding; clean the residual.
    reorthonormalize(&mut q);
    let metric = metric_unchecked(&q, x);
    Ok(L1PcaResult {
        q: Matrix::wrap(q),
        metric,
        iterations,
        converged,
        solver: Solver::Greedy,
        b: Matrix::wrap(b_all),
        trace,
    })
}

fn reorthonormalize(q: &mut DMatrix<f64>) {
    // Modified Gram-Schmidt pass; columns are already orthogonal to ~1e-15.
    for j in 0..q.ncols() {
        for i in 0..j {
            let qi = q.column(i).into_owned();
            let dot = qi.dot(&q.column(j));
            q.column_mut(j).axpy(-dot, &qi, 1.0);
        }
        let n = q.column(j).norm();
        q.column_mut(j).unscale_mut(n);
    }
}

/// Joint L1-PCA: `B ← sgn(XᵀQ)`, `Q ← Procrustes(XB)` until `B` repeats,
/// the metric stalls (improvement < 1e-12) or `max_iter` is reached.
pub fn l1pca_joint(x: &Matrix, k: usize, opts: &L1PcaOptions) -> Result<L1PcaResult> {
    check_k(x, k)?;
    let xm = x.as_dmatrix();
    let mut b = initial_binary(x, k, opts)?;
    let mut q = polar_factor(&(xm * &b))?;
    let mut metric = metric_unchecked(&q, xm);
    let mut trace = vec![metric];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iter {
        iterations += 1;
        let next_b = sign_of(&(xm.transpose() * &q));
        if next_b == b {
            converged = true;
            break;
        }
        let next_q = polar_factor(&(xm * &next_b))?;
        let next_metric = metric_unchecked(&next_q, xm);
        let improvement = next_metric - metric;
        b = next_b;
        q = next_q;
        metric = next_metric;
        trace.push(metric);
        if improvement < 1e-12 {
            converged = true;
            break;
        }
    }
    Ok(L1PcaResult {
        q: Matrix::wrap(q),
        metric,
        iterations,
        converged,
        solver: Solver::Joint,
        b: Matrix::wrap(b),
        trace,
    })
}

/// Nuclear norm of a `D×K` matrix through the eigenvalues of its `K×K` Gram.
fn nuclear_small(m: &DMatrix<f64>) -> f64 {
    if m.ncols() == 1 {
        return m.norm();
    }
    m.singular_values().sum()
}

/// Bit-flipping L1-PCA: starting from `B`, repeatedly apply the single-bit
/// flip with the largest strict increase of `‖XB‖_*`; stop at a local
/// maximum. Returns `Q = Procrustes(XB)`.
///
/// Equal gains are resolved toward the lowest `(row, column)` index.
pub fn l1pca_bitflip(x: &Matrix, k: usize, opts: &L1PcaOptions) -> Result<L1PcaResult> {
    check_k(x, k)?;
    let xm = x.as_dmatrix();
    let n = x.cols();
    let mut b = initial_binary(x, k, opts)?;
    let mut xb = xm * &b;
    let mut current = nuclear_small(&xb);
    let mut trace = vec![current];
    let mut flips = 0;
    let mut converged = false;
    let mut cand = xb.clone();
    while flips < opts.max_iter {
        let mut best_gain = 0.0;
        let mut best_idx = None;
        let slack = 1e-12 * current.max(1.0);
        for row in 0..n {
            let xrow = xm.column(row);
            for col in 0..k {
                let delta = -2.0 * b[(row, col)];
                cand.copy_from(&xb);
                cand.column_mut(col).axpy(delta, &xrow, 1.0);
                let gain = nuclear_small(&cand) - current;
                if gain > slack && gain > best_gain {
                    best_gain = gain;
                    best_idx = Some((row, col));
                }
            }
        }
        match best_idx {
            None => {
                converged = true;
                break;
            }
            Some((row, col)) => {
                let delta = -2.0 * b[(row, col)];
                b[(row, col)] = -b[(row, col)];
                xb.column_mut(col).axpy(delta, &xm.column(row), 1.0);
                current = nuclear_small(&xb);
                trace.push(current);
                flips += 1;
            }
        }
    }
    let q = polar_factor(&xb)?;
    let metric = metric_unchecked(&q, xm);
    Ok(L1PcaResult {
        q: Matrix::wrap(q),
        metric,
        iterations: flips,
        converged,
        solver: Solver::BitFlip,
        b: Matrix::wrap(b),
        trace,
    })
}

/// Largest `N` accepted by [`l1pca_exhaustive`].
pub const EXHAUSTIVE_MAX_N: usize = 20;

/// Globally optimal single L1 component by enumerating all `b ∈ {±1}^N`.
///
/// Candidates are visited in lexicographic order with `−1 < +1`; the first
/// maximizer of `‖Xb‖₂` wins, so of the pair `±b` the one with `b₁ = −1` is kept.
pub fn l1pca_exhaustive(x: &Matrix, k: usize) -> Result<L1PcaResult> {
    if k != 1 {
        return Err(Error::Dimension(format!("exhaustive oracle supports k = 1 only, got {k}")));
    }
    let (d, n) = x.shape();
    if n > EXHAUSTIVE_MAX_N {
        return Err(Error::Capacity(format!("exhaustive search over 2^{n} sign vectors (limit N = {EXHAUSTIVE_MAX_N})")));
    }
    let xm = x.as_dmatrix();
    let mut best = -1.0;
    let mut best_mask = 0u32;
    let mut xb = DVector::<f64>::zeros(d);
    for mask in 0u32..(1u32 << n) {
        xb.fill(0.0);
        for j in 0..n {
            let s = if mask & (1 << (n - 1 - j)) != 0 { 1.0 } else { -1.0 };
            xb.axpy(s, &xm.column(j), 1.0);
        }
        let val = xb.norm_squared();
        if val > best {
            best = val;
            best_mask = mask;
        }
    }
    let b = DVector::from_fn(n, |j, _| if best_mask & (1 << (n - 1 - j)) != 0 { 1.0 } else { -1.0 });
    let xb = xm * &b;
    let norm = xb.norm();
    if norm == 0.0 {
        return Err(Error::Rank { requested: 1, rank: 0 });
    }
    let q = DMatrix::from_column_slice(d, 1, (xb / norm).as_slice());
    let metric = metric_unchecked(&q, xm);
    Ok(L1PcaResult {
        q: Matrix::wrap(q),
        metric,
        iterations: 1usize << n,
        converged: true,
        solver: Solver::Exhaustive,
        b: Matrix::wrap(DMatrix::from_column_slice(n, 1, b.as_slice())),
        trace: vec![metric],
    })
}

/// Dispatches to the solver named by `solver`.
pub fn l1pca(x: &Matrix, k: usize, solver: Solver, opts: &L1PcaOptions) -> Result<L1PcaResult> {
    match solver {
        Solver::Greedy => l1pca_greedy(x, k, opts),
        Solver::Joint => l1pca_joint(x, k, opts),
        Solver::BitFlip => l1pca_bitflip(x, k, opts),
        Solver::Exhaustive => l1pca_exhaustive(x, k),
    }
}
