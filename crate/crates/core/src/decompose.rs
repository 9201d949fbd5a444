//! L1 compact SVD.
//!
//! `U` is an L1-PCA basis of `X`. With `A = XᵀU` fixed, the routine
//! alternates between
//!
//! * an exhaustive L1 search for each `σ_i` given `v_i` (the optimum of
//!   `min_s ‖a − s·v‖₁` sits at one of the ratios `a_j / v_j`), and
//! * `V ← U′V′ᵀ` from the SVD of `A·Σ⁻¹`,
//!
//! until the normalized residual `M_P = ‖UᵀX − ΣVᵀ‖₁,₁ / ‖UᵀX‖₁,₁` stops
//! changing.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::l1pca::{self, InitPolicy, L1PcaOptions, Solver};
use crate::matrix::{l1_entrywise_norm, numerical_rank, polar_factor, random_orthonormal_with, Matrix};
use crate::rng;
use crate::tol;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct L1cSvdOptions {
    pub pca_solver: Solver,
    /// Iteration cap for the L1-PCA stage.
    pub pca_max_iter: usize,
    /// Start the L1-PCA stage from random signs instead of the L2 basis.
    pub pca_random_init: bool,
    /// Outer cap; the effective cap is `min(N·K, max_outer_iter)`.
    pub max_outer_iter: usize,
    /// Relative `M_P` change that counts as converged.
    pub tol: f64,
    /// `|σ_i|` is clamped to `sigma_floor · max|σ|` before inversion.
    pub sigma_floor: f64,
    pub seed: u64,
    /// Explicit `N×K` starting `V`; drawn from `seed` when absent.
    #[serde(skip)]
    pub v_init: Option<Matrix>,
    /// Keep per-sweep σ snapshots in the result.
    pub record_sigma: bool,
    /// From the second sweep on, reject a `V` update that raises `M_P`
    /// above its value after the σ step, and stop there.
    pub monotone: bool,
}

impl Default for L1cSvdOptions {
    fn default() -> Self {
        L1cSvdOptions {
            pca_solver: Solver::Greedy,
            pca_max_iter: 1000,
            pca_random_init: false,
            max_outer_iter: 500,
            tol: 1e-9,
            sigma_floor: 1e-10,
            seed: 0,
            v_init: None,
            record_sigma: false,
            monotone: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct L1cSvdResult {
    /// `D×K`, the L1-PCA basis (columns permuted to match σ order).
    pub u: Matrix,
    /// Positive, descending.
    pub sigma: Vec<f64>,
    /// `N×K`, orthonormal.
    pub v: Matrix,
    /// `M_P` at initialization (`Σ = 0`, so exactly 1) and after each outer sweep.
    pub mp_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `L1PCA` objective `‖UᵀX‖₁,₁`.
    pub pca_metric: f64,
    /// Raw σ after each sweep, before sign/sort canonicalization.
    pub sigma_trace: Vec<Vec<f64>>,
}

/// Minimizes `‖a − s·v‖₁` over the candidates `s_j = a_j / v_j`
/// (`|v_j| ≥ 1e-9`). Returns `(s, error)`; ties go to the smaller `|s|`.
pub fn sigma_search(a: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    sigma_search_col(a, v, 0)
}

fn l1_residual(a: &[f64], v: &[f64], s: f64) -> f64 {
    a.iter().zip(v).map(|(ai, vi)| (ai - s * vi).abs()).sum()
}

fn sigma_search_col(a: &[f64], v: &[f64], column: usize) -> Result<(f64, f64)> {
    if a.len() != v.len() {
        return Err(Error::Dimension(format!("a has {} entries, v has {}", a.len(), v.len())));
    }
    let mut best: Option<(f64, f64)> = None;
    for (aj, vj) in a.iter().zip(v) {
        if vj.abs() < tol::CANDIDATE_GUARD {
            continue;
        }
        let s = aj / vj;
        let err = l1_residual(a, v, s);
        best = match best {
            None => Some((s, err)),
            Some((bs, be)) => {
                let tie = (err - be).abs() <= 1e-12 * be.max(f64::MIN_POSITIVE);
                if (!tie && err < be) || (tie && s.abs() < bs.abs()) {
                    Some((s, err))
                } else {
                    Some((bs, be))
                }
            }
        };
    }
    best.ok_or(Error::DegenerateDirection { column })
}

/// `V = U′V′ᵀ` where `(U′, Σ′, V′) = SVD(A·Σ⁻¹)`.
///
/// Every `|σ_i|` must be at least `floor`.
pub fn update_v(a: &Matrix, sigma: &[f64], floor: f64) -> Result<Matrix> {
    if sigma.len() != a.cols() {
        return Err(Error::Dimension(format!("{} singular values for {} columns", sigma.len(), a.cols())));
    }
    if let Some((index, &value)) = sigma.iter().enumerate().find(|(_, s)| !(s.abs() >= floor)) {
        return Err(Error::SingularScale { index, value, floor });
    }
    let inv = DMatrix::from_diagonal(&DVector::from_iterator(sigma.len(), sigma.iter().map(|s| 1.0 / s)));
    Ok(Matrix::wrap(polar_factor(&(a.as_dmatrix() * inv))?))
}

/// `M_P = ‖UᵀX − ΣVᵀ‖₁,₁ / ‖UᵀX‖₁,₁`.
pub fn perf_metric(u: &Matrix, x: &Matrix, sigma: &[f64], v: &Matrix) -> Result<f64> {
    if u.rows() != x.rows() || v.rows() != x.cols() || u.cols() != sigma.len() || v.cols() != sigma.len() {
        return Err(Error::Dimension("perf_metric operands are not conformable".into()));
    }
    let a = x.transpose() * u.as_dmatrix();
    mp_from_a(&a, sigma, v)
}

fn mp_from_a(a: &DMatrix<f64>, sigma: &[f64], v: &DMatrix<f64>) -> Result<f64> {
    let denom = l1_entrywise_norm(a);
    if denom == 0.0 {
        return Err(Error::Degenerate("UᵀX is identically zero".into()));
    }
    let mut num = 0.0;
    for (i, s) in sigma.iter().enumerate() {
        num += a.column(i).iter().zip(v.column(i).iter()).map(|(aj, vj)| (aj - s * vj).abs()).sum::<f64>();
    }
    Ok(num / denom)
}

/// Robust compact SVD of `x` with `k` components.
pub fn l1_csvd(x: &Matrix, k: usize, opts: &L1cSvdOptions) -> Result<L1cSvdResult> {
    let (d, n) = x.shape();
    if k == 0 || k > d.min(n) {
        return Err(Error::Dimension(format!("k = {k} must lie in 1..={} for a {d}x{n} matrix", d.min(n))));
    }
    if !(opts.tol > 0.0) || opts.max_outer_iter == 0 || !(opts.sigma_floor > 0.0) {
        return Err(Error::Config("tol and sigma_floor must be positive and max_outer_iter at least 1".into()));
    }
    let rank = numerical_rank(x);
    if k > rank {
        return Err(Error::Rank { requested: k, rank });
    }

    let pca_opts = L1PcaOptions {
        init: if opts.pca_random_init { InitPolicy::Random } else { InitPolicy::L2 },
        max_iter: opts.pca_max_iter,
        seed: rng::derive_seed(opts.seed, "l1pca", 0),
    };
    let pca = l1pca::l1pca(x, k, opts.pca_solver, &pca_opts)?;
    let u = pca.q.into_inner();
    let a = x.as_dmatrix().transpose() * &u;

    let mut v = match &opts.v_init {
        Some(v0) => {
            if v0.shape() != (n, k) {
                return Err(Error::Dimension(format!("v_init must be {n}x{k}, got {}x{}", v0.rows(), v0.cols())));
            }
            v0.as_dmatrix().clone()
        }
        None => {
            let mut r = rng::substream(opts.seed, "l1csvd-v-init", 0);
            random_orthonormal_with(n, k, &mut r)?.into_inner()
        }
    };

    let cap = (n * k).min(opts.max_outer_iter);
    let mut sigma = vec![0.0; k];
    let mut mp_trace = vec![mp_from_a(&a, &sigma, &v)?];
    let mut sigma_trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let a_cols: Vec<Vec<f64>> = (0..k).map(|i| a.column(i).iter().copied().collect()).collect();

    while iterations < cap {
        iterations += 1;
        let v_cols: Vec<Vec<f64>> = (0..k).map(|i| v.column(i).iter().copied().collect()).collect();
        sigma = (0..k)
            .into_par_iter()
            .map(|i| sigma_search_col(&a_cols[i], &v_cols[i], i).map(|(s, _)| s))
            .collect::<Result<Vec<f64>>>()?;

        let smax = sigma.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if smax == 0.0 {
            return Err(Error::Degenerate("every singular value estimate is zero".into()));
        }
        let floor = opts.sigma_floor * smax;
        let clamped: Vec<f64> = sigma
            .iter()
            .map(|&s| if s.abs() < floor { if s < 0.0 { -floor } else { floor } } else { s })
            .collect();
        let v_next = update_v(&Matrix::wrap(a.clone()), &clamped, floor)?.into_inner();
        let mp = mp_from_a(&a, &sigma, &v_next)?;
        let prev = *mp_trace.last().expect("trace starts non-empty");
        // The first sweep always takes the Procrustes V: the starting V is arbitrary.
        if opts.monotone && iterations > 1 {
            let after_sigma = mp_from_a(&a, &sigma, &v)?;
            if mp > after_sigma {
                // Keeping V, the next σ step would reproduce σ: a fixed point.
                mp_trace.push(after_sigma);
                if opts.record_sigma {
                    sigma_trace.push(sigma.clone());
                }
                converged = true;
                break;
            }
        }
        v = v_next;
        if opts.record_sigma {
            sigma_trace.push(sigma.clone());
        }
        mp_trace.push(mp);
        if mp > prev + 1e-9 {
            log::debug!("M_P rose from {prev} to {mp} at sweep {iterations}");
        }
        if iterations > 1 && (mp - prev).abs() / mp.max(1e-15) < opts.tol {
            converged = true;
            break;
        }
    }

    let (u, sigma, v) = canonicalize(u, sigma, v);
    Ok(L1cSvdResult {
        u: Matrix::wrap(u),
        sigma,
        v: Matrix::wrap(v),
        mp_trace,
        iterations,
        converged,
        pca_metric: pca.metric,
        sigma_trace,
    })
}

/// Runs [`l1_csvd`] from `inits` random starting `V`s, drawn from the
/// `"convergence-v-init"` streams of `opts.seed`. Any `v_init` in `opts` is ignored.
pub fn convergence_study(x: &Matrix, k: usize, inits: usize, opts: &L1cSvdOptions) -> Result<Vec<L1cSvdResult>> {
    (0..inits)
        .map(|i| {
            let mut r = rng::substream(opts.seed, "convergence-v-init", i as u64);
            let v0 = random_orthonormal_with(x.cols(), k, &mut r)?;
            l1_csvd(x, k, &L1cSvdOptions { v_init: Some(v0), ..opts.clone() })
        })
        .collect()
}

/// Makes σ non-negative (negating the paired `V` column) and sorts the
/// triplets by descending σ. `U·diag(σ)·Vᵀ` is unchanged.
fn canonicalize(u: DMatrix<f64>, mut sigma: Vec<f64>, mut v: DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    for (i, s) in sigma.iter_mut().enumerate() {
        if *s < 0.0 {
            *s = -*s;
            v.column_mut(i).neg_mut();
        }
    }
    let mut order: Vec<usize> = (0..sigma.len()).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]).then(i.cmp(&j)));
    let u = DMatrix::from_fn(u.nrows(), order.len(), |r, c| u[(r, order[c])]);
    let v = DMatrix::from_fn(v.nrows(), order.len(), |r, c| v[(r, order[c])]);
    let sigma = order.iter().map(|&i| sigma[i]).collect();
    (u, sigma, v)
}
