//! Principal component pursuit, `min ‖L‖_* + λ‖S‖₁,₁ s.t. L + S = X`,
//! solved with the inexact augmented Lagrange multiplier method.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{compact_svd, l1_entrywise_norm, CompactSvd, Matrix};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct RpcaOptions {
    /// Sparse weight; `1/√max(D, N)` when absent.
    pub lambda: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    /// `μ₀ = mu_scale / ‖X‖₂`.
    pub mu_scale: f64,
    pub rho: f64,
}

impl Default for RpcaOptions {
    fn default() -> Self {
        RpcaOptions { lambda: None, tol: 1e-7, max_iter: 1000, mu_scale: 1.25, rho: 1.5 }
    }
}

#[derive(Clone, Debug)]
pub struct RpcaResult {
    pub l: Matrix,
    pub s: Matrix,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    /// `‖L_t‖_* + λ‖X − L_t‖₁,₁` after each iteration.
    pub objective_trace: Vec<f64>,
}

/// Entrywise shrinkage `sgn(m)·max(|m| − τ, 0)`.
pub fn soft_threshold(m: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {tau}")));
    }
    Ok(Matrix::wrap(shrink(m, tau)))
}

fn shrink(m: &DMatrix<f64>, tau: f64) -> DMatrix<f64> {
    m.map(|v| v.signum() * (v.abs() - tau).max(0.0))
}

/// Singular value shrinkage `U·diag(max(σ − τ, 0))·Vᵀ`.
pub fn sv_threshold(m: &Matrix, tau: f64) -> Result<Matrix> {
    if !(tau >= 0.0) {
        return Err(Error::Config(format!("threshold must be non-negative, got {tau}")));
    }
    Ok(Matrix::wrap(svt(m, tau)?.0))
}

/// Returns the shrunk matrix and its nuclear norm.
fn svt(m: &DMatrix<f64>, tau: f64) -> Result<(DMatrix<f64>, f64)> {
    let svd = nalgebra::SVD::try_new(m.clone(), true, true, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::Convergence("SVD inside singular value thresholding".into()))?;
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v requested");
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    let mut nuc = 0.0;
    for (i, &s) in svd.singular_values.iter().enumerate() {
        let shrunk = s - tau;
        if shrunk > 0.0 {
            nuc += shrunk;
            out += shrunk * u.column(i) * vt.row(i);
        }
    }
    Ok((out, nuc))
}

/// Splits `x` into low-rank `L` and sparse `S`. Stops when
/// `‖X − L − S‖_F / ‖X‖_F < tol`; otherwise returns after `max_iter`
/// iterations with `converged = false`.
pub fn rpca_pcp(x: &Matrix, opts: &RpcaOptions) -> Result<RpcaResult> {
    let (d, n) = x.shape();
    let lambda = opts.lambda.unwrap_or(1.0 / (d.max(n) as f64).sqrt());
    if !(lambda > 0.0) || !(opts.tol > 0.0) || !(opts.rho > 1.0) || !(opts.mu_scale > 0.0) {
        return Err(Error::Config("lambda, tol and mu_scale must be positive and rho > 1".into()));
    }
    let xm = x.as_dmatrix();
    let norm_fro = xm.norm();
    if norm_fro == 0.0 {
        return Ok(RpcaResult {
            l: x.clone(),
            s: Matrix::zeros(d, n),
            lambda,
            iterations: 0,
            converged: true,
            objective_trace: vec![0.0],
        });
    }
    let norm_two = xm.singular_values().max();
    let norm_inf = xm.amax() / lambda;
    let mut y = xm / norm_two.max(norm_inf);
    let mut mu = opts.mu_scale / norm_two;
    let mu_max = mu * 1e7;
    let mut l = DMatrix::zeros(d, n);
    let mut s = DMatrix::zeros(d, n);
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iter {
        iterations += 1;
        let (l_new, nuc) = svt(&(xm - &s + &y / mu), 1.0 / mu)?;
        l = l_new;
        s = shrink(&(xm - &l + &y / mu), lambda / mu);
        let z = xm - &l - &s;
        y += mu * &z;
        mu = (mu * opts.rho).min(mu_max);
        trace.push(nuc + lambda * l1_entrywise_norm(&(xm - &l)));
        if z.norm() / norm_fro < opts.tol {
            converged = true;
            break;
        }
    }
    Ok(RpcaResult {
        l: Matrix::wrap(l),
        s: Matrix::wrap(s),
        lambda,
        iterations,
        converged,
        objective_trace: trace,
    })
}

/// Compact SVD of the low-rank part recovered by [`rpca_pcp`].
pub fn rpca_svd(x: &Matrix, k: usize, opts: &RpcaOptions) -> Result<CompactSvd> {
    let r = rpca_pcp(x, opts)?;
    compact_svd(&r.l, k)
}
