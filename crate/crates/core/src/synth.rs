//! Synthetic low-rank data with Gaussian noise and subspace outliers, the
//! singular-value error metrics, and the Monte-Carlo sweep that compares
//! estimators across outlier-to-signal ratios.
//!
//! Instances follow `X = U₀Σ₀V₀ᵀ + N + Γ ⊙ R_oS_o`, where `U₀` and `R_o` are
//! fixed for the experiment and everything else is drawn per trial.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{l1_csvd, L1cSvdOptions};
use crate::error::{Error, Result};
use crate::l1pca::{l1pca_greedy, L1PcaOptions};
use crate::matrix::{compact_svd, random_orthonormal_with, Matrix};
use crate::rng;
use crate::rpca::{rpca_svd, RpcaOptions};

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct SyntheticConfig {
    pub d: usize,
    pub n: usize,
    pub k: usize,
    pub k_o: usize,
    pub p_o: f64,
    /// `None` means noiseless.
    pub snr_db: Option<f64>,
    pub osr_db: f64,
    /// Singular values are log-uniform on `[low, high]`.
    pub sv_log_range: (f64, f64),
    pub trials: usize,
    pub seed: u64,
    /// Read the SNR literally as `‖N‖²/‖Σ₀‖²` instead of signal over noise.
    pub snr_as_written: bool,
}

impl Default for SyntheticConfig {
    /// `D = 10, N = 50, K = 4, K_o = 4, P_o = 0.04`, SNR 10 dB.
    fn default() -> Self {
        SyntheticConfig {
            d: 10,
            n: 50,
            k: 4,
            k_o: 4,
            p_o: 0.04,
            snr_db: Some(10.0),
            osr_db: 0.0,
            sv_log_range: (1.0, 10.0),
            trials: 200,
            seed: 0,
            snr_as_written: false,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 || self.k > self.d || self.d > self.n {
            return bad(format!("need 1 <= k <= d <= n, got k={}, d={}, n={}", self.k, self.d, self.n));
        }
        if self.k_o == 0 || self.k_o > self.d {
            return bad(format!("need 1 <= k_o <= d, got k_o={}", self.k_o));
        }
        if !(0.0..=1.0).contains(&self.p_o) {
            return bad(format!("p_o must be a probability, got {}", self.p_o));
        }
        let (lo, hi) = self.sv_log_range;
        if !(lo > 0.0 && lo < hi && hi.is_finite()) {
            return bad(format!("sv_log_range must satisfy 0 < low < high, got ({lo}, {hi})"));
        }
        if !self.osr_db.is_finite() || self.snr_db.is_some_and(|s| !s.is_finite()) {
            return bad("snr_db and osr_db must be finite".into());
        }
        Ok(())
    }

    /// Noise energy as a fraction of `‖Σ₀‖²`.
    fn noise_ratio(&self) -> Option<f64> {
        self.snr_db.map(|snr| {
            if self.snr_as_written {
                10f64.powf(snr / 10.0)
            } else {
                10f64.powf(-snr / 10.0)
            }
        })
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticInstance {
    pub x_clean: Matrix,
    pub noise: Matrix,
    pub outliers: Matrix,
    pub x_corrupted: Matrix,
    pub u0: Matrix,
    pub v0: Matrix,
    pub sigma0: Vec<f64>,
    /// Corrupted-column mask, length `N`.
    pub gamma: Vec<bool>,
    pub r_o: Matrix,
    pub s_o: Matrix,
}

/// Draws trial `trial` of the experiment described by `cfg`.
///
/// `U₀` and `R_o` depend on `cfg.seed` only. `V₀`, `Σ₀`, the noise, `Γ` and
/// `S_o` come from the trial's own stream, so the same trial index yields
/// the same draw at every OSR point; only the outlier scale changes.
pub fn generate_instance(cfg: &SyntheticConfig, trial: u64) -> Result<SyntheticInstance> {
    cfg.validate()?;
    let (d, n, k, k_o) = (cfg.d, cfg.n, cfg.k, cfg.k_o);

    let mut fixed = rng::substream(cfg.seed, "synth-fixed", 0);
    let u0 = random_orthonormal_with(d, k, &mut fixed)?;
    let r_o = random_orthonormal_with(d, k_o, &mut fixed)?;

    let mut r = rng::substream(cfg.seed, "synth-trial", trial);
    let v0 = random_orthonormal_with(n, k, &mut r)?;
    let (lo, hi) = cfg.sv_log_range;
    let mut sigma0: Vec<f64> = (0..k).map(|_| (r.random_range(lo.ln()..hi.ln())).exp()).collect();
    sigma0.sort_by(|a, b| b.total_cmp(a));
    let energy: f64 = sigma0.iter().map(|s| s * s).sum();

    let x_clean = u0.as_dmatrix() * DMatrix::from_diagonal(&DVector::from_column_slice(&sigma0)) * v0.transpose();

    let mut noise = DMatrix::from_fn(d, n, |_, _| r.sample::<f64, _>(StandardNormal));
    match cfg.noise_ratio() {
        Some(ratio) => noise *= (ratio * energy).sqrt() / noise.norm(),
        None => noise.fill(0.0),
    }

    let gamma: Vec<bool> = (0..n).map(|_| r.random::<f64>() < cfg.p_o).collect();
    let s_o = DMatrix::from_fn(k_o, n, |_, _| r.sample::<f64, _>(StandardNormal));
    let mut outliers = r_o.as_dmatrix() * &s_o;
    for (j, &hit) in gamma.iter().enumerate() {
        if !hit {
            outliers.column_mut(j).fill(0.0);
        }
    }
    let o_norm = outliers.norm();
    if o_norm > 0.0 {
        outliers *= (10f64.powf(cfg.osr_db / 10.0) * energy).sqrt() / o_norm;
    }

    let x_corrupted = &x_clean + &noise + &outliers;
    Ok(SyntheticInstance {
        x_clean: Matrix::new(x_clean)?,
        noise: Matrix::new(noise)?,
        outliers: Matrix::new(outliers)?,
        x_corrupted: Matrix::new(x_corrupted)?,
        u0,
        v0,
        sigma0,
        gamma,
        r_o,
        s_o: Matrix::new(s_o)?,
    })
}

/// `‖σ_est − σ_clean‖₂ / ‖σ_clean‖₂`.
pub fn r_sv(sigma_est: &[f64], sigma_clean: &[f64]) -> Result<f64> {
    if sigma_est.len() != sigma_clean.len() {
        return Err(Error::Dimension(format!("{} estimates for {} reference values", sigma_est.len(), sigma_clean.len())));
    }
    let norm = sigma_clean.iter().map(|s| s * s).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(Error::Degenerate("reference singular values are all zero".into()));
    }
    let diff = sigma_est.iter().zip(sigma_clean).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    Ok(diff / norm)
}

/// `(σ_i,est − σ_i,clean)² / σ_i,clean²` for 1-based `i`.
pub fn r_sv_i(sigma_est: &[f64], sigma_clean: &[f64], i: usize) -> Result<f64> {
    if sigma_est.len() != sigma_clean.len() {
        return Err(Error::Dimension(format!("{} estimates for {} reference values", sigma_est.len(), sigma_clean.len())));
    }
    if i == 0 || i > sigma_clean.len() {
        return Err(Error::Dimension(format!("index {i} outside 1..={}", sigma_clean.len())));
    }
    let c = sigma_clean[i - 1];
    if c == 0.0 {
        return Err(Error::Degenerate(format!("reference singular value {i} is zero")));
    }
    Ok((sigma_est[i - 1] - c).powi(2) / (c * c))
}

/// Singular-value estimators compared by the sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SvMethod {
    Svd,
    /// SVD of `Q Qᵀ X` with `Q` the greedy L1-PCA basis.
    #[serde(rename = "l1pca-project")]
    L1PcaProject,
    L1cSvd,
    Rpca,
}

impl SvMethod {
    pub const ALL: [SvMethod; 4] = [SvMethod::Svd, SvMethod::L1PcaProject, SvMethod::L1cSvd, SvMethod::Rpca];

    pub fn name(self) -> &'static str {
        match self {
            SvMethod::Svd => "svd",
            SvMethod::L1PcaProject => "l1pca-project",
            SvMethod::L1cSvd => "l1csvd",
            SvMethod::Rpca => "rpca",
        }
    }
}

impl fmt::Display for SvMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SvMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SvMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected svd, l1pca-project, l1csvd or rpca)")))
    }
}

/// Top-`k` singular values of `x` estimated by `method`.
pub fn estimate_sigma(method: SvMethod, x: &Matrix, k: usize, seed: u64) -> Result<Vec<f64>> {
    match method {
        SvMethod::Svd => Ok(compact_svd(x, k)?.sigma),
        SvMethod::L1PcaProject => {
            let q = l1pca_greedy(x, k, &L1PcaOptions { seed, ..Default::default() })?.q;
            let projected = Matrix::new(q.as_dmatrix() * (q.transpose() * x.as_dmatrix()))?;
            Ok(compact_svd(&projected, k)?.sigma)
        }
        SvMethod::L1cSvd => Ok(l1_csvd(x, k, &L1cSvdOptions { seed, ..Default::default() })?.sigma),
        SvMethod::Rpca => Ok(rpca_svd(x, k, &RpcaOptions::default())?.sigma),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrialRecord {
    pub method: SvMethod,
    pub osr_db: f64,
    pub trial: usize,
    /// `None` when the method failed on this trial.
    pub r_sv: Option<f64>,
    pub r_sv_i: Vec<f64>,
    pub wall_ms: f64,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Aggregate {
    pub method: SvMethod,
    pub osr_db: f64,
    pub count: usize,
    pub failures: usize,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
    pub mean_r_sv_i: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ExperimentReport {
    pub config: SyntheticConfig,
    pub osr_grid: Vec<f64>,
    pub methods: Vec<SvMethod>,
    pub records: Vec<TrialRecord>,
    pub aggregates: Vec<Aggregate>,
}

pub const CSV_SCHEMA_LINE: &str = "# schema=1";

impl ExperimentReport {
    pub fn aggregate(&self, method: SvMethod, osr_db: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.method == method && a.osr_db == osr_db)
    }

    /// `method,osr_db,trial,r_sv,r_sv_1,...,r_sv_K,wall_ms`, preceded by the
    /// schema comment line. Failed trials leave the metric fields empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let k = self.config.k;
        writeln!(w, "{CSV_SCHEMA_LINE}")?;
        let mut header = vec!["method".to_string(), "osr_db".into(), "trial".into(), "r_sv".into()];
        header.extend((1..=k).map(|i| format!("r_sv_{i}")));
        header.push("wall_ms".into());
        writeln!(w, "{}", header.join(","))?;
        for r in &self.records {
            let mut fields = vec![r.method.to_string(), format!("{}", r.osr_db), r.trial.to_string()];
            match r.r_sv {
                Some(v) => {
                    fields.push(format!("{v}"));
                    fields.extend(r.r_sv_i.iter().map(|v| format!("{v}")));
                }
                None => fields.extend(std::iter::repeat_n(String::new(), k + 1)),
            }
            fields.push(format!("{}", r.wall_ms));
            writeln!(w, "{}", fields.join(","))?;
        }
        Ok(())
    }
}

fn summarize(method: SvMethod, osr_db: f64, k: usize, records: &[&TrialRecord]) -> Aggregate {
    let mut ok: Vec<f64> = records.iter().filter_map(|r| r.r_sv).collect();
    let failures = records.len() - ok.len();
    ok.sort_by(f64::total_cmp);
    let count = ok.len();
    let (mean, median, std) = if count == 0 {
        (f64::NAN, f64::NAN, f64::NAN)
    } else {
        let mean = ok.iter().sum::<f64>() / count as f64;
        let median = if count % 2 == 1 { ok[count / 2] } else { 0.5 * (ok[count / 2 - 1] + ok[count / 2]) };
        let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / count as f64;
        (mean, median, var.sqrt())
    };
    let mut mean_i = vec![0.0; k];
    for r in records.iter().filter(|r| r.r_sv.is_some()) {
        for (m, v) in mean_i.iter_mut().zip(&r.r_sv_i) {
            *m += v;
        }
    }
    for m in &mut mean_i {
        *m = if count == 0 { f64::NAN } else { *m / count as f64 };
    }
    Aggregate { method, osr_db, count, failures, mean, median, std, mean_r_sv_i: mean_i }
}

/// Builds the aggregate table from records in any order.
pub fn aggregate_records(cfg: &SyntheticConfig, osr_grid: &[f64], methods: &[SvMethod], records: &[TrialRecord]) -> Vec<Aggregate> {
    let mut out = Vec::new();
    for &osr in osr_grid {
        for &m in methods {
            let mut group: Vec<&TrialRecord> = records.iter().filter(|r| r.method == m && r.osr_db == osr).collect();
            group.sort_by_key(|r| r.trial);
            out.push(summarize(m, osr, cfg.k, &group));
        }
    }
    out
}

/// Runs `cfg.trials` trials at every OSR point for every method.
///
/// Trials run in parallel on the current rayon pool; the report is ordered
/// by (OSR, method, trial) and does not depend on the schedule. A method
/// that fails on a trial is recorded with its error and the sweep goes on.
/// With `timing = false`, `wall_ms` is written as 0 so reports are
/// byte-reproducible.
pub fn run_sweep(cfg: &SyntheticConfig, osr_grid: &[f64], methods: &[SvMethod], timing: bool) -> Result<ExperimentReport> {
    cfg.validate()?;
    if osr_grid.is_empty() || methods.is_empty() {
        return Err(Error::Config("OSR grid and method list must be non-empty".into()));
    }
    if let Some(bad) = osr_grid.iter().find(|v| !v.is_finite()) {
        return Err(Error::Config(format!("OSR grid value {bad} is not finite")));
    }
    let jobs: Vec<(usize, usize)> = (0..osr_grid.len()).flat_map(|g| (0..cfg.trials).map(move |t| (g, t))).collect();
    let results: Vec<Result<Vec<TrialRecord>>> = jobs
        .par_iter()
        .map(|&(g, trial)| {
            let osr = osr_grid[g];
            let point = SyntheticConfig { osr_db: osr, ..cfg.clone() };
            let inst = generate_instance(&point, trial as u64)?;
            let clean = compact_svd(&inst.x_clean, cfg.k)?.sigma;
            Ok(methods
                .iter()
                .map(|&m| {
                    let seed = rng::derive_seed(cfg.seed, &format!("solver-{}", m.name()), trial as u64);
                    let start = Instant::now();
                    let est = estimate_sigma(m, &inst.x_corrupted, cfg.k, seed);
                    let wall_ms = if timing { start.elapsed().as_secs_f64() * 1e3 } else { 0.0 };
                    let metrics = est.and_then(|s| {
                        let total = r_sv(&s, &clean)?;
                        let per = (1..=cfg.k).map(|i| r_sv_i(&s, &clean, i)).collect::<Result<Vec<f64>>>()?;
                        Ok((total, per))
                    });
                    match metrics {
                        Ok((total, per)) => TrialRecord { method: m, osr_db: osr, trial, r_sv: Some(total), r_sv_i: per, wall_ms, error: None },
                        Err(e) => TrialRecord { method: m, osr_db: osr, trial, r_sv: None, r_sv_i: Vec::new(), wall_ms, error: Some(e.to_string()) },
                    }
                })
                .collect())
        })
        .collect();
    let mut records = Vec::with_capacity(jobs.len() * methods.len());
    for r in results {
        records.extend(r?);
    }
    let grid_pos = |v: f64| osr_grid.iter().position(|&g| g == v).unwrap_or(usize::MAX);
    let method_pos = |m: SvMethod| methods.iter().position(|&x| x == m).unwrap_or(usize::MAX);
    records.sort_by_key(|r| (grid_pos(r.osr_db), method_pos(r.method), r.trial));
    let aggregates = aggregate_records(cfg, osr_grid, methods, &records);
    Ok(ExperimentReport { config: cfg.clone(), osr_grid: osr_grid.to_vec(), methods: methods.to_vec(), records, aggregates })
}
