//! Direction finding on a half-wavelength uniform linear array: snapshot
//! simulation with jammers, rank-`K` reduction of the realified data, and a
//! group-sparse spatial spectrum over an angle grid.
//!
//! The spectrum solves
//! `min ½‖Ỹ − [Ã Ã′]S‖_F² + λ Σ_θ ‖S_θ‖₂`, where `Ã = [Re A; Im A]`,
//! `Ã′ = [−Im A; Re A]` and group `S_θ` holds the two rows belonging to grid
//! angle `θ`. That is the complex-amplitude problem written over the reals.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::decompose::{l1_csvd, L1cSvdOptions};
use crate::error::{Error, Result};
use crate::matrix::{compact_svd, realify, ComplexMatrix, Matrix};
use crate::rng;
use crate::synth::CSV_SCHEMA_LINE;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct ArrayConfig {
    pub m_sensors: usize,
    pub t_snapshots: usize,
    /// Strictly increasing, within `[−90°, 90°]`.
    pub grid_deg: Vec<f64>,
    /// Per-source SNR; `None` simulates without noise.
    pub snr_db: Option<f64>,
    pub seed: u64,
}

/// `−89°, −88°, …, 90°`: 180 points at 1° spacing. `−90°` is left out
/// because its steering vector equals that of `90°`.
pub fn default_grid() -> Vec<f64> {
    (-89..=90).map(f64::from).collect()
}

impl Default for ArrayConfig {
    fn default() -> Self {
        ArrayConfig { m_sensors: 8, t_snapshots: 200, grid_deg: default_grid(), snr_db: Some(10.0), seed: 0 }
    }
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_sensors == 0 || self.t_snapshots == 0 {
            return Err(Error::Config("sensor and snapshot counts must be positive".into()));
        }
        if self.grid_deg.is_empty() {
            return Err(Error::Config("angle grid is empty".into()));
        }
        if self.grid_deg.iter().any(|a| !a.is_finite() || a.abs() > 90.0) {
            return Err(Error::Config("grid angles must lie in [-90, 90] degrees".into()));
        }
        if self.grid_deg.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("grid must be strictly increasing".into()));
        }
        if self.snr_db.is_some_and(|s| !s.is_finite()) {
            return Err(Error::Config("snr_db must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct JammerSpec {
    pub doa_deg: f64,
    pub corrupted_snapshots: usize,
    /// Jammer power over the power of one source.
    pub power_factor: f64,
}

impl Default for JammerSpec {
    fn default() -> Self {
        JammerSpec { doa_deg: 0.0, corrupted_snapshots: 10, power_factor: 20.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SpatialSpectrum {
    pub angles: Vec<f64>,
    pub power: Vec<f64>,
}

impl SpatialSpectrum {
    /// Power at the grid angle closest to `deg`.
    pub fn at(&self, deg: f64) -> f64 {
        let i = nearest_index(&self.angles, deg);
        self.power[i]
    }

    /// Angles of the `count` largest local maxima, strongest first.
    pub fn peaks(&self, count: usize) -> Vec<f64> {
        let p = &self.power;
        let n = p.len();
        let mut idx: Vec<usize> = (0..n)
            .filter(|&i| p[i] > 0.0 && (i == 0 || p[i] >= p[i - 1]) && (i + 1 == n || p[i] > p[i + 1]))
            .collect();
        idx.sort_by(|&a, &b| p[b].total_cmp(&p[a]).then(a.cmp(&b)));
        idx.into_iter().take(count).map(|i| self.angles[i]).collect()
    }
}

fn nearest_index(angles: &[f64], deg: f64) -> usize {
    angles
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - deg).abs().total_cmp(&(b.1 - deg).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

/// `a_m(θ) = exp(−j m π sin θ)`, `m = 0..M−1`.
pub fn steering(m_sensors: usize, deg: f64) -> DVector<Complex64> {
    let phase = -PI * deg.to_radians().sin();
    DVector::from_fn(m_sensors, |m, _| Complex64::from_polar(1.0, phase * m as f64))
}

/// `M×N_θ` array manifold over the configured grid.
pub fn manifold(cfg: &ArrayConfig) -> Result<ComplexMatrix> {
    cfg.validate()?;
    let cols: Vec<DVector<Complex64>> = cfg.grid_deg.iter().map(|&d| steering(cfg.m_sensors, d)).collect();
    ComplexMatrix::new(DMatrix::from_columns(&cols))
}

fn complex_gaussian<R: Rng + ?Sized>(r: &mut R, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    Complex64::new(s * r.sample::<f64, _>(StandardNormal), s * r.sample::<f64, _>(StandardNormal))
}

/// `Y = A_s S + N` plus jammers. Each source has unit-power circular complex
/// Gaussian amplitudes; noise has per-entry variance `10^(−snr/10)`. Each
/// jammer hits `corrupted_snapshots` distinct random snapshots with
/// amplitude `√power_factor` and uniform random phase.
///
/// Sources, noise and each jammer draw from separate streams, so adding
/// jammers leaves the source and noise realizations unchanged.
pub fn simulate_received(cfg: &ArrayConfig, source_doas: &[f64], jammers: &[JammerSpec]) -> Result<ComplexMatrix> {
    cfg.validate()?;
    let (m, t) = (cfg.m_sensors, cfg.t_snapshots);
    let in_range = |d: f64| d.is_finite() && d.abs() <= 90.0;
    if let Some(bad) = source_doas.iter().find(|&&d| !in_range(d)) {
        return Err(Error::Config(format!("source DOA {bad} outside [-90, 90]")));
    }
    let mut y = DMatrix::<Complex64>::zeros(m, t);

    let mut rs = rng::substream(cfg.seed, "doa-sources", 0);
    for &doa in source_doas {
        let a = steering(m, doa);
        for j in 0..t {
            let s = complex_gaussian(&mut rs, 1.0);
            y.column_mut(j).axpy(s, &a, Complex64::new(1.0, 0.0));
        }
    }

    if let Some(snr) = cfg.snr_db {
        let var = 10f64.powf(-snr / 10.0);
        let mut rn = rng::substream(cfg.seed, "doa-noise", 0);
        for z in y.iter_mut() {
            *z += complex_gaussian(&mut rn, var);
        }
    }

    for (k, jam) in jammers.iter().enumerate() {
        if !in_range(jam.doa_deg) {
            return Err(Error::Config(format!("jammer DOA {} outside [-90, 90]", jam.doa_deg)));
        }
        if jam.corrupted_snapshots > t || !(jam.power_factor >= 0.0) {
            return Err(Error::Config(format!(
                "jammer {k}: needs at most {t} snapshots and non-negative power, got {} and {}",
                jam.corrupted_snapshots, jam.power_factor
            )));
        }
        let mut rj = rng::substream(cfg.seed, "doa-jammer", k as u64);
        let a = steering(m, jam.doa_deg);
        let mut cols = index::sample(&mut rj, t, jam.corrupted_snapshots).into_vec();
        cols.sort_unstable();
        for j in cols {
            let amp = Complex64::from_polar(jam.power_factor.sqrt(), rj.random_range(0.0..2.0 * PI));
            y.column_mut(j).axpy(amp, &a, Complex64::new(1.0, 0.0));
        }
    }
    ComplexMatrix::new(y)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReduceMethod {
    Svd,
    L1cSvd,
}

impl ReduceMethod {
    pub fn name(self) -> &'static str {
        match self {
            ReduceMethod::Svd => "svd",
            ReduceMethod::L1cSvd => "l1csvd",
        }
    }
}

impl fmt::Display for ReduceMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReduceMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "svd" => Ok(ReduceMethod::Svd),
            "l1csvd" => Ok(ReduceMethod::L1cSvd),
            _ => Err(Error::Config(format!("unknown reduction {s:?} (expected svd or l1csvd)"))),
        }
    }
}

/// `U_k·diag(σ_k)` of the chosen decomposition of `y_real`.
pub fn reduce(y_real: &Matrix, k: usize, method: ReduceMethod, seed: u64) -> Result<Matrix> {
    if k == 0 || k > y_real.rows() {
        return Err(Error::Dimension(format!("k = {k} must lie in 1..={}", y_real.rows())));
    }
    let (u, sigma) = match method {
        ReduceMethod::Svd => {
            let s = compact_svd(y_real, k)?;
            (s.u, s.sigma)
        }
        ReduceMethod::L1cSvd => {
            let r = l1_csvd(y_real, k, &L1cSvdOptions { seed, ..Default::default() })?;
            (r.u, r.sigma)
        }
    };
    Matrix::new(u.as_dmatrix() * DMatrix::from_diagonal(&DVector::from_vec(sigma)))
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct GroupLassoOptions {
    /// Absolute λ; overrides `lambda_fraction` when set.
    pub lambda: Option<f64>,
    /// λ as a fraction of the smallest λ giving the all-zero solution.
    pub lambda_fraction: f64,
    pub max_iter: usize,
    /// Relative objective change that counts as converged.
    pub tol: f64,
}

impl Default for GroupLassoOptions {
    fn default() -> Self {
        GroupLassoOptions { lambda: None, lambda_fraction: 0.3, max_iter: 5000, tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupLassoResult {
    pub spectrum: SpatialSpectrum,
    pub lambda: f64,
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    /// `2N_θ×K` solution; rows `θ` and `N_θ + θ` form group `θ`.
    pub s: DMatrix<f64>,
}

/// Stacks `[Ã Ã′]` from a realified manifold `Ã = [Re A; Im A]`.
fn with_companion(a_real: &DMatrix<f64>) -> DMatrix<f64> {
    let (two_m, n) = a_real.shape();
    let m = two_m / 2;
    DMatrix::from_fn(two_m, 2 * n, |i, j| {
        if j < n {
            a_real[(i, j)]
        } else if i < m {
            -a_real[(i + m, j - n)]
        } else {
            a_real[(i - m, j - n)]
        }
    })
}

fn group_norms(s: &DMatrix<f64>, n: usize) -> Vec<f64> {
    (0..n).map(|g| (s.row(g).norm_squared() + s.row(n + g).norm_squared()).sqrt()).collect()
}

fn objective(b: &DMatrix<f64>, y: &DMatrix<f64>, s: &DMatrix<f64>, lambda: f64, n: usize) -> f64 {
    0.5 * (y - b * s).norm_squared() + lambda * group_norms(s, n).iter().sum::<f64>()
}

/// Solves the group lasso by monotone FISTA with step `1/‖[Ã Ã′]‖₂²` and
/// returns the per-angle group norms normalized to a peak of 1.
///
/// `a_real` must be a realified manifold (`2M×N_θ`). Hitting `max_iter`
/// before the objective settles returns `converged = false`.
pub fn group_sparse_spectrum(y_sv: &Matrix, a_real: &Matrix, angles: &[f64], opts: &GroupLassoOptions) -> Result<GroupLassoResult> {
    let (two_m, n) = a_real.shape();
    if two_m % 2 != 0 || y_sv.rows() != two_m || angles.len() != n {
        return Err(Error::Dimension(format!(
            "need a 2Mx{n} manifold, matching data rows and {n} angles; got {two_m}x{n}, {} rows, {} angles",
            y_sv.rows(),
            angles.len()
        )));
    }
    if opts.max_iter == 0 || !(opts.tol > 0.0) {
        return Err(Error::Config("max_iter and tol must be positive".into()));
    }
    let b = with_companion(a_real.as_dmatrix());
    let y = y_sv.as_dmatrix();
    let bt = b.transpose();
    let bty = &bt * y;
    let critical = group_norms(&bty, n).into_iter().fold(0.0, f64::max);
    let lambda = match opts.lambda {
        Some(l) => l,
        None => opts.lambda_fraction * critical,
    };
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::Config(format!("lambda must be positive, got {lambda}")));
    }
    let gram = &bt * &b;
    let lip = gram.symmetric_eigenvalues().max();
    let step = 1.0 / lip;
    let k = y.ncols();

    let prox = |z: &DMatrix<f64>| -> DMatrix<f64> {
        let mut out = z.clone();
        for (g, norm) in group_norms(z, n).into_iter().enumerate() {
            let scale = if norm > 0.0 { (1.0 - step * lambda / norm).max(0.0) } else { 0.0 };
            for c in 0..k {
                out[(g, c)] *= scale;
                out[(n + g, c)] *= scale;
            }
        }
        out
    };

    let mut x = DMatrix::<f64>::zeros(2 * n, k);
    let mut w = x.clone();
    let mut t = 1.0f64;
    let mut f = objective(&b, y, &x, lambda, n);
    let mut trace = vec![f];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < opts.max_iter {
        iterations += 1;
        let grad = &gram * &w - &bty;
        let z = prox(&(&w - step * grad));
        let fz = objective(&b, y, &z, lambda, n);
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let x_prev = x.clone();
        let f_prev = f;
        if fz <= f {
            x = z.clone();
            f = fz;
        }
        w = &x + (t / t_next) * (&z - &x) + ((t - 1.0) / t_next) * (&x - &x_prev);
        t = t_next;
        trace.push(f);
        if (f_prev - f).abs() <= opts.tol * f_prev.abs().max(f64::MIN_POSITIVE) && fz <= f_prev {
            converged = true;
            break;
        }
    }

    let mut power = group_norms(&x, n);
    let peak = power.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        power.iter_mut().for_each(|p| *p /= peak);
    }
    Ok(GroupLassoResult {
        spectrum: SpatialSpectrum { angles: angles.to_vec(), power },
        lambda,
        iterations,
        converged,
        objective_trace: trace,
        s: x,
    })
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct DoaConfig {
    pub array: ArrayConfig,
    pub sources_deg: Vec<f64>,
    pub jammers: Vec<JammerSpec>,
    /// Reduction rank.
    pub k: usize,
    pub solver: GroupLassoOptions,
}

impl Default for DoaConfig {
    /// Eight sensors, 200 snapshots, sources at −45°, 0°, 60° and jammers at
    /// −30°, 30°, 50°, each on 10 snapshots at 20 times the source power.
    fn default() -> Self {
        DoaConfig {
            array: ArrayConfig::default(),
            sources_deg: vec![-45.0, 0.0, 60.0],
            jammers: [-30.0, 30.0, 50.0].into_iter().map(|d| JammerSpec { doa_deg: d, ..Default::default() }).collect(),
            k: 3,
            solver: GroupLassoOptions::default(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DoaReport {
    pub config: DoaConfig,
    pub no_jam: SpatialSpectrum,
    pub svd: SpatialSpectrum,
    pub l1csvd: SpatialSpectrum,
    /// Solver convergence for (no jammers, SVD, L1-cSVD).
    pub converged: [bool; 3],
    /// Energy of the jammer contribution over energy of the clean received data.
    pub jammer_to_signal: f64,
}

impl DoaReport {
    /// `angle_deg,power_no_jam,power_svd,power_l1csvd` after the schema line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_SCHEMA_LINE}")?;
        writeln!(w, "angle_deg,power_no_jam,power_svd,power_l1csvd")?;
        for (i, a) in self.no_jam.angles.iter().enumerate() {
            writeln!(w, "{a},{},{},{}", self.no_jam.power[i], self.svd.power[i], self.l1csvd.power[i])?;
        }
        Ok(())
    }
}

/// Three spectra: SVD reduction without jammers, then SVD and L1-cSVD
/// reductions of the same snapshots with jammers added.
pub fn run_doa(cfg: &DoaConfig) -> Result<DoaReport> {
    let a_real = realify(&manifold(&cfg.array)?);
    let clean = simulate_received(&cfg.array, &cfg.sources_deg, &[])?;
    let jammed = simulate_received(&cfg.array, &cfg.sources_deg, &cfg.jammers)?;
    let jam_energy = (jammed.as_dmatrix() - clean.as_dmatrix()).iter().map(|z| z.norm_sqr()).sum::<f64>();
    let jammer_to_signal = jam_energy / clean.frobenius().powi(2);

    let solver_seed = rng::derive_seed(cfg.array.seed, "doa-l1csvd", 0);
    let angles = &cfg.array.grid_deg;
    let spectrum = |y: &ComplexMatrix, method: ReduceMethod| -> Result<GroupLassoResult> {
        let reduced = reduce(&realify(y), cfg.k, method, solver_seed)?;
        group_sparse_spectrum(&reduced, &a_real, angles, &cfg.solver)
    };
    let no_jam = spectrum(&clean, ReduceMethod::Svd)?;
    let svd = spectrum(&jammed, ReduceMethod::Svd)?;
    let l1 = spectrum(&jammed, ReduceMethod::L1cSvd)?;
    Ok(DoaReport {
        config: cfg.clone(),
        converged: [no_jam.converged, svd.converged, l1.converged],
        no_jam: no_jam.spectrum,
        svd: svd.spectrum,
        l1csvd: l1.spectrum,
        jammer_to_signal,
    })
}
