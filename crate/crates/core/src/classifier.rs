//! Nearest-subspace Bayesian classifier on per-class robust decompositions,
//! plus the vowel corruption experiment.
//!
//! Each class keeps its coordinate-wise median and a `D×K'` decomposition of
//! its (uncentered) training block. A test point goes to the class with the
//! smallest Mahalanobis distance.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decompose::{l1_csvd, L1cSvdOptions};
use crate::error::{Error, Result};
use crate::matrix::{compact_svd, Matrix};
use crate::rng;
use crate::rpca::{rpca_svd, RpcaOptions};
use crate::synth::{r_sv, CSV_SCHEMA_LINE};

/// Metadata columns of the PMLB vowel file that are not acoustic features.
pub const VOWEL_METADATA_COLUMNS: [&str; 2] = ["Train_or_Test", "Speaker_Number"];
pub const VOWEL_SAMPLES_PER_CLASS: usize = 90;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    /// `D×N`, one sample per column.
    pub features: Matrix,
    /// Class index per column, in `0..class_names.len()`.
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
    pub feature_names: Vec<String>,
}

impl LabeledDataset {
    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    /// Column indices of class `c`, in file order.
    pub fn class_columns(&self, c: usize) -> Vec<usize> {
        self.labels.iter().enumerate().filter(|(_, &l)| l == c).map(|(j, _)| j).collect()
    }
}

/// Parses delimited text with a header row and a `target` column. Tabs are
/// used as the delimiter when the header contains one, commas otherwise.
/// Columns named in `drop` are skipped; every other column must be numeric.
pub fn parse_labeled<R: BufRead>(reader: R, drop: &[&str]) -> Result<LabeledDataset> {
    let mut lines = reader.lines().enumerate();
    let header = loop {
        match lines.next() {
            Some((_, line)) => {
                let line = line?;
                if !line.trim().is_empty() && !line.starts_with('#') {
                    break line;
                }
            }
            None => return Err(Error::Parse { line: 1, msg: "missing header row".into() }),
        }
    };
    let delim = if header.contains('\t') { '\t' } else { ',' };
    let names: Vec<&str> = header.split(delim).map(str::trim).collect();
    let target = names
        .iter()
        .position(|&n| n == "target")
        .ok_or_else(|| Error::Parse { line: 1, msg: "header has no `target` column".into() })?;
    let keep: Vec<usize> = (0..names.len()).filter(|&i| i != target && !drop.contains(&names[i])).collect();
    if keep.is_empty() {
        return Err(Error::Parse { line: 1, msg: "no feature columns".into() });
    }

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut raw_labels: Vec<String> = Vec::new();
    for (i, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let lineno = i + 1;
        let fields: Vec<&str> = line.split(delim).map(str::trim).collect();
        if fields.len() != names.len() {
            return Err(Error::Parse { line: lineno, msg: format!("expected {} fields, found {}", names.len(), fields.len()) });
        }
        let mut row = Vec::with_capacity(keep.len());
        for &c in &keep {
            let v: f64 = fields[c]
                .parse()
                .map_err(|_| Error::Parse { line: lineno, msg: format!("non-numeric value {:?} in column {}", fields[c], names[c]) })?;
            if !v.is_finite() {
                return Err(Error::Parse { line: lineno, msg: format!("non-finite value in column {}", names[c]) });
            }
            row.push(v);
        }
        rows.push(row);
        raw_labels.push(fields[target].to_string());
    }
    if rows.is_empty() {
        return Err(Error::Parse { line: 2, msg: "no data rows".into() });
    }

    let mut class_names: Vec<String> = raw_labels.clone();
    class_names.sort_by(|a, b| match (a.parse::<f64>(), b.parse::<f64>()) {
        (Ok(x), Ok(y)) => x.total_cmp(&y),
        _ => a.cmp(b),
    });
    class_names.dedup();
    let lookup: BTreeMap<&str, usize> = class_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let labels = raw_labels.iter().map(|l| lookup[l.as_str()]).collect();

    let d = keep.len();
    let features = DMatrix::from_fn(d, rows.len(), |r, c| rows[c][r]);
    Ok(LabeledDataset {
        features: Matrix::new(features)?,
        labels,
        class_names,
        feature_names: keep.iter().map(|&i| names[i].to_string()).collect(),
    })
}

/// Loads the PMLB vowel table. The speaker metadata columns are dropped,
/// leaving `D = 11` features, and every class must have 90 samples.
pub fn load_pmlb_vowel(path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let ds = parse_labeled(BufReader::new(file), &VOWEL_METADATA_COLUMNS)?;
    for c in 0..ds.class_count() {
        let n = ds.class_columns(c).len();
        if n < VOWEL_SAMPLES_PER_CLASS {
            return Err(Error::Parse {
                line: 0,
                msg: format!("class {} has {n} samples, need {VOWEL_SAMPLES_PER_CLASS}", ds.class_names[c]),
            });
        }
    }
    Ok(ds)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTestSplit {
    /// Training block per class, `D×n_train`.
    pub train: Vec<Matrix>,
    pub test: Matrix,
    pub test_labels: Vec<usize>,
}

/// Stratified split: each class is shuffled by its own seeded stream, then
/// the first `n_train` columns train and the next `n_test` test.
pub fn split_per_class(ds: &LabeledDataset, n_train: usize, n_test: usize, seed: u64) -> Result<TrainTestSplit> {
    if n_train == 0 || n_test == 0 {
        return Err(Error::Config("train and test sizes must be positive".into()));
    }
    let x = ds.features.as_dmatrix();
    let mut train = Vec::with_capacity(ds.class_count());
    let mut test_cols = Vec::new();
    let mut test_labels = Vec::new();
    for c in 0..ds.class_count() {
        let mut cols = ds.class_columns(c);
        if cols.len() < n_train + n_test {
            return Err(Error::Config(format!(
                "class {} has {} samples, split needs {}",
                ds.class_names[c],
                cols.len(),
                n_train + n_test
            )));
        }
        cols.shuffle(&mut rng::substream(seed, "vowel-split", c as u64));
        train.push(Matrix::new(x.select_columns(&cols[..n_train]))?);
        test_cols.extend_from_slice(&cols[n_train..n_train + n_test]);
        test_labels.extend(std::iter::repeat_n(c, n_test));
    }
    Ok(TrainTestSplit { train, test: Matrix::new(x.select_columns(&test_cols))?, test_labels })
}

/// Adds Gaussian noise to `count` distinct random columns of `x`. The noise
/// per-entry power is `power_factor` times the mean squared entry of `x`.
pub fn corrupt_training<R: Rng + ?Sized>(x: &Matrix, count: usize, power_factor: f64, rng: &mut R) -> Result<Matrix> {
    let n = x.cols();
    if count > n {
        return Err(Error::Dimension(format!("cannot corrupt {count} of {n} columns")));
    }
    if !(power_factor >= 0.0) {
        return Err(Error::Config(format!("power factor must be non-negative, got {power_factor}")));
    }
    let mut out = x.as_dmatrix().clone();
    let power = x.as_dmatrix().norm_squared() / (x.rows() * n) as f64;
    let scale = (power_factor * power).sqrt();
    let mut cols = index::sample(rng, n, count).into_vec();
    cols.sort_unstable();
    for j in cols {
        for i in 0..x.rows() {
            out[(i, j)] += scale * rng.sample::<f64, _>(StandardNormal);
        }
    }
    Matrix::new(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrainMethod {
    Svd,
    Rpca,
    L1cSvd,
}

impl TrainMethod {
    pub const ALL: [TrainMethod; 3] = [TrainMethod::Svd, TrainMethod::Rpca, TrainMethod::L1cSvd];

    pub fn name(self) -> &'static str {
        match self {
            TrainMethod::Svd => "svd",
            TrainMethod::Rpca => "rpca",
            TrainMethod::L1cSvd => "l1csvd",
        }
    }
}

impl fmt::Display for TrainMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMethod {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        TrainMethod::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown method {s:?} (expected svd, rpca or l1csvd)")))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassModel {
    pub label: usize,
    pub median: Vec<f64>,
    /// `D×K'` orthonormal.
    pub u: Matrix,
    /// Positive, descending.
    pub sigma: Vec<f64>,
    pub n_train: usize,
}

/// Coordinate-wise median of the columns of `x`.
pub fn coordinate_median(x: &Matrix) -> Vec<f64> {
    x.row_iter()
        .map(|row| {
            let mut v: Vec<f64> = row.iter().copied().collect();
            v.sort_by(f64::total_cmp);
            let n = v.len();
            if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
        })
        .collect()
}

/// Fits the class model for label `label` from its training block.
pub fn train_class(x_class: &Matrix, label: usize, method: TrainMethod, k_prime: usize, seed: u64) -> Result<ClassModel> {
    if k_prime == 0 || k_prime > x_class.rows() || k_prime > x_class.cols() {
        return Err(Error::Dimension(format!(
            "k' = {k_prime} must lie in 1..={} for a {}x{} block",
            x_class.rows().min(x_class.cols()),
            x_class.rows(),
            x_class.cols()
        )));
    }
    let (u, sigma) = match method {
        TrainMethod::Svd => {
            let s = compact_svd(x_class, k_prime)?;
            (s.u, s.sigma)
        }
        TrainMethod::Rpca => {
            let s = rpca_svd(x_class, k_prime, &RpcaOptions::default())?;
            (s.u, s.sigma)
        }
        TrainMethod::L1cSvd => {
            let r = l1_csvd(x_class, k_prime, &L1cSvdOptions { seed, ..Default::default() })?;
            (r.u, r.sigma)
        }
    };
    Ok(ClassModel { label, median: coordinate_median(x_class), u, sigma, n_train: x_class.cols() })
}

/// `sqrt(Σⱼ (uⱼᵀ(y − m) / (σⱼ/√n))²)` with `n` the class training count.
pub fn mahalanobis(y: &[f64], model: &ClassModel) -> Result<f64> {
    if y.len() != model.median.len() || y.len() != model.u.rows() {
        return Err(Error::Dimension(format!("point has {} coordinates, model expects {}", y.len(), model.median.len())));
    }
    let diff = DVector::from_iterator(y.len(), y.iter().zip(&model.median).map(|(a, b)| a - b));
    let proj = model.u.transpose() * diff;
    let root_n = (model.n_train as f64).sqrt();
    let mut acc = 0.0;
    for (j, (&p, &s)) in proj.iter().zip(&model.sigma).enumerate() {
        if !(s.abs() > 0.0) {
            return Err(Error::Degenerate(format!("class {} has zero singular value at index {j}", model.label)));
        }
        acc += (p * root_n / s).powi(2);
    }
    Ok(acc.sqrt())
}

/// Label of the model with the smallest Mahalanobis distance; ties go to
/// the smaller label.
pub fn classify(y: &[f64], models: &[ClassModel]) -> Result<usize> {
    let mut best: Option<(f64, usize)> = None;
    for m in models {
        let d = mahalanobis(y, m)?;
        best = match best {
            Some((bd, bl)) if bd < d || (bd == d && bl < m.label) => Some((bd, bl)),
            _ => Some((d, m.label)),
        };
    }
    best.map(|(_, l)| l).ok_or_else(|| Error::Config("no class models".into()))
}

/// Fraction of test columns assigned their own label.
pub fn accuracy(models: &[ClassModel], test: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.len() != test.cols() || labels.is_empty() {
        return Err(Error::Dimension(format!("{} labels for {} test columns", labels.len(), test.cols())));
    }
    let mut hits = 0usize;
    for (j, &l) in labels.iter().enumerate() {
        let y: Vec<f64> = test.column(j).iter().copied().collect();
        if classify(&y, models)? == l {
            hits += 1;
        }
    }
    Ok(hits as f64 / labels.len() as f64)
}

fn train_all(train: &[Matrix], method: TrainMethod, k_prime: usize, seed: u64, stream: u64) -> Result<Vec<ClassModel>> {
    train
        .iter()
        .enumerate()
        .map(|(c, x)| {
            let s = rng::derive_seed(seed, &format!("vowel-solver-{}", method.name()), stream.wrapping_mul(train.len() as u64).wrapping_add(c as u64));
            train_class(x, c, method, k_prime, s)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct VowelConfig {
    pub trials: usize,
    pub methods: Vec<TrainMethod>,
    /// Components per class; all `D` when absent.
    pub k_prime: Option<usize>,
    pub corrupt_count: usize,
    pub power_factor: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl Default for VowelConfig {
    fn default() -> Self {
        VowelConfig {
            trials: 200,
            methods: vec![TrainMethod::Svd, TrainMethod::L1cSvd],
            k_prime: None,
            corrupt_count: 3,
            power_factor: 25.0,
            n_train: 75,
            n_test: 15,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct AccuracyRecord {
    pub trial: usize,
    pub method: TrainMethod,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MethodSummary {
    pub method: TrainMethod,
    pub count: usize,
    pub failures: usize,
    pub mean_accuracy: f64,
    pub min_accuracy: f64,
    pub max_accuracy: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassSigma {
    pub class: String,
    pub method: TrainMethod,
    /// SVD of the clean training block.
    pub clean: Vec<f64>,
    /// Mean estimate from corrupted training, over trials where training succeeded.
    pub mean_corrupted: Vec<f64>,
    pub mean_r_sv: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct VowelReport {
    pub config: VowelConfig,
    pub k_prime: usize,
    /// Clean training, SVD models.
    pub clean_svd_accuracy: f64,
    pub records: Vec<AccuracyRecord>,
    pub summaries: Vec<MethodSummary>,
    pub sigma: Vec<ClassSigma>,
}

impl VowelReport {
    pub fn summary(&self, method: TrainMethod) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.method == method)
    }

    /// `trial,method,accuracy` after the schema line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_SCHEMA_LINE}")?;
        writeln!(w, "trial,method,accuracy")?;
        for r in &self.records {
            let acc = r.accuracy.map(|a| format!("{a}")).unwrap_or_default();
            writeln!(w, "{},{},{acc}", r.trial, r.method)?;
        }
        Ok(())
    }

    /// `class,method,index,clean,mean_corrupted` after the schema line.
    pub fn write_sigma_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "{CSV_SCHEMA_LINE}")?;
        writeln!(w, "class,method,index,clean,mean_corrupted")?;
        for s in &self.sigma {
            for (i, (c, e)) in s.clean.iter().zip(&s.mean_corrupted).enumerate() {
                writeln!(w, "{},{},{},{c},{e}", s.class, s.method, i + 1)?;
            }
        }
        Ok(())
    }
}

struct TrialOutcome {
    trial: usize,
    method: TrainMethod,
    /// Per-class σ, present whenever training succeeded.
    sigmas: Option<Vec<Vec<f64>>>,
    accuracy: Result<f64>,
}

/// Repeats corruption, training and testing `cfg.trials` times on one fixed
/// split. Each trial corrupts every class's training block from its own
/// stream, and all methods see the same corrupted blocks.
pub fn run_vowel_experiment(ds: &LabeledDataset, cfg: &VowelConfig) -> Result<VowelReport> {
    if cfg.methods.is_empty() {
        return Err(Error::Config("method list must be non-empty".into()));
    }
    let split = split_per_class(ds, cfg.n_train, cfg.n_test, cfg.seed)?;
    let d = ds.features.rows();
    let k_prime = cfg.k_prime.unwrap_or(d);
    if k_prime == 0 || k_prime > d.min(cfg.n_train) {
        return Err(Error::Config(format!("k' = {k_prime} must lie in 1..={}", d.min(cfg.n_train))));
    }
    if cfg.corrupt_count > cfg.n_train {
        return Err(Error::Config(format!("cannot corrupt {} of {} training columns", cfg.corrupt_count, cfg.n_train)));
    }

    let clean_models = train_all(&split.train, TrainMethod::Svd, k_prime, cfg.seed, u64::MAX / 2)?;
    let clean_svd_accuracy = accuracy(&clean_models, &split.test, &split.test_labels)?;

    let outcomes: Vec<Vec<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|trial| {
            let mut r = rng::substream(cfg.seed, "vowel-corrupt", trial as u64);
            let corrupted: Result<Vec<Matrix>> =
                split.train.iter().map(|x| corrupt_training(x, cfg.corrupt_count, cfg.power_factor, &mut r)).collect();
            cfg.methods
                .iter()
                .map(|&method| {
                    let models = corrupted
                        .as_ref()
                        .map_err(Clone::clone)
                        .and_then(|blocks| train_all(blocks, method, k_prime, cfg.seed, trial as u64));
                    match models {
                        Ok(models) => TrialOutcome {
                            trial,
                            method,
                            accuracy: accuracy(&models, &split.test, &split.test_labels),
                            sigmas: Some(models.into_iter().map(|m| m.sigma).collect()),
                        },
                        Err(e) => TrialOutcome { trial, method, sigmas: None, accuracy: Err(e) },
                    }
                })
                .collect()
        })
        .collect();

    let clean_sigma: Vec<Vec<f64>> = clean_models.iter().map(|m| m.sigma.clone()).collect();
    let mut records = Vec::new();
    let mut sums: BTreeMap<TrainMethod, (usize, Vec<Vec<f64>>, f64)> = BTreeMap::new();
    for o in outcomes.into_iter().flatten() {
        if let Some(sigmas) = &o.sigmas {
            let entry = sums.entry(o.method).or_insert_with(|| (0, vec![vec![0.0; k_prime]; sigmas.len()], 0.0));
            entry.0 += 1;
            for (c, s) in sigmas.iter().enumerate() {
                for (a, v) in entry.1[c].iter_mut().zip(s) {
                    *a += v;
                }
                entry.2 += r_sv(s, &clean_sigma[c])?;
            }
        }
        match o.accuracy {
            Ok(acc) => records.push(AccuracyRecord { trial: o.trial, method: o.method, accuracy: Some(acc), error: None }),
            Err(e) => {
                log::warn!("trial {} method {}: {e}", o.trial, o.method);
                records.push(AccuracyRecord { trial: o.trial, method: o.method, accuracy: None, error: Some(e.to_string()) });
            }
        }
    }

    let summaries = cfg
        .methods
        .iter()
        .map(|&method| {
            let accs: Vec<f64> = records.iter().filter(|r| r.method == method).filter_map(|r| r.accuracy).collect();
            let count = accs.len();
            let (mean, lo, hi) = if count == 0 {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (
                    accs.iter().sum::<f64>() / count as f64,
                    accs.iter().copied().fold(f64::INFINITY, f64::min),
                    accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                )
            };
            MethodSummary { method, count, failures: cfg.trials - count, mean_accuracy: mean, min_accuracy: lo, max_accuracy: hi }
        })
        .collect();

    let mut sigma = Vec::new();
    for &method in &cfg.methods {
        if let Some((count, acc, rsv)) = sums.get(&method) {
            let c_total = acc.len();
            for (c, s) in acc.iter().enumerate() {
                sigma.push(ClassSigma {
                    class: ds.class_names[c].clone(),
                    method,
                    clean: clean_sigma[c].clone(),
                    mean_corrupted: s.iter().map(|v| v / *count as f64).collect(),
                    mean_r_sv: rsv / (*count * c_total) as f64,
                });
            }
        }
    }

    Ok(VowelReport { config: cfg.clone(), k_prime, clean_svd_accuracy, records, summaries, sigma })
}
