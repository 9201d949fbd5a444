//! One function per subcommand. Each resolves its options (flag, then
//! config file, then default), runs, and writes its outputs plus
//! `manifest.json` into the output directory.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::Serialize;
use serde_json::{json, Value};

use l1csvd::classifier::{load_pmlb_vowel, run_vowel_experiment, TrainMethod, VowelConfig};
use l1csvd::decompose::convergence_study;
use l1csvd::doa::{run_doa, ArrayConfig, DoaConfig, GroupLassoOptions, JammerSpec};
use l1csvd::l1pca::Solver;
use l1csvd::matrix::random_gaussian;
use l1csvd::rng::derive_seed;
use l1csvd::rpca::{rpca_svd, RpcaOptions};
use l1csvd::synth::{run_sweep, SvMethod, SyntheticConfig, CSV_SCHEMA_LINE};
use l1csvd::{compact_svd, l1_csvd, L1cSvdOptions, Matrix};

use crate::settings::{parse_list, parse_optional_f64, Settings};
use crate::{BenchSvArgs, ConvergenceArgs, DecomposeArgs, DoaArgs, VowelArgs};

/// Options shared by every subcommand.
pub struct Common {
    pub settings: Settings,
    pub seed: u64,
    pub jobs: usize,
    pub out_dir: PathBuf,
}

const COMMON_KEYS: [&str; 2] = ["seed", "jobs"];

fn known<'a>(extra: &[&'a str]) -> Vec<&'a str> {
    COMMON_KEYS.iter().copied().chain(extra.iter().copied()).collect()
}

fn create(out_dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out_dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json(out_dir: &Path, name: &str, value: &impl Serialize) -> Result<()> {
    let mut w = create(out_dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn write_manifest(common: &Common, command: &str, config: &impl Serialize, results: Value) -> Result<()> {
    let mut cfg = serde_json::to_value(config)?;
    if let Value::Object(map) = &mut cfg {
        map.insert("seed".into(), json!(common.seed));
        map.insert("jobs".into(), json!(common.jobs));
    }
    let manifest = json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "results": results,
    });
    write_json(&common.out_dir, "manifest.json", &manifest)
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T> {
    serde_json::from_value(Value::String(s.trim().to_ascii_lowercase())).with_context(|| format!("unknown value {s:?}"))
}

fn write_vector(out_dir: &Path, name: &str, values: &[f64]) -> Result<()> {
    let mut w = create(out_dir, name)?;
    for v in values {
        writeln!(w, "{v}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_matrix(out_dir: &Path, name: &str, m: &Matrix) -> Result<()> {
    let mut w = create(out_dir, name)?;
    m.write_csv(&mut w)?;
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------- decompose

#[derive(Serialize)]
struct DecomposeConfig {
    input: PathBuf,
    k: usize,
    method: String,
    pca_solver: Solver,
    max_outer_iter: usize,
    tol: f64,
    monotone: bool,
    rpca_lambda: Option<f64>,
}

pub fn decompose(common: &Common, args: &DecomposeArgs) -> Result<()> {
    let s = &common.settings;
    s.check_known(&known(&["input", "k", "method", "pca_solver", "max_outer_iter", "tol", "monotone", "rpca_lambda"]))?;
    let defaults = L1cSvdOptions::default();
    let input = match args.input.clone().or_else(|| s.get("input").map(PathBuf::from)) {
        Some(p) => p,
        None => bail!("--input is required"),
    };
    let cfg = DecomposeConfig {
        input,
        k: s.pick(args.k, "k", 0)?,
        method: s.pick_with(args.method.as_deref(), "method", "l1csvd".to_string(), |m| {
            let m = m.trim().to_ascii_lowercase();
            match m.as_str() {
                "svd" | "l1csvd" | "rpca" => Ok(m),
                _ => bail!("unknown method {m:?} (expected svd, l1csvd or rpca)"),
            }
        })?,
        pca_solver: s.pick_with(args.pca_solver.as_deref(), "pca_solver", defaults.pca_solver, parse_enum)?,
        max_outer_iter: s.pick(args.max_outer_iter, "max_outer_iter", defaults.max_outer_iter)?,
        tol: s.pick(args.tol, "tol", defaults.tol)?,
        monotone: s.flag(args.monotone, "monotone")?,
        rpca_lambda: s.pick_with(args.rpca_lambda.as_deref(), "rpca_lambda", None, parse_optional_f64)?,
    };

    let file = File::open(&cfg.input).with_context(|| format!("opening {}", cfg.input.display()))?;
    let x = Matrix::read_csv(BufReader::new(file)).with_context(|| format!("reading {}", cfg.input.display()))?;
    let k = if cfg.k == 0 { x.rows().min(x.cols()) } else { cfg.k };

    let start = Instant::now();
    let (u, sigma, v, extra) = match cfg.method.as_str() {
        "svd" => {
            let r = compact_svd(&x, k)?;
            (r.u, r.sigma, r.v, json!({}))
        }
        "rpca" => {
            let opts = RpcaOptions { lambda: cfg.rpca_lambda, ..Default::default() };
            let r = rpca_svd(&x, k, &opts)?;
            (r.u, r.sigma, r.v, json!({}))
        }
        _ => {
            let opts = L1cSvdOptions {
                pca_solver: cfg.pca_solver,
                max_outer_iter: cfg.max_outer_iter,
                tol: cfg.tol,
                monotone: cfg.monotone,
                seed: derive_seed(common.seed, "decompose", 0),
                ..Default::default()
            };
            let r = l1_csvd(&x, k, &opts)?;
            let extra = json!({
                "mp": r.mp_trace.last(),
                "mp_trace": r.mp_trace,
                "iterations": r.iterations,
                "converged": r.converged,
                "pca_metric": r.pca_metric,
            });
            (r.u, r.sigma, r.v, extra)
        }
    };
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;

    write_matrix(&common.out_dir, "u.csv", &u)?;
    write_vector(&common.out_dir, "sigma.csv", &sigma)?;
    write_matrix(&common.out_dir, "v.csv", &v)?;
    let mut results = json!({ "k": k, "sigma": sigma, "wall_ms": wall_ms });
    if let (Value::Object(r), Value::Object(e)) = (&mut results, extra) {
        r.extend(e);
    }
    write_manifest(common, "decompose", &cfg, results)
}

// ---------------------------------------------------------------- bench-sv

/// OSR grid used when none is given, in dB.
pub const DEFAULT_OSR_GRID: [f64; 6] = [-10.0, -5.0, 0.0, 5.0, 10.0, 15.0];

#[derive(Serialize)]
struct BenchSvConfig {
    d: usize,
    n: usize,
    k: usize,
    k_o: usize,
    p_o: f64,
    snr_db: Option<f64>,
    sv_low: f64,
    sv_high: f64,
    osr_grid: Vec<f64>,
    methods: Vec<SvMethod>,
    trials: usize,
    snr_as_written: bool,
    timing: bool,
}

pub fn bench_sv(common: &Common, args: &BenchSvArgs) -> Result<()> {
    let s = &common.settings;
    s.check_known(&known(&[
        "d", "n", "k", "k_o", "p_o", "snr_db", "sv_low", "sv_high", "osr_grid", "methods", "trials", "snr_as_written", "timing",
    ]))?;
    let dflt = SyntheticConfig::default();
    let cfg = BenchSvConfig {
        d: s.pick(args.d, "d", dflt.d)?,
        n: s.pick(args.n, "n", dflt.n)?,
        k: s.pick(args.k, "k", dflt.k)?,
        k_o: s.pick(args.k_o, "k_o", dflt.k_o)?,
        p_o: s.pick(args.p_o, "p_o", dflt.p_o)?,
        snr_db: s.pick_with(args.snr_db.as_deref(), "snr_db", dflt.snr_db, parse_optional_f64)?,
        sv_low: s.pick(args.sv_low, "sv_low", dflt.sv_log_range.0)?,
        sv_high: s.pick(args.sv_high, "sv_high", dflt.sv_log_range.1)?,
        osr_grid: s.pick_with(args.osr_grid.as_deref(), "osr_grid", DEFAULT_OSR_GRID.to_vec(), parse_list)?,
        methods: s.pick_with(args.methods.as_deref(), "methods", SvMethod::ALL.to_vec(), parse_list)?,
        trials: s.pick(args.trials, "trials", dflt.trials)?,
        snr_as_written: s.flag(args.snr_as_written, "snr_as_written")?,
        timing: s.flag(args.timing, "timing")?,
    };
    if cfg.osr_grid.iter().any(|o| !o.is_finite()) {
        bail!("osr_grid entries must be finite");
    }
    let synth = SyntheticConfig {
        d: cfg.d,
        n: cfg.n,
        k: cfg.k,
        k_o: cfg.k_o,
        p_o: cfg.p_o,
        snr_db: cfg.snr_db,
        osr_db: cfg.osr_grid.first().copied().unwrap_or(0.0),
        sv_log_range: (cfg.sv_low, cfg.sv_high),
        trials: cfg.trials,
        seed: common.seed,
        snr_as_written: cfg.snr_as_written,
    };
    synth.validate()?;

    let report = run_sweep(&synth, &cfg.osr_grid, &cfg.methods, cfg.timing)?;
    let mut w = create(&common.out_dir, "bench_sv.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(&common.out_dir, "bench_sv_summary.json", &report.aggregates)?;

    let failures = report.records.iter().filter(|r| r.r_sv.is_none()).count();
    write_manifest(common, "bench-sv", &cfg, json!({ "records": report.records.len(), "failures": failures }))?;
    if !report.records.is_empty() && failures == report.records.len() {
        bail!("every trial failed");
    }
    Ok(())
}

// ---------------------------------------------------------------- convergence

#[derive(Serialize)]
struct ConvergenceConfig {
    d: usize,
    n: usize,
    k: usize,
    inits: usize,
    max_outer_iter: usize,
    tol: f64,
    monotone: bool,
}

pub fn convergence(common: &Common, args: &ConvergenceArgs) -> Result<()> {
    let s = &common.settings;
    s.check_known(&known(&["d", "n", "k", "inits", "max_outer_iter", "tol", "monotone"]))?;
    let defaults = L1cSvdOptions::default();
    let cfg = ConvergenceConfig {
        d: s.pick(args.d, "d", 8)?,
        n: s.pick(args.n, "n", 50)?,
        k: s.pick(args.k, "k", 5)?,
        inits: s.pick(args.inits, "inits", 4)?,
        max_outer_iter: s.pick(args.max_outer_iter, "max_outer_iter", defaults.max_outer_iter)?,
        tol: s.pick(args.tol, "tol", defaults.tol)?,
        monotone: s.flag(args.monotone, "monotone")?,
    };
    if cfg.d == 0 || cfg.n == 0 {
        bail!("d and n must be positive");
    }
    let x = random_gaussian(cfg.d, cfg.n, derive_seed(common.seed, "convergence-data", 0));
    let opts = L1cSvdOptions {
        max_outer_iter: cfg.max_outer_iter,
        tol: cfg.tol,
        monotone: cfg.monotone,
        seed: derive_seed(common.seed, "convergence-solver", 0),
        ..Default::default()
    };
    let runs = convergence_study(&x, cfg.k, cfg.inits, &opts)?;

    let mut w = create(&common.out_dir, "convergence.csv")?;
    writeln!(w, "{CSV_SCHEMA_LINE}")?;
    writeln!(w, "init,sweep,mp")?;
    for (i, r) in runs.iter().enumerate() {
        for (sweep, mp) in r.mp_trace.iter().enumerate() {
            writeln!(w, "{i},{sweep},{mp}")?;
        }
    }
    w.flush()?;

    let finals: Vec<f64> = runs.iter().filter_map(|r| r.mp_trace.last().copied()).collect();
    let iterations: Vec<usize> = runs.iter().map(|r| r.iterations).collect();
    let converged: Vec<bool> = runs.iter().map(|r| r.converged).collect();
    write_manifest(common, "convergence", &cfg, json!({ "final_mp": finals, "iterations": iterations, "converged": converged }))
}

// ---------------------------------------------------------------- vowel

#[derive(Serialize)]
struct VowelCliConfig {
    data: PathBuf,
    trials: usize,
    methods: Vec<TrainMethod>,
    k_prime: Option<usize>,
    corrupt_count: usize,
    power_factor: f64,
    n_train: usize,
    n_test: usize,
}

fn parse_optional_usize(s: &str) -> Result<Option<usize>> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("none") || t.is_empty() {
        return Ok(None);
    }
    Ok(Some(t.parse().with_context(|| format!("expected a count or `none`, got {t:?}"))?))
}

pub fn vowel(common: &Common, args: &VowelArgs) -> Result<()> {
    let s = &common.settings;
    s.check_known(&known(&["data", "trials", "methods", "k_prime", "corrupt_count", "power_factor", "n_train", "n_test"]))?;
    let dflt = VowelConfig::default();
    let cfg = VowelCliConfig {
        data: args.data.clone().or_else(|| s.get("data").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("data/vowel.tsv")),
        trials: s.pick(args.trials, "trials", dflt.trials)?,
        methods: s.pick_with(args.methods.as_deref(), "methods", dflt.methods.clone(), parse_list)?,
        k_prime: s.pick_with(args.k_prime.as_deref(), "k_prime", dflt.k_prime, parse_optional_usize)?,
        corrupt_count: s.pick(args.corrupt_count, "corrupt_count", dflt.corrupt_count)?,
        power_factor: s.pick(args.power_factor, "power_factor", dflt.power_factor)?,
        n_train: s.pick(args.n_train, "n_train", dflt.n_train)?,
        n_test: s.pick(args.n_test, "n_test", dflt.n_test)?,
    };
    if !(cfg.power_factor >= 0.0 && cfg.power_factor.is_finite()) {
        bail!("power_factor must be a finite non-negative number");
    }
    let ds = load_pmlb_vowel(&cfg.data).with_context(|| format!("loading {}", cfg.data.display()))?;
    let vcfg = VowelConfig {
        trials: cfg.trials,
        methods: cfg.methods.clone(),
        k_prime: cfg.k_prime,
        corrupt_count: cfg.corrupt_count,
        power_factor: cfg.power_factor,
        n_train: cfg.n_train,
        n_test: cfg.n_test,
        seed: common.seed,
    };
    let report = run_vowel_experiment(&ds, &vcfg)?;

    let mut w = create(&common.out_dir, "vowel_accuracy.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&common.out_dir, "vowel_sigma.csv")?;
    report.write_sigma_csv(&mut w)?;
    w.flush()?;
    let summary = json!({
        "k_prime": report.k_prime,
        "clean_svd_accuracy": report.clean_svd_accuracy,
        "methods": report.summaries,
    });
    write_json(&common.out_dir, "vowel_summary.json", &summary)?;

    let failures = report.records.iter().filter(|r| r.accuracy.is_none()).count();
    write_manifest(common, "vowel", &cfg, json!({ "records": report.records.len(), "failures": failures }))?;
    if !report.records.is_empty() && failures == report.records.len() {
        bail!("every trial failed");
    }
    Ok(())
}

// ---------------------------------------------------------------- doa

#[derive(Serialize)]
struct DoaCliConfig {
    m_sensors: usize,
    t_snapshots: usize,
    snr_db: Option<f64>,
    sources: Vec<f64>,
    jammers: Vec<f64>,
    jammer_snapshots: usize,
    jammer_power: f64,
    k: usize,
    lambda_fraction: f64,
    max_iter: usize,
    tol: f64,
}

pub fn doa(common: &Common, args: &DoaArgs) -> Result<()> {
    let s = &common.settings;
    s.check_known(&known(&[
        "m_sensors", "t_snapshots", "snr_db", "sources", "jammers", "jammer_snapshots", "jammer_power", "k", "lambda_fraction", "max_iter", "tol",
    ]))?;
    let dflt = DoaConfig::default();
    let jdflt = JammerSpec::default();
    let cfg = DoaCliConfig {
        m_sensors: s.pick(args.m_sensors, "m_sensors", dflt.array.m_sensors)?,
        t_snapshots: s.pick(args.t_snapshots, "t_snapshots", dflt.array.t_snapshots)?,
        snr_db: s.pick_with(args.snr_db.as_deref(), "snr_db", dflt.array.snr_db, parse_optional_f64)?,
        sources: s.pick_with(args.sources.as_deref(), "sources", dflt.sources_deg.clone(), parse_list)?,
        jammers: s.pick_with(args.jammers.as_deref(), "jammers", dflt.jammers.iter().map(|j| j.doa_deg).collect(), parse_list)?,
        jammer_snapshots: s.pick(args.jammer_snapshots, "jammer_snapshots", jdflt.corrupted_snapshots)?,
        jammer_power: s.pick(args.jammer_power, "jammer_power", jdflt.power_factor)?,
        k: s.pick(args.k, "k", dflt.k)?,
        lambda_fraction: s.pick(args.lambda_fraction, "lambda_fraction", dflt.solver.lambda_fraction)?,
        max_iter: s.pick(args.max_iter, "max_iter", dflt.solver.max_iter)?,
        tol: s.pick(args.tol, "tol", dflt.solver.tol)?,
    };
    let dcfg = DoaConfig {
        array: ArrayConfig { m_sensors: cfg.m_sensors, t_snapshots: cfg.t_snapshots, snr_db: cfg.snr_db, seed: common.seed, ..Default::default() },
        sources_deg: cfg.sources.clone(),
        jammers: cfg
            .jammers
            .iter()
            .map(|&d| JammerSpec { doa_deg: d, corrupted_snapshots: cfg.jammer_snapshots, power_factor: cfg.jammer_power })
            .collect(),
        k: cfg.k,
        solver: GroupLassoOptions { lambda: None, lambda_fraction: cfg.lambda_fraction, max_iter: cfg.max_iter, tol: cfg.tol },
    };
    let report = run_doa(&dcfg)?;

    let mut w = create(&common.out_dir, "doa_spectrum.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let count = cfg.sources.len();
    let summary = json!({
        "peaks_no_jam": report.no_jam.peaks(count),
        "peaks_svd": report.svd.peaks(count),
        "peaks_l1csvd": report.l1csvd.peaks(count),
        "jammer_power_svd": cfg.jammers.iter().map(|&a| report.svd.at(a)).collect::<Vec<_>>(),
        "jammer_power_l1csvd": cfg.jammers.iter().map(|&a| report.l1csvd.at(a)).collect::<Vec<_>>(),
        "converged": report.converged,
        "jammer_to_signal": report.jammer_to_signal,
    });
    write_json(&common.out_dir, "doa_summary.json", &summary)?;
    write_manifest(common, "doa", &cfg, json!({ "converged": report.converged }))
}

/// Creates the output directory.
pub fn prepare_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}
