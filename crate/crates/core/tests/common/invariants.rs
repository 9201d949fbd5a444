//! Per-instance property checks shared by the proptest suite and the
//! acceptance run. Each check draws one random instance from `seed` and
//! returns a description of the first violation it finds.

#![allow(dead_code)]

use l1csvd::classifier::{coordinate_median, corrupt_training, load_pmlb_vowel, mahalanobis, run_vowel_experiment, ClassModel, VowelConfig};
use l1csvd::decompose::{perf_metric, sigma_search};
use l1csvd::doa::{group_sparse_spectrum, manifold, reduce, simulate_received, ArrayConfig, GroupLassoOptions, ReduceMethod};
use l1csvd::l1pca::{l1pca, l1pca_exhaustive, InitPolicy, L1PcaOptions, Solver};
use l1csvd::matrix::{procrustes_orthonormalize, random_orthonormal, realify};
use l1csvd::rpca::{rpca_pcp, RpcaOptions};
use l1csvd::synth::{aggregate_records, generate_instance, run_sweep, SvMethod, SyntheticConfig};
use l1csvd::{compact_svd, l1_csvd, ComplexMatrix, L1cSvdOptions, Matrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub type Check = fn(u64) -> Result<(), String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_cafe)
}

fn gaussian(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::new(DMatrix::from_fn(rows, cols, |_, _| r.sample::<f64, _>(StandardNormal))).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond { Ok(()) } else { Err(msg()) }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

// ---- matrix-core ----

pub fn svd_factors_orthonormal(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let d = r.random_range(2..12);
    let n = r.random_range(2..40);
    let k = r.random_range(1..=d.min(n));
    let s = compact_svd(&gaussian(&mut r, d, n), k).map_err(err)?;
    let (ru, rv) = (s.u.orthonormality_residual(), s.v.orthonormality_residual());
    ensure(ru < 1e-10 && rv < 1e-10, || format!("residuals {ru:e}, {rv:e} for {d}x{n}, k={k}"))
}

pub fn procrustes_idempotent(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(2..15);
    let k = r.random_range(1..=n);
    let q = procrustes_orthonormalize(&gaussian(&mut r, n, k)).map_err(err)?;
    let qq = procrustes_orthonormalize(&q).map_err(err)?;
    let diff = (q.as_dmatrix() - qq.as_dmatrix()).amax();
    ensure(diff < 1e-12, || format!("second pass moved entries by {diff:e}"))
}

pub fn realify_linear(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let (m, t) = (r.random_range(1..8), r.random_range(1..10));
    let mut cz = || DMatrix::from_fn(m, t, |_, _| Complex64::new(r.sample(StandardNormal), r.sample(StandardNormal)));
    let (y1, y2) = (cz(), cz());
    let alpha: f64 = r.random_range(-3.0..3.0);
    let lhs = realify(&ComplexMatrix::new(y1.map(|z| z * alpha) + &y2).map_err(err)?);
    let rhs = realify(&ComplexMatrix::new(y1).map_err(err)?).as_dmatrix() * alpha
        + realify(&ComplexMatrix::new(y2).map_err(err)?).as_dmatrix();
    let diff = (lhs.as_dmatrix() - rhs).amax();
    ensure(diff < 1e-12, || format!("realify not linear, max diff {diff:e}"))
}

pub fn svd_matches_eigensolver(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let x = gaussian(&mut r, 5, 5);
    let s = compact_svd(&x, 5).map_err(err)?;
    let gram = x.transpose() * x.as_dmatrix();
    let mut eig: Vec<f64> = gram.symmetric_eigenvalues().iter().map(|e| e.max(0.0).sqrt()).collect();
    eig.sort_by(|a, b| b.total_cmp(a));
    let worst = s.sigma.iter().zip(&eig).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(worst < 1e-8, || format!("σ differs from eigen oracle by {worst:e}"))
}

// ---- l1pca ----

fn l1pca_instance(seed: u64) -> (Matrix, usize) {
    let mut r = rng(seed);
    let d = r.random_range(2..7);
    let n = r.random_range(d..16);
    let k = r.random_range(1..=d);
    (gaussian(&mut r, d, n), k)
}

pub fn l1pca_restart_does_not_decrease(seed: u64) -> Result<(), String> {
    let (x, k) = l1pca_instance(seed);
    for solver in [Solver::Greedy, Solver::Joint, Solver::BitFlip] {
        let first = l1pca(&x, k, solver, &L1PcaOptions { seed, ..Default::default() }).map_err(err)?;
        let opts = L1PcaOptions { init: InitPolicy::Basis(first.q.clone()), seed, ..Default::default() };
        let again = l1pca(&x, k, solver, &opts).map_err(err)?;
        ensure(again.metric >= first.metric - 1e-9 * first.metric.max(1.0), || {
            format!("{solver:?}: restart metric {} < {}", again.metric, first.metric)
        })?;
    }
    Ok(())
}

pub fn greedy_components_orthogonal(seed: u64) -> Result<(), String> {
    let (x, k) = l1pca_instance(seed);
    let q = l1pca(&x, k, Solver::Greedy, &L1PcaOptions::default()).map_err(err)?.q;
    let res = q.orthonormality_residual();
    ensure(res < 1e-10, || format!("greedy basis residual {res:e}"))
}

pub fn joint_and_bitflip_monotone(seed: u64) -> Result<(), String> {
    let (x, k) = l1pca_instance(seed);
    for solver in [Solver::Joint, Solver::BitFlip] {
        let r = l1pca(&x, k, solver, &L1PcaOptions { init: InitPolicy::Random, seed, ..Default::default() }).map_err(err)?;
        if let Some(w) = r.trace.windows(2).find(|w| w[1] < w[0] - 1e-10 * w[0].abs().max(1.0)) {
            return Err(format!("{solver:?}: metric fell from {} to {}", w[0], w[1]));
        }
    }
    Ok(())
}

pub fn exhaustive_dominates(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let d = r.random_range(2..5);
    let n = r.random_range(d..=10);
    let x = gaussian(&mut r, d, n);
    let best = l1pca_exhaustive(&x, 1).map_err(err)?.metric;
    for solver in [Solver::Greedy, Solver::Joint, Solver::BitFlip] {
        let m = l1pca(&x, 1, solver, &L1PcaOptions { seed, ..Default::default() }).map_err(err)?.metric;
        ensure(m <= best + 1e-9 * best, || format!("{solver:?} metric {m} beats the oracle {best}"))?;
    }
    Ok(())
}

// ---- l1csvd ----

pub fn sigma_search_exhaustive(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let n = r.random_range(1..30);
    let a: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let v: Vec<f64> = (0..n).map(|_| r.sample(StandardNormal)).collect();
    let (s, e) = sigma_search(&a, &v).map_err(err)?;
    let cost = |c: f64| a.iter().zip(&v).map(|(x, y)| (x - c * y).abs()).sum::<f64>();
    ensure((cost(s) - e).abs() < 1e-9 * e.max(1.0), || "reported error disagrees with σ".into())?;
    for (x, y) in a.iter().zip(&v) {
        if y.abs() > 1e-9 {
            let c = cost(x / y);
            ensure(e <= c + 1e-12 * c.max(1.0), || format!("candidate {} has error {c} < {e}", x / y))?;
        }
    }
    Ok(())
}

fn l1csvd_instance(seed: u64) -> (Matrix, usize) {
    let mut r = rng(seed);
    let d = r.random_range(3..9);
    let n = r.random_range(d + 2..40);
    let k = r.random_range(1..=d);
    (gaussian(&mut r, d, n), k)
}

pub fn mp_sweeps_non_increasing(seed: u64) -> Result<(), String> {
    let (x, k) = l1csvd_instance(seed);
    let res = l1_csvd(&x, k, &L1cSvdOptions { seed, ..Default::default() }).map_err(err)?;
    for (i, w) in res.mp_trace.windows(2).enumerate() {
        ensure(w[1] <= w[0] + 1e-9, || format!("M_P rose from {} to {} at sweep {} ({}x{}, k={k})", w[0], w[1], i + 1, x.rows(), x.cols()))?;
    }
    Ok(())
}

pub fn l1csvd_result_shape(seed: u64) -> Result<(), String> {
    let (x, k) = l1csvd_instance(seed);
    let opts = L1cSvdOptions { seed, ..Default::default() };
    let res = l1_csvd(&x, k, &opts).map_err(err)?;
    ensure(res.v.is_orthonormal(), || format!("V residual {:e}", res.v.orthonormality_residual()))?;
    ensure(res.sigma.iter().all(|&s| s > 0.0), || format!("σ not positive: {:?}", res.sigma))?;
    ensure(res.sigma.windows(2).all(|w| w[0] >= w[1]), || format!("σ not descending: {:?}", res.sigma))?;
    let pca_opts = L1PcaOptions { seed: l1csvd::rng::derive_seed(seed, "l1pca", 0), ..Default::default() };
    let q = l1pca(&x, k, opts.pca_solver, &pca_opts).map_err(err)?.q;
    // Every returned column is ± some column of the L1-PCA basis.
    let overlap = q.transpose() * res.u.as_dmatrix();
    for j in 0..k {
        let best = overlap.column(j).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        ensure((best - 1.0).abs() < 1e-10, || format!("U column {j} is not a signed L1-PCA column"))?;
    }
    let mp = perf_metric(&res.u, &x, &res.sigma, &res.v).map_err(err)?;
    ensure((mp - res.mp_trace.last().unwrap()).abs() < 1e-9, || "final M_P disagrees with trace".into())
}

// ---- rpca ----

fn planted(seed: u64) -> (Matrix, usize) {
    let mut r = rng(seed);
    let n = r.random_range(15..30);
    let rank = r.random_range(1..4);
    let l0 = gaussian(&mut r, n, rank).as_dmatrix() * gaussian(&mut r, rank, n).as_dmatrix();
    let s0 = DMatrix::from_fn(n, n, |_, _| if r.random::<f64>() < 0.05 { 10.0 * r.sample::<f64, _>(StandardNormal) } else { 0.0 });
    (Matrix::new(l0 + s0).unwrap(), rank)
}

pub fn rpca_objective_non_increasing(seed: u64) -> Result<(), String> {
    let (x, _) = planted(seed);
    let res = rpca_pcp(&x, &RpcaOptions::default()).map_err(err)?;
    for (i, w) in res.objective_trace.windows(2).enumerate() {
        ensure(w[1] <= w[0] + 1e-8, || format!("objective rose from {} to {} at iteration {}", w[0], w[1], i + 2))?;
    }
    Ok(())
}

fn rank_of(m: &Matrix) -> usize {
    let s = m.singular_values();
    let tol = 1e-6 * s.max().max(1e-300);
    s.iter().filter(|&&v| v > tol).count()
}

pub fn rpca_rank_shrinks_with_lambda(seed: u64) -> Result<(), String> {
    let (x, _) = planted(seed);
    let base = 1.0 / (x.rows() as f64).sqrt();
    let mut prev = usize::MAX;
    for f in [2.0, 1.0, 0.5, 0.25] {
        let res = rpca_pcp(&x, &RpcaOptions { lambda: Some(f * base), ..Default::default() }).map_err(err)?;
        let r = rank_of(&res.l);
        ensure(r <= x.rows().min(x.cols()), || format!("rank {r} exceeds dimensions"))?;
        ensure(r <= prev, || format!("rank grew from {prev} to {r} as λ fell to {f}·λ₀"))?;
        prev = r;
    }
    Ok(())
}

// ---- synthbench ----

pub fn synth_energies_exact(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let cfg = SyntheticConfig {
        p_o: r.random_range(0.05..0.5),
        snr_db: Some(r.random_range(-5.0..20.0)),
        osr_db: r.random_range(-10.0..15.0),
        seed,
        ..Default::default()
    };
    let inst = generate_instance(&cfg, r.random_range(0..1000)).map_err(err)?;
    let e: f64 = inst.sigma0.iter().map(|s| s * s).sum();
    let noise = inst.noise.frobenius().powi(2) / e;
    let target = 10f64.powf(-cfg.snr_db.unwrap() / 10.0);
    ensure((noise - target).abs() <= 1e-9 * target, || format!("noise ratio {noise} vs {target}"))?;
    if inst.gamma.iter().any(|&g| g) {
        let o = inst.outliers.frobenius().powi(2) / e;
        let target = 10f64.powf(cfg.osr_db / 10.0);
        ensure((o - target).abs() <= 1e-9 * target, || format!("outlier ratio {o} vs {target}"))?;
    }
    Ok(())
}

pub fn synth_clean_svd_exact(seed: u64) -> Result<(), String> {
    let cfg = SyntheticConfig { p_o: 0.0, snr_db: None, trials: 2, seed, ..Default::default() };
    let rep = run_sweep(&cfg, &[0.0], &[SvMethod::Svd], false).map_err(err)?;
    ensure(rep.records.iter().all(|r| r.r_sv == Some(0.0)), || "R_sv of SVD on clean data is not exactly 0".into())
}

pub fn synth_aggregation_order_free(seed: u64) -> Result<(), String> {
    let cfg = SyntheticConfig { trials: 3, seed, ..Default::default() };
    let grid = [-5.0, 5.0];
    let methods = [SvMethod::Svd, SvMethod::L1PcaProject];
    let rep = run_sweep(&cfg, &grid, &methods, false).map_err(err)?;
    let mut shuffled = rep.records.clone();
    let mut r = rng(seed);
    for i in (1..shuffled.len()).rev() {
        shuffled.swap(i, r.random_range(0..=i));
    }
    ensure(aggregate_records(&cfg, &grid, &methods, &shuffled) == rep.aggregates, || "aggregates depend on record order".into())
}

// ---- classifier ----

pub fn mahalanobis_basis_symmetry(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let d = r.random_range(2..8);
    let u = random_orthonormal(d, d, seed).map_err(err)?;
    let mut sigma: Vec<f64> = (0..d).map(|_| r.random_range(0.5..5.0)).collect();
    sigma.sort_by(|a, b| b.total_cmp(a));
    let median: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
    let y: Vec<f64> = (0..d).map(|_| r.sample(StandardNormal)).collect();
    let m = ClassModel { label: 0, median: median.clone(), u: u.clone(), sigma: sigma.clone(), n_train: 75 };
    let mut perm: Vec<usize> = (0..d).collect();
    for i in (1..d).rev() {
        perm.swap(i, r.random_range(0..=i));
    }
    let signs: Vec<f64> = (0..d).map(|_| if r.random::<bool>() { 1.0 } else { -1.0 }).collect();
    let u2 = DMatrix::from_fn(d, d, |i, j| signs[j] * u[(i, perm[j])]);
    let m2 = ClassModel { u: Matrix::new(u2).unwrap(), sigma: perm.iter().map(|&p| sigma[p]).collect(), ..m.clone() };
    let (a, b) = (mahalanobis(&y, &m).map_err(err)?, mahalanobis(&y, &m2).map_err(err)?);
    ensure((a - b).abs() < 1e-10 * a.max(1.0), || format!("distance changed from {a} to {b}"))
}

pub fn median_robust_to_few_outliers(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let d = r.random_range(2..12);
    let x = gaussian(&mut r, d, 75);
    let c = corrupt_training(&x, 3, 25.0, &mut r).map_err(err)?;
    let (a, b) = (coordinate_median(&x), coordinate_median(&c));
    for i in 0..d {
        let mut row: Vec<f64> = x.row(i).iter().copied().collect();
        row.sort_by(f64::total_cmp);
        let iqr = row[56] - row[18];
        ensure((a[i] - b[i]).abs() < iqr, || format!("median moved {} in coordinate {i} (IQR {iqr})", (a[i] - b[i]).abs()))?;
    }
    Ok(())
}

pub fn vowel_data_path() -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/vowel.tsv")
}

pub fn vowel_accuracy_reproducible(seed: u64) -> Result<(), String> {
    let ds = load_pmlb_vowel(vowel_data_path()).map_err(err)?;
    let cfg = VowelConfig { trials: 1, seed, ..Default::default() };
    let a = run_vowel_experiment(&ds, &cfg).map_err(err)?;
    let b = run_vowel_experiment(&ds, &cfg).map_err(err)?;
    let bits = |r: &l1csvd::classifier::VowelReport| -> Vec<Option<u64>> { r.records.iter().map(|x| x.accuracy.map(f64::to_bits)).collect() };
    ensure(bits(&a) == bits(&b) && a.clean_svd_accuracy.to_bits() == b.clean_svd_accuracy.to_bits(), || "accuracy differs between identical runs".into())
}

// ---- doa ----

fn doa_instance(seed: u64) -> (ArrayConfig, Matrix, Matrix) {
    let mut r = rng(seed);
    let cfg = ArrayConfig { snr_db: None, t_snapshots: 40, seed, ..Default::default() };
    let count = r.random_range(1..4);
    let sources: Vec<f64> = (0..count).map(|_| f64::from(r.random_range(-80..80))).collect();
    let a = realify(&manifold(&cfg).unwrap());
    let y = reduce(&realify(&simulate_received(&cfg, &sources, &[]).unwrap()), count, ReduceMethod::Svd, seed).unwrap();
    (cfg, a, y)
}

pub fn group_lasso_monotone(seed: u64) -> Result<(), String> {
    let (cfg, a, y) = doa_instance(seed);
    let res = group_sparse_spectrum(&y, &a, &cfg.grid_deg, &GroupLassoOptions::default()).map_err(err)?;
    for (i, w) in res.objective_trace.windows(2).enumerate() {
        ensure(w[1] <= w[0] + 1e-10, || format!("objective rose from {} to {} at iteration {}", w[0], w[1], i + 1))?;
    }
    Ok(())
}

pub fn spectrum_rotation_invariant(seed: u64) -> Result<(), String> {
    let (cfg, a, y) = doa_instance(seed);
    let opts = GroupLassoOptions { tol: 1e-12, max_iter: 20_000, ..Default::default() };
    let base = group_sparse_spectrum(&y, &a, &cfg.grid_deg, &opts).map_err(err)?;
    let q = random_orthonormal(y.cols(), y.cols(), seed.wrapping_add(1)).map_err(err)?;
    let yq = Matrix::new(y.as_dmatrix() * q.as_dmatrix()).map_err(err)?;
    let rot = group_sparse_spectrum(&yq, &a, &cfg.grid_deg, &GroupLassoOptions { lambda: Some(base.lambda), ..opts }).map_err(err)?;
    let worst = base.spectrum.power.iter().zip(&rot.spectrum.power).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
    ensure(worst < 1e-6, || format!("spectrum moved by {worst:e} under rotation"))
}

pub fn manifold_column_norms(seed: u64) -> Result<(), String> {
    let mut r = rng(seed);
    let m = r.random_range(1..16);
    let grid: Vec<f64> = {
        let mut g: Vec<f64> = (0..10).map(|_| r.random_range(-90.0..=90.0)).collect();
        g.sort_by(f64::total_cmp);
        g.dedup();
        g
    };
    let cfg = ArrayConfig { m_sensors: m, grid_deg: grid, ..Default::default() };
    let a = manifold(&cfg).map_err(err)?;
    ensure(a.iter().all(|z| (z.norm() - 1.0).abs() < 1e-12), || "entry off the unit circle".into())?;
    let ar = realify(&a);
    let target = (m as f64).sqrt();
    for j in 0..ar.cols() {
        let n = ar.column(j).norm();
        ensure((n - target).abs() < 1e-12, || format!("realified column {j} norm {n} != √{m}"))?;
    }
    Ok(())
}

/// Every per-instance check, by name.
pub const ALL: &[(&str, Check)] = &[
    ("matrix: SVD factors orthonormal", svd_factors_orthonormal),
    ("matrix: Procrustes idempotent", procrustes_idempotent),
    ("matrix: realify linear", realify_linear),
    ("matrix: σ vs eigensolver (5x5)", svd_matches_eigensolver),
    ("l1pca: restart never lowers metric", l1pca_restart_does_not_decrease),
    ("l1pca: greedy components orthogonal", greedy_components_orthogonal),
    ("l1pca: joint/bit-flip metric monotone", joint_and_bitflip_monotone),
    ("l1pca: exhaustive oracle dominates", exhaustive_dominates),
    ("l1csvd: sigma_search exhaustive", sigma_search_exhaustive),
    ("l1csvd: M_P non-increasing per sweep", mp_sweeps_non_increasing),
    ("l1csvd: result V/σ/U structure", l1csvd_result_shape),
    ("rpca: objective non-increasing", rpca_objective_non_increasing),
    ("rpca: rank(L) shrinks with λ", rpca_rank_shrinks_with_lambda),
    ("synth: noise/outlier energies exact", synth_energies_exact),
    ("synth: clean SVD R_sv exactly 0", synth_clean_svd_exact),
    ("synth: aggregation order-free", synth_aggregation_order_free),
    ("classifier: Mahalanobis basis symmetry", mahalanobis_basis_symmetry),
    ("classifier: median robust to 3/75", median_robust_to_few_outliers),
    ("classifier: accuracy bit-reproducible", vowel_accuracy_reproducible),
    ("doa: group-lasso objective monotone", group_lasso_monotone),
    ("doa: spectrum rotation invariant", spectrum_rotation_invariant),
    ("doa: manifold column norms", manifold_column_norms),
];
