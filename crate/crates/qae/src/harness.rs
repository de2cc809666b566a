//! Experiment orchestration: config-driven batches of independent training
//! runs, benchmark sweeps over compression ratios, persistence of traces and
//! summaries, and a self-check suite.
//!
//! Run k of a batch is seeded with `seed + k`, so every run is individually
//! reproducible and the batch parallelizes without changing results.

use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autoencoder::{
    compression_bound, householder_transfer, objective_j1_mean, objective_j2, optimal_unitary,
    perfect_compression_possible, AutoencoderTask,
};
use crate::dynamics::{three_qubit_model, two_qubit_model, ControlSystem};
use crate::error::{QaeError, Result};
use crate::linalg::ComplexMatrix;
use crate::optical::{simulate_optical_experiment, OpticalCase};
use crate::optimizers::{closed_loop_train, Algorithm, OptimizerConfig, TrainingTrace};
use crate::state::{
    partial_trace_matrix, random_orthonormal_states, random_pure_state, random_unitary,
    Bipartition, Keep, PureState, StateEnsemble,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SystemKind {
    TwoQubit,
    ThreeQubit,
    Optical,
}

impl SystemKind {
    pub fn qubits(self) -> usize {
        match self {
            Self::TwoQubit | Self::Optical => 2,
            Self::ThreeQubit => 3,
        }
    }
}

impl std::str::FromStr for SystemKind {
    type Err = QaeError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "two-qubit" => Ok(Self::TwoQubit),
            "three-qubit" => Ok(Self::ThreeQubit),
            "optical" => Ok(Self::Optical),
            other => Err(QaeError::Config(format!("unknown system '{other}'"))),
        }
    }
}

fn default_runs() -> usize {
    20
}
fn default_case() -> u8 {
    1
}
fn default_q() -> usize {
    1
}
fn default_latent() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub system: SystemKind,
    pub algorithm: Algorithm,
    #[serde(default = "default_q")]
    pub q: usize,
    #[serde(default = "default_latent")]
    pub latent_qubits: usize,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub seed: u64,
    /// Override the system preset's iteration budget.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    /// Draw orthonormal inputs instead of independent Haar states.
    #[serde(default)]
    pub orthonormal: bool,
    /// Input preset for the optical system (1 or 2).
    #[serde(default = "default_case")]
    pub case: u8,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q < 1 {
            return Err(QaeError::Config("q must be >= 1".into()));
        }
        if self.runs < 1 {
            return Err(QaeError::Config("runs must be >= 1".into()));
        }
        if self.system != SystemKind::Optical {
            if self.latent_qubits == 0 || self.latent_qubits >= self.system.qubits() {
                return Err(QaeError::Config(format!(
                    "latent_qubits must lie in 1..{} for this system",
                    self.system.qubits()
                )));
            }
        }
        if self.system == SystemKind::Optical && !(1..=2).contains(&self.case) {
            return Err(QaeError::Config("optical case must be 1 or 2".into()));
        }
        if self.orthonormal && self.q > 1 << self.system.qubits() {
            return Err(QaeError::Config(
                "orthonormal ensembles need q <= Hilbert dimension".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| QaeError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    /// Compression bound of this run's ensemble.
    pub expected_fidelity: f64,
    /// Best trained J2.
    pub actual_fidelity: f64,
    pub degree_of_success: f64,
    /// Mean recovery fidelity J1 at the best unitary.
    pub recovered_fidelity_mean: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub config: ExperimentConfig,
    pub runs: Vec<RunRecord>,
    pub expected_mean: f64,
    pub actual_mean: f64,
    pub actual_std: f64,
    pub degree_mean: f64,
    pub degree_std: f64,
    pub recovered_mean: f64,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl RunSummary {
    fn aggregate(config: ExperimentConfig, runs: Vec<RunRecord>) -> Self {
        let expected: Vec<f64> = runs.iter().map(|r| r.expected_fidelity).collect();
        let actual: Vec<f64> = runs.iter().map(|r| r.actual_fidelity).collect();
        let degree: Vec<f64> = runs.iter().map(|r| r.degree_of_success).collect();
        let recovered: Vec<f64> = runs.iter().map(|r| r.recovered_fidelity_mean).collect();
        let (actual_mean, actual_std) = mean_std(&actual);
        let (degree_mean, degree_std) = mean_std(&degree);
        Self {
            config,
            expected_mean: mean_std(&expected).0,
            actual_mean,
            actual_std,
            degree_mean,
            degree_std,
            recovered_mean: mean_std(&recovered).0,
            runs,
        }
    }
}

fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("QAE_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| QaeError::Config(format!("QAE_THREADS='{v}' is not a number")))?;
        builder = builder.num_threads(n.max(1));
    }
    builder
        .build()
        .map_err(|e| QaeError::Config(format!("thread pool: {e}")))
}

fn control_system(kind: SystemKind) -> ControlSystem {
    match kind {
        SystemKind::TwoQubit | SystemKind::Optical => two_qubit_model(),
        SystemKind::ThreeQubit => three_qubit_model(),
    }
}

fn optimizer_preset(cfg: &ExperimentConfig, seed: u64) -> OptimizerConfig {
    let mut opt = match cfg.system {
        SystemKind::TwoQubit | SystemKind::Optical => {
            OptimizerConfig::two_qubit_defaults(cfg.algorithm, seed)
        }
        SystemKind::ThreeQubit => OptimizerConfig::three_qubit_defaults(cfg.algorithm, seed),
    };
    if let Some(n) = cfg.max_iterations {
        opt.max_iterations = n;
    }
    opt
}

fn build_task(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<AutoencoderTask> {
    let n = cfg.system.qubits();
    let dim = 1 << n;
    let dim_b = 1 << cfg.latent_qubits;
    let dim_a = dim / dim_b;
    let states: Vec<PureState> = if cfg.orthonormal {
        random_orthonormal_states(dim, cfg.q, rng)
    } else {
        (0..cfg.q).map(|_| random_pure_state(dim, rng)).collect()
    };
    AutoencoderTask::with_default_reference(
        StateEnsemble::uniform(states)?,
        Bipartition::new(dim_a, dim_b),
    )
}

fn single_run(cfg: &ExperimentConfig, k: usize) -> Result<(RunRecord, TrainingTrace)> {
    let seed = cfg.seed + k as u64;
    let start = Instant::now();

    let (task, trace, unitary) = if cfg.system == SystemKind::Optical {
        let case = if cfg.case == 1 {
            OpticalCase::Case1
        } else {
            OpticalCase::Case2
        };
        let out = simulate_optical_experiment(case, cfg.max_iterations.unwrap_or(500), seed)?;
        (case.task(), out.trace, out.gate)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let task = build_task(cfg, &mut rng)?;
        let sys = control_system(cfg.system);
        let opt = optimizer_preset(cfg, seed);
        let out = closed_loop_train(&task, &sys, &opt)?;
        (task, out.trace, out.unitary)
    };

    let expected = compression_bound(&task)?.bound;
    let actual = trace.final_objective();
    let recovered = objective_j1_mean(&task, &unitary)?;
    let record = RunRecord {
        run: k,
        expected_fidelity: expected,
        actual_fidelity: actual,
        degree_of_success: actual / expected,
        recovered_fidelity_mean: recovered,
        iterations: trace.iterations(),
        evaluations: trace.evaluations_used,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    Ok((record, trace))
}

pub fn write_trace_csv(path: &Path, trace: &TrainingTrace) -> Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "iteration,best_j2,evaluations")?;
    for (i, (j, e)) in trace.best_objective.iter().zip(&trace.evaluations).enumerate() {
        writeln!(f, "{},{:.15e},{}", i + 1, j, e)?;
    }
    Ok(())
}

/// Execute `cfg.runs` independent training runs (run k seeded with seed + k),
/// optionally persisting per-run traces, the summary and a per-run
/// degree-of-success table into `out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, out_dir: Option<&Path>) -> Result<RunSummary> {
    cfg.validate()?;
    let pool = worker_pool()?;
    let results: Vec<Result<(RunRecord, TrainingTrace)>> = pool.install(|| {
        use rayon::prelude::*;
        (0..cfg.runs).into_par_iter().map(|k| single_run(cfg, k)).collect()
    });
    let mut records = Vec::with_capacity(cfg.runs);
    let mut traces = Vec::with_capacity(cfg.runs);
    for r in results {
        let (rec, tr) = r?;
        records.push(rec);
        traces.push(tr);
    }
    let summary = RunSummary::aggregate(cfg.clone(), records);

    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        for (k, trace) in traces.iter().enumerate() {
            write_trace_csv(&dir.join(format!("trace_run{k}.csv")), trace)?;
        }
        let mut f = fs::File::create(dir.join("summary.json"))?;
        serde_json::to_writer_pretty(&mut f, &summary)
            .map_err(|e| QaeError::Config(format!("summary serialization: {e}")))?;
        writeln!(f)?;
        let mut p = fs::File::create(dir.join("plot_fig3.csv"))?;
        writeln!(p, "run,expected,actual,degree_of_success")?;
        for r in &summary.runs {
            writeln!(
                p,
                "{},{:.15e},{:.15e},{:.15e}",
                r.run, r.expected_fidelity, r.actual_fidelity, r.degree_of_success
            )?;
        }
    }
    Ok(summary)
}

/// One (compression ratio, ensemble size) point of a benchmark sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// Input Hilbert-space dimension N.
    pub chi_num: usize,
    /// Latent dimension N_B.
    pub chi_den: usize,
    pub q: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepRow {
    pub chi_num: usize,
    pub chi_den: usize,
    pub q: usize,
    pub run: usize,
    pub expected: f64,
    pub actual: f64,
    pub degree_of_success: f64,
}

fn sweep_system(point: &SweepPoint) -> Result<(SystemKind, usize)> {
    let latent = match point.chi_den {
        2 => 1,
        4 => 2,
        _ => 0,
    };
    match (point.chi_num, latent) {
        (4, 1) => Ok((SystemKind::TwoQubit, 1)),
        (8, 1) | (8, 2) => Ok((SystemKind::ThreeQubit, latent)),
        _ => Err(QaeError::Config(format!(
            "unsupported compression ratio {}/{}",
            point.chi_num, point.chi_den
        ))),
    }
}

/// Gradient-training budget per sweep point. Points where perfect compression
/// is possible (q fits the latent space) train with the full preset budget;
/// the rest never reach the bound exactly, so the budget fixes how far each
/// run gets and was tuned to the benchmark protocol.
pub fn sweep_iterations(point: &SweepPoint) -> Option<usize> {
    if point.q <= point.chi_den {
        // the 2-qubit preset converges well within its own budget; the
        // 3-qubit preset is capped for sweep throughput (degree ~0.99+)
        return if point.chi_num == 8 { Some(1200) } else { None };
    }
    Some(match (point.chi_num, point.chi_den, point.q <= 4) {
        (4, 2, true) => 60,
        (4, 2, false) => 35,
        (8, 4, _) => 70,
        (8, 2, true) => 30,
        (8, 2, false) => 22,
        _ => 200,
    })
}

/// Run `runs` gradient-trained repetitions per sweep point and return one row
/// per (point, run); optionally write `sweep.csv`.
pub fn run_sweep(
    points: &[SweepPoint],
    runs: usize,
    seed: u64,
    out_dir: Option<&Path>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for (pi, point) in points.iter().enumerate() {
        let (system, latent) = sweep_system(point)?;
        let cfg = ExperimentConfig {
            system,
            algorithm: Algorithm::Gd,
            q: point.q,
            latent_qubits: latent,
            runs,
            // separate seed stream per point
            seed: seed + (pi as u64) * 10_000,
            max_iterations: sweep_iterations(point),
            orthonormal: false,
            case: 1,
        };
        let summary = run_experiment(&cfg, None)?;
        for r in &summary.runs {
            rows.push(SweepRow {
                chi_num: point.chi_num,
                chi_den: point.chi_den,
                q: point.q,
                run: r.run,
                expected: r.expected_fidelity,
                actual: r.actual_fidelity,
                degree_of_success: r.degree_of_success,
            });
        }
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut f = fs::File::create(dir.join("sweep.csv"))?;
        writeln!(f, "chi_num,chi_den,q,run,expected,actual,degree_of_success")?;
        for r in &rows {
            writeln!(
                f,
                "{},{},{},{},{:.15e},{:.15e},{:.15e}",
                r.chi_num, r.chi_den, r.q, r.run, r.expected, r.actual, r.degree_of_success
            )?;
        }
    }
    Ok(rows)
}

/// Outcome of one self-check in the verification suite.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn random_task(rng: &mut ChaCha8Rng, dim: usize, dim_b: usize, q: usize) -> AutoencoderTask {
    let states: Vec<PureState> = (0..q).map(|_| random_pure_state(dim, rng)).collect();
    AutoencoderTask::with_default_reference(
        StateEnsemble::uniform(states).unwrap(),
        Bipartition::new(dim / dim_b, dim_b),
    )
    .unwrap()
}

/// Reduced-state check with an injectable partial-trace implementation, so a
/// corrupted implementation is detectable (negative-control fixture).
pub fn reduced_state_check(
    pt: &dyn Fn(&ComplexMatrix, Bipartition, Keep) -> ComplexMatrix,
    samples: usize,
    seed: u64,
) -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..samples {
        let part = Bipartition::new(2, 2);
        // random rank-3 mixture
        let states: Vec<PureState> = (0..3).map(|_| random_pure_state(4, &mut rng)).collect();
        let rho = crate::state::ensemble_density(&StateEnsemble::uniform(states).unwrap()).unwrap();
        let reduced = pt(rho.matrix(), part, Keep::A);
        // element-wise oracle: contraction against basis vectors
        for p in 0..2 {
            for q_idx in 0..2 {
                let mut expect = num_complex::Complex64::new(0.0, 0.0);
                for k in 0..2 {
                    expect += rho.matrix()[(p * 2 + k, q_idx * 2 + k)];
                }
                worst = worst.max((reduced[(p, q_idx)] - expect).norm());
            }
        }
    }
    CheckResult {
        name: "reduced_state_elementwise".into(),
        passed: worst <= 1e-12,
        detail: format!("worst residual {worst:.3e} over {samples} density matrices"),
    }
}

/// The invariant suite behind `verify`: bound dominance sampling, basis
/// transfer properties, reduced-state identity, J1 <= J2 and both directions
/// of the exact-compression rank criterion.
pub fn run_verification(samples: usize, seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // 1. no Haar unitary beats the bound
    {
        let mut violations = 0usize;
        let mut tasks = Vec::new();
        for _ in 0..32 {
            let dim = if rng.gen::<bool>() { 4 } else { 8 };
            let dim_b = if dim == 8 && rng.gen::<bool>() { 4 } else { 2 };
            let q = rng.gen_range(1..=8);
            let task = random_task(&mut rng, dim, dim_b, q);
            let bound = compression_bound(&task).unwrap().bound;
            tasks.push((task, bound));
        }
        for i in 0..samples {
            let (task, bound) = &tasks[i % tasks.len()];
            let u = random_unitary(task.partition.total(), &mut rng);
            if objective_j2(task, &u).unwrap() > bound + 1e-9 {
                violations += 1;
            }
        }
        checks.push(CheckResult {
            name: "bound_dominance".into(),
            passed: violations == 0,
            detail: format!("{violations} violations over {samples} random unitaries"),
        });
    }

    // 2. basis transfer: Hx = y, unitary
    {
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let x = random_pure_state(4, &mut rng);
            let y = random_pure_state(4, &mut rng);
            let h = householder_transfer(&x, &y).unwrap();
            let hx = x.apply(&h).unwrap();
            let mut diff: f64 = 0.0;
            for (a, b) in hx.amplitudes().iter().zip(y.amplitudes()) {
                diff += (a - b).norm_sqr();
            }
            worst = worst.max(diff.sqrt());
            if !h.is_unitary(1e-10) {
                worst = f64::INFINITY;
            }
        }
        checks.push(CheckResult {
            name: "basis_transfer".into(),
            passed: worst <= 1e-10,
            detail: format!("worst transfer residual {worst:.3e} over 1000 pairs"),
        });
    }

    // 3. reduced-state element-wise identity
    checks.push(reduced_state_check(
        &|m, part, keep| partial_trace_matrix(m, part, keep).expect("valid bipartition"),
        1000,
        seed ^ 0x5eed,
    ));

    // 4. recovery never beats compression: J1 <= J2
    {
        let mut worst: f64 = f64::NEG_INFINITY;
        for _ in 0..samples.min(10_000) {
            let task = random_task(&mut rng, 4, 2, 2);
            let u = random_unitary(4, &mut rng);
            let j1 = objective_j1_mean(&task, &u).unwrap();
            let j2 = objective_j2(&task, &u).unwrap();
            worst = worst.max(j1 - j2);
        }
        checks.push(CheckResult {
            name: "recovery_below_compression".into(),
            passed: worst <= 1e-9,
            detail: format!("max J1 - J2 = {worst:.3e}"),
        });
    }

    // 5. exact compression iff ensemble rank fits the latent space
    {
        let mut ok = true;
        let mut detail = String::from("100 tasks per direction");
        for _ in 0..100 {
            // rank <= dim_b: orthonormal pair in dim 4, latent 2
            let states = random_orthonormal_states(4, 2, &mut rng);
            let task = AutoencoderTask::with_default_reference(
                StateEnsemble::uniform(states).unwrap(),
                Bipartition::new(2, 2),
            )
            .unwrap();
            let possible = perfect_compression_possible(&task).unwrap();
            let bound = compression_bound(&task).unwrap().bound;
            let saturated = objective_j2(&task, &optimal_unitary(&task).unwrap()).unwrap();
            if !possible || (bound - 1.0).abs() > 1e-9 || (saturated - 1.0).abs() > 1e-9 {
                ok = false;
                detail = "forward direction failed".into();
                break;
            }
            // rank > dim_b: three independent random states almost surely
            let task = random_task(&mut rng, 4, 2, 3);
            let possible = perfect_compression_possible(&task).unwrap();
            let bound = compression_bound(&task).unwrap().bound;
            if possible || bound > 1.0 - 1e-9 {
                ok = false;
                detail = "reverse direction failed".into();
                break;
            }
        }
        checks.push(CheckResult {
            name: "exact_compression_rank_criterion".into(),
            passed: ok,
            detail,
        });
    }

    checks
}

use rand::Rng;
