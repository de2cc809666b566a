//! Command-line harness: compression bounds, training batches, benchmark
//! sweeps and self-verification, all seeded and reproducible.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use qae::autoencoder::{compression_bound, AutoencoderTask};
use qae::error::QaeError;
use qae::harness::{
    run_experiment, run_sweep, run_verification, ExperimentConfig, SweepPoint, SystemKind,
};
use qae::optimizers::Algorithm;
use qae::state::{random_orthonormal_states, random_pure_state, Bipartition, PureState, StateEnsemble};

#[derive(Parser)]
#[command(name = "qae", about = "Quantum autoencoder training and analysis harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Base RNG seed (run k of a batch uses seed + k)
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV traces and JSON summaries
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// JSON config file; explicit flags override its fields
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Print the eigenvalue spectrum and optimal compression rate of a seeded ensemble
    Bound {
        #[command(flatten)]
        common: Common,
        /// Number of input states
        #[arg(long, default_value_t = 1)]
        q: usize,
        /// Total Hilbert-space dimension
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Latent (retained) dimension
        #[arg(long, default_value_t = 2)]
        latent_dim: usize,
        /// Draw an orthonormal ensemble instead of independent Haar states
        #[arg(long)]
        orthonormal: bool,
    },
    /// Train encoders over a batch of independent runs
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        system: Option<String>,
        #[arg(long)]
        q: Option<usize>,
        /// Latent qubit count
        #[arg(long)]
        latent: Option<usize>,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        runs: Option<usize>,
        /// Optical input preset (1 or 2)
        #[arg(long)]
        case: Option<u8>,
        /// Iteration budget override
        #[arg(long)]
        max_iters: Option<usize>,
        /// Orthonormal input ensembles
        #[arg(long)]
        orthonormal: bool,
    },
    /// Benchmark sweep over compression ratios and ensemble sizes
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Compression ratios as N/N_B pairs, e.g. 4/2,8/4,8/2
        #[arg(long, default_value = "4/2")]
        ratios: String,
        /// Ensemble sizes, e.g. 1,2,4,8
        #[arg(long, default_value = "1,2,4,8")]
        q_values: String,
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Run the invariant self-checks and print a pass/fail table
    Verify {
        #[command(flatten)]
        common: Common,
        /// Sample count for the bound-dominance sweep
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
    },
}

fn load_config(common: &Common) -> Result<Option<ExperimentConfig>, QaeError> {
    match &common.config {
        Some(path) => Ok(Some(ExperimentConfig::from_json_file(path)?)),
        None => Ok(None),
    }
}

fn cmd_bound(
    common: &Common,
    q: usize,
    dim: usize,
    latent_dim: usize,
    orthonormal: bool,
) -> Result<(), QaeError> {
    if !dim.is_power_of_two() || !latent_dim.is_power_of_two() || latent_dim >= dim {
        return Err(QaeError::Config(
            "dim and latent-dim must be powers of two with latent-dim < dim".into(),
        ));
    }
    let seed = common.seed.unwrap_or(0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let states: Vec<PureState> = if orthonormal {
        random_orthonormal_states(dim, q, &mut rng)
    } else {
        (0..q).map(|_| random_pure_state(dim, &mut rng)).collect()
    };
    let task = AutoencoderTask::with_default_reference(
        StateEnsemble::uniform(states)?,
        Bipartition::new(dim / latent_dim, latent_dim),
    )?;
    let b = compression_bound(&task)?;
    println!("seed: {seed}");
    println!("ensemble: q={q} dim={dim} latent_dim={latent_dim} orthonormal={orthonormal}");
    let spectrum: Vec<String> = b.spectrum.iter().map(|v| format!("{v:.12}")).collect();
    println!("spectrum: [{}]", spectrum.join(", "));
    println!("bound: {:.12}", b.bound);
    Ok(())
}

fn cmd_train(
    common: &Common,
    system: Option<String>,
    q: Option<usize>,
    latent: Option<usize>,
    algo: Option<String>,
    runs: Option<usize>,
    case: Option<u8>,
    max_iters: Option<usize>,
    orthonormal: bool,
) -> Result<(), QaeError> {
    let mut cfg = load_config(common)?.unwrap_or(ExperimentConfig {
        system: SystemKind::TwoQubit,
        algorithm: Algorithm::Gd,
        q: 1,
        latent_qubits: 1,
        runs: 20,
        seed: 0,
        max_iterations: None,
        orthonormal: false,
        case: 1,
    });
    if let Some(s) = system {
        cfg.system = s.parse()?;
    }
    if let Some(a) = algo {
        cfg.algorithm = a.parse()?;
    }
    if let Some(v) = q {
        cfg.q = v;
    }
    if let Some(v) = latent {
        cfg.latent_qubits = v;
    }
    if let Some(v) = runs {
        cfg.runs = v;
    }
    if let Some(v) = case {
        cfg.case = v;
    }
    if max_iters.is_some() {
        cfg.max_iterations = max_iters;
    }
    if orthonormal {
        cfg.orthonormal = true;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let summary = run_experiment(&cfg, common.out_dir.as_deref())?;
    println!(
        "runs: {}  expected_mean: {:.6}  actual_mean: {:.6} (std {:.3e})",
        summary.runs.len(),
        summary.expected_mean,
        summary.actual_mean,
        summary.actual_std
    );
    println!(
        "degree_of_success_mean: {:.6} (std {:.3e})  recovered_mean: {:.6}",
        summary.degree_mean, summary.degree_std, summary.recovered_mean
    );
    Ok(())
}

fn parse_points(ratios: &str, q_values: &str) -> Result<Vec<SweepPoint>, QaeError> {
    let qs: Vec<usize> = q_values
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| QaeError::Config(format!("bad q value '{s}'")))
        })
        .collect::<Result<_, _>>()?;
    let mut points = Vec::new();
    for ratio in ratios.split(',') {
        let (num, den) = ratio
            .split_once('/')
            .ok_or_else(|| QaeError::Config(format!("ratio '{ratio}' is not of the form N/N_B")))?;
        let chi_num: usize = num
            .trim()
            .parse()
            .map_err(|_| QaeError::Config(format!("bad ratio numerator '{num}'")))?;
        let chi_den: usize = den
            .trim()
            .parse()
            .map_err(|_| QaeError::Config(format!("bad ratio denominator '{den}'")))?;
        for &q in &qs {
            points.push(SweepPoint { chi_num, chi_den, q });
        }
    }
    Ok(points)
}

fn cmd_sweep(common: &Common, ratios: &str, q_values: &str, runs: Option<usize>) -> Result<(), QaeError> {
    let points = parse_points(ratios, q_values)?;
    let seed = common.seed.unwrap_or(0);
    let rows = run_sweep(&points, runs.unwrap_or(20), seed, common.out_dir.as_deref())?;
    println!("chi_num,chi_den,q,run,expected,actual,degree_of_success");
    for r in &rows {
        println!(
            "{},{},{},{},{:.6},{:.6},{:.6}",
            r.chi_num, r.chi_den, r.q, r.run, r.expected, r.actual, r.degree_of_success
        );
    }
    Ok(())
}

fn cmd_verify(common: &Common, samples: usize) -> Result<bool, QaeError> {
    let checks = run_verification(samples, common.seed.unwrap_or(0));
    let mut all_pass = true;
    println!("check,status,detail");
    for c in &checks {
        all_pass &= c.passed;
        println!(
            "{},{},{}",
            c.name,
            if c.passed { "pass" } else { "FAIL" },
            c.detail
        );
    }
    Ok(all_pass)
}

fn exit_code_for(err: &QaeError) -> ExitCode {
    match err {
        QaeError::Config(_) => ExitCode::from(1),
        QaeError::Io(_) => ExitCode::from(1),
        _ => ExitCode::from(2),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result: Result<ExitCode, QaeError> = match cli.command {
        Command::Bound {
            common,
            q,
            dim,
            latent_dim,
            orthonormal,
        } => cmd_bound(&common, q, dim, latent_dim, orthonormal).map(|_| ExitCode::SUCCESS),
        Command::Train {
            common,
            system,
            q,
            latent,
            algo,
            runs,
            case,
            max_iters,
            orthonormal,
        } => cmd_train(
            &common, system, q, latent, algo, runs, case, max_iters, orthonormal,
        )
        .map(|_| ExitCode::SUCCESS),
        Command::Sweep {
            common,
            ratios,
            q_values,
            runs,
        } => cmd_sweep(&common, &ratios, &q_values, runs).map(|_| ExitCode::SUCCESS),
        Command::Verify { common, samples } => cmd_verify(&common, samples).map(|ok| {
            if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
