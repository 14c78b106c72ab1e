//! Command-line front end: run SER sweeps, per-instance SER distributions,
//! the interference-window experiment, and one-shot alignment-set selection
//! from declarative TOML configs, emitting plot-ready CSV plus a JSON run
//! manifest.

mod config;

use clap::{Args, Parser, Subcommand};
use config::{ConfigError, MatrixFile, RunConfig};
use piaid::harness::{
    estimate_ser, interference_window_curve, ser_cdf, write_cdf_csv, write_ser_csv,
    write_window_csv, HarnessError,
};
use piaid::pia::{solve_selection, verify_integrality, CostMatrix, PiaError};
use piaid::RMat;
use serde::Serialize;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use thiserror::Error;

#[derive(Parser)]
#[command(name = "piaid", version, about = "PIAID link-level experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct RunOverrides {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the trial / instance count.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads (default: config, then PIAID_WORKERS, then all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Override the output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// SER versus receive Es/N0 for the configured schemes.
    Sweep(RunOverrides),
    /// Per-instance SER samples at one operating point (empirical CDF data).
    Cdf(RunOverrides),
    /// Two-stage detection SER versus single-interferer power.
    Window(RunOverrides),
    /// One-shot alignment-set selection from a cost matrix (JSON).
    Select {
        /// Cost matrix file: {"alpha": .., "costs": [[..]], "rx_power": [[..]]?}
        matrix: PathBuf,
        /// Alignment cardinality; overrides the file's `alpha`.
        #[arg(long)]
        alpha: Option<usize>,
        /// Output path (stdout when omitted).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Selection(#[from] PiaError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl CliError {
    /// Exit code 2 for configuration problems, 1 for runtime failures.
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Invalid(_) | CliError::Selection(_) => 2,
            CliError::Harness(HarnessError::BadSpec(_))
            | CliError::Harness(HarnessError::Config(_))
            | CliError::Harness(HarnessError::Pia(_)) => 2,
            _ => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Sweep(o) => cmd_sweep(o),
        Command::Cdf(o) => cmd_cdf(o),
        Command::Window(o) => cmd_window(o),
        Command::Select { matrix, alpha, out } => cmd_select(&matrix, alpha, out.as_deref()),
    }
}

fn load_with_overrides(o: &RunOverrides) -> Result<RunConfig, CliError> {
    let mut cfg = config::load(&o.config)?;
    if let Some(seed) = o.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(trials) = o.trials {
        cfg.experiment.trials = trials;
    }
    if let Some(out) = &o.out {
        cfg.output.out = out.display().to_string();
    }
    if let Some(w) = o.workers {
        cfg.output.workers = w;
    }
    init_workers(cfg.output.workers);
    Ok(cfg)
}

/// Worker-pool size: explicit setting, then PIAID_WORKERS, then all cores.
fn init_workers(configured: usize) {
    let from_env = std::env::var("PIAID_WORKERS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .unwrap_or(0);
    let workers = if configured > 0 { configured } else { from_env };
    if workers > 0 {
        // Errors only when a global pool already exists (tests); keep going.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global();
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: u32,
    command: &'a str,
    code_version: &'a str,
    config: &'a RunConfig,
}

fn write_manifest(command: &str, cfg: &RunConfig, out_path: &str) -> Result<(), CliError> {
    let manifest = Manifest {
        schema_version: 1,
        command,
        code_version: env!("CARGO_PKG_VERSION"),
        config: cfg,
    };
    let path = format!("{out_path}.manifest.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, json).map_err(|source| CliError::Io { path, source })
}

fn create_out(path: &str) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
    let file = std::fs::File::create(path).map_err(|source| CliError::Io {
        path: path.to_string(),
        source,
    })?;
    Ok(std::io::BufWriter::new(file))
}

fn cmd_sweep(o: RunOverrides) -> Result<(), CliError> {
    let cfg = load_with_overrides(&o)?;
    let spec = cfg.experiment_spec()?;
    let report = estimate_ser(&spec)?;
    let mut out = create_out(&cfg.output.out)?;
    write_ser_csv(&report, &mut out).map_err(|source| CliError::Io {
        path: cfg.output.out.clone(),
        source,
    })?;
    write_manifest("sweep", &cfg, &cfg.output.out)?;
    eprintln!(
        "sweep: {} rows -> {} ({} resampled, {} failed trials)",
        report.rows.len(),
        cfg.output.out,
        report.resampled_instances,
        report.failed_trials
    );
    Ok(())
}

fn cmd_cdf(o: RunOverrides) -> Result<(), CliError> {
    let mut cfg = load_with_overrides(&o)?;
    let Some(cdf) = cfg.cdf.clone() else {
        return Err(CliError::Invalid("cdf command needs a [cdf] section".into()));
    };
    // --trials overrides the instance count in CDF mode.
    let instances = o.trials.unwrap_or(cdf.instances);
    if let Some(section) = cfg.cdf.as_mut() {
        section.instances = instances;
    }
    let spec = cfg.experiment_spec()?;
    let report = ser_cdf(&spec, cdf.esn0_db, instances, cdf.symbols_per_instance)?;
    let mut out = create_out(&cfg.output.out)?;
    write_cdf_csv(&report, &mut out).map_err(|source| CliError::Io {
        path: cfg.output.out.clone(),
        source,
    })?;
    write_manifest("cdf", &cfg, &cfg.output.out)?;
    eprintln!(
        "cdf: {} schemes x {} instances -> {}",
        report.samples.len(),
        instances,
        cfg.output.out
    );
    Ok(())
}

fn cmd_window(o: RunOverrides) -> Result<(), CliError> {
    let mut cfg = load_with_overrides(&o)?;
    let Some(window) = cfg.window.clone() else {
        return Err(CliError::Invalid(
            "window command needs a [window] section".into(),
        ));
    };
    if window.p2_grid_db.is_empty() {
        return Err(CliError::Invalid("window grid must be non-empty".into()));
    }
    let trials = o.trials.unwrap_or(window.trials);
    if let Some(section) = cfg.window.as_mut() {
        section.trials = trials;
    }
    if trials < 1 {
        return Err(CliError::Invalid("window trials must be >= 1".into()));
    }
    let points = interference_window_curve(
        &window.p2_grid_db,
        trials,
        window.esn0_db,
        cfg.experiment.seed,
    );
    let mut out = create_out(&cfg.output.out)?;
    write_window_csv(&points, &mut out).map_err(|source| CliError::Io {
        path: cfg.output.out.clone(),
        source,
    })?;
    write_manifest("window", &cfg, &cfg.output.out)?;
    eprintln!("window: {} points -> {}", points.len(), cfg.output.out);
    Ok(())
}

#[derive(Serialize)]
struct SelectedEdge {
    receiver: usize,
    transmitter: usize,
}

#[derive(Serialize)]
struct SelectOutput {
    schema_version: u32,
    alpha: usize,
    objective: f64,
    integral: bool,
    /// Aligned transmitters per receiver, 1-based user indices.
    aligned: Vec<Vec<usize>>,
    /// Chosen edges in row-major order, 1-based.
    edges: Vec<SelectedEdge>,
    /// Strong residual interferers per receiver (needs rx_power input).
    strong: Vec<Vec<usize>>,
    /// Weak residual interferers per receiver.
    weak: Vec<Vec<usize>>,
}

fn cmd_select(matrix: &Path, alpha_flag: Option<usize>, out: Option<&Path>) -> Result<(), CliError> {
    let text = std::fs::read_to_string(matrix).map_err(|source| CliError::Io {
        path: matrix.display().to_string(),
        source,
    })?;
    let file: MatrixFile = serde_json::from_str(&text)
        .map_err(|e| CliError::Invalid(format!("cannot parse {}: {e}", matrix.display())))?;
    let k = file.costs.len();
    if k < 2 || file.costs.iter().any(|row| row.len() != k) {
        return Err(CliError::Invalid(
            "costs must be a square matrix with at least 2 users".into(),
        ));
    }
    let costs_mat = RMat::from_fn(k, k, |r, c| file.costs[r][c]);
    let cost_matrix = match &file.rx_power {
        Some(g) => {
            if g.len() != k || g.iter().any(|row| row.len() != k) {
                return Err(CliError::Invalid("rx_power must be K x K".into()));
            }
            CostMatrix::from_costs_with_rx_power(costs_mat, RMat::from_fn(k, k, |r, c| g[r][c]))
        }
        None => CostMatrix::from_costs(costs_mat),
    };
    let alpha = alpha_flag
        .or(file.alpha)
        .ok_or_else(|| CliError::Invalid("alpha missing (file field or --alpha)".into()))?;
    let selection = solve_selection(&cost_matrix, alpha)?;

    let one_based = |sets: &[Vec<usize>]| -> Vec<Vec<usize>> {
        sets.iter()
            .map(|s| s.iter().map(|&i| i + 1).collect())
            .collect()
    };
    let mut edges = Vec::new();
    for (r, a) in selection.set.aligned.iter().enumerate() {
        for &t in a {
            edges.push(SelectedEdge {
                receiver: r + 1,
                transmitter: t + 1,
            });
        }
    }
    let output = SelectOutput {
        schema_version: 1,
        alpha,
        objective: selection.objective,
        integral: verify_integrality(&selection.edge_values),
        aligned: one_based(&selection.set.aligned),
        edges,
        strong: one_based(&selection.set.strong),
        weak: one_based(&selection.set.weak),
    };
    let json = serde_json::to_string_pretty(&output).expect("selection serializes");
    match out {
        Some(path) => {
            std::fs::write(path, json.as_bytes()).map_err(|source| CliError::Io {
                path: path.display().to_string(),
                source,
            })?;
        }
        None => println!("{json}"),
    }
    Ok(())
}
