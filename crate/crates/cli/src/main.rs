mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use gibbslab::engines::RunManifest;

use config::ExperimentConfig;
use output::Report;

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Engine(String),
    Contract(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::Engine(_) => 3,
            Failure::Contract(_) => 4,
            Failure::Io(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "invalid config: {m}"),
            Failure::Engine(m) => write!(f, "engine failure: {m}"),
            Failure::Contract(m) => write!(f, "contract violation: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<gibbslab::Error> for Failure {
    fn from(e: gibbslab::Error) -> Self {
        use gibbslab::Error as E;
        match e {
            E::InvalidArgument(_) | E::RegionMismatch(_) | E::OutOfBounds => Failure::Config(e.to_string()),
            E::SizeCap { .. } | E::Engine(_) | E::Budget(_) | E::NonConvergence(_) => Failure::Engine(e.to_string()),
            E::NotAbsolutelyContinuous(_) | E::Ambiguous(_) => Failure::Contract(e.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(name = "gibbslab", version, about = "Finite-window diagnostics for lattice spin systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `engine.seed`.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = "GIBBSLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Args, Clone)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, env = "GIBBSLAB_THREADS")]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Properness, consistency, DLR and monotonicity of Gibbs kernels.
    KernelCheck(RunArgs),
    /// Pushforward of a finite-volume law and block-spin checks.
    Decimate(RunArgs),
    /// Finite-volume pressure series and extrapolated estimate.
    Pressure(RunArgs),
    /// Relative entropy per site on growing cubes.
    EntropyDensity(RunArgs),
    /// Legendre gap over a trial family.
    VariationalCheck(RunArgs),
    /// Decoupling constants c(n) over gaps g.
    Decoupling(RunArgs),
    /// Fill gaps, directional discrepancies, bad sets and continuity rates.
    QuasilocalityScan(RunArgs),
    /// The three-term split of μ(γf − f) per M.
    CmTerm(RunArgs),
    /// Bad-set probability bound from relative entropy.
    Prop1Bound(RunArgs),
    /// Directional and probe-set values of the counterexample function.
    Counterexample(RunArgs),
    /// Reruns the experiment recorded in a manifest.
    Replay(ReplayArgs),
    /// Prints which subcommand exposes each library operation.
    Operations,
}

type Runner = fn(&ExperimentConfig, u64) -> Result<Report, Failure>;

const SUBCOMMANDS: &[(&str, Runner)] = &[
    ("kernel-check", commands::kernel_check),
    ("decimate", commands::decimate),
    ("pressure", commands::pressure),
    ("entropy-density", commands::entropy_density),
    ("variational-check", commands::variational_check),
    ("decoupling", commands::decoupling),
    ("quasilocality-scan", commands::quasilocality_scan),
    ("cm-term", commands::cm),
    ("prop1-bound", commands::prop1),
    ("counterexample", commands::counterexample),
];

/// Library operation → subcommand.
const OPERATIONS: &[(&str, &str)] = &[
    ("relative_entropy", "entropy-density"),
    ("entropy_density_series", "entropy-density"),
    ("csiszar_gap", "entropy-density"),
    ("pressure_estimate", "pressure"),
    ("decoupling_constant", "decoupling"),
    ("legendre_gap", "variational-check"),
    ("cm_term", "cm-term"),
    ("variation_at", "counterexample"),
    ("counterexample_f", "counterexample"),
    ("directional_delta", "quasilocality-scan"),
    ("bad_set_probability", "quasilocality-scan"),
    ("continuity_rate", "quasilocality-scan"),
    ("renormalized_conditional", "quasilocality-scan"),
    ("prop1_bound", "prop1-bound"),
    ("single_site_kernel_prob", "decimate"),
    ("pushforward", "decimate"),
    ("block_spin_check", "decimate"),
    ("joint_kernel", "decimate"),
    ("properness_check", "kernel-check"),
    ("consistency_check", "kernel-check"),
    ("dlr_residual", "kernel-check"),
    ("monotonicity_check", "kernel-check"),
];

fn init_threads(n: Option<usize>) -> Result<(), Failure> {
    if let Some(n) = n {
        if n == 0 {
            return Err(Failure::Config("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::Engine(e.to_string()))?;
    }
    Ok(())
}

fn execute(name: &str, cfg: &ExperimentConfig, seed: u64, out: &std::path::Path) -> Result<(), Failure> {
    let run = SUBCOMMANDS.iter().find(|(n, _)| *n == name).map(|(_, r)| *r).expect("known subcommand");
    let start = Instant::now();
    let report = run(cfg, seed)?;
    output::emit(cfg, name, seed, out, &report, start.elapsed().as_secs_f64())?;
    match report.violations.first() {
        Some(v) => Err(Failure::Contract(v.clone())),
        None => Ok(()),
    }
}

fn run_from_args(name: &str, args: &RunArgs) -> Result<(), Failure> {
    init_threads(args.threads)?;
    let text = std::fs::read_to_string(&args.config).map_err(|e| Failure::Config(format!("{}: {e}", args.config.display())))?;
    let cfg = ExperimentConfig::parse(&text)?;
    let seed = args.seed.unwrap_or(cfg.engine.seed);
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    execute(name, &cfg, seed, &out)
}

fn replay(args: &ReplayArgs) -> Result<(), Failure> {
    init_threads(args.threads)?;
    let text = std::fs::read_to_string(&args.manifest).map_err(|e| Failure::Config(format!("{}: {e}", args.manifest.display())))?;
    let m = RunManifest::from_json(&text).map_err(|e| Failure::Config(e.to_string()))?;
    if !SUBCOMMANDS.iter().any(|(n, _)| *n == m.subcommand) {
        return Err(Failure::Config(format!("unknown subcommand {}", m.subcommand)));
    }
    let value = serde_json::json!({ "model": m.model, "engine": m.engine, "scenario": m.scenario });
    let cfg: ExperimentConfig = serde_json::from_value(value).map_err(|e| Failure::Config(e.to_string()))?;
    execute(&m.subcommand, &cfg, m.seed, &args.out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::KernelCheck(a) => run_from_args("kernel-check", a),
        Command::Decimate(a) => run_from_args("decimate", a),
        Command::Pressure(a) => run_from_args("pressure", a),
        Command::EntropyDensity(a) => run_from_args("entropy-density", a),
        Command::VariationalCheck(a) => run_from_args("variational-check", a),
        Command::Decoupling(a) => run_from_args("decoupling", a),
        Command::QuasilocalityScan(a) => run_from_args("quasilocality-scan", a),
        Command::CmTerm(a) => run_from_args("cm-term", a),
        Command::Prop1Bound(a) => run_from_args("prop1-bound", a),
        Command::Counterexample(a) => run_from_args("counterexample", a),
        Command::Replay(a) => replay(a),
        Command::Operations => {
            println!("operation,subcommand");
            for (op, sub) in OPERATIONS {
                println!("{op},{sub}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gibbslab: {e}");
            ExitCode::from(e.code())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn operations_map_to_subcommands() {
        for (op, sub) in OPERATIONS {
            assert!(SUBCOMMANDS.iter().any(|(n, _)| n == sub), "{op} → {sub}");
        }
    }

    #[test]
    fn cli_definition_is_valid() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}
