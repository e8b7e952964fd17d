//! Command-line surface for the factor-influence toolkit.
//!
//! Subcommands: `analyze` (snapshot → MI report), `simulate` (train a linear
//! β-VAE world and analyze it), `sweep` (truncation / classification tables
//! with bound columns), `bounds` (bound calculators), `validate` (snapshot
//! checks).
//!
//! Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numeric
//! failure. Every invocation is a deterministic function of its flags, input
//! bytes, and seed.

use clap::{Args, Parser, Subcommand, ValueEnum};
use factor_mi::bounds::{
    classification_sweep, fano_bound, mse_lower_bound, sweep_rows_to_csv, sweep_rows_to_json,
    truncation_sweep,
};
use factor_mi::estimator::{analyze, MiReport};
use factor_mi::oracle::{
    analytic_factor_mi, sample_snapshot, train_beta_vae, LabelRule, LinearWorld, TrainConfig,
};
use factor_mi::snapshot::{read_snapshot, write_snapshot, SnapshotFormat};
use factor_mi::{Error, Result};
use serde::Serialize;
use std::io::Read;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "factor-mi",
    version,
    about = "Mutual-information diagnostics for VAE latent factors"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate per-factor mutual information from an encoder snapshot.
    Analyze(AnalyzeArgs),
    /// Train a linear β-VAE world, snapshot it, and analyze the result.
    Simulate(SimulateArgs),
    /// Run a truncation or classification sweep with bound columns.
    Sweep(SweepArgs),
    /// Evaluate the reconstruction or classification lower bounds.
    Bounds(BoundsArgs),
    /// Check a snapshot file against the format invariants.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

#[derive(Clone, Copy, ValueEnum)]
enum EmitArg {
    Json,
    Csv,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// Snapshot file (CSV or FSNAP1 binary).
    snapshot: PathBuf,
    /// Input format; detected from the file when omitted.
    #[arg(long)]
    format: Option<FormatArg>,
    /// Influence threshold in nats.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Fit the mean of q* instead of pinning it at zero.
    #[arg(long)]
    fit_mean: bool,
    /// Include the quadrature decomposition audit in the report.
    #[arg(long)]
    audit: bool,
    /// Report file to write.
    #[arg(long, default_value = "mi_report.json")]
    out: PathBuf,
    /// Report encoding.
    #[arg(long, value_enum, default_value_t = EmitArg::Json)]
    emit: EmitArg,
}

#[derive(Args)]
struct SimulateArgs {
    /// Intrinsic dimension P of the generated data.
    #[arg(long)]
    intrinsic: usize,
    /// Data dimension D.
    #[arg(long)]
    data_dim: usize,
    /// Latent dimension H.
    #[arg(long)]
    latent: usize,
    /// KL weight β of the training objective.
    #[arg(long)]
    beta: f64,
    /// Number of training samples M.
    #[arg(long)]
    samples: usize,
    /// Gradient-ascent steps.
    #[arg(long, default_value_t = 4000)]
    steps: usize,
    /// Initial learning rate.
    #[arg(long, default_value_t = 0.05)]
    learning_rate: f64,
    /// Intrinsic variances, comma-separated; defaults to P, P−1, …, 1.
    #[arg(long)]
    spectrum: Option<String>,
    /// Observation noise level of the generative model.
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long)]
    seed: u64,
    /// Influence threshold used in the report.
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Output directory for the artifact files.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// World JSON produced by `simulate`.
    #[arg(long)]
    world: PathBuf,
    /// MI report JSON produced by `analyze` or `simulate`.
    #[arg(long)]
    report: PathBuf,
    /// truncate: reconstruction MSE; classify: 4-class quadrant labels.
    #[arg(long)]
    kind: String,
    /// Comma-separated kept fractions, e.g. "1,0.5,0.25,0".
    #[arg(long)]
    fractions: String,
    /// Train/test size per classification row.
    #[arg(long, default_value_t = 5000)]
    eval_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = EmitArg::Csv)]
    emit: EmitArg,
}

#[derive(Args)]
struct BoundsArgs {
    #[command(subcommand)]
    which: BoundsCommand,
}

#[derive(Subcommand)]
enum BoundsCommand {
    /// Reconstruction-error lower bound from entropy and MI (nats).
    Mse {
        #[arg(long)]
        entropy: f64,
        #[arg(long)]
        mi: f64,
    },
    /// Weakened Fano classification-error lower bound.
    Fano {
        #[arg(long)]
        label_entropy: f64,
        #[arg(long)]
        classes: u32,
        #[arg(long)]
        mi: f64,
    },
}

#[derive(Args)]
struct ValidateArgs {
    snapshot: PathBuf,
    #[arg(long)]
    format: Option<FormatArg>,
}

fn detect_format(path: &Path) -> Result<SnapshotFormat> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 5];
    let n = file.read(&mut magic)?;
    if n == 5 && &magic == b"FSNAP" {
        Ok(SnapshotFormat::Binary)
    } else {
        Ok(SnapshotFormat::Csv)
    }
}

fn resolve_format(path: &Path, arg: Option<FormatArg>) -> Result<SnapshotFormat> {
    match arg {
        Some(FormatArg::Csv) => Ok(SnapshotFormat::Csv),
        Some(FormatArg::Binary) => Ok(SnapshotFormat::Binary),
        None => detect_format(path),
    }
}

fn parse_fractions(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            let v: f64 = tok
                .parse()
                .map_err(|_| Error::Usage(format!("bad fraction '{tok}'")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Usage(format!("fraction {v} outside [0, 1]")));
            }
            Ok(v)
        })
        .collect()
}

fn parse_spectrum(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .map_err(|_| Error::Usage(format!("bad spectrum entry '{tok}'")))
        })
        .collect()
}

fn run_analyze(args: &AnalyzeArgs) -> Result<()> {
    let format = resolve_format(&args.snapshot, args.format)?;
    let snapshot = read_snapshot(&args.snapshot, format)?;
    let report = analyze(&snapshot, args.threshold, args.fit_mean, args.audit)?;
    let body = match args.emit {
        EmitArg::Json => report.to_json(),
        EmitArg::Csv => report.to_csv(),
    };
    std::fs::write(&args.out, body)?;
    let influential = report.influential_mask().iter().filter(|&&v| v).count();
    println!(
        "total MI {:.6} nats; {influential} of {} factors influential (threshold {} nats)",
        report.total_mi_nats,
        report.factors.len(),
        args.threshold
    );
    Ok(())
}

#[derive(Serialize)]
struct SparsitySummary {
    beta: f64,
    seed: u64,
    latent_dim: usize,
    total_mi_nats: f64,
    active_threshold_nats: f64,
    collapsed_threshold_nats: f64,
    active_factors: usize,
    collapsed_factors: usize,
}

fn run_simulate(args: &SimulateArgs) -> Result<()> {
    let spectrum = match &args.spectrum {
        Some(text) => parse_spectrum(text)?,
        None => (0..args.intrinsic)
            .map(|j| (args.intrinsic - j) as f64)
            .collect(),
    };
    let cfg = TrainConfig {
        data_dim: args.data_dim,
        intrinsic_dim: args.intrinsic,
        latent_dim: args.latent,
        spectrum,
        gamma: args.gamma,
        beta: args.beta,
        num_samples: args.samples,
        steps: args.steps,
        learning_rate: args.learning_rate,
        seed: args.seed,
    };
    let (world, _trace) = train_beta_vae(&cfg)?;
    let snapshot = sample_snapshot(&world, args.samples, args.seed)?;
    let report = analyze(&snapshot, args.threshold, false, false)?;
    let analytic = analytic_factor_mi(&world);

    std::fs::create_dir_all(&args.out)?;
    std::fs::write(args.out.join("world.json"), world.to_json())?;
    write_snapshot(
        &snapshot,
        &args.out.join("snapshot.fsnap"),
        SnapshotFormat::Binary,
    )?;
    std::fs::write(args.out.join("report.json"), report.to_json())?;
    let mut analytic_json = serde_json::to_string_pretty(&analytic)?;
    analytic_json.push('\n');
    std::fs::write(args.out.join("analytic_mi.json"), analytic_json)?;

    let mi = report.per_factor_mi();
    let summary = SparsitySummary {
        beta: args.beta,
        seed: args.seed,
        latent_dim: args.latent,
        total_mi_nats: report.total_mi_nats,
        active_threshold_nats: 0.1,
        collapsed_threshold_nats: 0.01,
        active_factors: mi.iter().filter(|&&v| v > 0.1).count(),
        collapsed_factors: mi.iter().filter(|&&v| v < 0.01).count(),
    };
    let mut summary_json = serde_json::to_string_pretty(&summary)?;
    summary_json.push('\n');
    std::fs::write(args.out.join("summary.json"), summary_json)?;
    println!(
        "active factors: {} of {} (MI > 0.1 nats); collapsed: {} (MI < 0.01 nats)",
        summary.active_factors, args.latent, summary.collapsed_factors
    );
    Ok(())
}

fn run_sweep(args: &SweepArgs) -> Result<()> {
    let world = LinearWorld::from_json(&std::fs::read_to_string(&args.world)?)?;
    let report = MiReport::from_json(&std::fs::read_to_string(&args.report)?)?;
    let fractions = parse_fractions(&args.fractions)?;
    let rows = match args.kind.as_str() {
        "truncate" => truncation_sweep(&world, &report, &fractions)?,
        "classify" => classification_sweep(
            &world,
            LabelRule::Quadrant,
            &report,
            &fractions,
            args.eval_samples,
            args.seed,
        )?,
        other => return Err(Error::Usage(format!("unknown sweep kind '{other}'"))),
    };
    let body = match args.emit {
        EmitArg::Csv => sweep_rows_to_csv(&rows),
        EmitArg::Json => sweep_rows_to_json(&rows),
    };
    std::fs::write(&args.out, body)?;
    for r in &rows {
        if r.measured < r.bound - 1e-9 {
            return Err(Error::Evaluation(format!(
                "bound violated at fraction {}: measured {} < bound {}",
                r.fraction, r.measured, r.bound
            )));
        }
    }
    println!("{} rows written to {}", rows.len(), args.out.display());
    Ok(())
}

fn run_bounds(args: &BoundsArgs) -> Result<()> {
    let value = match args.which {
        BoundsCommand::Mse { entropy, mi } => mse_lower_bound(entropy, mi)?.value,
        BoundsCommand::Fano {
            label_entropy,
            classes,
            mi,
        } => fano_bound(label_entropy, classes, mi)?.value,
    };
    // 12 significant digits.
    println!("{value:.11e}");
    Ok(())
}

fn run_validate(args: &ValidateArgs) -> Result<()> {
    let format = resolve_format(&args.snapshot, args.format)?;
    let snapshot = read_snapshot(&args.snapshot, format)?;
    println!(
        "OK: M={}, H={}",
        snapshot.num_samples(),
        snapshot.num_factors()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Analyze(args) => run_analyze(args),
        Command::Simulate(args) => run_simulate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Bounds(args) => run_bounds(args),
        Command::Validate(args) => run_validate(args),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help/version requests are successes; everything else is a
            // usage error (exit 1).
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };
    if let Err(err) = run(&cli) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
