//! `tailgan` command-line interface.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 unreadable or
//! malformed data, 4 every training run diverged.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use tailgan::config::ExperimentConfig;
use tailgan::eval::ManifoldSpec;
use tailgan::generator::Variant;
use tailgan::pipeline::{self, EvalOptions};
use tailgan::rng::{self, streams};
use tailgan::synth::{self, CauchyMixtureSpec, CsvOptions};
use tailgan::tailest::{estimate_tail_index, TailSide};
use tailgan::trainer::Checkpoint;
use tailgan::Error;

#[derive(Parser)]
#[command(name = "tailgan", version, about = "Heavy-tailed generative modelling with GPD-noise generators")]
struct Cli {
    /// Seed for every random draw of the command.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads for the parallel reductions (results do not depend on it).
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate the tail index of CSV columns with the Hill estimator.
    EstimateTail(EstimateTailArgs),
    /// Train a generator from an experiment config.
    Train(TrainArgs),
    /// Evaluate a checkpoint against test data.
    Eval(EvalArgs),
    /// Draw samples from a checkpoint.
    Sample(SampleArgs),
    /// Train and evaluate one model per hidden width and variant.
    SweepWidth(SweepArgs),
    /// Write a synthetic dataset.
    Synth(SynthArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SideArg {
    Pos,
    Neg,
    Mag,
    All,
}

#[derive(Args)]
struct EstimateTailArgs {
    /// Input CSV file.
    #[arg(long)]
    csv: PathBuf,
    /// Zero-based column index; repeat for several columns (default: all).
    #[arg(long = "col")]
    cols: Vec<usize>,
    /// Which tail to estimate.
    #[arg(long, value_enum, default_value = "mag")]
    side: SideArg,
    /// Number of upper order statistics (default: ceil(m^(2/3))).
    #[arg(long)]
    k: Option<usize>,
    /// Field delimiter.
    #[arg(long, default_value_t = ',')]
    delimiter: char,
}

#[derive(Args)]
struct TrainArgs {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Override the generator variant.
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Test data CSV in data units.
    #[arg(long)]
    test: PathBuf,
    /// Generated samples to compare against.
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    /// Manifold spec JSON; adds mean log manifold distances.
    #[arg(long)]
    manifold: Option<PathBuf>,
    /// Output directory for metrics.json and CCDF curves.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SampleArgs {
    /// Checkpoint written by `train`.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Number of samples.
    #[arg(short = 'n', long = "n")]
    n: usize,
    /// Output directory; samples go to samples.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Base experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated hidden widths.
    #[arg(long, value_delimiter = ',', required = true)]
    widths: Vec<usize>,
    /// Comma-separated variants (default: the config's variant).
    #[arg(long, value_delimiter = ',', value_parser = parse_variant)]
    variants: Vec<Variant>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SynthKind {
    CauchyMixture,
    Joint2d,
    Manifold,
}

#[derive(Args)]
struct SynthArgs {
    /// Dataset family.
    #[arg(value_enum)]
    kind: SynthKind,
    /// Number of rows.
    #[arg(short = 'n', long = "n", default_value_t = 10_000)]
    n: usize,
    /// Latent dimension (manifold).
    #[arg(short = 'c', default_value_t = 5)]
    c: usize,
    /// Ambient dimension (manifold).
    #[arg(short = 'd', default_value_t = 20)]
    d: usize,
    /// Mixture spec JSON (cauchy-mixture; default: standard Cauchy at -5 and 5, equal weights).
    #[arg(long)]
    mixture: Option<PathBuf>,
    /// Output directory; samples go to samples.csv.
    #[arg(long)]
    out: PathBuf,
}

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Command failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = if e.is_data_error() { 3 } else { 2 };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Error::from(e).into()
    }
}

type CmdResult = Result<(), Failure>;

fn print_json(value: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("JSON values serialize"));
}

fn load_config(path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path).map_err(|e| Failure { code: 2, message: e.to_string() })?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.out_dir = o;
    }
    Ok(cfg)
}

fn estimate_tail(args: EstimateTailArgs) -> CmdResult {
    if !args.delimiter.is_ascii() {
        return Err(Failure { code: 2, message: "delimiter must be ASCII".into() });
    }
    let opts =
        CsvOptions { columns: (!args.cols.is_empty()).then(|| args.cols.clone()), delimiter: args.delimiter as u8 };
    let loaded = synth::load_csv(&args.csv, &opts)?;
    let sides: &[TailSide] = match args.side {
        SideArg::Pos => &[TailSide::Positive],
        SideArg::Neg => &[TailSide::Negative],
        SideArg::Mag => &[TailSide::Magnitude],
        SideArg::All => &TailSide::ALL,
    };
    let mut estimates = Vec::new();
    for j in 0..loaded.data.ncols() {
        let col = loaded.data.column(j);
        let column = args.cols.get(j).copied().unwrap_or(j);
        for &side in sides {
            estimates.push(match estimate_tail_index(&col, side, args.k) {
                Ok(e) => json!({ "column": column, "side": side, "estimate": e }),
                Err(e) => json!({ "column": column, "side": side, "error": e.to_string() }),
            });
        }
    }
    print_json(&json!({
        "file": args.csv,
        "rows": loaded.data.nrows(),
        "rejected_rows": loaded.rejected_rows,
        "estimates": estimates,
    }));
    Ok(())
}

fn train(args: TrainArgs, seed: Option<u64>) -> CmdResult {
    let mut cfg = load_config(&args.config, seed, args.out)?;
    if let Some(v) = args.variant {
        cfg.generator.variant = v;
    }
    let art = pipeline::run_train(&cfg)?;
    let report = &art.summary.train;
    print_json(&json!({
        "out_dir": cfg.out_dir,
        "variant": cfg.generator.variant,
        "best_run": report.best_run,
        "best_val_loss": report.best_val_loss,
        "diverged_runs": report.runs.iter().filter(|r| r.diverged).count(),
    }));
    if report.all_diverged() {
        return Err(Failure { code: 4, message: "every training run diverged".into() });
    }
    Ok(())
}

fn eval(args: EvalArgs, seed: Option<u64>) -> CmdResult {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let test = synth::load_csv(&args.test, &CsvOptions::default())?.data;
    let manifold = match &args.manifold {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Some(serde_json::from_str::<ManifoldSpec>(&text).map_err(|e| Error::Format(e.to_string()))?)
        }
        None => None,
    };
    std::fs::create_dir_all(&args.out)?;
    let opts =
        EvalOptions { samples: args.samples, seed: seed.unwrap_or(0), ccdf_dir: Some(args.out.clone()), manifold };
    let metrics = pipeline::evaluate(&ckpt, &test, &opts)?;
    metrics.write_json(&args.out.join(pipeline::METRICS_FILE))?;
    print_json(&serde_json::to_value(&metrics).map_err(Error::from)?);
    Ok(())
}

fn sample(args: SampleArgs, seed: Option<u64>) -> CmdResult {
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let g = ckpt.sample(args.n, &mut rng::stream(seed.unwrap_or(0), streams::EVAL))?;
    std::fs::create_dir_all(&args.out)?;
    synth::write_csv(&args.out.join("samples.csv"), &g.samples, None)?;
    print_json(&json!({ "rows": args.n, "exp_cap_events": g.exp_cap_events }));
    Ok(())
}

fn sweep(args: SweepArgs, seed: Option<u64>) -> CmdResult {
    let cfg = load_config(&args.config, seed, args.out)?;
    let variants = if args.variants.is_empty() { vec![cfg.generator.variant] } else { args.variants };
    let rows = pipeline::run_sweep(&cfg, &args.widths, &variants)?;
    print_json(&serde_json::to_value(&rows).map_err(Error::from)?);
    Ok(())
}

fn synth_cmd(args: SynthArgs, seed: Option<u64>) -> CmdResult {
    let seed = seed.unwrap_or(0);
    let usage = |e: Error| Failure { code: 2, message: e.to_string() };
    let mut r = rng::stream(seed, streams::DATA);
    let (data, manifold) = match args.kind {
        SynthKind::CauchyMixture => {
            let spec = match &args.mixture {
                Some(p) => {
                    let text = std::fs::read_to_string(p)?;
                    serde_json::from_str(&text).map_err(|e| usage(Error::Config(e.to_string())))?
                }
                None => CauchyMixtureSpec::default(),
            };
            (synth::sample_cauchy_mixture(&spec, args.n, &mut r).map_err(usage)?, None)
        }
        SynthKind::Joint2d => (synth::sample_joint2d(args.n, &mut r).map_err(usage)?, None),
        SynthKind::Manifold => {
            let (x, m) = synth::sample_highd_manifold(args.c, args.d, args.n, seed).map_err(usage)?;
            (x, Some(m))
        }
    };
    std::fs::create_dir_all(&args.out)?;
    synth::write_csv(&args.out.join("samples.csv"), &data, None)?;
    if let Some(m) = &manifold {
        let text = serde_json::to_string_pretty(m).map_err(Error::from)?;
        std::fs::write(args.out.join(pipeline::MANIFOLD_FILE), text + "\n")?;
    }
    print_json(&json!({ "rows": data.nrows(), "cols": data.ncols(), "manifold": manifold.is_some() }));
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads == 0 {
        eprintln!("error: --threads must be >= 1");
        return ExitCode::from(2);
    }
    rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global().expect("global pool is set once");
    let result = match cli.command {
        Command::EstimateTail(a) => estimate_tail(a),
        Command::Train(a) => train(a, cli.seed),
        Command::Eval(a) => eval(a, cli.seed),
        Command::Sample(a) => sample(a, cli.seed),
        Command::SweepWidth(a) => sweep(a, cli.seed),
        Command::Synth(a) => synth_cmd(a, cli.seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
