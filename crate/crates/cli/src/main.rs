//! Single-binary pipeline driver.
//!
//! Exit codes: 0 success, 1 usage/config, 2 data, 3 internal invariant
//! violation.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use layertrim_core::error::Error;
use layertrim_core::trimmer::RuleStrategy;

use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "layertrim",
    about = "Fine-tune a small decoder while progressively dropping its least-important \
             attention/MLP sub-layers, then measure the memory and throughput gains."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonOpts {
    /// TOML run configuration; flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for checkpoints, reports and CSVs.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; all randomness derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Builtin task: domain-a, domain-b, domain-c or mixture.
    #[arg(long, global = true)]
    task: Option<String>,
    /// Multiple-choice JSONL file instead of a builtin task.
    #[arg(long, global = true)]
    jsonl: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Fine-tune without dropping (optionally with a sparse-update freeze).
    Train {
        #[command(flatten)]
        common: CommonOpts,
        /// Training epochs.
        #[arg(long, default_value_t = 8)]
        epochs: usize,
        /// Sparse update ratio r: freeze all but the top floor(r*N) units.
        #[arg(long)]
        sparse: Option<f64>,
        /// Start from an existing checkpoint instead of a fresh build.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Progressive layer dropping during fine-tuning.
    Trim {
        #[command(flatten)]
        common: CommonOpts,
        /// Target selection: calibration, activation_norm or both.
        #[arg(long)]
        method: Option<String>,
        /// Sparse update ratio r.
        #[arg(long)]
        sparse: Option<f64>,
        /// Units dropped per epoch.
        #[arg(long)]
        drops_per_epoch: Option<usize>,
        /// Scan-score delta.
        #[arg(long)]
        delta: Option<f64>,
        /// Stop when validation accuracy would fall below this fraction of
        /// the reference (accuracy criterion).
        #[arg(long, conflicts_with_all = ["stop_mem", "stop_latency"])]
        stop_floor: Option<f64>,
        /// Stop at this memory ratio (efficiency criterion).
        #[arg(long)]
        stop_mem: Option<f64>,
        /// Stop at this per-token latency in seconds (efficiency criterion).
        #[arg(long)]
        stop_latency: Option<f64>,
        /// Epoch cap.
        #[arg(long)]
        max_epochs: Option<usize>,
        /// Rule-based one-shot baseline instead of scored trimming:
        /// random, top or bottom.
        #[arg(long)]
        baseline: Option<String>,
        /// Fraction of units the baseline drops.
        #[arg(long, default_value_t = 0.5)]
        fraction: f64,
        /// Start from an existing checkpoint instead of a fresh build.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on a task split.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        /// train, valid or test.
        #[arg(long, default_value = "test")]
        split: String,
    },
    /// Measure generation throughput of a checkpoint.
    Bench {
        #[command(flatten)]
        common: CommonOpts,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Generate up to this sequence length (default: model max).
        #[arg(long)]
        seq_len: Option<usize>,
        #[arg(long, default_value_t = 1)]
        batch: usize,
        #[arg(long, default_value_t = 5)]
        reps: usize,
    },
    /// Emit predicted training-cost curves, optionally against a report.
    Costmodel {
        #[command(flatten)]
        common: CommonOpts,
        /// Per-layer per-epoch time unit.
        #[arg(long, default_value_t = 1.0)]
        c: f64,
        /// Total layer count N.
        #[arg(long, default_value_t = 64)]
        layers: usize,
        /// Full fine-tuning epochs for the reference line.
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        /// Measured sparse/full epoch-time ratio.
        #[arg(long, default_value_t = 0.6)]
        sparse_factor: f64,
        /// Largest drop count to tabulate (default: N).
        #[arg(long)]
        max_drop: Option<usize>,
        /// TrimReport JSON supplying the measured column.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Trim to several memory targets and export the Pareto frontier.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Comma-separated memory-ratio stop targets (1.0 = train only).
        #[arg(long, default_value = "1.0,0.5,0.4,0.3", value_delimiter = ',')]
        ratios: Vec<f64>,
        /// Start every point from this checkpoint.
        #[arg(long)]
        init_from: Option<PathBuf>,
    },
}

fn resolve(common: &CommonOpts) -> Result<RunConfig, Error> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &common.out {
        cfg.out_dir = out.clone();
    }
    if let Some(task) = &common.task {
        cfg.task.source = "builtin".to_string();
        cfg.task.domain = task.clone();
    }
    if let Some(path) = &common.jsonl {
        cfg.task.source = "jsonl".to_string();
        cfg.task.path = Some(path.clone());
    }
    Ok(cfg)
}

fn parse_method(s: &str) -> Result<layertrim_core::SelectionMethod, Error> {
    match s {
        "calibration" => Ok(layertrim_core::SelectionMethod::Calibration),
        "activation_norm" => Ok(layertrim_core::SelectionMethod::ActivationNorm),
        "both" => Ok(layertrim_core::SelectionMethod::Both),
        other => Err(Error::Config(format!(
            "unknown method {other} (calibration, activation_norm, both)"
        ))),
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Train { common, epochs, sparse, init_from } => {
            let cfg = resolve(&common)?;
            commands::cmd_train(&cfg, epochs, sparse, &init_from)
        }
        Command::Trim {
            common,
            method,
            sparse,
            drops_per_epoch,
            delta,
            stop_floor,
            stop_mem,
            stop_latency,
            max_epochs,
            baseline,
            fraction,
            init_from,
        } => {
            let mut cfg = resolve(&common)?;
            if let Some(m) = method {
                cfg.trim.method = parse_method(&m)?;
            }
            if let Some(r) = sparse {
                cfg.trim.sparse_ratio = r;
            }
            if let Some(d) = drops_per_epoch {
                cfg.trim.drops_per_epoch = d;
            }
            if let Some(d) = delta {
                cfg.trim.delta = d;
            }
            if let Some(e) = max_epochs {
                cfg.trim.max_epochs = e;
            }
            if let Some(floor) = stop_floor {
                cfg.trim.stopping =
                    layertrim_core::StoppingCriterion::Accuracy { floor_fraction: floor };
            }
            if stop_mem.is_some() || stop_latency.is_some() {
                cfg.trim.stopping = layertrim_core::StoppingCriterion::Efficiency {
                    memory_ratio: stop_mem,
                    per_token_latency_s: stop_latency,
                };
            }
            let baseline = baseline.map(|b| b.parse::<RuleStrategy>()).transpose()?;
            commands::cmd_trim(&cfg, baseline, fraction, &init_from)
        }
        Command::Eval { common, checkpoint, split } => {
            let cfg = resolve(&common)?;
            commands::cmd_eval(&cfg, &checkpoint, &split)
        }
        Command::Bench { common, checkpoint, seq_len, batch, reps } => {
            let cfg = resolve(&common)?;
            commands::cmd_bench(&cfg, &checkpoint, seq_len, batch, reps)
        }
        Command::Costmodel { common, c, layers, epochs, sparse_factor, max_drop, report } => {
            let cfg = resolve(&common)?;
            commands::cmd_costmodel(&cfg, c, layers, epochs, sparse_factor, max_drop, &report)
        }
        Command::Sweep { common, ratios, init_from } => {
            let cfg = resolve(&common)?;
            commands::cmd_sweep(&cfg, &ratios, &init_from)
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 1,
        Error::Input(_) | Error::Data { .. } | Error::Io(_) | Error::Format(_) | Error::Size(_) => 2,
        Error::ShapeMismatch { .. } | Error::Dimension(_) | Error::Index(_) | Error::State(_) => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version output exits cleanly
            if e.use_stderr() {
                eprint!("{e}");
                return ExitCode::from(1);
            }
            print!("{e}");
            return ExitCode::SUCCESS;
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
