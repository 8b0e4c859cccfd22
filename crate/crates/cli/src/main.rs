use std::path::{Path, PathBuf};
use std::process::ExitCode;

use ademi_core::channel::latency_table;
use ademi_core::harness::experiment::{
    stage_baselines, stage_eval, stage_synth, stage_train_device, stage_train_server,
};
use ademi_core::harness::sweep::{
    default_budgets, interval_csv, sweep_interval, sweep_upload, to_jsonl, upload_csv, write_curve,
    DEFAULT_INTERVALS_S,
};
use ademi_core::harness::{run_experiment, verify_checksums, ExperimentConfig, MetricsReport, RunDir};
use ademi_core::Error;
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

/// Simulator for capacity-adaptive multi-view WiFi gesture sensing.
#[derive(Parser, Debug)]
#[command(name = "ademi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// TOML configuration file; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set channel.snr_db=15`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let base = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        let cfg = base.with_overrides(&self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct RunArg {
    /// Run directory.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the default configuration as TOML.
    DefaultConfig,
    /// Synthesize events and write spectrograms, labels and the split.
    Synth {
        #[command(flatten)]
        run: RunArg,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train one device encoder and upload its latents.
    TrainDevice {
        #[command(flatten)]
        run: RunArg,
        #[arg(long)]
        device: usize,
    },
    /// Train the server model on the uploaded latents.
    TrainServer {
        #[command(flatten)]
        run: RunArg,
    },
    /// Train the raw-spectrogram single-view and multi-view baselines.
    Baselines {
        #[command(flatten)]
        run: RunArg,
    },
    /// Evaluate every scheme and write the report.
    Eval {
        #[command(flatten)]
        run: RunArg,
    },
    /// Every stage from synthesis to evaluation.
    Run {
        #[command(flatten)]
        run: RunArg,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Re-verify the checksums of a run directory.
    Verify {
        #[command(flatten)]
        run: RunArg,
    },
    /// One full run per CSI sampling interval.
    SweepInterval {
        /// Directory holding one run per interval.
        #[arg(long)]
        root: PathBuf,
        /// Sampling intervals in milliseconds.
        #[arg(long, value_delimiter = ',')]
        intervals_ms: Option<Vec<f64>>,
        /// Output stem; `.csv` and `.jsonl` are appended.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Accuracy against training-data upload budget, from a finished run.
    SweepUpload {
        #[command(flatten)]
        run: RunArg,
        /// Budgets in seconds; a 1-2-5 grid from 1e-5 to 100 s by default.
        #[arg(long, value_delimiter = ',')]
        budgets_s: Option<Vec<f64>>,
        /// Output stem; `.csv` and `.jsonl` are appended.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-sample upload latency of each scheme over a list of SNRs.
    LatencyTable {
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, default_value = "5,10,15,20,25")]
        snr_db: Vec<f64>,
        /// Spectrogram time frames.
        #[arg(long, default_value_t = 2895)]
        frames: usize,
        /// Spectrogram frequency bins.
        #[arg(long, default_value_t = 121)]
        bins: usize,
        /// Emit CSV instead of an aligned table.
        #[arg(long)]
        csv: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn open_run(arg: &RunArg) -> Result<(RunDir, ExperimentConfig)> {
    let dir = RunDir::open(&arg.run)?;
    let cfg = dir
        .config()
        .with_context(|| format!("reading config snapshot in {}", arg.run.display()))?;
    Ok((dir, cfg))
}

fn print_report(report: &MetricsReport, root: &Path) {
    println!("report: {}", root.join("report.json").display());
    println!("{:<8} {:>9} {:>14} {:>14}", "scheme", "accuracy", "payload_bits", "latency_s");
    for s in &report.schemes {
        println!(
            "{:<8} {:>9.4} {:>14} {:>14.4e}",
            s.scheme, s.accuracy, s.payload_bits, s.upload_latency_s
        );
    }
    for d in &report.devices {
        println!(
            "device {} d_k={} local_accuracy={:.4}",
            d.device_id, d.latent_dim, d.local_accuracy
        );
    }
}

fn emit_curve(out: Option<&Path>, csv: &str, jsonl: &str) -> Result<()> {
    match out {
        Some(stem) => {
            let (c, j) = write_curve(stem, csv, jsonl)?;
            println!("wrote {} and {}", c.display(), j.display());
        }
        None => print!("{csv}"),
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::DefaultConfig => print!("{}", ExperimentConfig::default().to_toml_string()?),
        Command::Synth { run, cfg } => {
            let cfg = cfg.load()?;
            let dir = RunDir::create(&run.run)?;
            stage_synth(&cfg, &dir)?;
            let (st, sf) = cfg.spectrogram_shape()?;
            println!("synthesized {} events, spectrograms {st}x{sf}", cfg.n_events);
        }
        Command::TrainDevice { run, device } => {
            let (dir, cfg) = open_run(&run)?;
            let rep = stage_train_device(&cfg, &dir, device)?;
            println!(
                "device {} d_k={} local_accuracy={:.4}",
                rep.device_id, rep.latent_dim, rep.local_accuracy
            );
        }
        Command::TrainServer { run } => {
            let (dir, cfg) = open_run(&run)?;
            let curve = stage_train_server(&cfg, &dir)?;
            if let Some(last) = curve.last() {
                println!("server epoch {} loss={:.4} accuracy={:.4}", last.epoch, last.loss, last.accuracy);
            }
        }
        Command::Baselines { run } => {
            let (dir, cfg) = open_run(&run)?;
            stage_baselines(&cfg, &dir)?;
            println!("baselines trained");
        }
        Command::Eval { run } => {
            let (dir, cfg) = open_run(&run)?;
            let report = stage_eval(&cfg, &dir)?;
            print_report(&report, dir.root());
        }
        Command::Run { run, cfg } => {
            let cfg = cfg.load()?;
            let report = run_experiment(&cfg, &run.run)?;
            print_report(&report, &run.run);
        }
        Command::Verify { run } => {
            let n = verify_checksums(&RunDir::open(&run.run)?)?;
            println!("{n} artifacts verified");
        }
        Command::SweepInterval {
            root,
            intervals_ms,
            out,
            cfg,
        } => {
            let cfg = cfg.load()?;
            let intervals: Vec<f64> = match intervals_ms {
                Some(ms) => ms.iter().map(|v| v * 1e-3).collect(),
                None => DEFAULT_INTERVALS_S.to_vec(),
            };
            let rows = sweep_interval(&cfg, &intervals, &root)?;
            emit_curve(out.as_deref(), &interval_csv(&rows), &to_jsonl(&rows))?;
        }
        Command::SweepUpload { run, budgets_s, out } => {
            let budgets = budgets_s.unwrap_or_else(default_budgets);
            let rows = sweep_upload(&run.run, &budgets)?;
            emit_curve(out.as_deref(), &upload_csv(&rows), &to_jsonl(&rows))?;
        }
        Command::LatencyTable {
            snr_db,
            frames,
            bins,
            csv,
            cfg,
        } => {
            if snr_db.is_empty() {
                bail!(Error::Config("at least one SNR is required".into()));
            }
            let cfg = cfg.load()?;
            let table = latency_table(&cfg.channel, &snr_db, frames, bins)?;
            print!("{}", if csv { table.to_csv() } else { table.to_text() });
        }
    }
    Ok(())
}

/// 2 for configuration errors, 3 for insufficient capacity, 4 for numerical
/// failures, 1 otherwise.
fn exit_code(err: &anyhow::Error) -> u8 {
    let core = err.chain().find_map(|e| e.downcast_ref::<Error>());
    match core.map(Error::root) {
        Some(Error::Config(_)) => 2,
        Some(Error::InsufficientCapacity { .. }) => 3,
        Some(Error::Numerical(_)) => 4,
        _ => 1,
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
