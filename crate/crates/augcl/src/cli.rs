//! The command-line surface: pretraining runs, checkpoint evaluation,
//! mining inspection, grid sweeps, and synthetic dataset generation.
//!
//! Exit codes: 0 on success, 1 for usage problems (bad flags, malformed
//! `--set` pairs, unknown sweep parameters), 2 for runtime failures.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::data::{gen_synthetic, write_tu_dataset};
use crate::encoder::EncoderParams;
use crate::pipeline::train::random_batches;
use crate::pipeline::{
    embed_all, linear_probe_eval, mine_phase, run_experiment, ExperimentConfig, MiningCounters,
    PipelineError, RunReport,
};
use crate::seed::{derive, tag};

#[derive(Debug, Parser)]
#[command(name = "augcl", version, about = "Graph contrastive pretraining with uncertainty-weighted hard negatives")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CommonOpts {
    /// Configuration file; built-in defaults apply when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration entry, `section.key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Master seed, overriding the configured `train.seed`.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Contrastive pretraining with the mining phase; writes report artifacts.
    Pretrain {
        #[command(flatten)]
        common: CommonOpts,
        /// Directory for report.json, loss.csv, config.ini and encoder.bin.
        #[arg(long, default_value = "runs/pretrain")]
        out: PathBuf,
    },
    /// Probe a saved encoder on the configured dataset.
    Eval {
        #[command(flatten)]
        common: CommonOpts,
        /// Encoder checkpoint produced by `pretrain`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Optional directory for eval.json.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Mine a saved encoder and dump per-batch uncertainty/weight tables.
    Inspect {
        #[command(flatten)]
        common: CommonOpts,
        /// Encoder checkpoint produced by `pretrain`.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Directory for the CSV tables.
        #[arg(long, default_value = "runs/inspect")]
        out: PathBuf,
    },
    /// Run one configuration across a grid of values for a single key.
    Sweep {
        #[command(flatten)]
        common: CommonOpts,
        /// Key to vary: a dotted config key, or reward | alpha | estimator | policy.
        #[arg(long)]
        param: String,
        /// Comma-separated values for the key.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
        /// Parent directory; each value gets its own run directory.
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
        /// Number of runs to execute concurrently.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Generate the configured synthetic dataset in TU layout.
    GenSynth {
        #[command(flatten)]
        common: CommonOpts,
        /// Dataset name (directory and file prefix).
        #[arg(long, default_value = "SYNTH")]
        name: String,
        /// Dataset root to write under.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Runtime(PipelineError),
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        CliError::Runtime(e)
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// Parse `args` (`argv[0]` included) and execute; returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("usage error: {msg}");
            1
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn dispatch(command: Command) -> CliResult<()> {
    match command {
        Command::Pretrain { common, out } => {
            let cfg = load_config(&common)?;
            let report = run_experiment(&cfg, &out)?;
            print_report(&report, &out);
            Ok(())
        }
        Command::Eval {
            common,
            checkpoint,
            out,
        } => eval(&common, &checkpoint, out.as_deref()),
        Command::Inspect {
            common,
            checkpoint,
            out,
        } => inspect(&common, &checkpoint, &out),
        Command::Sweep {
            common,
            param,
            values,
            out,
            parallel,
        } => sweep(&common, &param, &values, &out, parallel),
        Command::GenSynth { common, name, out } => {
            let cfg = load_config(&common)?;
            let data = gen_synthetic(&cfg.dataset.synthetic, cfg.train.seed)
                .map_err(PipelineError::from)?;
            write_tu_dataset(&out, &name, &data).map_err(PipelineError::from)?;
            println!("wrote {} graphs to {}", data.len(), out.join(&name).display());
            Ok(())
        }
    }
}

/// File config (or defaults), then `--set` overrides, then `--seed`.
fn load_config(common: &CommonOpts) -> CliResult<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(PipelineError::from)?;
            ExperimentConfig::from_ini(&text)?
        }
        None => ExperimentConfig::default(),
    };
    for pair in &common.set {
        let (key, value) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set {pair:?} is not key=value")))?;
        cfg.set(key.trim(), value.trim())
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if let Some(seed) = common.seed {
        cfg.train.seed = seed;
    }
    Ok(cfg)
}

fn print_report(report: &RunReport, out: &Path) {
    println!(
        "dataset {} seed {} accuracy {:.4} ± {:.4} over {} folds",
        report.dataset,
        report.seed,
        report.accuracy_mean,
        report.accuracy_std,
        report.fold_accuracies.len()
    );
    println!("report written to {}", out.join("report.json").display());
}

fn eval(common: &CommonOpts, checkpoint: &Path, out: Option<&Path>) -> CliResult<()> {
    let cfg = load_config(common)?;
    cfg.validate()?;
    let data = cfg.dataset.load(cfg.train.seed)?;
    let params = EncoderParams::load(checkpoint, cfg.encoder.encoder_config(data.feature_dim()))
        .map_err(PipelineError::from)?;
    let (embeddings, labels) = embed_all(&params, &data)?;
    let probe = linear_probe_eval(&embeddings, &labels, &cfg.probe, cfg.train.seed)?;
    println!(
        "accuracy {:.4} ± {:.4} over {} folds",
        probe.mean,
        probe.std,
        probe.fold_accuracies.len()
    );
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(PipelineError::from)?;
        let doc = serde_json::json!({
            "checkpoint": checkpoint.display().to_string(),
            "dataset": cfg.dataset.describe(),
            "fold_accuracies": probe.fold_accuracies,
            "accuracy_mean": probe.mean,
            "accuracy_std": probe.std,
        });
        std::fs::write(
            dir.join("eval.json"),
            serde_json::to_string_pretty(&doc).map_err(PipelineError::from)?,
        )
        .map_err(PipelineError::from)?;
    }
    Ok(())
}

/// Re-run the mining phase on the batches the switch epoch would draw and
/// dump one `anchor,candidate,u,w` table per batch.
fn inspect(common: &CommonOpts, checkpoint: &Path, out: &Path) -> CliResult<()> {
    let cfg = load_config(common)?;
    cfg.validate()?;
    let data = cfg.dataset.load(cfg.train.seed)?;
    let params = EncoderParams::load(checkpoint, cfg.encoder.encoder_config(data.feature_dim()))
        .map_err(PipelineError::from)?;
    let batches = random_batches(
        data.len(),
        cfg.train.batch_size,
        derive(cfg.train.seed, &[tag("batches"), cfg.train.switch_epoch as u64]),
    );
    if batches.is_empty() {
        return Err(PipelineError::InvalidConfig(format!(
            "batch size {} exceeds the {} available graphs",
            cfg.train.batch_size,
            data.len()
        ))
        .into());
    }
    let mut counters = MiningCounters::default();
    let (cache, summary) = mine_phase(&params, &data, &batches, &cfg, &mut counters)?;
    println!(
        "estimator {} alpha {:.6} batches {} degenerate {}",
        summary.estimator, summary.alpha, summary.batch_count, summary.degenerate_batches
    );
    match (summary.u_mean, summary.u_min, summary.u_max) {
        (Some(mean), Some(min), Some(max)) => {
            println!("uncertainty mean {mean:.6} min {min:.6} max {max:.6}");
        }
        _ => println!("no uncertainty scores produced"),
    }
    if let Some(warning) = &summary.warning {
        println!("warning: {warning}");
    }
    std::fs::create_dir_all(out).map_err(PipelineError::from)?;
    for (bid, (u, w)) in cache.uncertainties.iter().zip(&cache.weights).enumerate() {
        let mut table = String::from("anchor,candidate,u,w\n");
        for i in 0..u.anchors() {
            for k in 0..u.columns() {
                let _ = writeln!(
                    table,
                    "{},{},{},{}",
                    i,
                    u.candidate(i, k),
                    u.value(i, k),
                    w.value(i, k)
                );
            }
        }
        let path = out.join(format!("mining-batch-{bid}.csv"));
        std::fs::write(&path, table).map_err(PipelineError::from)?;
        println!(
            "wrote {} ({} rows)",
            path.display(),
            u.anchors() * u.columns()
        );
    }
    Ok(())
}

fn sweep(
    common: &CommonOpts,
    param: &str,
    values: &[String],
    out: &Path,
    parallel: usize,
) -> CliResult<()> {
    let key = resolve_sweep_key(param)?;
    let base = load_config(common)?;
    let mut runs = Vec::with_capacity(values.len());
    for value in values {
        let mut cfg = base.clone();
        cfg.set(&key, value)
            .map_err(|e| CliError::Usage(e.to_string()))?;
        let dir = out.join(format!("{}-{}", key.replace('.', "-"), value));
        runs.push((cfg, dir));
    }

    let mut results: BTreeMap<usize, Result<RunReport, PipelineError>> = BTreeMap::new();
    for group in runs.chunks(parallel.max(1)) {
        let offset = results.len();
        std::thread::scope(|scope| {
            let handles: Vec<_> = group
                .iter()
                .map(|(cfg, dir)| scope.spawn(move || run_experiment(cfg, dir)))
                .collect();
            for (i, handle) in handles.into_iter().enumerate() {
                let outcome = handle.join().unwrap_or_else(|_| {
                    Err(PipelineError::InvalidConfig("worker thread panicked".into()))
                });
                results.insert(offset + i, outcome);
            }
        });
    }

    let mut first_error = None;
    for (i, outcome) in results {
        let (_, dir) = &runs[i];
        match outcome {
            Ok(report) => println!(
                "{key} = {}: accuracy {:.4} ± {:.4} ({})",
                values[i],
                report.accuracy_mean,
                report.accuracy_std,
                dir.display()
            ),
            Err(e) => {
                eprintln!("{key} = {} failed: {e}", values[i]);
                first_error.get_or_insert(e);
            }
        }
    }
    match first_error {
        Some(e) => Err(e.into()),
        None => {
            println!("{} reports under {}", values.len(), out.display());
            Ok(())
        }
    }
}

/// Map sweep shorthands onto their config keys; dotted keys pass through.
fn resolve_sweep_key(param: &str) -> CliResult<String> {
    if param.contains('.') {
        return Ok(param.to_string());
    }
    match param {
        "reward" => Ok("gambler.reward".into()),
        "alpha" => Ok("mining.alpha".into()),
        "estimator" => Ok("mining.estimator".into()),
        "policy" => Ok("mining.policy".into()),
        other => Err(CliError::Usage(format!(
            "unknown sweep parameter {other:?}; use a dotted config key"
        ))),
    }
}
