use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dcboost::cli::{self, EvalSource};
use dcboost::config::RunConfig;
use dcboost::feature_store::DataFormat;
use dcboost::trainer::checkpoint::load_checkpoint;
use dcboost::Result;

#[derive(Parser)]
#[command(name = "dcboost", version, about = "Boost a clustering embedding with adaptive k-NN sample selection")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed; overrides `seed` from the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Dataset file format; inferred from the extension when omitted.
    #[arg(long, global = true)]
    format: Option<DataFormat>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct DataArg {
    /// Input dataset (DCBF or CSV).
    #[arg(long)]
    data: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic Gaussian mixture into OUT/dataset.{dcbf,csv}.
    Synth,
    /// Report per-batch adaptive selection statistics.
    Select(DataArg),
    /// Pre-train (or load a checkpoint), boost, and write all artifacts.
    Boost {
        #[command(flatten)]
        data: DataArg,
        /// Start from this checkpoint instead of pre-training.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Print a metrics report for labels or a checkpoint.
    Eval {
        #[command(flatten)]
        data: DataArg,
        /// One integer label per line.
        #[arg(long, group = "source")]
        labels: Option<PathBuf>,
        /// Cluster the target embedding of this checkpoint.
        #[arg(long, group = "source")]
        checkpoint: Option<PathBuf>,
        /// Score the dataset's pseudo-labels instead of its truth labels.
        #[arg(long, group = "source")]
        pseudo: bool,
        /// Also write the report as JSON.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Export the evaluated embedding with its labels as CSV.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

fn run(args: Cli) -> Result<()> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg = cfg.with_seed(s);
    }
    let out = args.out.as_path();
    match args.command {
        Command::Synth => {
            fs::create_dir_all(out)?;
            let format = args.format.unwrap_or(DataFormat::Dcbf);
            let ext = if format == DataFormat::Csv { "csv" } else { "dcbf" };
            let path = out.join(format!("dataset.{ext}"));
            cli::cmd_synth(&cfg, &path, format)?;
            println!("{}", path.display());
        }
        Command::Select(d) => {
            let data = cli::load(&d.data, args.format)?;
            let report = cli::cmd_select(&data, &cfg)?;
            cli::write_select(&report, &cfg, out)?;
            print!("{}", report.summary());
        }
        Command::Boost { data, init } => {
            let data = cli::load(&data.data, args.format)?;
            let run = cli::cmd_boost(&data, &cfg, Some(out), init.as_deref())?;
            print!("{}", run.final_report.to_kv());
        }
        Command::Eval { data, labels, checkpoint, pseudo, json, embeddings } => {
            let data = cli::load(&data.data, args.format)?;
            let source = match (labels, checkpoint) {
                (Some(l), _) => EvalSource::Labels(cli::read_labels(&l)?),
                (_, Some(c)) => EvalSource::Checkpoint(load_checkpoint(c)?),
                _ if pseudo => EvalSource::Pseudo,
                _ => EvalSource::Truth,
            };
            let result = cli::cmd_eval(&data, source, &cfg)?;
            print!("{}", result.report.to_kv());
            if let Some(p) = json {
                write_json(&p, &result.report.to_json())?;
            }
            if let Some(p) = embeddings {
                cli::export_embeddings(&result, &p)?;
            }
        }
    }
    Ok(())
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(v).expect("JSON of plain values"))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
