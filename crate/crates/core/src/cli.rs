//! The `node-escm` command line. Exit codes: 0 success, 1 usage, 2 runtime
//! failure.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::error::{Error, Result};
use crate::field::Checkpoint;
use crate::io::{load_dataset, save_dataset, write_atomic, LabelSeries, RunConfig, TimeSeriesDataset};
use crate::pipeline::{self, Method};
use crate::synth;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "node-escm",
    version,
    about = "Evolutionary subspace clustering with a neural ODE over affinity matrices",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run config (`key = value` lines); defaults apply to absent keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct DataArg {
    /// Dataset manifest. Without it the synthetic dataset described by the
    /// config is generated in memory.
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset (manifest, snapshots, labels).
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train the field; writes checkpoint.txt and the training report.
    Train {
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        common: Common,
    },
    /// Labels at any times in [0, 1] from a trained checkpoint.
    Cluster {
        #[command(flatten)]
        data: DataArg,
        /// Checkpoint written by `train`.
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated times; defaults to the dataset's timestamps.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Score a labels file against the dataset's ground truth.
    Evaluate {
        #[command(flatten)]
        data: DataArg,
        #[arg(long)]
        labels: PathBuf,
        /// Method name recorded in the report.
        #[arg(long, default_value = "node-escm")]
        method: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run a static or evolutionary baseline at every observed time.
    Baseline {
        method: MethodArg,
        #[command(flatten)]
        data: DataArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    Ssc,
    Affect,
    Cesm,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Method {
        match m {
            MethodArg::Ssc => Method::Ssc,
            MethodArg::Affect => Method::Affect,
            MethodArg::Cesm => Method::Cesm,
        }
    }
}

/// Parses `argv` (program name first) and runs one command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_RUNTIME
        }
    }
}

fn setup(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.set_seed(seed);
    }
    cfg.validate()?;
    fs::create_dir_all(&common.out).map_err(|e| Error::io(&common.out, e))?;
    Ok(cfg)
}

fn dataset(arg: &DataArg, cfg: &RunConfig) -> Result<TimeSeriesDataset> {
    match &arg.data {
        Some(p) => load_dataset(p),
        None => Ok(synth::generate(&cfg.synth)?.dataset),
    }
}

fn write(out: &Path, name: &str, text: &str) -> Result<PathBuf> {
    let path = out.join(name);
    write_atomic(&path, text.as_bytes())?;
    Ok(path)
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Generate { common } => {
            let cfg = setup(&common)?;
            let data = synth::generate(&cfg.synth)?.dataset;
            let manifest = save_dataset(&common.out, &data)?;
            println!("wrote {}", manifest.display());
        }
        Command::Train { data, common } => {
            let cfg = setup(&common)?;
            let data = dataset(&data, &cfg)?;
            let run = pipeline::train_run_with(&data, &cfg, |r| {
                eprintln!("epoch {:>4}  loss {:.6e}  recon {:.6e}", r.epoch, r.total, r.recon);
            })?;
            let out = &common.out;
            run.checkpoint.save(&out.join("checkpoint.txt"))?;
            write(out, "train_report.csv", &run.report.to_csv())?;
            write(out, "train_summary.json", &run.report.summary_json()?)?;
            write(out, "config.txt", &cfg.to_text())?;
            let last = run.report.final_record();
            println!(
                "trained {} epochs: recon {:.6e}, convergence epoch {}",
                last.epoch, last.recon, run.report.convergence_epoch
            );
        }
        Command::Cluster {
            data,
            model,
            times,
            common,
        } => {
            let cfg = setup(&common)?;
            let data = dataset(&data, &cfg)?;
            let checkpoint = Checkpoint::load(&model)?;
            let times = if times.is_empty() {
                data.timestamps().to_vec()
            } else {
                times
            };
            let k = pipeline::resolve_k(&cfg, &data)?;
            let series = pipeline::cluster_at(&checkpoint, &data, &times, k, &cfg)?;
            let path = common.out.join("labels.csv");
            series.save(&path)?;
            println!("wrote {} ({} times, k = {k})", path.display(), times.len());
        }
        Command::Evaluate {
            data,
            labels,
            method,
            common,
        } => {
            let cfg = setup(&common)?;
            let data = dataset(&data, &cfg)?;
            let series = LabelSeries::load(&labels)?;
            let report = pipeline::evaluate(&method, &series, &data)?;
            write(&common.out, "eval.csv", &report.to_csv())?;
            write(&common.out, "eval.json", &report.to_json()?)?;
            println!("{method}: mean accuracy {:.6}", report.mean_accuracy);
        }
        Command::Baseline { method, data, common } => {
            let cfg = setup(&common)?;
            let data = dataset(&data, &cfg)?;
            let method = Method::from(method);
            let k = pipeline::resolve_k(&cfg, &data)?;
            let series = pipeline::baseline_labels(method, &data, k, &cfg)?;
            let name = method.name();
            series.save(&common.out.join(format!("{name}_labels.csv")))?;
            if data.labels().is_some() {
                let report = pipeline::evaluate(name, &series, &data)?;
                write(&common.out, &format!("{name}_eval.csv"), &report.to_csv())?;
                write(&common.out, &format!("{name}_eval.json"), &report.to_json()?)?;
                println!("{name}: mean accuracy {:.6}", report.mean_accuracy);
            } else {
                println!("{name}: wrote labels for {} times", series.times.len());
            }
        }
    }
    Ok(())
}
