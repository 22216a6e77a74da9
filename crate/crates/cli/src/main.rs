use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use log::info;

use inor_core::data::{generate_synthetic_dataset, load_manifest, Split, SyntheticSpec};
use inor_core::metrics::MetricsRecord;
use inor_core::report::{emit_report, state_table_csv};
use inor_core::trainer::{run_incremental, Checkpoint, Dataset, TrainConfig};

#[derive(Parser)]
#[command(
    name = "inor",
    version,
    about = "Class-incremental point-cloud recognition"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic shape dataset and its manifest.
    GenerateData {
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated shape kinds, one class each.
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "sphere,cube,cylinder,cone,torus,table,chair,capsule"
        )]
        classes: Vec<String>,
        #[arg(long, default_value_t = 100)]
        train: usize,
        #[arg(long, default_value_t = 30)]
        test: usize,
        #[arg(long, default_value_t = 256)]
        points: usize,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Train every incremental state, writing checkpoints and metrics.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Defaults to the name of the output directory.
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Score a checkpoint on a split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Skip score rectification.
        #[arg(long)]
        no_sfc: bool,
        /// Metrics file; defaults to a name derived from the checkpoint.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge the metrics of several runs into tables and plot data.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Run id that deltas are measured against.
        #[arg(long = "ref")]
        reference: Option<String>,
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let cause = cause.to_string();
                if !msg.contains(&cause) {
                    msg = format!("{msg}: {cause}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::GenerateData {
            out,
            classes,
            train,
            test,
            points,
            noise,
            seed,
        } => {
            let names: Vec<&str> = classes.iter().map(String::as_str).collect();
            let spec = SyntheticSpec::from_names(&names, train, test, points, noise, seed)?;
            let manifest = generate_synthetic_dataset(&spec, &out)?;
            info!(
                "wrote {} samples to {}",
                manifest.samples.len(),
                out.display()
            );
        }
        Command::Train {
            config,
            out,
            run_id,
        } => train(&config, &out, run_id)?,
        Command::Eval {
            checkpoint,
            split,
            no_sfc,
            out,
        } => eval(&checkpoint, split, no_sfc, out)?,
        Command::Report {
            runs,
            reference,
            out,
        } => {
            let records = runs
                .iter()
                .map(|dir| {
                    let path = dir.join("metrics.json");
                    MetricsRecord::load(&path)
                        .with_context(|| format!("reading {}", path.display()))
                })
                .collect::<Result<Vec<_>>>()?;
            for path in emit_report(&records, reference.as_deref(), &out)? {
                info!("wrote {}", path.display());
            }
        }
    }
    Ok(())
}

fn dir_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn train(config_path: &Path, out: &Path, run_id: Option<String>) -> Result<()> {
    let mut config = TrainConfig::load(config_path)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let dataset = base.join(&config.dataset);
    let dataset = dataset
        .canonicalize()
        .with_context(|| format!("dataset manifest {}", dataset.display()))?;
    config.dataset = dataset.to_string_lossy().into_owned();
    let manifest = load_manifest(&dataset)?;
    let data = Dataset::load(&manifest, config.u)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let run_id = run_id.unwrap_or_else(|| dir_name(out));
    let result = run_incremental(&config, &data, &run_id, Some(out))?;
    result.metrics.save(out.join("metrics.json"))?;
    fs::write(out.join("metrics.csv"), state_table_csv(&result.metrics))?;
    if let Some(plain) = &result.metrics_without_sfc {
        plain.save(out.join("metrics_no_sfc.json"))?;
    }
    fs::write(
        out.join("epochs.json"),
        serde_json::to_string_pretty(&result.epochs)?,
    )?;
    info!("avg top-1 {:.4}", result.metrics.avg_top1);
    Ok(())
}

fn eval(path: &Path, split: Split, no_sfc: bool, out: Option<PathBuf>) -> Result<()> {
    let learner = Checkpoint::load(path)?.restore()?;
    let manifest = load_manifest(&learner.config.dataset)?;
    let data = Dataset::load(&manifest, learner.config.u)?;
    if learner.schedule.num_classes() != data.num_classes {
        bail!(
            "checkpoint schedules {} classes, dataset has {}",
            learner.schedule.num_classes(),
            data.num_classes
        );
    }
    let sfc = !no_sfc;
    let state = learner.evaluate_split(&data, split, sfc)?;
    let mut record = MetricsRecord::new(
        dir_name(path.parent().unwrap_or(Path::new("."))),
        learner.config.seed,
        sfc,
        learner.schedule.groups().to_vec(),
    );
    record.push(state);
    let out = out.unwrap_or_else(|| {
        let stem = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        let stem = stem.trim_end_matches(".json").trim_end_matches(".ckpt");
        let suffix = if sfc { "" } else { "_no_sfc" };
        path.with_file_name(format!("{stem}_{split}{suffix}.metrics.json"))
    });
    record.save(&out)?;
    println!("{}", serde_json::to_string(&record)?);
    info!("wrote {}", out.display());
    Ok(())
}
