use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::info;
use serde_json::json;

use tass_core::featureio::{load_dataset, pool_preprocess, save_dataset};
use tass_core::head_train::{
    dump_attention, evaluate, load_checkpoint, load_data, run_ablation, run_gradcheck_suite, runs_csv,
    save_checkpoint, summarize, summary_csv, train, AblateConfig, Axis, TrainConfig,
};
use tass_core::synthgen::{generate, write_generated, GenDataSpec};
use tass_core::{Result, TassError};

#[derive(Parser)]
#[command(name = "tass", version, about = "Target-aware spatio-temporal grounding for audio-visual question answering")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic train/val split with planted answers.
    GenData {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the spec file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Average every `t2` consecutive segments of a dataset.
    Preprocess {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        t2: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model and write its checkpoint and per-epoch history.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        dump_attention: Option<PathBuf>,
    },
    /// Compare tape gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 1e-5)]
        tol: f64,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        /// First seed; consecutive seeds follow.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
    },
    /// Train the ablation matrix and print a CSV comparison.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated: target_aware, match_loss, cms, stream, order.
        #[arg(long)]
        axes: Option<String>,
        /// Also write runs.csv, summary.csv and runs.json here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| TassError::Io { path: parent.into(), source: e })?;
    }
    std::fs::write(path, text).map_err(|e| TassError::Io { path: path.into(), source: e })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| TassError::Io { path: path.into(), source: e })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData { spec, out, seed } => {
            let mut spec: GenDataSpec = serde_json::from_str(&read_text(&spec)?)?;
            if let Some(seed) = seed {
                spec.scenario.seed = seed;
            }
            let data = generate(&spec)?;
            write_generated(&spec, &data, &out)?;
            println!(
                "{}",
                json!({
                    "out": out,
                    "train_samples": data.train.dataset.len(),
                    "val_samples": data.val.dataset.len(),
                    "answer_vocab": data.vocab.names(),
                })
            );
        }
        Command::Preprocess { input, t2, out } => {
            let ds = load_dataset(&input)?;
            let pooled = ds.map_videos(|v| pool_preprocess(v, t2))?;
            save_dataset(&pooled, &out)?;
            println!("{}", json!({ "out": out, "segments": pooled.dims.t, "samples": pooled.len() }));
        }
        Command::Train { config, out, seed } => {
            let mut config = TrainConfig::load(&config)?;
            if let Some(seed) = seed {
                config.seed = seed;
            }
            let (train_set, val_set) = load_data(&config)?;
            let mut history = Vec::new();
            let outcome = train(&config, &train_set, &val_set, |record| {
                println!(
                    "{}",
                    json!({
                        "epoch": record.epoch,
                        "lr": record.lr,
                        "train_loss": record.train,
                        "val_accuracy": record.val.overall,
                        "val_loss": record.val.loss,
                    })
                );
                history.push(record.clone());
            })?;
            let ckpt = save_checkpoint(out.join("checkpoint"), &outcome.model, &config, &train_set.answer_vocab)?;
            write_file(&out.join("history.json"), &serde_json::to_string_pretty(&history)?)?;
            write_file(&out.join("report.json"), &serde_json::to_string_pretty(outcome.final_report())?)?;
            info!("checkpoint written to {}", ckpt.display());
        }
        Command::Eval { checkpoint, data, dump_attention: dump } => {
            let ckpt = load_checkpoint(&checkpoint)?;
            let ds = load_dataset(&data)?;
            if ds.answer_vocab != ckpt.answer_vocab {
                return Err(TassError::Checkpoint(format!(
                    "dataset vocabulary ({} answers) differs from the checkpoint's ({})",
                    ds.answer_vocab.len(),
                    ckpt.answer_vocab.len()
                )));
            }
            ckpt.train.check_dims(&ds.dims, "evaluation set").map_err(|e| TassError::Checkpoint(e.to_string()))?;
            let train = &ckpt.train;
            let report = evaluate(&ckpt.model, &ds, train.loss_weights(), train.batch_size, train.seed)?;
            if let Some(dir) = dump {
                dump_attention(&ckpt.model, &ds, &dir)?;
            }
            println!("{}", serde_json::to_string(&report)?);
        }
        Command::Gradcheck { tol, step, seed, seeds } => {
            let seed_list: Vec<u64> = (seed..seed + seeds).collect();
            let cases = run_gradcheck_suite(&seed_list, step, tol)?;
            for c in &cases {
                println!("{}", serde_json::to_string(c)?);
            }
            let failed = cases.iter().filter(|c| !c.pass).count();
            println!("{}", json!({ "cases": cases.len(), "failed": failed, "tol": tol, "step": step }));
            return Ok(failed == 0);
        }
        Command::Ablate { config, axes, out } => {
            let config = AblateConfig::load(&config)?;
            let axes = match axes {
                Some(list) => Axis::parse_list(&list)?,
                None if !config.axes.is_empty() => config.axes.clone(),
                None => Axis::ALL.to_vec(),
            };
            let (train_set, val_set) = load_data(&config.base)?;
            let runs = run_ablation(&config, &axes, &train_set, &val_set, |run| {
                info!("{} seed {}: val accuracy {:.4}", run.variant, run.seed, run.report.overall);
            })?;
            let summary = summarize(&runs);
            if let Some(dir) = out {
                write_file(&dir.join("runs.csv"), &runs_csv(&runs))?;
                write_file(&dir.join("summary.csv"), &summary_csv(&summary))?;
                write_file(&dir.join("runs.json"), &serde_json::to_string_pretty(&runs)?)?;
            }
            print!("{}", runs_csv(&runs));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(2)
        }
    }
}
