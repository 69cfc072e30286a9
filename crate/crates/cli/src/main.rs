use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use iag_core::data::synthetic::{generate_synthetic_dataset, SyntheticConfig};
use iag_core::harness::{self, Checkpoint};
use iag_core::{IagError, SplitTag, TrainConfig};

#[derive(Parser)]
#[command(name = "iag", version, about = "Interaction-driven 3D affordance grounding")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train from a TOML config and write checkpoints.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `checkpoint_dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on one split of a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        split: SplitTag,
        /// Dataset root; defaults to the one in the checkpoint's config.
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        json: bool,
    },
    /// Predict a heatmap for one image / cloud pair and export it as PLY.
    Infer {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        annotation: PathBuf,
        #[arg(long)]
        cloud: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the synthetic train/test dataset.
    GenSynthetic {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Compare metrics, sampling, gradients and normalisation against brute-force references.
    OracleSuite {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config, out } => {
            let mut cfg = TrainConfig::load(&config)?;
            if out.is_some() {
                cfg.checkpoint_dir = out;
            }
            let outcome = harness::train(&cfg)?;
            for e in &outcome.log {
                println!(
                    "epoch {:>3}  total {:.5}  ce {:.5}  kl {:.5}  hm {:.5}",
                    e.epoch, e.total, e.l_ce, e.l_kl, e.l_hm
                );
            }
            match &cfg.checkpoint_dir {
                Some(dir) => println!("checkpoint: {}", dir.join("last.json").display()),
                None => println!("no checkpoint_dir set; parameters were not saved"),
            }
        }
        Command::Eval {
            checkpoint,
            split,
            dataset,
            json,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let root = dataset.unwrap_or_else(|| ckpt.config.dataset_root.clone());
            let report = harness::evaluate_split(&ckpt, &root, split)?;
            if json {
                println!("{}", report.to_json());
            } else {
                print!("{}", report.to_text());
            }
        }
        Command::Infer {
            checkpoint,
            image,
            annotation,
            cloud,
            out,
        } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            let result = harness::infer(&ckpt, &image, &annotation, &cloud)?;
            harness::export_heatmap(&result.pair.cloud.coords, &result.prediction.heatmap, &out)?;
            println!("predicted affordance: {}", result.class_name);
            println!("heatmap: {} points written to {}", result.prediction.heatmap.len(), out.display());
        }
        Command::GenSynthetic { out, seed } => {
            let manifests = generate_synthetic_dataset(&SyntheticConfig::default(), seed, &out)?;
            for m in &manifests {
                println!("{}: {} images", m.split, m.entries.len());
            }
        }
        Command::OracleSuite { seed } => {
            let checks = iag_core::oracle::run_oracle_suite(seed)?;
            let mut failed = 0;
            for c in &checks {
                println!("{c}");
                failed += usize::from(!c.passed);
            }
            if failed > 0 {
                return Err(IagError::Numeric(format!("{failed} oracle checks failed")))
                    .context("oracle suite");
            }
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    err.chain()
        .find_map(|e| e.downcast_ref::<IagError>())
        .map_or(1, |e| e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
