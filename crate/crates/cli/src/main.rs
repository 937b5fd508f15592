use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use delay_snn::commands::{self, EvalSplit};
use delay_snn::{Checkpoint, CliError, ConfigArgs, Result, TrainData};
use delay_snn_core::data::IdxPair;

#[derive(Parser)]
#[command(name = "delay-snn", version, about = "Train spiking networks by learning synaptic delays")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a network, writing metrics.csv, best.ckpt and last.ckpt to --out
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        /// Continue from this checkpoint; its configuration is the base
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on the test set (or its validation/training split)
    Eval {
        checkpoint: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: EvalSplit,
        /// Score these IDX files instead
        #[arg(long, requires = "labels")]
        images: Option<PathBuf>,
        #[arg(long, requires = "images")]
        labels: Option<PathBuf>,
    },
    /// Print delay histograms and weight statistics of a checkpoint
    Inspect { checkpoint: PathBuf },
    /// Train once per surrogate (alpha, beta) pair and tabulate best validation accuracy
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "0.1,1,10")]
        alphas: String,
        #[arg(long, default_value = "0.1,0.5,1,2")]
        betas: String,
    },
    /// Train once per seed, score each best checkpoint on the test set, report mean and std
    Repeat {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, default_value = "0,1,2")]
        seeds: String,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config, resume } => {
            let (cfg, ckpt) = match resume {
                Some(path) => {
                    let ckpt = Checkpoint::load(&path)?;
                    (config.resolve_onto(ckpt.config.clone())?, Some(ckpt))
                }
                None => (config.resolve()?, None),
            };
            cfg.validate()?;
            let data = TrainData::load(&cfg)?;
            eprintln!(
                "{} on {}: {} training, {} validation samples",
                cfg.mode,
                cfg.dataset.as_str(),
                data.split.train.len(),
                data.split.val.len()
            );
            let outcome = delay_snn::train(&cfg, &data, ckpt, |m| eprintln!("{}", m.csv_row()))?;
            if let Some((epoch, acc)) = outcome.best_val_acc {
                println!("best val_acc {acc:.4} at epoch {epoch} ({})", outcome.files.best.display());
            }
        }
        Command::Eval { checkpoint, split, images, labels } => {
            let files = images.zip(labels).map(|(images, labels)| IdxPair { images, labels });
            let (_, report) = commands::eval(&checkpoint, split, files)?;
            print!("{report}");
        }
        Command::Inspect { checkpoint } => {
            let ckpt = Checkpoint::load(&checkpoint)?;
            print!("{}", commands::inspect(&ckpt.network()?, ckpt.epoch, ckpt.config.mode.as_str()));
        }
        Command::Sweep { config, alphas, betas } => {
            let cfg = config.resolve()?;
            cfg.validate()?;
            let points = commands::sweep(&cfg, &commands::parse_list(&alphas)?, &commands::parse_list(&betas)?, |l| {
                eprintln!("{l}")
            })?;
            println!("alpha,beta,best_val_acc,best_epoch");
            for p in points {
                println!("{},{},{:.4},{}", p.alpha, p.beta, p.best_val_acc, p.best_epoch);
            }
        }
        Command::Repeat { config, seeds } => {
            let cfg = config.resolve()?;
            cfg.validate()?;
            let seeds: Vec<u64> = seeds
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| CliError::Usage(format!("bad seed '{s}': {e}"))))
                .collect::<Result<_>>()?;
            let (results, summary) = commands::repeat(&cfg, &seeds, |l| eprintln!("{l}"))?;
            for r in &results {
                println!("seed {} best_val_acc {:.4} test_acc {:.4}", r.seed, r.best_val_acc, r.test.accuracy());
            }
            print!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
