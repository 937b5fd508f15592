//! The epoch loop behind `train`, plus evaluation helpers shared by the
//! subcommands.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use delay_snn_core::data::{ImageSample, Split};
use delay_snn_core::training::{evaluate, network_for_mode, train_batch, GradientBuffers, Tally};
use delay_snn_core::{AdamState, Network};

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const METRICS_HEADER: &str = "epoch,train_loss,train_acc,val_loss,val_acc,seconds";
pub const METRICS_FILE: &str = "metrics.csv";
pub const BEST_FILE: &str = "best.ckpt";
pub const LAST_FILE: &str = "last.ckpt";

/// One row of the metrics file. `epoch` counts completed epochs from 1.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: u64,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.3}",
            self.epoch, self.train_loss, self.train_acc, self.val_loss, self.val_acc, self.seconds
        )
    }

    pub fn parse_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() != 6 {
            return None;
        }
        Some(Self {
            epoch: f[0].parse().ok()?,
            train_loss: f[1].parse().ok()?,
            train_acc: f[2].parse().ok()?,
            val_loss: f[3].parse().ok()?,
            val_acc: f[4].parse().ok()?,
            seconds: f[5].parse().ok()?,
        })
    }
}

pub fn read_metrics(path: &Path) -> Result<Vec<EpochMetrics>> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if n == 0 || line.trim().is_empty() {
            continue;
        }
        rows.push(EpochMetrics::parse_row(&line).ok_or_else(|| CliError::Checkpoint {
            path: path.to_path_buf(),
            reason: format!("line {}: malformed metrics row '{line}'", n + 1),
        })?);
    }
    Ok(rows)
}

/// Where a finished or interrupted run left its files.
#[derive(Clone, Debug)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub best: PathBuf,
    pub last: PathBuf,
}

impl RunFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self { metrics: dir.join(METRICS_FILE), best: dir.join(BEST_FILE), last: dir.join(LAST_FILE) }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub files: RunFiles,
    pub metrics: Vec<EpochMetrics>,
    pub best_val_acc: Option<(u64, f64)>,
}

/// Training and validation samples of `cfg`'s dataset.
pub struct TrainData {
    pub samples: Vec<ImageSample>,
    pub split: Split,
}

impl TrainData {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let samples = cfg.train_files().load()?;
        let split = Split::new(samples.len(), &cfg.split_spec())?;
        Ok(Self { samples, split })
    }

    pub fn val(&self) -> Vec<&ImageSample> {
        self.split.val.iter().map(|&i| &self.samples[i]).collect()
    }

    pub fn train(&self) -> Vec<&ImageSample> {
        self.split.train.iter().map(|&i| &self.samples[i]).collect()
    }
}

/// Keys that may differ between a checkpoint and the run resuming it.
const RESUMABLE: [&str; 3] = ["epochs", "out", "wallclock"];

fn check_resume(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<()> {
    for key in RunConfig::KEYS {
        if !RESUMABLE.contains(&key) && cfg.get(key) != ckpt.config.get(key) {
            return Err(CliError::Usage(format!(
                "cannot resume: {key} is '{}' here but '{}' in the checkpoint",
                cfg.get(key),
                ckpt.config.get(key)
            )));
        }
    }
    if ckpt.epoch > cfg.epochs {
        return Err(CliError::Usage(format!(
            "checkpoint is at epoch {}, past the requested {} epochs",
            ckpt.epoch, cfg.epochs
        )));
    }
    Ok(())
}

/// Runs (or continues) training as configured. After every epoch the
/// metrics row is appended and flushed, `last.ckpt` is replaced, and
/// `best.ckpt` is replaced when validation accuracy improves.
pub fn train(
    cfg: &RunConfig,
    data: &TrainData,
    resume: Option<Checkpoint>,
    mut on_epoch: impl FnMut(&EpochMetrics),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let files = RunFiles::in_dir(&cfg.out);

    let (mut net, mut adam, start, mut best, mut rows) = match resume {
        Some(ckpt) => {
            check_resume(cfg, &ckpt)?;
            let net = ckpt.network()?;
            let rows: Vec<EpochMetrics> = if files.metrics.exists() {
                read_metrics(&files.metrics)?.into_iter().filter(|r| r.epoch <= ckpt.epoch).collect()
            } else {
                Vec::new()
            };
            (net, ckpt.adam, ckpt.epoch, ckpt.best_val_acc, rows)
        }
        None => {
            let net = network_for_mode(cfg.network()?, cfg.mode)?;
            let adam = AdamState::for_layers(cfg.lr, &net.layers);
            (net, adam, 0, None, Vec::new())
        }
    };

    // rewrite the file so that it holds exactly the rows up to `start`
    let mut csv = File::create(&files.metrics).map_err(|e| CliError::io(&files.metrics, e))?;
    let mut text = format!("{METRICS_HEADER}\n");
    for r in &rows {
        text.push_str(&r.csv_row());
        text.push('\n');
    }
    csv.write_all(text.as_bytes()).map_err(|e| CliError::io(&files.metrics, e))?;
    drop(csv);

    let surrogate = cfg.surrogate();
    let val = data.val();
    let mut buffers = GradientBuffers::new();
    for epoch in start..cfg.epochs {
        let t0 = Instant::now();
        let mut tally = Tally::default();
        for batch in data.split.epoch_batches(epoch, cfg.batch_size)? {
            let samples: Vec<&ImageSample> = batch.iter().map(|&i| &data.samples[i]).collect();
            tally.merge(&train_batch(&mut net, &mut adam, &samples, cfg.mode, &surrogate, &mut buffers)?);
        }
        let v = evaluate(&net, &val)?;
        let row = EpochMetrics {
            epoch: epoch + 1,
            train_loss: tally.mean_loss(),
            train_acc: tally.accuracy(),
            val_loss: v.mean_loss(),
            val_acc: v.accuracy(),
            seconds: if cfg.wallclock { t0.elapsed().as_secs_f64() } else { 0.0 },
        };
        let improved = best.is_none_or(|(_, acc)| row.val_acc > acc);
        if improved {
            best = Some((row.epoch, row.val_acc));
            Checkpoint::capture(cfg, row.epoch, best, &net, &adam).save(&files.best)?;
        }
        Checkpoint::capture(cfg, row.epoch, best, &net, &adam).save(&files.last)?;
        let mut csv = OpenOptions::new()
            .append(true)
            .open(&files.metrics)
            .map_err(|e| CliError::io(&files.metrics, e))?;
        writeln!(csv, "{}", row.csv_row()).map_err(|e| CliError::io(&files.metrics, e))?;
        on_epoch(&row);
        rows.push(row);
    }
    Ok(TrainOutcome { files, metrics: rows, best_val_acc: best })
}

/// Accuracy report for a network over a sample set.
pub fn evaluate_samples(net: &Network, samples: &[ImageSample]) -> Result<Tally> {
    let refs: Vec<&ImageSample> = samples.iter().collect();
    Ok(evaluate(net, &refs)?)
}
