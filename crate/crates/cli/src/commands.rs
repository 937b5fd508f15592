//! Subcommand bodies. Each returns the text it would print so that tests
//! can check it without spawning the binary.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use delay_snn_core::data::IdxPair;
use delay_snn_core::training::Tally;
use delay_snn_core::Network;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::run::{self, evaluate_samples, TrainData};

/// Which samples `eval` scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum EvalSplit {
    Test,
    Val,
    Train,
}

pub fn format_report(tally: &Tally) -> String {
    format!(
        "total {}\ncorrect {}\nsilent {}\naccuracy {:.4}\n",
        tally.samples,
        tally.correct,
        tally.silent,
        tally.accuracy()
    )
}

/// Scores a checkpoint. Explicit `files` replace the split's data files.
pub fn eval(checkpoint: &Path, split: EvalSplit, files: Option<IdxPair>) -> Result<(Tally, String)> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let net = ckpt.network()?;
    let tally = match (split, files) {
        (_, Some(pair)) => evaluate_samples(&net, &pair.load()?)?,
        (EvalSplit::Test, None) => evaluate_samples(&net, &ckpt.config.test_files().load()?)?,
        (EvalSplit::Val | EvalSplit::Train, None) => {
            let data = TrainData::load(&ckpt.config)?;
            let picked = if split == EvalSplit::Val { data.val() } else { data.train() };
            delay_snn_core::training::evaluate(&net, &picked)?
        }
    };
    Ok((tally, format_report(&tally)))
}

fn bar(count: usize, total: usize, width: usize) -> String {
    let n = if total == 0 { 0 } else { (count * width).div_ceil(total) };
    "#".repeat(n)
}

/// Quantized-delay histograms and weight statistics per layer.
pub fn inspect(net: &Network, epoch: u64, mode: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "mode {mode}, epoch {epoch}");
    for (l, layer) in net.layers.iter().enumerate() {
        let n = layer.weights.len();
        let _ = writeln!(s, "layer {l}: {} -> {} ({n} synapses)", layer.pre(), layer.post());
        let hist = layer.delays.step_histogram();
        let last = hist.len() - 1;
        for (q, &c) in hist.iter().enumerate() {
            let label = if q == last { format!("{q}+") } else { q.to_string() };
            let _ = writeln!(s, "  delay {label:>3} steps {c:>9}  {}", bar(c, n, 40));
        }
        let mean_delay = layer.delays.values().iter().sum::<f64>() / n.max(1) as f64;
        let _ = writeln!(s, "  mean real delay {mean_delay:.4} ms");
        let (mut lo, mut hi, mut sum) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
        for &w in &layer.weights {
            lo = lo.min(w);
            hi = hi.max(w);
            sum += w;
        }
        let _ = writeln!(s, "  weights min {lo:.4} mean {:.4} max {hi:.4}", sum / n.max(1) as f64);
        if layer.weights_ternary {
            let count = |v: f64| layer.weights.iter().filter(|&&w| w == v).count();
            let scale = hi.abs().max(lo.abs());
            let _ = writeln!(
                s,
                "  ternary counts -{scale}: {}  0: {}  +{scale}: {}",
                count(-scale),
                count(0.0),
                count(scale)
            );
        }
    }
    s
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| CliError::Usage(format!("bad list entry '{t}': {e}"))))
        .collect()
}

/// One point of an alpha/beta sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub alpha: f64,
    pub beta: f64,
    pub best_val_acc: f64,
    pub best_epoch: u64,
}

/// Trains one run per (alpha, beta) pair under `base.out/a{alpha}_b{beta}`
/// and writes `sweep.csv` in `base.out`, one row per pair.
pub fn sweep(
    base: &RunConfig,
    alphas: &[f64],
    betas: &[f64],
    mut log: impl FnMut(&str),
) -> Result<Vec<SweepPoint>> {
    let data = TrainData::load(base)?;
    std::fs::create_dir_all(&base.out).map_err(|e| CliError::io(&base.out, e))?;
    let mut points = Vec::new();
    let mut csv = String::from("alpha,beta,best_val_acc,best_epoch\n");
    for &alpha in alphas {
        for &beta in betas {
            let mut cfg = base.clone();
            cfg.alpha = alpha;
            cfg.beta = beta;
            cfg.out = base.out.join(format!("a{alpha}_b{beta}"));
            let outcome = run::train(&cfg, &data, None, |m| log(&format!("alpha {alpha} beta {beta} {}", m.csv_row())))?;
            let (best_epoch, best_val_acc) = outcome.best_val_acc.unwrap_or((0, 0.0));
            let _ = writeln!(csv, "{alpha},{beta},{best_val_acc:.6},{best_epoch}");
            points.push(SweepPoint { alpha, beta, best_val_acc, best_epoch });
        }
    }
    let path = base.out.join("sweep.csv");
    std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    Ok(points)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Result of one seed in a repeated run.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub out: PathBuf,
    pub best_val_acc: f64,
    pub test: Tally,
}

/// Trains one run per seed under `base.out/seed{n}`, scores each run's
/// best-validation checkpoint on the test set, and writes `runs.csv`.
pub fn repeat(base: &RunConfig, seeds: &[u64], mut log: impl FnMut(&str)) -> Result<(Vec<SeedResult>, String)> {
    let test = base.test_files().load()?;
    std::fs::create_dir_all(&base.out).map_err(|e| CliError::io(&base.out, e))?;
    let mut results = Vec::new();
    for &seed in seeds {
        let mut cfg = base.clone();
        cfg.seed = seed;
        cfg.out = base.out.join(format!("seed{seed}"));
        let data = TrainData::load(&cfg)?;
        let outcome = run::train(&cfg, &data, None, |m| log(&format!("seed {seed} {}", m.csv_row())))?;
        let best = Checkpoint::load(&outcome.files.best)?;
        let tally = evaluate_samples(&best.network()?, &test)?;
        results.push(SeedResult {
            seed,
            out: cfg.out,
            best_val_acc: outcome.best_val_acc.map_or(0.0, |b| b.1),
            test: tally,
        });
    }
    let mut csv = String::from("seed,best_val_acc,test_acc,test_silent\n");
    for r in &results {
        let _ = writeln!(csv, "{},{:.6},{:.6},{}", r.seed, r.best_val_acc, r.test.accuracy(), r.test.silent);
    }
    let path = base.out.join("runs.csv");
    std::fs::write(&path, csv).map_err(|e| CliError::io(&path, e))?;
    let accs: Vec<f64> = results.iter().map(|r| 100.0 * r.test.accuracy()).collect();
    let (mean, std) = mean_std(&accs);
    let summary = format!("{} test accuracy over {} seeds: {mean:.2} +- {std:.2} %\n", base.mode, seeds.len());
    Ok((results, summary))
}
