//! Run configuration: a flat `key = value` file, one pair per line, with
//! `#` starting a comment. Every key can also be given as a command-line
//! flag of the same name (underscores become dashes), and flags win.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use delay_snn_core::data::{IdxPair, SplitSpec};
use delay_snn_core::network::LayerInit;
use delay_snn_core::srm::SrmConfig;
use delay_snn_core::{NetworkConfig, SurrogateConfig, TimeGrid, TrainMode};

use crate::error::{CliError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dataset {
    Mnist,
    FashionMnist,
}

impl Dataset {
    pub fn as_str(self) -> &'static str {
        match self {
            Dataset::Mnist => "mnist",
            Dataset::FashionMnist => "fashion-mnist",
        }
    }
}

impl FromStr for Dataset {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "mnist" => Ok(Dataset::Mnist),
            "fashion-mnist" | "fashion" => Ok(Dataset::FashionMnist),
            other => Err(CliError::Usage(format!("unknown dataset '{other}' (expected mnist or fashion-mnist)"))),
        }
    }
}

/// Weight initialisation scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InitScheme {
    /// `Shifted` for the delay-training modes, `FanIn` for the weight
    /// baseline, which cannot learn from the silent shifted init.
    Auto,
    /// N(0.0571, 0.5458) for the hidden layer and N(-0.5244, 1.049) for
    /// the output layer, scaled by 10.
    Shifted,
    /// N(0, 1/sqrt(fan_in)) in every layer, scaled by 10.
    FanIn,
}

impl InitScheme {
    pub fn as_str(self) -> &'static str {
        match self {
            InitScheme::Auto => "auto",
            InitScheme::Shifted => "shifted",
            InitScheme::FanIn => "fan-in",
        }
    }

    pub fn resolve(self, mode: TrainMode) -> InitScheme {
        match (self, mode) {
            (InitScheme::Auto, TrainMode::WeightsBaseline) => InitScheme::FanIn,
            (InitScheme::Auto, _) => InitScheme::Shifted,
            (other, _) => other,
        }
    }
}

impl FromStr for InitScheme {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "auto" => Ok(InitScheme::Auto),
            "shifted" => Ok(InitScheme::Shifted),
            "fan-in" => Ok(InitScheme::FanIn),
            other => Err(CliError::Usage(format!("unknown init scheme '{other}' (expected auto, shifted or fan-in)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub dataset: Dataset,
    /// Directory holding the four standard IDX files.
    pub data_dir: Option<PathBuf>,
    /// Explicit training files; override `data_dir`.
    pub images: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    pub mode: TrainMode,
    pub epochs: u64,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub alpha: f64,
    pub beta: f64,
    pub train_fraction: f64,
    /// Use only this many training-file samples (before the split).
    pub limit: Option<usize>,
    pub hidden: usize,
    pub init: InitScheme,
    pub threshold: f64,
    pub tau_s: f64,
    pub tau_r: f64,
    pub dt: f64,
    pub steps: usize,
    pub out: PathBuf,
    /// Record elapsed seconds in the metrics file; when off the column is 0
    /// and two runs with the same seed produce identical files.
    pub wallclock: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let srm = SrmConfig::default();
        let grid = TimeGrid::default();
        let surrogate = SurrogateConfig::default();
        Self {
            dataset: Dataset::Mnist,
            data_dir: None,
            images: None,
            labels: None,
            test_images: None,
            test_labels: None,
            mode: TrainMode::DelaysFreeWeights,
            epochs: 100,
            lr: 0.01,
            batch_size: 32,
            seed: 0,
            alpha: surrogate.alpha,
            beta: surrogate.beta,
            train_fraction: 0.8,
            limit: None,
            hidden: 800,
            init: InitScheme::Auto,
            threshold: srm.threshold,
            tau_s: srm.tau_s,
            tau_r: srm.tau_r,
            dt: grid.dt(),
            steps: grid.steps(),
            out: PathBuf::from("runs/default"),
            wallclock: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| CliError::Usage(format!("bad value '{value}' for {key}: {e}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(CliError::Usage(format!("bad value '{value}' for {key}: expected true or false"))),
    }
}

fn optional_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

impl RunConfig {
    pub const KEYS: [&'static str; 24] = [
        "dataset",
        "data_dir",
        "images",
        "labels",
        "test_images",
        "test_labels",
        "mode",
        "epochs",
        "lr",
        "batch_size",
        "seed",
        "alpha",
        "beta",
        "train_fraction",
        "limit",
        "hidden",
        "init",
        "threshold",
        "tau_s",
        "tau_r",
        "dt",
        "steps",
        "out",
        "wallclock",
    ];

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim().replace('-', "_");
        let value = value.trim();
        match key.as_str() {
            "dataset" => self.dataset = value.parse()?,
            "data_dir" => self.data_dir = optional_path(value),
            "images" => self.images = optional_path(value),
            "labels" => self.labels = optional_path(value),
            "test_images" => self.test_images = optional_path(value),
            "test_labels" => self.test_labels = optional_path(value),
            "mode" => self.mode = value.parse()?,
            "epochs" => self.epochs = parse(&key, value)?,
            "lr" => self.lr = parse(&key, value)?,
            "batch_size" => self.batch_size = parse(&key, value)?,
            "seed" => self.seed = parse(&key, value)?,
            "alpha" => self.alpha = parse(&key, value)?,
            "beta" => self.beta = parse(&key, value)?,
            "train_fraction" => self.train_fraction = parse(&key, value)?,
            "limit" => {
                self.limit = match value {
                    "" | "none" => None,
                    v => Some(parse(&key, v)?),
                }
            }
            "hidden" => self.hidden = parse(&key, value)?,
            "init" => self.init = value.parse()?,
            "threshold" => self.threshold = parse(&key, value)?,
            "tau_s" => self.tau_s = parse(&key, value)?,
            "tau_r" => self.tau_r = parse(&key, value)?,
            "dt" => self.dt = parse(&key, value)?,
            "steps" => self.steps = parse(&key, value)?,
            "out" => self.out = PathBuf::from(value),
            "wallclock" => self.wallclock = parse_bool(&key, value)?,
            other => return Err(CliError::Usage(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies every `key = value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("config line {}: expected key = value, got '{raw}'", n + 1)))?;
            self.set(key, value)?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg = Self::default();
        cfg.apply_text(&text)?;
        Ok(cfg)
    }

    pub fn get(&self, key: &str) -> String {
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        match key {
            "dataset" => self.dataset.as_str().into(),
            "data_dir" => path(&self.data_dir),
            "images" => path(&self.images),
            "labels" => path(&self.labels),
            "test_images" => path(&self.test_images),
            "test_labels" => path(&self.test_labels),
            "mode" => self.mode.as_str().into(),
            "epochs" => self.epochs.to_string(),
            "lr" => self.lr.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "seed" => self.seed.to_string(),
            "alpha" => self.alpha.to_string(),
            "beta" => self.beta.to_string(),
            "train_fraction" => self.train_fraction.to_string(),
            "limit" => self.limit.map(|l| l.to_string()).unwrap_or_else(|| "none".into()),
            "hidden" => self.hidden.to_string(),
            "init" => self.init.as_str().into(),
            "threshold" => self.threshold.to_string(),
            "tau_s" => self.tau_s.to_string(),
            "tau_r" => self.tau_r.to_string(),
            "dt" => self.dt.to_string(),
            "steps" => self.steps.to_string(),
            "out" => self.out.display().to_string(),
            "wallclock" => self.wallclock.to_string(),
            _ => String::new(),
        }
    }

    /// The configuration in the file format; `apply_text` reads it back
    /// to an equal value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(CliError::Usage("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(CliError::Usage("batch_size must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(CliError::Usage("hidden must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(CliError::Usage(format!("lr must be positive, got {}", self.lr)));
        }
        self.surrogate().validate()?;
        self.network()?.validate()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        Ok(TimeGrid::new(self.dt, self.steps)?)
    }

    pub fn surrogate(&self) -> SurrogateConfig {
        SurrogateConfig { alpha: self.alpha, beta: self.beta }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec { train_fraction: self.train_fraction, seed: self.seed, limit: self.limit }
    }

    pub fn network(&self) -> Result<NetworkConfig> {
        let grid = self.grid()?;
        let mut net = NetworkConfig::with_sizes(vec![784, self.hidden, 10]);
        net.grid = grid;
        net.d_max = grid.duration();
        net.seed = self.seed;
        net.srm = SrmConfig { threshold: self.threshold, tau_s: self.tau_s, tau_r: self.tau_r };
        if self.init.resolve(self.mode) == InitScheme::FanIn {
            net.init = net.sizes.windows(2)
                .map(|w| LayerInit { weight_mean: 0.0, weight_std: 1.0 / (w[0] as f64).sqrt(), ..LayerInit::HIDDEN })
                .collect();
        }
        Ok(net)
    }

    fn data_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| Path::new("data").join(self.dataset.as_str()))
    }

    pub fn train_files(&self) -> IdxPair {
        let mut pair = IdxPair::in_dir(self.data_dir(), "train");
        if let Some(p) = &self.images {
            pair.images = p.clone();
        }
        if let Some(p) = &self.labels {
            pair.labels = p.clone();
        }
        pair
    }

    pub fn test_files(&self) -> IdxPair {
        let mut pair = IdxPair::in_dir(self.data_dir(), "t10k");
        if let Some(p) = &self.test_images {
            pair.images = p.clone();
        }
        if let Some(p) = &self.test_labels {
            pair.labels = p.clone();
        }
        pair
    }
}

/// Flag form of every configuration key.
#[derive(Args, Clone, Debug, Default)]
pub struct ConfigArgs {
    /// Flat key = value configuration file; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// mnist or fashion-mnist
    #[arg(long)]
    pub dataset: Option<String>,
    /// Directory with the standard IDX file names (default data/<dataset>)
    #[arg(long)]
    pub data_dir: Option<PathBuf>,
    /// Training images IDX file
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Training labels IDX file
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub test_images: Option<PathBuf>,
    #[arg(long)]
    pub test_labels: Option<PathBuf>,
    /// delays-free, delays-ternary or weights-baseline
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<u64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Surrogate scale
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Surrogate sharpness (1/mV)
    #[arg(long)]
    pub beta: Option<f64>,
    #[arg(long)]
    pub train_fraction: Option<f64>,
    /// Number of training-file samples to use, or "none"
    #[arg(long)]
    pub limit: Option<String>,
    #[arg(long)]
    pub hidden: Option<usize>,
    /// auto, shifted or fan-in
    #[arg(long)]
    pub init: Option<String>,
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub tau_s: Option<f64>,
    #[arg(long)]
    pub tau_r: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Output directory for metrics and checkpoints
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// true to record elapsed seconds in the metrics file
    #[arg(long)]
    pub wallclock: Option<String>,
}

impl ConfigArgs {
    /// Flags that were given, as `(key, value)` pairs.
    pub fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key: &'static str, v: Option<String>| {
            if let Some(v) = v {
                out.push((key, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        push("dataset", self.dataset.clone());
        push("data_dir", path(&self.data_dir));
        push("images", path(&self.images));
        push("labels", path(&self.labels));
        push("test_images", path(&self.test_images));
        push("test_labels", path(&self.test_labels));
        push("mode", self.mode.clone());
        push("epochs", self.epochs.map(|v| v.to_string()));
        push("lr", self.lr.map(|v| v.to_string()));
        push("batch_size", self.batch_size.map(|v| v.to_string()));
        push("seed", self.seed.map(|v| v.to_string()));
        push("alpha", self.alpha.map(|v| v.to_string()));
        push("beta", self.beta.map(|v| v.to_string()));
        push("train_fraction", self.train_fraction.map(|v| v.to_string()));
        push("limit", self.limit.clone());
        push("hidden", self.hidden.map(|v| v.to_string()));
        push("init", self.init.clone());
        push("threshold", self.threshold.map(|v| v.to_string()));
        push("tau_s", self.tau_s.map(|v| v.to_string()));
        push("tau_r", self.tau_r.map(|v| v.to_string()));
        push("dt", self.dt.map(|v| v.to_string()));
        push("steps", self.steps.map(|v| v.to_string()));
        push("out", path(&self.out));
        push("wallclock", self.wallclock.clone());
        out
    }

    /// Defaults, then the config file if given, then the flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        self.resolve_onto(RunConfig::default())
    }

    /// As [`resolve`](Self::resolve) with `base` in place of the defaults.
    pub fn resolve_onto(&self, base: RunConfig) -> Result<RunConfig> {
        let mut cfg = base;
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            cfg.apply_text(&text)?;
        }
        for (key, value) in self.overrides() {
            cfg.set(key, &value)?;
        }
        Ok(cfg)
    }
}
