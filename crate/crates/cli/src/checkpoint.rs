//! Binary checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic      8 bytes  "DSNNCKPT"
//! version    u32
//! config     u64 length + UTF-8 text in the config-file format
//! epoch      u64      epochs completed
//! best_acc   f64      best validation accuracy so far (NaN before the first)
//! best_epoch u64      epoch index of best_acc, u64::MAX if none
//! layers     u32 count, then per layer:
//!              post u64, pre u64, weights_frozen u8, weights_ternary u8,
//!              d_max f64, weights (u64 n + n f64), delays (u64 n + n f64)
//! adam       lr f64, beta1 f64, beta2 f64, eps f64, t u64,
//!            u32 slot count, then per slot: u8 present, and if present
//!            m (u64 n + n f64) and v (u64 n + n f64)
//! ```
//!
//! The shuffling RNG is not stored: its state is a function of the seed in
//! the config and the epoch counter.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};
use delay_snn_core::delay::DelayMatrix;
use delay_snn_core::optim::Moments;
use delay_snn_core::{AdamState, LayerParams, Network};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"DSNNCKPT";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: RunConfig,
    pub epoch: u64,
    pub best_val_acc: Option<(u64, f64)>,
    pub layers: Vec<LayerParams>,
    pub adam: AdamState,
}

fn write_array(w: &mut impl Write, values: &[f64]) -> std::io::Result<()> {
    w.write_u64::<LE>(values.len() as u64)?;
    for &v in values {
        w.write_f64::<LE>(v)?;
    }
    Ok(())
}

fn read_array(r: &mut impl Read, limit: usize) -> std::io::Result<Vec<f64>> {
    let n = r.read_u64::<LE>()? as usize;
    if n > limit {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, format!("array of {n} values exceeds {limit}")));
    }
    let mut v = vec![0.0; n];
    r.read_f64_into::<LE>(&mut v)?;
    Ok(v)
}

impl Checkpoint {
    pub fn capture(config: &RunConfig, epoch: u64, best_val_acc: Option<(u64, f64)>, net: &Network, adam: &AdamState) -> Self {
        Self { config: config.clone(), epoch, best_val_acc, layers: net.layers.clone(), adam: adam.clone() }
    }

    fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LE>(VERSION)?;
        let text = self.config.to_text();
        w.write_u64::<LE>(text.len() as u64)?;
        w.write_all(text.as_bytes())?;
        w.write_u64::<LE>(self.epoch)?;
        let (best_epoch, best_acc) = self.best_val_acc.unwrap_or((u64::MAX, f64::NAN));
        w.write_f64::<LE>(best_acc)?;
        w.write_u64::<LE>(best_epoch)?;
        w.write_u32::<LE>(self.layers.len() as u32)?;
        for layer in &self.layers {
            w.write_u64::<LE>(layer.post() as u64)?;
            w.write_u64::<LE>(layer.pre() as u64)?;
            w.write_u8(layer.weights_frozen as u8)?;
            w.write_u8(layer.weights_ternary as u8)?;
            w.write_f64::<LE>(layer.delays.d_max())?;
            write_array(w, &layer.weights)?;
            write_array(w, layer.delays.values())?;
        }
        let a = &self.adam;
        for v in [a.lr, a.beta1, a.beta2, a.eps] {
            w.write_f64::<LE>(v)?;
        }
        w.write_u64::<LE>(a.t)?;
        w.write_u32::<LE>(a.slots.len() as u32)?;
        for slot in &a.slots {
            match slot {
                None => w.write_u8(0)?,
                Some(m) => {
                    w.write_u8(1)?;
                    write_array(w, &m.m)?;
                    write_array(w, &m.v)?;
                }
            }
        }
        Ok(())
    }

    /// Writes to a sibling temporary file and renames it into place, so an
    /// interrupted save never leaves a truncated checkpoint behind.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        let file = File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
        let mut w = BufWriter::new(file);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| CliError::io(&tmp, e))?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| CliError::io(path, e))?;
        let len = file.metadata().map_err(|e| CliError::io(path, e))?.len() as usize;
        let mut r = BufReader::new(file);
        let bad = |reason: String| CliError::Checkpoint { path: path.to_path_buf(), reason };
        let io = |e: std::io::Error| bad(e.to_string());

        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("not a checkpoint file (bad magic)".into()));
        }
        let version = r.read_u32::<LE>().map_err(io)?;
        if version != VERSION {
            return Err(CliError::Version { path: path.to_path_buf(), found: version, expected: VERSION });
        }
        // no array can hold more values than the file has bytes
        let limit = len / 8;
        let text_len = r.read_u64::<LE>().map_err(io)? as usize;
        if text_len > len {
            return Err(bad(format!("config block of {text_len} bytes in a {len}-byte file")));
        }
        let mut text = vec![0u8; text_len];
        r.read_exact(&mut text).map_err(io)?;
        let text = String::from_utf8(text).map_err(|e| bad(format!("config block: {e}")))?;
        let mut config = RunConfig::default();
        config.apply_text(&text)?;

        let epoch = r.read_u64::<LE>().map_err(io)?;
        let best_acc = r.read_f64::<LE>().map_err(io)?;
        let best_epoch = r.read_u64::<LE>().map_err(io)?;
        let best_val_acc = (best_epoch != u64::MAX).then_some((best_epoch, best_acc));

        let grid = config.grid()?;
        let n_layers = r.read_u32::<LE>().map_err(io)? as usize;
        let mut layers = Vec::with_capacity(n_layers.min(16));
        for l in 0..n_layers {
            let post = r.read_u64::<LE>().map_err(io)? as usize;
            let pre = r.read_u64::<LE>().map_err(io)? as usize;
            let frozen = r.read_u8().map_err(io)? != 0;
            let ternary = r.read_u8().map_err(io)? != 0;
            let d_max = r.read_f64::<LE>().map_err(io)?;
            let weights = read_array(&mut r, limit).map_err(io)?;
            let values = read_array(&mut r, limit).map_err(io)?;
            if weights.len() != post.saturating_mul(pre) {
                return Err(bad(format!("layer {l}: {} weights for {post}x{pre}", weights.len())));
            }
            let mut delays = DelayMatrix::from_values(post, pre, grid, values)?;
            delays.set_bound(d_max);
            let mut layer = LayerParams::new(weights, delays)?;
            layer.weights_frozen = frozen;
            layer.weights_ternary = ternary;
            layers.push(layer);
        }

        let lr = r.read_f64::<LE>().map_err(io)?;
        let beta1 = r.read_f64::<LE>().map_err(io)?;
        let beta2 = r.read_f64::<LE>().map_err(io)?;
        let eps = r.read_f64::<LE>().map_err(io)?;
        let t = r.read_u64::<LE>().map_err(io)?;
        let n_slots = r.read_u32::<LE>().map_err(io)? as usize;
        let mut slots = Vec::with_capacity(n_slots.min(64));
        for _ in 0..n_slots {
            slots.push(match r.read_u8().map_err(io)? {
                0 => None,
                _ => Some(Moments { m: read_array(&mut r, limit).map_err(io)?, v: read_array(&mut r, limit).map_err(io)? }),
            });
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest).map_err(io)? != 0 {
            return Err(bad("trailing bytes after the optimizer state".into()));
        }
        let adam = AdamState { lr, beta1, beta2, eps, t, slots };
        Ok(Self { config, epoch, best_val_acc, layers, adam })
    }

    /// Rebuilds the network described by this checkpoint.
    pub fn network(&self) -> Result<Network> {
        Ok(Network::from_layers(self.config.network()?, self.layers.clone())?)
    }
}
