//! Adam with bias correction, plus the per-mode parameter constraints.

use std::fmt;
use std::str::FromStr;

use crate::error::{contract, Result, SnnError};
use crate::gradient::GradientSet;
use crate::network::{LayerParams, WEIGHT_SCALE};

/// Which parameters a run trains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TrainMode {
    /// Delays only, weights fixed at their real-valued random init.
    DelaysFreeWeights,
    /// Delays only, weights fixed at ternary {-s, 0, s} values.
    DelaysTernaryWeights,
    /// Weights only; delays stay at their init.
    WeightsBaseline,
}

impl TrainMode {
    pub const ALL: [TrainMode; 3] = [
        TrainMode::DelaysFreeWeights,
        TrainMode::DelaysTernaryWeights,
        TrainMode::WeightsBaseline,
    ];

    pub fn trains_weights(self) -> bool {
        matches!(self, TrainMode::WeightsBaseline)
    }

    pub fn trains_delays(self) -> bool {
        !self.trains_weights()
    }

    pub fn ternary(self) -> bool {
        matches!(self, TrainMode::DelaysTernaryWeights)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            TrainMode::DelaysFreeWeights => "delays-free",
            TrainMode::DelaysTernaryWeights => "delays-ternary",
            TrainMode::WeightsBaseline => "weights-baseline",
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TrainMode {
    type Err = SnnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "delays-free" | "delays-only-free-weights" | "delays" => Ok(TrainMode::DelaysFreeWeights),
            "delays-ternary" | "delays-only-ternary-weights" | "ternary" => Ok(TrainMode::DelaysTernaryWeights),
            "weights-baseline" | "weights" | "baseline" => Ok(TrainMode::WeightsBaseline),
            other => Err(SnnError::Config(format!(
                "unknown training mode '{other}' (expected delays-free, delays-ternary or weights-baseline)"
            ))),
        }
    }
}

/// First and second moment estimates of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed steps.
    pub t: u64,
    /// One slot per parameter tensor; allocated on first update.
    pub slots: Vec<Option<Moments>>,
}

impl AdamState {
    pub fn new(lr: f64, num_slots: usize) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, slots: vec![None; num_slots] }
    }

    /// Two slots (weights, delays) per layer.
    pub fn for_layers(lr: f64, layers: &[LayerParams]) -> Self {
        Self::new(lr, 2 * layers.len())
    }

    fn update_slot(&mut self, slot: usize, params: &mut [f64], grads: &[f64], lr_scale: f64) {
        let n = params.len();
        let moments = self.slots[slot].get_or_insert_with(|| Moments { m: vec![0.0; n], v: vec![0.0; n] });
        let t = self.t as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let lr = self.lr * lr_scale;
        for ((p, &g), (m, v)) in params.iter_mut().zip(grads).zip(moments.m.iter_mut().zip(moments.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// One tensor handed to [`adam_step`].
pub struct ParamGroup<'a> {
    pub slot: usize,
    pub params: &'a mut [f64],
    pub grads: &'a [f64],
    /// Multiplies the base learning rate for this tensor.
    pub lr_scale: f64,
}

/// One Adam step over the given tensors. Nothing is modified if any
/// gradient is non-finite or any shape disagrees.
pub fn adam_step(state: &mut AdamState, groups: &mut [ParamGroup<'_>]) -> Result<()> {
    for g in groups.iter() {
        if g.slot >= state.slots.len() {
            return Err(contract(format!("no optimizer slot {}", g.slot)));
        }
        if g.params.len() != g.grads.len() {
            return Err(contract(format!(
                "slot {}: {} parameters but {} gradients",
                g.slot,
                g.params.len(),
                g.grads.len()
            )));
        }
        if let Some(Some(m)) = state.slots.get(g.slot) {
            if m.m.len() != g.params.len() {
                return Err(contract(format!("slot {} changed shape", g.slot)));
            }
        }
        if let Some(idx) = g.grads.iter().position(|v| !v.is_finite()) {
            return Err(SnnError::Numeric(format!("non-finite gradient in slot {} at index {idx}", g.slot)));
        }
    }
    state.t += 1;
    for g in groups.iter_mut() {
        state.update_slot(g.slot, g.params, g.grads, g.lr_scale);
    }
    Ok(())
}

/// Applies one optimizer step to the trainable parameters of `mode`, then
/// re-imposes the constraints.
///
/// Weights are stored post-scale, so their step uses `lr * WEIGHT_SCALE`,
/// which is the same as stepping the pre-scale value with `lr`.
pub fn step_network(
    state: &mut AdamState,
    layers: &mut [LayerParams],
    grads: &GradientSet,
    mode: TrainMode,
) -> Result<()> {
    if grads.layers.len() != layers.len() || state.slots.len() != 2 * layers.len() {
        return Err(contract("optimizer, gradients and layers disagree on the layer count"));
    }
    if !grads.is_finite() {
        return Err(SnnError::Numeric("non-finite gradient".into()));
    }
    let mut groups = Vec::new();
    for (l, (layer, g)) in layers.iter_mut().zip(&grads.layers).enumerate() {
        if mode.trains_weights() && !layer.weights_frozen {
            groups.push(ParamGroup {
                slot: 2 * l,
                params: &mut layer.weights,
                grads: &g.weights,
                lr_scale: WEIGHT_SCALE,
            });
        }
        if mode.trains_delays() {
            groups.push(ParamGroup {
                slot: 2 * l + 1,
                params: layer.delays.values_mut_unsynced(),
                grads: &g.delays,
                lr_scale: 1.0,
            });
        }
    }
    let stepped = adam_step(state, &mut groups);
    drop(groups);
    // clamp and requantize; a rejected step changed nothing, so this is harmless
    if mode.trains_delays() {
        for layer in layers.iter_mut() {
            layer.delays.resync();
        }
    }
    stepped?;
    constrain(layers, mode, None);
    Ok(())
}

/// Clamps delays into `[0, d_max]` (the current bound when `None`) and keeps
/// ternary weights on the {-s, 0, s} lattice.
pub fn constrain(layers: &mut [LayerParams], mode: TrainMode, d_max: Option<f64>) {
    for layer in layers.iter_mut() {
        if let Some(b) = d_max {
            layer.delays.set_bound(b);
        }
        if mode.ternary() || layer.weights_ternary {
            for w in layer.weights.iter_mut() {
                *w = crate::network::ternarize(*w / WEIGHT_SCALE) * WEIGHT_SCALE;
            }
        }
    }
}
