//! Batch-level training and evaluation built from the per-sample pieces.

use crate::data::{encode_threshold, ImageSample};
use crate::error::Result;
use crate::gradient::{backward_batch_accumulate, GradientSet, SurrogateConfig};
use crate::loss::{decode, loss_and_error, make_target, TargetSpec};
use crate::network::{forward_batch, ForwardTrace, Network};
use crate::signal::SpikeRaster;
use crate::optim::{step_network, AdamState, TrainMode};

/// Samples per forward batch during evaluation.
const EVAL_CHUNK: usize = 64;

/// Running sums for loss and accuracy.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Tally {
    pub samples: usize,
    pub correct: usize,
    pub silent: usize,
    pub loss_sum: f64,
}

impl Tally {
    pub fn merge(&mut self, other: &Tally) {
        self.samples += other.samples;
        self.correct += other.correct;
        self.silent += other.silent;
        self.loss_sum += other.loss_sum;
    }

    pub fn accuracy(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.correct as f64 / self.samples as f64
        }
    }

    pub fn mean_loss(&self) -> f64 {
        if self.samples == 0 {
            0.0
        } else {
            self.loss_sum / self.samples as f64
        }
    }
}

/// Forward passes for `samples` plus their tally and output error signals.
fn score_chunk(net: &Network, samples: &[&ImageSample], spec: &TargetSpec) -> Result<(Tally, Vec<ForwardTrace>, Vec<Vec<f64>>)> {
    let inputs: Vec<SpikeRaster> = samples.iter().map(|s| encode_threshold(s, net.grid())).collect();
    let refs: Vec<&SpikeRaster> = inputs.iter().collect();
    let traces = forward_batch(&net.layers, &net.kernels, &net.config.srm, &refs)?;
    let mut tally = Tally::default();
    let mut errors = Vec::with_capacity(samples.len());
    for (sample, trace) in samples.iter().zip(&traces) {
        let target = make_target(sample.label as usize, spec)?;
        let out = loss_and_error(trace.output(), &target, &net.kernels.eps)?;
        let pred = decode(trace.output());
        tally.merge(&Tally {
            samples: 1,
            correct: usize::from(pred.class == Some(sample.label as usize)),
            silent: usize::from(pred.class.is_none()),
            loss_sum: out.loss,
        });
        errors.push(out.error);
    }
    Ok((tally, traces, errors))
}

/// Reusable gradient accumulator, so that a training loop does not
/// allocate a parameter-sized buffer on every batch.
#[derive(Debug, Default)]
pub struct GradientBuffers {
    grads: Option<GradientSet>,
}

impl GradientBuffers {
    pub fn new() -> Self {
        Self::default()
    }

    fn prepare(&mut self, net: &Network) -> &mut GradientSet {
        let fits = |g: &GradientSet| {
            g.layers.len() == net.layers.len()
                && g.layers.iter().zip(&net.layers).all(|(a, p)| {
                    a.delays.len() == p.weights.len()
                        && a.weights.len() == if p.weights_frozen { 0 } else { p.weights.len() }
                })
        };
        match &mut self.grads {
            Some(g) if fits(g) => g.fill_zero(),
            slot => *slot = Some(GradientSet::zeros_like(&net.layers)),
        }
        self.grads.as_mut().expect("just filled")
    }

    /// Gradient left by the last [`batch_gradients_into`] call.
    pub fn result(&self) -> Option<&GradientSet> {
        self.grads.as_ref()
    }
}

/// Mean gradient over a batch plus the batch's loss/accuracy tally, both
/// measured before the update.
pub fn batch_gradients(
    net: &Network,
    batch: &[&ImageSample],
    surrogate: &SurrogateConfig,
) -> Result<(GradientSet, Tally)> {
    let mut buffers = GradientBuffers::new();
    let tally = batch_gradients_into(net, batch, surrogate, &mut buffers)?;
    Ok((buffers.grads.take().expect("prepared"), tally))
}

/// As [`batch_gradients`], leaving the result in `buffers`. Work is split
/// across postsynaptic neurons, and each accumulator sees the samples in
/// batch order, so the result does not depend on the thread count.
pub fn batch_gradients_into(
    net: &Network,
    batch: &[&ImageSample],
    surrogate: &SurrogateConfig,
    buffers: &mut GradientBuffers,
) -> Result<Tally> {
    let spec = TargetSpec::new(net.outputs(), net.grid());
    let scale = 1.0 / batch.len().max(1) as f64;
    let grads = buffers.prepare(net);
    let (tally, traces, errors) = score_chunk(net, batch, &spec)?;
    let traces: Vec<&ForwardTrace> = traces.iter().collect();
    let errors: Vec<&[f64]> = errors.iter().map(Vec::as_slice).collect();
    backward_batch_accumulate(&traces, &net.layers, &net.kernels, &net.config.srm, surrogate, &errors, scale, grads)?;
    Ok(tally)
}

/// Forward/backward over one batch followed by an Adam step.
pub fn train_batch(
    net: &mut Network,
    adam: &mut AdamState,
    batch: &[&ImageSample],
    mode: TrainMode,
    surrogate: &SurrogateConfig,
    buffers: &mut GradientBuffers,
) -> Result<Tally> {
    let tally = batch_gradients_into(net, batch, surrogate, buffers)?;
    let grads = buffers.result().expect("prepared");
    step_network(adam, &mut net.layers, grads, mode)?;
    Ok(tally)
}

/// Loss, accuracy and silent-output count over `samples`.
pub fn evaluate(net: &Network, samples: &[&ImageSample]) -> Result<Tally> {
    let spec = TargetSpec::new(net.outputs(), net.grid());
    let mut total = Tally::default();
    for chunk in samples.chunks(EVAL_CHUNK) {
        total.merge(&score_chunk(net, chunk, &spec)?.0);
    }
    Ok(total)
}

/// Network whose parameters follow `mode`: ternary weights for the ternary
/// mode, frozen weights for the delay-only modes.
pub fn network_for_mode(mut config: crate::network::NetworkConfig, mode: TrainMode) -> Result<Network> {
    config.ternary = mode.ternary();
    let mut net = Network::new(config)?;
    for layer in &mut net.layers {
        layer.weights_frozen = !mode.trains_weights();
    }
    Ok(net)
}
