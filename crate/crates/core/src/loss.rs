//! Target trains, the filtered spike-train loss, and first-spike decoding.

use crate::error::{contract, Result, SnnError};
use crate::signal::{convolve_spikes_into, Signal, SpikeRaster, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TargetSpec {
    pub num_classes: usize,
    pub grid: TimeGrid,
}

impl TargetSpec {
    pub fn new(num_classes: usize, grid: TimeGrid) -> Self {
        Self { num_classes, grid }
    }
}

/// The labelled neuron fires at every step, every other neuron stays silent.
pub fn make_target(label: usize, spec: &TargetSpec) -> Result<SpikeRaster> {
    if label >= spec.num_classes {
        return Err(SnnError::Input(format!(
            "label {label} out of range for {} classes",
            spec.num_classes
        )));
    }
    let mut target = SpikeRaster::empty(spec.grid, spec.num_classes);
    for k in 0..spec.grid.steps() {
        target.set(label, k);
    }
    Ok(target)
}

/// Loss value plus the per-neuron error signal `e_j = eps * (s_j - s_hat_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `neurons x steps`, row-major.
    pub error: Vec<f64>,
    grid: TimeGrid,
}

impl LossOutput {
    pub fn error_signal(&self, j: usize) -> Signal {
        let k = self.grid.steps();
        Signal::from_vec_unchecked(self.grid, self.error[j * k..(j + 1) * k].to_vec())
    }
}

/// `E = 1/2 sum_j sum_k e_j[k]^2 dt`, with `e_j` the difference of the
/// `eps`-filtered output and target trains.
pub fn loss_and_error(output: &SpikeRaster, target: &SpikeRaster, eps: &Signal) -> Result<LossOutput> {
    if output.neurons() != target.neurons() || output.grid() != target.grid() {
        return Err(contract(format!(
            "output has {} neurons on {:?}, target {} on {:?}",
            output.neurons(),
            output.grid(),
            target.neurons(),
            target.grid()
        )));
    }
    if eps.grid() != output.grid() {
        return Err(contract("loss kernel lives on a different grid"));
    }
    let grid = output.grid();
    let k_steps = grid.steps();
    let kernel = eps.values();
    let mut error = vec![0.0; output.neurons() * k_steps];
    let mut a = vec![0.0; k_steps];
    let mut a_hat = vec![0.0; k_steps];
    let mut sum_sq = 0.0;
    for j in 0..output.neurons() {
        convolve_spikes_into(kernel, output.row(j), &mut a);
        convolve_spikes_into(kernel, target.row(j), &mut a_hat);
        let ej = &mut error[j * k_steps..(j + 1) * k_steps];
        for k in 0..k_steps {
            ej[k] = a[k] - a_hat[k];
            sum_sq += ej[k] * ej[k];
        }
    }
    Ok(LossOutput { loss: 0.5 * sum_sq * grid.dt(), error, grid })
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Prediction {
    /// `None` when no output neuron spiked.
    pub class: Option<usize>,
    pub first_spikes: Vec<Option<usize>>,
    pub spike_counts: Vec<usize>,
}

/// Earliest first spike wins; ties go to the higher spike count, then to the lower index.
pub fn decode(output: &SpikeRaster) -> Prediction {
    let n = output.neurons();
    let mut first_spikes = Vec::with_capacity(n);
    let mut spike_counts = Vec::with_capacity(n);
    let mut best: Option<(usize, usize, usize)> = None; // (first, count, index)
    for j in 0..n {
        let row = output.row(j);
        let first = row.iter().position(|&c| c > 0);
        let count = row.iter().map(|&c| c as usize).sum();
        first_spikes.push(first);
        spike_counts.push(count);
        if let Some(f) = first {
            let better = match best {
                None => true,
                Some((bf, bc, _)) => f < bf || (f == bf && count > bc),
            };
            if better {
                best = Some((f, count, j));
            }
        }
    }
    Prediction { class: best.map(|b| b.2), first_spikes, spike_counts }
}
