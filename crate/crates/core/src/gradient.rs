//! Surrogate-gradient backward pass.
//!
//! The spike nonlinearity is replaced by `rho(u) = alpha * beta * exp(-beta |u - theta|)`
//! when differentiating. Everything else on the path from a synapse to the
//! loss is linear: delay shift, `eps` convolution, weighting. The refractory
//! loop `nu * s` is left out of the backward graph.
//!
//! For the delay of a synapse the PSP moves in time, so
//! `dE/dd_ij = -sum_k w_ij * da_ij/dt[k] * delta_j[k] * dt`, with the time
//! derivative taken by central differences on the quantized, delayed trace.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::delay::derivative_into;
use crate::error::{config, contract, Result};
use crate::network::{ForwardTrace, LayerParams, LayerTrace, Network};
use crate::signal::{correlate_into, Signal};
use crate::srm::{KernelTable, SrmConfig};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SurrogateConfig {
    /// Scale `alpha`.
    pub alpha: f64,
    /// Sharpness `beta` in 1/mV.
    pub beta: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 1.0 }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite() && self.beta > 0.0 && self.beta.is_finite()) {
            return Err(config(format!(
                "surrogate alpha and beta must be positive, got {} and {}",
                self.alpha, self.beta
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn rho(&self, u: f64, threshold: f64) -> f64 {
        self.alpha * self.beta * (-self.beta * (u - threshold).abs()).exp()
    }
}

/// Pseudo-derivative of the spike function along a membrane trace.
pub fn spike_derivative(u: &Signal, cfg: &SurrogateConfig, threshold: f64) -> Signal {
    Signal::from_fn(u.grid(), |k| cfg.rho(u[k], threshold))
}

/// Weight and delay gradients of one layer, laid out like [`LayerParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub delays: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradients>,
}

impl GradientSet {
    /// Zeroed gradients shaped like `params`. Layers with frozen weights get
    /// an empty weight vector.
    pub fn zeros_like(params: &[LayerParams]) -> Self {
        Self {
            layers: params
                .iter()
                .map(|p| LayerGradients {
                    weights: if p.weights_frozen { Vec::new() } else { vec![0.0; p.weights.len()] },
                    delays: vec![0.0; p.weights.len()],
                })
                .collect(),
        }
    }

    pub fn fill_zero(&mut self) {
        for l in &mut self.layers {
            l.weights.fill(0.0);
            l.delays.fill(0.0);
        }
    }

    pub fn add_assign(&mut self, other: &GradientSet) {
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weights.iter_mut().zip(&b.weights).for_each(|(x, y)| *x += y);
            a.delays.iter_mut().zip(&b.delays).for_each(|(x, y)| *x += y);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|x| *x *= factor);
            l.delays.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.delays).all(|v| v.is_finite()))
    }
}

/// Weighted, delayed, `eps`-filtered drive of a layer for real-valued inputs
/// `x` (`pre x steps`). This is the linear part of the forward pass.
pub fn synaptic_drive(params: &LayerParams, eps: &[f64], x: &[f64]) -> Vec<f64> {
    let k_steps = eps.len();
    let (pre, post) = (params.pre(), params.post());
    let steps = params.delays.steps();
    let mut out = vec![0.0; post * k_steps];
    let mut arrivals = vec![0.0; k_steps];
    for j in 0..post {
        arrivals.fill(0.0);
        for i in 0..pre {
            let q = steps[j * pre + i] as usize;
            let w = params.weights[j * pre + i];
            let xi = &x[i * k_steps..(i + 1) * k_steps];
            for m in 0..k_steps.saturating_sub(q) {
                arrivals[m + q] += w * xi[m];
            }
        }
        crate::signal::convolve_into(eps, &arrivals, &mut out[j * k_steps..(j + 1) * k_steps]);
    }
    out
}

/// Adjoint of [`synaptic_drive`]: maps a per-postsynaptic signal back onto
/// the presynaptic neurons, `e_i[m] = sum_j w_ij (eps correlated with y_j)[m + q_ij]`.
pub fn synaptic_adjoint(params: &LayerParams, eps: &[f64], y: &[f64]) -> Vec<f64> {
    let k_steps = eps.len();
    let (pre, post) = (params.pre(), params.post());
    let steps = params.delays.steps();
    let mut out = vec![0.0; pre * k_steps];
    let mut corr = vec![0.0; k_steps];
    for j in 0..post {
        let yj = &y[j * k_steps..(j + 1) * k_steps];
        if yj.iter().all(|&v| v == 0.0) {
            continue;
        }
        correlate_into(eps, yj, &mut corr);
        for i in 0..pre {
            let q = steps[j * pre + i] as usize;
            if q >= k_steps {
                continue;
            }
            let w = params.weights[j * pre + i];
            let ei = &mut out[i * k_steps..(i + 1) * k_steps];
            for m in 0..k_steps - q {
                ei[m] += w * corr[m + q];
            }
        }
    }
    out
}

/// Backward pass for one sample; `error` is the output error signal
/// `e = eps * (s - s_hat)`, one row of `steps` samples per output neuron.
pub fn backward(
    trace: &ForwardTrace,
    params: &[LayerParams],
    kernels: &KernelTable,
    srm: &SrmConfig,
    surrogate: &SurrogateConfig,
    error: &[f64],
) -> Result<GradientSet> {
    let mut grads = GradientSet::zeros_like(params);
    backward_accumulate(trace, params, kernels, srm, surrogate, error, 1.0, &mut grads)?;
    Ok(grads)
}

/// As [`backward`], adding `scale` times the sample gradient into `grads`.
#[allow(clippy::too_many_arguments)]
pub fn backward_accumulate(
    trace: &ForwardTrace,
    params: &[LayerParams],
    kernels: &KernelTable,
    srm: &SrmConfig,
    surrogate: &SurrogateConfig,
    error: &[f64],
    scale: f64,
    grads: &mut GradientSet,
) -> Result<()> {
    backward_batch_accumulate(&[trace], params, kernels, srm, surrogate, &[error], scale, grads)
}

/// Adds `scale` times the summed gradient of several samples into `grads`.
/// Samples are processed together so that each parameter row is visited
/// once per batch; the result matches per-sample accumulation.
#[allow(clippy::too_many_arguments)]
pub fn backward_batch_accumulate(
    traces: &[&ForwardTrace],
    params: &[LayerParams],
    kernels: &KernelTable,
    srm: &SrmConfig,
    surrogate: &SurrogateConfig,
    errors: &[&[f64]],
    scale: f64,
    grads: &mut GradientSet,
) -> Result<()> {
    if traces.len() != errors.len() {
        return Err(contract(format!("{} traces but {} error signals", traces.len(), errors.len())));
    }
    if grads.layers.len() != params.len() {
        return Err(contract(format!("{} gradient layers for {} parameter layers", grads.layers.len(), params.len())));
    }
    let eps = kernels.eps.values();
    let k_steps = eps.len();
    let dt = kernels.eps.grid().dt();
    let last = params.last().ok_or_else(|| contract("no layers"))?;
    for (trace, error) in traces.iter().zip(errors) {
        if trace.layers.len() != params.len() {
            return Err(contract(format!(
                "trace has {} layers, params {}",
                trace.layers.len(),
                params.len()
            )));
        }
        if error.len() != last.post() * k_steps {
            return Err(contract(format!(
                "error signal has {} samples, expected {}",
                error.len(),
                last.post() * k_steps
            )));
        }
        for (l, (p, t)) in params.iter().zip(&trace.layers).enumerate() {
            if t.input.neurons() != p.pre() || t.membrane.len() != p.post() * k_steps {
                return Err(contract(format!("trace layer {l} does not match the parameters")));
            }
        }
    }

    // output credit: delta_j = rho(u_j) * (eps correlated with e_j)
    let mut corr = vec![0.0; k_steps];
    let mut deltas: Vec<Vec<f64>> = traces
        .iter()
        .zip(errors)
        .map(|(trace, error)| {
            let membrane = &trace.layers.last().expect("checked").membrane;
            let mut delta = vec![0.0; error.len()];
            for j in 0..last.post() {
                correlate_into(eps, &error[j * k_steps..(j + 1) * k_steps], &mut corr);
                let row = j * k_steps..(j + 1) * k_steps;
                for ((d, &u), &c) in delta[row.clone()].iter_mut().zip(&membrane[row]).zip(&corr) {
                    *d = surrogate.rho(u, srm.threshold) * c;
                }
            }
            delta
        })
        .collect();

    for l in (0..params.len()).rev() {
        let p = &params[l];
        let layer_traces: Vec<&LayerTrace> = traces.iter().map(|t| &t.layers[l]).collect();
        layer_gradients(p, &layer_traces, &deltas, k_steps, dt, scale, &mut grads.layers[l]);
        if l > 0 {
            for (trace, delta) in traces.iter().zip(deltas.iter_mut()) {
                let e_prev = synaptic_adjoint(p, eps, delta);
                let u_prev = &trace.layers[l - 1].membrane;
                *delta = e_prev
                    .iter()
                    .zip(u_prev)
                    .map(|(e, &u)| if *e == 0.0 { 0.0 } else { e * surrogate.rho(u, srm.threshold) })
                    .collect();
            }
        }
    }
    Ok(())
}

/// Shifted PSPs and their time derivatives for every possible delay step.
struct ShiftTable {
    shifted: Vec<f64>,
    derivs: Vec<f64>,
}

impl ShiftTable {
    fn new(psp: &[f64], dt: f64) -> Self {
        let k = psp.len();
        let mut shifted = vec![0.0; k * k];
        let mut derivs = vec![0.0; k * k];
        for q in 0..k {
            let s = &mut shifted[q * k..(q + 1) * k];
            s[q..].copy_from_slice(&psp[..k - q]);
            derivative_into(&shifted[q * k..(q + 1) * k], dt, &mut derivs[q * k..(q + 1) * k]);
        }
        Self { shifted, derivs }
    }

    #[inline]
    fn dots(&self, q: usize, delta: &[f64], dt: f64) -> (f64, f64) {
        let k = delta.len();
        let s = &self.shifted[q * k..(q + 1) * k];
        let d = &self.derivs[q * k..(q + 1) * k];
        let mut gw = 0.0;
        let mut gd = 0.0;
        for n in 0..k {
            gw += s[n] * delta[n];
            gd += d[n] * delta[n];
        }
        (gw * dt, gd * dt)
    }
}

/// Presynaptic neurons of one sample that share a spike train, and
/// therefore a PSP table.
struct PspGroup {
    members: Vec<usize>,
    table: ShiftTable,
    /// Precompute the dot products for every delay step once per
    /// postsynaptic neuron instead of once per synapse.
    tabulate: bool,
}

fn psp_groups(t: &LayerTrace, k_steps: usize, dt: f64) -> Vec<PspGroup> {
    let mut index: HashMap<&[u8], usize> = HashMap::new();
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for i in 0..t.input.neurons() {
        let row = t.input.row(i);
        if row.iter().any(|&c| c != 0) {
            let g = *index.entry(row).or_insert_with(|| {
                groups.push((i, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(i);
        }
    }
    groups
        .into_iter()
        .map(|(first, members)| PspGroup {
            table: ShiftTable::new(&t.input_psp[first * k_steps..(first + 1) * k_steps], dt),
            tabulate: members.len() > k_steps,
            members,
        })
        .collect()
}

fn layer_gradients(
    p: &LayerParams,
    traces: &[&LayerTrace],
    deltas: &[Vec<f64>],
    k_steps: usize,
    dt: f64,
    scale: f64,
    out: &mut LayerGradients,
) {
    let (pre, post) = (p.pre(), p.post());
    let steps = p.delays.steps();
    let want_weights = !p.weights_frozen && out.weights.len() == p.weights.len();
    let groups: Vec<Vec<PspGroup>> = traces.iter().map(|t| psp_groups(t, k_steps, dt)).collect();

    // rows are independent, and within a row each synapse sees the samples
    // in order, so the sums do not depend on how rows are scheduled
    let gw_rows: Vec<Option<&mut [f64]>> = if want_weights {
        out.weights.chunks_mut(pre).map(Some).collect()
    } else {
        (0..post).map(|_| None).collect()
    };
    out.delays
        .par_chunks_mut(pre)
        .zip(gw_rows.into_par_iter())
        .enumerate()
        .for_each_init(
            || (vec![0.0; k_steps], vec![0.0; k_steps]),
            |(gw_q, gd_q), (j, (gd_row, mut gw_row))| {
                let w_row = &p.weights[j * pre..(j + 1) * pre];
                let q_row = &steps[j * pre..(j + 1) * pre];
                for (sample_groups, delta) in groups.iter().zip(deltas) {
                    let dj = &delta[j * k_steps..(j + 1) * k_steps];
                    if dj.iter().all(|&v| v == 0.0) {
                        continue;
                    }
                    for g in sample_groups {
                        if g.tabulate {
                            for q in 0..k_steps {
                                let (a, b) = g.table.dots(q, dj, dt);
                                gw_q[q] = a;
                                gd_q[q] = b;
                            }
                        }
                        for &i in &g.members {
                            let q = q_row[i] as usize;
                            if q >= k_steps {
                                continue;
                            }
                            let (gw, gd) = if g.tabulate { (gw_q[q], gd_q[q]) } else { g.table.dots(q, dj, dt) };
                            if let Some(gw_row) = gw_row.as_deref_mut() {
                                gw_row[i] += scale * gw;
                            }
                            gd_row[i] += scale * -(w_row[i] * gd);
                        }
                    }
                }
            },
        );
}

impl Network {
    pub fn backward(&self, trace: &ForwardTrace, surrogate: &SurrogateConfig, error: &[f64]) -> Result<GradientSet> {
        backward(trace, &self.layers, &self.kernels, &self.config.srm, surrogate, error)
    }
}
