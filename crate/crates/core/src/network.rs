//! Fully connected SRM layers and the cached forward pass.

use std::collections::HashMap;

use rand::SeedableRng;
use rayon::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use crate::delay::DelayMatrix;
use crate::error::{config, contract, Result};
use crate::signal::{convolve_spikes_into, convolve_into, Signal, SpikeRaster, TimeGrid};
use crate::srm::{eval_kernels, simulate_into, KernelTable, SrmConfig};

/// Multiplier applied to the sampled weights before use.
pub const WEIGHT_SCALE: f64 = 10.0;

/// Weight and delay initialisation of one layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LayerInit {
    pub weight_mean: f64,
    /// Standard deviation of the pre-scale weight distribution.
    pub weight_std: f64,
    /// Delays are drawn uniformly from `[0, delay_max)` ms.
    pub delay_max: f64,
}

impl LayerInit {
    pub const HIDDEN: LayerInit = LayerInit { weight_mean: 0.0571, weight_std: 0.5458, delay_max: 1.0 };
    pub const OUTPUT: LayerInit = LayerInit { weight_mean: -0.5244, weight_std: 1.0490, delay_max: 1.0 };
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub sizes: Vec<usize>,
    pub srm: SrmConfig,
    pub grid: TimeGrid,
    pub seed: u64,
    /// One entry per weight layer.
    pub init: Vec<LayerInit>,
    pub weight_scale: f64,
    /// Round pre-scale weights to {-1, 0, 1}.
    pub ternary: bool,
    /// Upper bound for every delay; defaults to the window length.
    pub d_max: f64,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self::with_sizes(vec![784, 800, 10])
    }
}

impl NetworkConfig {
    /// First weight layer uses the hidden-layer init, every later one the output init.
    pub fn with_sizes(sizes: Vec<usize>) -> Self {
        let layers = sizes.len().saturating_sub(1);
        let init = (0..layers)
            .map(|l| if l == 0 { LayerInit::HIDDEN } else { LayerInit::OUTPUT })
            .collect();
        let grid = TimeGrid::default();
        Self {
            sizes,
            srm: SrmConfig::default(),
            grid,
            seed: 0,
            init,
            weight_scale: WEIGHT_SCALE,
            ternary: false,
            d_max: grid.duration(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sizes.len() < 2 {
            return Err(config("a network needs at least an input and an output layer"));
        }
        if self.sizes.contains(&0) {
            return Err(config(format!("layer sizes must be positive: {:?}", self.sizes)));
        }
        if self.init.len() != self.sizes.len() - 1 {
            return Err(config(format!(
                "{} init specs for {} weight layers",
                self.init.len(),
                self.sizes.len() - 1
            )));
        }
        if !(self.d_max >= 0.0) {
            return Err(config(format!("d_max must be non-negative, got {}", self.d_max)));
        }
        self.srm.validate()
    }
}

/// Nearest value in {-1, 0, 1}; halves round away from zero.
pub fn ternarize(w: f64) -> f64 {
    w.round().clamp(-1.0, 1.0)
}

/// Weights and delays of one fully connected block, both `post x pre`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub delays: DelayMatrix,
    pub weights_frozen: bool,
    pub weights_ternary: bool,
}

impl LayerParams {
    pub fn new(weights: Vec<f64>, delays: DelayMatrix) -> Result<Self> {
        if weights.len() != delays.post() * delays.pre() {
            return Err(contract(format!(
                "{} weights for a {}x{} delay block",
                weights.len(),
                delays.post(),
                delays.pre()
            )));
        }
        Ok(Self { weights, delays, weights_frozen: false, weights_ternary: false })
    }

    #[inline]
    pub fn pre(&self) -> usize {
        self.delays.pre()
    }

    #[inline]
    pub fn post(&self) -> usize {
        self.delays.post()
    }

    #[inline]
    pub fn weight(&self, post: usize, pre: usize) -> f64 {
        self.weights[post * self.pre() + pre]
    }

    /// Order-sensitive hash of the exact weight bits.
    pub fn weight_checksum(&self) -> u64 {
        checksum(&self.weights)
    }

    pub fn delay_checksum(&self) -> u64 {
        checksum(self.delays.values())
    }
}

/// FNV-1a over the raw bit patterns.
pub fn checksum(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for v in values {
        for b in v.to_bits().to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    h
}

/// Samples every layer's weights and delays. Deterministic in `cfg.seed`.
pub fn init_network(cfg: &NetworkConfig) -> Result<Vec<LayerParams>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut layers = Vec::with_capacity(cfg.sizes.len() - 1);
    for (l, init) in cfg.init.iter().enumerate() {
        let (pre, post) = (cfg.sizes[l], cfg.sizes[l + 1]);
        let normal = Normal::new(init.weight_mean, init.weight_std)
            .map_err(|e| config(format!("layer {l} weight distribution: {e}")))?;
        let weights: Vec<f64> = (0..pre * post)
            .map(|_| {
                let w = normal.sample(&mut rng);
                let w = if cfg.ternary { ternarize(w) } else { w };
                w * cfg.weight_scale
            })
            .collect();
        let mut delays = DelayMatrix::with_bound(post, pre, cfg.grid, cfg.d_max);
        if init.delay_max > 0.0 {
            let uniform = Uniform::new(0.0, init.delay_max)
                .map_err(|e| config(format!("layer {l} delay distribution: {e}")))?;
            delays.modify(|v| v.iter_mut().for_each(|d| *d = uniform.sample(&mut rng)));
        }
        let mut params = LayerParams::new(weights, delays)?;
        params.weights_ternary = cfg.ternary;
        layers.push(params);
    }
    Ok(layers)
}

/// Everything the backward pass needs from one layer.
#[derive(Clone, Debug)]
pub struct LayerTrace {
    /// Presynaptic spikes feeding this layer.
    pub input: SpikeRaster,
    /// Undelayed PSP `eps * s_i` of every presynaptic neuron, `pre x steps`.
    pub input_psp: Vec<f64>,
    /// Membrane potential, refractory history included, `post x steps`.
    pub membrane: Vec<f64>,
    pub output: SpikeRaster,
}

impl LayerTrace {
    fn steps(&self) -> usize {
        self.input.grid().steps()
    }

    pub fn membrane(&self, j: usize) -> Signal {
        let k = self.steps();
        Signal::from_vec_unchecked(self.input.grid(), self.membrane[j * k..(j + 1) * k].to_vec())
    }

    pub fn psp(&self, i: usize) -> Signal {
        let k = self.steps();
        Signal::from_vec_unchecked(self.input.grid(), self.input_psp[i * k..(i + 1) * k].to_vec())
    }

    /// Delayed PSP of synapse `pre -> post`, `a_ij(t) = (eps * s_i)(t - q_ij dt)`.
    pub fn delayed_psp(&self, params: &LayerParams, post: usize, pre: usize) -> Signal {
        crate::signal::shift_signal(&self.psp(pre), params.delays.step(post, pre))
    }
}

/// Cached intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub layers: Vec<LayerTrace>,
}

impl ForwardTrace {
    pub fn output(&self) -> &SpikeRaster {
        &self.layers.last().expect("trace has layers").output
    }
}

/// A configured network: parameters plus the kernels they run on.
#[derive(Clone, Debug)]
pub struct Network {
    pub config: NetworkConfig,
    pub kernels: KernelTable,
    pub layers: Vec<LayerParams>,
}

impl Network {
    pub fn new(config: NetworkConfig) -> Result<Self> {
        let layers = init_network(&config)?;
        Self::from_layers(config, layers)
    }

    pub fn from_layers(cfg: NetworkConfig, layers: Vec<LayerParams>) -> Result<Self> {
        cfg.validate()?;
        if layers.len() != cfg.sizes.len() - 1 {
            return Err(config(format!("{} parameter layers for layer sizes {:?}", layers.len(), cfg.sizes)));
        }
        for (l, p) in layers.iter().enumerate() {
            if p.pre() != cfg.sizes[l] || p.post() != cfg.sizes[l + 1] {
                return Err(config(format!(
                    "layer {l} is {}x{}, expected {}x{}",
                    p.post(),
                    p.pre(),
                    cfg.sizes[l + 1],
                    cfg.sizes[l]
                )));
            }
            if p.delays.grid() != cfg.grid {
                return Err(config(format!("layer {l} delays live on a different time grid")));
            }
        }
        let kernels = eval_kernels(&cfg.srm, cfg.grid)?;
        Ok(Self { config: cfg, kernels, layers })
    }

    pub fn grid(&self) -> TimeGrid {
        self.config.grid
    }

    pub fn inputs(&self) -> usize {
        self.config.sizes[0]
    }

    pub fn outputs(&self) -> usize {
        *self.config.sizes.last().expect("validated sizes")
    }

    pub fn forward(&self, input: &SpikeRaster) -> Result<ForwardTrace> {
        forward(&self.layers, &self.kernels, &self.config.srm, input)
    }

    /// Forward pass that keeps only the output spikes.
    pub fn infer(&self, input: &SpikeRaster) -> Result<SpikeRaster> {
        let mut trace = self.forward(input)?;
        Ok(trace.layers.pop().expect("trace has layers").output)
    }
}

/// Runs every layer: delay each input per synapse, convolve with `eps`,
/// weight-sum into the drive, then integrate with refractory feedback.
pub fn forward(
    params: &[LayerParams],
    kernels: &KernelTable,
    srm: &SrmConfig,
    input: &SpikeRaster,
) -> Result<ForwardTrace> {
    Ok(forward_batch(params, kernels, srm, &[input])?.pop().expect("one input, one trace"))
}

/// Active inputs of one sample grouped by spike pattern, plus their PSPs.
struct PreparedInput {
    /// Undelayed PSP per presynaptic neuron, `pre x steps`.
    psp: Vec<f64>,
    /// (spike steps, member neurons) per distinct pattern.
    groups: Vec<(Vec<usize>, Vec<usize>)>,
}

fn prepare_input(raster: &SpikeRaster, eps: &[f64]) -> PreparedInput {
    let k_steps = eps.len();
    let pre = raster.neurons();
    let mut psp = vec![0.0; pre * k_steps];
    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    let mut group_of: HashMap<&[u8], usize> = HashMap::new();
    for i in 0..pre {
        let row = raster.row(i);
        if row.iter().any(|&c| c != 0) {
            convolve_spikes_into(eps, row, &mut psp[i * k_steps..(i + 1) * k_steps]);
            let g = *group_of.entry(row).or_insert_with(|| {
                let times = row.iter().enumerate().filter(|(_, &c)| c != 0).map(|(m, _)| m).collect();
                groups.push((times, Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(i);
        }
    }
    PreparedInput { psp, groups }
}

/// [`forward`] over several inputs. Every weight row is read once for the
/// whole batch instead of once per sample; each trace equals the one
/// [`forward`] would produce on its own.
pub fn forward_batch(
    params: &[LayerParams],
    kernels: &KernelTable,
    srm: &SrmConfig,
    inputs: &[&SpikeRaster],
) -> Result<Vec<ForwardTrace>> {
    let first = params.first().ok_or_else(|| config("network has no layers"))?;
    for input in inputs {
        input.grid().ensure_same(&kernels.eps.grid())?;
        if input.neurons() != first.pre() {
            return Err(config(format!(
                "input has {} neurons, first layer expects {}",
                input.neurons(),
                first.pre()
            )));
        }
    }
    let grid = kernels.eps.grid();
    let k_steps = grid.steps();
    let eps = kernels.eps.values();
    let nu = kernels.nu.values();
    let n = inputs.len();

    let mut traces: Vec<Vec<LayerTrace>> = (0..n).map(|_| Vec::with_capacity(params.len())).collect();
    let mut currents: Vec<SpikeRaster> = inputs.iter().map(|r| (*r).clone()).collect();
    for (l, p) in params.iter().enumerate() {
        let (pre, post) = (p.pre(), p.post());
        if let Some(c) = currents.iter().find(|c| c.neurons() != pre) {
            return Err(config(format!("layer {l} expects {pre} inputs, previous layer has {}", c.neurons())));
        }
        let prepared: Vec<PreparedInput> = currents.iter().map(|c| prepare_input(c, eps)).collect();
        // neuron-major scratch: row j holds every sample's trace of neuron j
        let stride = n * k_steps;
        let mut u_rows = vec![0.0; post * stride];
        let mut s_rows = vec![0u8; post * stride];
        let steps = p.delays.steps();
        u_rows
            .par_chunks_mut(stride.max(1))
            .zip(s_rows.par_chunks_mut(stride.max(1)))
            .enumerate()
            .for_each_init(
                || (vec![0.0; k_steps], vec![0.0; k_steps], vec![0.0; k_steps]),
                |(arrivals, by_step, drive), (j, (u_row, s_row))| {
                    let w_row = &p.weights[j * pre..(j + 1) * pre];
                    let q_row = &steps[j * pre..(j + 1) * pre];
                    for (s, prep) in prepared.iter().enumerate() {
                        // weighted delayed spikes, then a single convolution with eps
                        arrivals.fill(0.0);
                        for (times, members) in &prep.groups {
                            by_step.fill(0.0);
                            for &i in members {
                                let q = q_row[i] as usize;
                                if q < k_steps {
                                    by_step[q] += w_row[i];
                                }
                            }
                            for (q, &w) in by_step.iter().enumerate() {
                                if w != 0.0 {
                                    for &m in times {
                                        if m + q < k_steps {
                                            arrivals[m + q] += w;
                                        }
                                    }
                                }
                            }
                        }
                        convolve_into(eps, arrivals, drive);
                        let span = s * k_steps..(s + 1) * k_steps;
                        simulate_into(drive, nu, srm.threshold, &mut s_row[span.clone()], &mut u_row[span]);
                    }
                },
            );
        for (s, prep) in prepared.into_iter().enumerate() {
            let mut membrane = vec![0.0; post * k_steps];
            let mut counts = vec![0u8; post * k_steps];
            for j in 0..post {
                let from = j * stride + s * k_steps..j * stride + (s + 1) * k_steps;
                membrane[j * k_steps..(j + 1) * k_steps].copy_from_slice(&u_rows[from.clone()]);
                counts[j * k_steps..(j + 1) * k_steps].copy_from_slice(&s_rows[from]);
            }
            let output = SpikeRaster::from_counts(grid, post, counts);
            let input = std::mem::replace(&mut currents[s], output.clone());
            traces[s].push(LayerTrace { input, input_psp: prep.psp, membrane, output });
        }
    }
    Ok(traces.into_iter().map(|layers| ForwardTrace { layers }).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::SpikeTrain;

    fn tiny(sizes: Vec<usize>) -> NetworkConfig {
        let mut cfg = NetworkConfig::with_sizes(sizes);
        cfg.seed = 7;
        cfg
    }

    #[test]
    fn ternary_rounding() {
        assert_eq!(ternarize(0.4) * WEIGHT_SCALE, 0.0);
        assert_eq!(ternarize(-1.7) * WEIGHT_SCALE, -10.0);
        assert_eq!(ternarize(0.5), 1.0);
        assert_eq!(ternarize(-0.5), -1.0);
        assert_eq!(ternarize(0.49999), 0.0);
        assert_eq!(ternarize(3.2), 1.0);
    }

    #[test]
    fn init_is_seeded() {
        let a = init_network(&tiny(vec![20, 15, 4])).unwrap();
        let b = init_network(&tiny(vec![20, 15, 4])).unwrap();
        assert_eq!(a, b);
        let mut other = tiny(vec![20, 15, 4]);
        other.seed = 8;
        assert_ne!(a, init_network(&other).unwrap());
        for layer in &a {
            assert!(layer.delays.values().iter().all(|&d| (0.0..1.0).contains(&d)));
            assert!(layer.delays.steps().iter().all(|&q| q == 0));
        }
    }

    #[test]
    fn ternary_init_values() {
        let mut cfg = tiny(vec![30, 20, 5]);
        cfg.ternary = true;
        let layers = init_network(&cfg).unwrap();
        for l in &layers {
            assert!(l.weights_ternary);
            assert!(l.weights.iter().all(|&w| w == 0.0 || w == 10.0 || w == -10.0));
        }
    }

    #[test]
    fn config_validation() {
        assert!(NetworkConfig::with_sizes(vec![5]).validate().is_err());
        assert!(NetworkConfig::with_sizes(vec![5, 0, 2]).validate().is_err());
        let mut cfg = NetworkConfig::with_sizes(vec![5, 3, 2]);
        cfg.init.pop();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn silent_input_stays_silent() {
        let net = Network::new(tiny(vec![12, 8, 3])).unwrap();
        let trace = net.forward(&SpikeRaster::empty(net.grid(), 12)).unwrap();
        for layer in &trace.layers {
            assert_eq!(layer.output.total_spikes(), 0);
        }
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let net = Network::new(tiny(vec![12, 8, 3])).unwrap();
        assert!(net.forward(&SpikeRaster::empty(net.grid(), 11)).is_err());
    }

    #[test]
    fn single_path_latency() {
        // 1 -> 1 -> 1 chain; each hop adds its quantized delay plus one step
        // because eps peaks one step after the arrival.
        let grid = TimeGrid::default();
        let mut cfg = NetworkConfig::with_sizes(vec![1, 1, 1]);
        cfg.init = vec![LayerInit { weight_mean: 0.0, weight_std: 1.0, delay_max: 0.0 }; 2];
        let l1 = LayerParams::new(vec![12.0], DelayMatrix::from_values(1, 1, grid, vec![2.3]).unwrap()).unwrap();
        let l2 = LayerParams::new(vec![15.0], DelayMatrix::from_values(1, 1, grid, vec![1.9]).unwrap()).unwrap();
        let net = Network::from_layers(cfg, vec![l1, l2]).unwrap();
        let input = SpikeRaster::from_trains(grid, &[SpikeTrain::from_steps(grid, &[0])]).unwrap();
        let trace = net.forward(&input).unwrap();

        // scalar hand simulation
        let eps = |t: i64| if t < 0 { 0.0 } else { t as f64 * (1.0 - t as f64).exp() };
        let nu = |t: i64| if t < 1 { 0.0 } else { -20.0 * (1.0 - t as f64).exp() };
        let run = |w: f64, q: i64, inp: &[i64]| -> Vec<i64> {
            let mut out = Vec::new();
            for k in 0..10i64 {
                let u: f64 = inp.iter().map(|&m| w * eps(k - m - q)).sum::<f64>()
                    + out.iter().map(|&m| nu(k - m)).sum::<f64>();
                if u >= 10.0 {
                    out.push(k);
                }
            }
            out
        };
        let hidden = run(12.0, 2, &[0]);
        let out = run(15.0, 1, &hidden);
        assert_eq!(hidden.first(), Some(&3));
        assert_eq!(out.first(), Some(&5));
        let as_steps = |v: &[i64]| v.iter().map(|&k| k as usize).collect::<Vec<_>>();
        assert_eq!(trace.layers[0].output.train(0), SpikeTrain::from_steps(grid, &as_steps(&hidden)));
        assert_eq!(trace.output().train(0), SpikeTrain::from_steps(grid, &as_steps(&out)));
    }

    #[test]
    fn membrane_linear_in_weights_before_first_spike() {
        let mut cfg = tiny(vec![16, 6, 2]);
        cfg.init[0] = LayerInit { weight_mean: 0.0, weight_std: 0.05, delay_max: 4.0 };
        let net = Network::new(cfg.clone()).unwrap();
        let mut doubled = net.clone();
        doubled.layers[0].weights.iter_mut().for_each(|w| *w *= 2.0);
        let grid = net.grid();
        let mut input = SpikeRaster::empty(grid, 16);
        for i in (0..16).step_by(3) {
            input.set(i, i % 4);
        }
        let a = net.forward(&input).unwrap();
        let b = doubled.forward(&input).unwrap();
        for j in 0..6 {
            let ua = a.layers[0].membrane(j);
            let ub = b.layers[0].membrane(j);
            let first = [a.layers[0].output.train(j).first_spike(), b.layers[0].output.train(j).first_spike()]
                .into_iter()
                .flatten()
                .min()
                .unwrap_or(10);
            for k in 0..first {
                assert!((ub[k] - 2.0 * ua[k]).abs() <= 1e-12 * ua[k].abs().max(1.0));
            }
        }
    }

    #[test]
    fn delayed_psp_view() {
        let grid = TimeGrid::default();
        let net = Network::new(tiny(vec![3, 2, 2])).unwrap();
        let mut net = net;
        net.layers[0].delays.set(1, 2, 3.7);
        let mut input = SpikeRaster::empty(grid, 3);
        input.set(2, 1);
        let trace = net.forward(&input).unwrap();
        let a = trace.layers[0].delayed_psp(&net.layers[0], 1, 2);
        assert_eq!(a[4], 0.0);
        assert_eq!(a[5], 1.0);
    }
}
