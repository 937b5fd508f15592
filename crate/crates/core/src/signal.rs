//! Time-grid arithmetic shared by every layer of the simulator.
//!
//! All signals are dense arrays over a fixed window of `steps` samples spaced
//! `dt` milliseconds apart. Spikes that would land past the window are dropped.

use crate::error::{config, Result, SnnError};

/// Discretisation of the simulation window.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    dt: f64,
    steps: usize,
}

impl TimeGrid {
    pub fn new(dt: f64, steps: usize) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(config(format!("time step must be positive, got {dt}")));
        }
        if steps == 0 {
            return Err(config("time grid needs at least one step"));
        }
        Ok(Self { dt, steps })
    }

    /// Step length in milliseconds.
    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Window length `T = steps * dt`.
    #[inline]
    pub fn duration(&self) -> f64 {
        self.dt * self.steps as f64
    }

    /// Time of step `k` in milliseconds.
    #[inline]
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(config(format!(
                "time grid mismatch: {}x{} ms vs {}x{} ms",
                self.steps, self.dt, other.steps, other.dt
            )))
        }
    }
}

impl Default for TimeGrid {
    /// 10 steps of 1 ms.
    fn default() -> Self {
        Self { dt: 1.0, steps: 10 }
    }
}

/// Binary spike indicator per time step for a single neuron.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SpikeTrain {
    grid_steps: usize,
    counts: Vec<u8>,
}

impl SpikeTrain {
    pub fn new(grid: TimeGrid, counts: Vec<u8>) -> Result<Self> {
        if counts.len() != grid.steps() {
            return Err(config(format!(
                "spike train has {} entries for a {}-step grid",
                counts.len(),
                grid.steps()
            )));
        }
        if let Some(k) = counts.iter().position(|&c| c > 1) {
            return Err(SnnError::Contract(format!(
                "at most one spike per step, found {} at step {k}",
                counts[k]
            )));
        }
        Ok(Self { grid_steps: grid.steps(), counts })
    }

    pub fn empty(grid: TimeGrid) -> Self {
        Self { grid_steps: grid.steps(), counts: vec![0; grid.steps()] }
    }

    /// A spike at every step.
    pub fn full(grid: TimeGrid) -> Self {
        Self { grid_steps: grid.steps(), counts: vec![1; grid.steps()] }
    }

    /// Train with spikes at the listed steps; steps outside the window are dropped.
    pub fn from_steps(grid: TimeGrid, steps: &[usize]) -> Self {
        let mut train = Self::empty(grid);
        for &k in steps {
            if k < train.counts.len() {
                train.counts[k] = 1;
            }
        }
        train
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    #[inline]
    pub fn counts(&self) -> &[u8] {
        &self.counts
    }

    #[inline]
    pub fn get(&self, k: usize) -> u8 {
        self.counts[k]
    }

    pub fn spike_count(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }

    pub fn first_spike(&self) -> Option<usize> {
        self.counts.iter().position(|&c| c > 0)
    }

    /// Spike counts as a real-valued signal.
    pub fn to_signal(&self, grid: TimeGrid) -> Signal {
        Signal { grid, values: self.counts.iter().map(|&c| c as f64).collect() }
    }

    fn check_grid(&self, grid: &TimeGrid) -> Result<()> {
        if self.grid_steps == grid.steps() {
            Ok(())
        } else {
            Err(config(format!(
                "spike train has {} steps, grid has {}",
                self.grid_steps,
                grid.steps()
            )))
        }
    }
}

/// Real-valued sample per time step (membrane potential, PSP, error ...).
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Signal {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.steps() {
            return Err(config(format!(
                "signal has {} samples for a {}-step grid",
                values.len(),
                grid.steps()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(SnnError::Numeric(format!("non-finite sample {} at step {k}", values[k])));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: TimeGrid) -> Self {
        Self { grid, values: vec![0.0; grid.steps()] }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(usize) -> f64) -> Self {
        Self { grid, values: (0..grid.steps()).map(f).collect() }
    }

    pub(crate) fn from_vec_unchecked(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.steps());
        Self { grid, values }
    }

    #[inline]
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    #[inline]
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

impl std::ops::Index<usize> for Signal {
    type Output = f64;

    fn index(&self, k: usize) -> &f64 {
        &self.values[k]
    }
}

/// Spike trains of a whole population, neuron-major (`neurons x steps`).
#[derive(Clone, Debug, PartialEq)]
pub struct SpikeRaster {
    grid: TimeGrid,
    neurons: usize,
    counts: Vec<u8>,
}

impl SpikeRaster {
    pub fn empty(grid: TimeGrid, neurons: usize) -> Self {
        Self { grid, neurons, counts: vec![0; neurons * grid.steps()] }
    }

    pub fn from_trains(grid: TimeGrid, trains: &[SpikeTrain]) -> Result<Self> {
        let mut counts = Vec::with_capacity(trains.len() * grid.steps());
        for train in trains {
            train.check_grid(&grid)?;
            counts.extend_from_slice(train.counts());
        }
        Ok(Self { grid, neurons: trains.len(), counts })
    }

    pub(crate) fn from_counts(grid: TimeGrid, neurons: usize, counts: Vec<u8>) -> Self {
        debug_assert_eq!(counts.len(), neurons * grid.steps());
        Self { grid, neurons, counts }
    }

    #[inline]
    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    #[inline]
    pub fn neurons(&self) -> usize {
        self.neurons
    }

    /// Counts of neuron `i` over the window.
    #[inline]
    pub fn row(&self, i: usize) -> &[u8] {
        let k = self.grid.steps();
        &self.counts[i * k..(i + 1) * k]
    }

    pub fn train(&self, i: usize) -> SpikeTrain {
        SpikeTrain { grid_steps: self.grid.steps(), counts: self.row(i).to_vec() }
    }

    pub fn trains(&self) -> Vec<SpikeTrain> {
        (0..self.neurons).map(|i| self.train(i)).collect()
    }

    pub fn set(&mut self, neuron: usize, step: usize) {
        let k = self.grid.steps();
        self.counts[neuron * k + step] = 1;
    }

    pub fn total_spikes(&self) -> usize {
        self.counts.iter().map(|&c| c as usize).sum()
    }
}

/// `out[k] = sum_{m <= k} kernel[k - m] * x[m]`.
#[inline]
pub(crate) fn convolve_into(kernel: &[f64], x: &[f64], out: &mut [f64]) {
    let n = out.len();
    for k in 0..n {
        let mut acc = 0.0;
        for m in 0..=k {
            acc += kernel[k - m] * x[m];
        }
        out[k] = acc;
    }
}

/// Convolution with a binary train; only spiking steps contribute.
#[inline]
pub(crate) fn convolve_spikes_into(kernel: &[f64], spikes: &[u8], out: &mut [f64]) {
    out.fill(0.0);
    let n = out.len();
    for (m, &c) in spikes.iter().enumerate() {
        if c != 0 {
            let c = c as f64;
            for k in m..n {
                out[k] += kernel[k - m] * c;
            }
        }
    }
}

/// Adjoint of [`convolve_into`]: `out[m] = sum_{k >= m} kernel[k - m] * y[k]`.
#[inline]
pub(crate) fn correlate_into(kernel: &[f64], y: &[f64], out: &mut [f64]) {
    let n = out.len();
    for m in 0..n {
        let mut acc = 0.0;
        for k in m..n {
            acc += kernel[k - m] * y[k];
        }
        out[m] = acc;
    }
}

/// Causal discrete convolution of a kernel with a spike train.
pub fn convolve_causal(kernel: &Signal, train: &SpikeTrain) -> Result<Signal> {
    train.check_grid(&kernel.grid)?;
    let mut out = vec![0.0; kernel.len()];
    convolve_spikes_into(kernel.values(), train.counts(), &mut out);
    Ok(Signal::from_vec_unchecked(kernel.grid, out))
}

/// Causal convolution of a kernel with an arbitrary real signal.
pub fn convolve_signal(kernel: &Signal, x: &Signal) -> Result<Signal> {
    kernel.grid.ensure_same(&x.grid)?;
    let mut out = vec![0.0; kernel.len()];
    convolve_into(kernel.values(), x.values(), &mut out);
    Ok(Signal::from_vec_unchecked(kernel.grid, out))
}

/// Delays a train by `k` whole steps; spikes pushed past the window are lost.
pub fn shift_right(x: &SpikeTrain, k: usize) -> SpikeTrain {
    let n = x.len();
    let mut counts = vec![0; n];
    if k < n {
        counts[k..].copy_from_slice(&x.counts[..n - k]);
    }
    SpikeTrain { grid_steps: x.grid_steps, counts }
}

/// Signal counterpart of [`shift_right`], zero-filling the vacated prefix.
pub fn shift_signal(x: &Signal, k: usize) -> Signal {
    let n = x.len();
    let mut values = vec![0.0; n];
    if k < n {
        values[k..].copy_from_slice(&x.values[..n - k]);
    }
    Signal::from_vec_unchecked(x.grid, values)
}

/// `sum_k x[k] * y[k] * dt`, the discrete form of an integral over the window.
pub fn inner_product(x: &Signal, y: &Signal) -> Result<f64> {
    x.grid.ensure_same(&y.grid)?;
    let dot: f64 = x.values.iter().zip(&y.values).map(|(a, b)| a * b).sum();
    Ok(dot * x.grid.dt())
}
