//! Per-synapse transmission delays.
//!
//! Delays are stored as real milliseconds and applied as whole grid steps,
//! rounded down. The optimizer only ever touches the real values; every
//! forward and backward pass sees the floored view.

use crate::error::{contract, Result};
use crate::signal::{shift_right, Signal, SpikeRaster, SpikeTrain, TimeGrid};

/// `floor(d / dt)`, exact with respect to the float grid: the result `q`
/// always satisfies `q * dt <= d < (q + 1) * dt`.
pub fn quantize_delay(d: f64, grid: TimeGrid) -> Result<usize> {
    if !(d >= 0.0) || !d.is_finite() {
        return Err(contract(format!("delay must be finite and non-negative, got {d}")));
    }
    Ok(floor_steps(d, grid.dt()))
}

#[inline]
fn floor_steps(d: f64, dt: f64) -> usize {
    let x = d / dt;
    // truncation is the floor for non-negative values and avoids a libm call
    let mut q = if x >= 0.0 { (x as u64) as f64 } else { x.floor() };
    if q * dt > d {
        q -= 1.0;
    } else if (q + 1.0) * dt <= d {
        q += 1.0;
    }
    q as usize
}

/// Real-valued delays of a `post x pre` synapse block, with the quantized
/// step view kept in sync.
#[derive(Clone, Debug, PartialEq)]
pub struct DelayMatrix {
    post: usize,
    pre: usize,
    grid: TimeGrid,
    d_max: f64,
    values: Vec<f64>,
    steps: Vec<u16>,
}

impl DelayMatrix {
    /// All-zero delays bounded by the window length.
    pub fn zeros(post: usize, pre: usize, grid: TimeGrid) -> Self {
        Self::with_bound(post, pre, grid, grid.duration())
    }

    pub fn with_bound(post: usize, pre: usize, grid: TimeGrid, d_max: f64) -> Self {
        Self {
            post,
            pre,
            grid,
            d_max,
            values: vec![0.0; post * pre],
            steps: vec![0; post * pre],
        }
    }

    /// Builds from row-major values; out-of-range values are clamped.
    pub fn from_values(post: usize, pre: usize, grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != post * pre {
            return Err(contract(format!("expected {} delays, got {}", post * pre, values.len())));
        }
        let mut m = Self::zeros(post, pre, grid);
        m.values = values;
        m.refresh();
        Ok(m)
    }

    #[inline]
    pub fn post(&self) -> usize {
        self.post
    }

    #[inline]
    pub fn pre(&self) -> usize {
        self.pre
    }

    #[inline]
    pub fn d_max(&self) -> f64 {
        self.d_max
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
    pub fn get(&self, post: usize, pre: usize) -> f64 {
        self.values[post * self.pre + pre]
    }

    /// Quantized delays in steps, row-major like [`values`](Self::values).
    #[inline]
    pub fn steps(&self) -> &[u16] {
        &self.steps
    }

    #[inline]
    pub fn step(&self, post: usize, pre: usize) -> usize {
        self.steps[post * self.pre + pre] as usize
    }

    pub fn set(&mut self, post: usize, pre: usize, d: f64) {
        let idx = post * self.pre + pre;
        self.values[idx] = d;
        self.refresh_one(idx);
    }

    /// Mutates the real values, then clamps into `[0, d_max]` and requantizes.
    pub fn modify<R>(&mut self, f: impl FnOnce(&mut [f64]) -> R) -> R {
        let r = f(&mut self.values);
        self.refresh();
        r
    }

    /// Raw access for the optimizer; the caller must call [`Self::resync`]
    /// before the step view is read again.
    pub(crate) fn values_mut_unsynced(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn resync(&mut self) {
        self.refresh();
    }

    pub fn set_bound(&mut self, d_max: f64) {
        self.d_max = d_max;
        self.refresh();
    }

    fn refresh(&mut self) {
        for idx in 0..self.values.len() {
            self.refresh_one(idx);
        }
    }

    #[inline]
    fn refresh_one(&mut self, idx: usize) {
        let d = &mut self.values[idx];
        // NaN maps to 0 as well
        *d = if *d > 0.0 { d.min(self.d_max) } else { 0.0 };
        self.steps[idx] = floor_steps(*d, self.grid.dt()).min(u16::MAX as usize) as u16;
    }

    /// Histogram of quantized delays over `0..=steps` (bins past the window collapse into the last).
    pub fn step_histogram(&self) -> Vec<usize> {
        let n = self.grid.steps();
        let mut hist = vec![0; n + 1];
        for &q in &self.steps {
            hist[(q as usize).min(n)] += 1;
        }
        hist
    }
}

/// Per-synapse delayed trains, indexed `[post][pre]`.
pub fn apply_delays(pre_trains: &SpikeRaster, delays: &DelayMatrix) -> Result<Vec<Vec<SpikeTrain>>> {
    if pre_trains.neurons() != delays.pre() {
        return Err(contract(format!(
            "{} presynaptic trains for a delay block with {} inputs",
            pre_trains.neurons(),
            delays.pre()
        )));
    }
    let trains = pre_trains.trains();
    Ok((0..delays.post())
        .map(|j| {
            trains
                .iter()
                .enumerate()
                .map(|(i, s)| shift_right(s, delays.step(j, i)))
                .collect()
        })
        .collect())
}

/// Time derivative of a sampled trace by central differences, one-sided at
/// the window edges.
pub fn psp_time_derivative(a: &Signal) -> Signal {
    let mut out = vec![0.0; a.len()];
    derivative_into(a.values(), a.grid().dt(), &mut out);
    Signal::from_vec_unchecked(a.grid(), out)
}

#[inline]
pub(crate) fn derivative_into(a: &[f64], dt: f64, out: &mut [f64]) {
    let n = a.len();
    if n < 2 {
        out.fill(0.0);
        return;
    }
    out[0] = (a[1] - a[0]) / dt;
    for k in 1..n - 1 {
        out[k] = (a[k + 1] - a[k - 1]) / (2.0 * dt);
    }
    out[n - 1] = (a[n - 1] - a[n - 2]) / dt;
}
