//! Spike response model neurons.
//!
//! The membrane potential is the weighted sum of delayed postsynaptic
//! potentials plus the refractory response to the neuron's own spikes:
//!
//! ```text
//! u(t) = sum_i w_i (eps(t - d_i) * s_i)(t) + (nu * s)(t)
//! eps(t) = t/tau_s * exp(1 - t/tau_s)         (t >= 0)
//! nu(t)  = -2 theta * exp(1 - t/tau_r)        (t >= 0)
//! ```
//!
//! A spike is emitted at step `k` when `u[k] >= theta`. Its refractory
//! response is felt from step `k + 1` on.

use crate::error::{config, Result, SnnError};
use crate::signal::{Signal, SpikeTrain, TimeGrid};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SrmConfig {
    /// Firing threshold in mV.
    pub threshold: f64,
    /// Spike response time constant in ms.
    pub tau_s: f64,
    /// Refractory time constant in ms.
    pub tau_r: f64,
}

impl Default for SrmConfig {
    fn default() -> Self {
        Self { threshold: 10.0, tau_s: 1.0, tau_r: 1.0 }
    }
}

impl SrmConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("threshold", self.threshold), ("tau_s", self.tau_s), ("tau_r", self.tau_r)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(config(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Spike response kernel `eps` at time `t` (ms).
pub fn psp_kernel(t: f64, tau_s: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        t / tau_s * (1.0 - t / tau_s).exp()
    }
}

/// Refractory kernel `nu` at time `t` (ms).
pub fn refractory_kernel(t: f64, threshold: f64, tau_r: f64) -> f64 {
    if t < 0.0 {
        0.0
    } else {
        -2.0 * threshold * (1.0 - t / tau_r).exp()
    }
}

/// `eps` and `nu` sampled on the simulation grid.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelTable {
    pub eps: Signal,
    pub nu: Signal,
}

pub fn eval_kernels(cfg: &SrmConfig, grid: TimeGrid) -> Result<KernelTable> {
    cfg.validate()?;
    let eps = Signal::from_fn(grid, |k| psp_kernel(grid.time(k), cfg.tau_s));
    let nu = Signal::from_fn(grid, |k| refractory_kernel(grid.time(k), cfg.threshold, cfg.tau_r));
    Ok(KernelTable { eps, nu })
}

/// Runs one neuron over the window given its feedforward drive.
///
/// Returns the output train and the membrane trace, refractory history included.
pub fn simulate_neuron(drive: &Signal, kernels: &KernelTable, cfg: &SrmConfig) -> Result<(SpikeTrain, Signal)> {
    let grid = drive.grid();
    grid.ensure_same(&kernels.nu.grid())?;
    if let Some(k) = drive.values().iter().position(|v| !v.is_finite()) {
        return Err(SnnError::Numeric(format!("non-finite drive at step {k}")));
    }
    let n = grid.steps();
    let mut spikes = vec![0u8; n];
    let mut u = vec![0.0; n];
    simulate_into(drive.values(), kernels.nu.values(), cfg.threshold, &mut spikes, &mut u);
    Ok((SpikeTrain::new(grid, spikes)?, Signal::from_vec_unchecked(grid, u)))
}

/// Slice form of [`simulate_neuron`] used by the layer code.
#[inline]
pub(crate) fn simulate_into(drive: &[f64], nu: &[f64], threshold: f64, spikes: &mut [u8], u: &mut [f64]) {
    let n = drive.len();
    for k in 0..n {
        let mut v = drive[k];
        for m in 0..k {
            if spikes[m] != 0 {
                v += nu[k - m];
            }
        }
        u[k] = v;
        spikes[k] = u8::from(v >= threshold);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (SrmConfig, KernelTable, TimeGrid) {
        let cfg = SrmConfig::default();
        let grid = TimeGrid::default();
        (cfg, eval_kernels(&cfg, grid).unwrap(), grid)
    }

    #[test]
    fn kernel_goldens() {
        let (_, kt, _) = setup();
        assert_eq!(kt.eps[0], 0.0);
        assert_eq!(kt.eps[1], 1.0);
        assert_eq!(kt.nu[1], -20.0);
        assert!((kt.nu[0] + 20.0 * std::f64::consts::E).abs() < 1e-12);
        assert!((kt.nu[0] - -54.36563656918091).abs() < 1e-9);
        assert!(kt.nu.values().iter().all(|&v| v <= 0.0));
        assert_eq!(kt.eps.max(), 1.0);
    }

    #[test]
    fn config_validation() {
        let bad = SrmConfig { tau_s: 0.0, ..SrmConfig::default() };
        assert!(eval_kernels(&bad, TimeGrid::default()).is_err());
        let bad = SrmConfig { threshold: f64::NAN, ..SrmConfig::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn silent_drive() {
        let (cfg, kt, grid) = setup();
        let (s, u) = simulate_neuron(&Signal::zeros(grid), &kt, &cfg).unwrap();
        assert_eq!(s.spike_count(), 0);
        assert!(u.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_crossing() {
        let (cfg, kt, grid) = setup();
        let drive = Signal::from_fn(grid, |k| if k == 3 { 15.0 } else { 0.0 });
        let (s, _) = simulate_neuron(&drive, &kt, &cfg).unwrap();
        assert_eq!(s, SpikeTrain::from_steps(grid, &[3]));
    }

    #[test]
    fn threshold_is_inclusive() {
        let (cfg, kt, grid) = setup();
        let drive = Signal::from_fn(grid, |k| if k == 0 { 10.0 } else { 0.0 });
        let (s, _) = simulate_neuron(&drive, &kt, &cfg).unwrap();
        assert_eq!(s.first_spike(), Some(0));
    }

    #[test]
    fn constant_drive_matches_scalar_stepper() {
        let (cfg, kt, grid) = setup();
        let drive = Signal::from_fn(grid, |_| 15.0);
        let (s, u) = simulate_neuron(&drive, &kt, &cfg).unwrap();

        // independent stepper evaluating nu analytically at every step
        let mut spikes: Vec<usize> = Vec::new();
        for k in 0..10 {
            let refr: f64 = spikes.iter().map(|&m| -20.0 * (1.0 - (k - m) as f64).exp()).sum();
            let v = 15.0 + refr;
            assert!((u[k] - v).abs() < 1e-12, "step {k}: {} vs {v}", u[k]);
            if v >= 10.0 {
                spikes.push(k);
            }
        }
        assert_eq!(s, SpikeTrain::from_steps(grid, &spikes));
        assert_eq!(s.get(0), 1);
        assert!((u[1] - -5.0).abs() < 1e-12);
        assert_eq!(s.get(1), 0);
        // frozen trace for the same drive
        assert_eq!(spikes, vec![0, 3, 6, 9]);
    }

    #[test]
    fn rejects_non_finite_drive() {
        let (cfg, kt, grid) = setup();
        let mut v = vec![0.0; 10];
        v[4] = f64::INFINITY;
        let drive = Signal::from_vec_unchecked(grid, v);
        assert!(matches!(simulate_neuron(&drive, &kt, &cfg), Err(SnnError::Numeric(_))));
    }
}
