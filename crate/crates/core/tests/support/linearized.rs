//! Reference objective for finite-difference checks of the backward pass.
//!
//! A spiking network is piecewise constant in its parameters, so finite
//! differences of the real loss are useless. The backward pass instead
//! differentiates a linearization around the current point:
//!
//! - every spike train becomes `s~ = s + rho(u) * (drive(theta) - drive(theta_0))`,
//!   with the refractory history frozen at its current value;
//! - a delay moves its PSP along the central-difference time derivative of
//!   the floored, shifted PSP, `a(d) = a_q - (d - d_0) * da_q/dt`.
//!
//! Everything here is written out with plain loops and shares no code with
//! the library's forward or backward implementation.

#![allow(dead_code)]

use delay_snn_core::loss::{make_target, TargetSpec};
use delay_snn_core::signal::SpikeRaster;
use delay_snn_core::{Network, SurrogateConfig};

pub struct Linearized {
    k: usize,
    dt: f64,
    eps: Vec<f64>,
    /// per layer, `post x K` surrogate slopes at the expansion point
    rho: Vec<Vec<f64>>,
    /// per layer, `post x K` spikes at the expansion point
    spikes: Vec<Vec<f64>>,
    /// per layer, `post x K` feedforward drive at the expansion point
    drive0: Vec<Vec<f64>>,
    steps: Vec<Vec<usize>>,
    sizes: Vec<usize>,
    input: Vec<f64>,
    target: Vec<f64>,
}

/// Free parameters of the reference objective: weights and delay offsets
/// `d - d_0` for every layer, both row-major `post x pre`.
#[derive(Clone, Debug)]
pub struct Point {
    pub weights: Vec<Vec<f64>>,
    pub offsets: Vec<Vec<f64>>,
}

fn conv(eps: &[f64], x: &[f64]) -> Vec<f64> {
    let k = x.len();
    let mut out = vec![0.0; k];
    for n in 0..k {
        for m in 0..=n {
            out[n] += eps[n - m] * x[m];
        }
    }
    out
}

fn shifted(x: &[f64], q: usize) -> Vec<f64> {
    let k = x.len();
    let mut out = vec![0.0; k];
    for n in q..k {
        out[n] = x[n - q];
    }
    out
}

fn central_diff(a: &[f64], dt: f64) -> Vec<f64> {
    let k = a.len();
    let mut out = vec![0.0; k];
    for n in 0..k {
        out[n] = if n == 0 {
            (a[1] - a[0]) / dt
        } else if n == k - 1 {
            (a[k - 1] - a[k - 2]) / dt
        } else {
            (a[n + 1] - a[n - 1]) / (2.0 * dt)
        };
    }
    out
}

impl Linearized {
    pub fn new(net: &Network, input: &SpikeRaster, label: usize, surrogate: &SurrogateConfig) -> Self {
        let grid = net.grid();
        let k = grid.steps();
        let dt = grid.dt();
        let eps = net.kernels.eps.values().to_vec();
        let theta = net.config.srm.threshold;
        let trace = net.forward(input).unwrap();
        let rho = trace
            .layers
            .iter()
            .map(|t| t.membrane.iter().map(|&u| surrogate.rho(u, theta)).collect())
            .collect();
        let to_f64 = |r: &SpikeRaster| -> Vec<f64> {
            (0..r.neurons()).flat_map(|i| r.row(i).iter().map(|&c| c as f64).collect::<Vec<_>>()).collect()
        };
        let spikes: Vec<Vec<f64>> = trace.layers.iter().map(|t| to_f64(&t.output)).collect();
        let steps: Vec<Vec<usize>> = net.layers.iter().map(|p| p.delays.steps().iter().map(|&q| q as usize).collect()).collect();
        let sizes: Vec<usize> = net.config.sizes.clone();
        let target = to_f64(&make_target(label, &TargetSpec::new(net.outputs(), grid)).unwrap());
        let mut this = Self {
            k,
            dt,
            eps,
            rho,
            spikes,
            drive0: Vec::new(),
            steps,
            sizes,
            input: to_f64(input),
            target,
        };
        // drive at the expansion point, from the true spikes of each layer
        let p0 = Point::at(net);
        let mut x = this.input.clone();
        for l in 0..net.layers.len() {
            let d = this.drive(l, &p0, &x);
            this.drive0.push(d);
            x = this.spikes[l].clone();
        }
        this
    }

    fn drive(&self, l: usize, p: &Point, x: &[f64]) -> Vec<f64> {
        let (pre, post, k) = (self.sizes[l], self.sizes[l + 1], self.k);
        let mut out = vec![0.0; post * k];
        for j in 0..post {
            for i in 0..pre {
                let syn = j * pre + i;
                let psp = conv(&self.eps, &x[i * k..(i + 1) * k]);
                let a = shifted(&psp, self.steps[l][syn]);
                let da = central_diff(&a, self.dt);
                let (w, off) = (p.weights[l][syn], p.offsets[l][syn]);
                for n in 0..k {
                    out[j * k + n] += w * (a[n] - off * da[n]);
                }
            }
        }
        out
    }

    /// Loss of the linearized network at `p`.
    pub fn loss(&self, p: &Point) -> f64 {
        let k = self.k;
        let mut x = self.input.clone();
        for l in 0..self.rho.len() {
            let d = self.drive(l, p, &x);
            x = (0..d.len())
                .map(|n| self.spikes[l][n] + self.rho[l][n] * (d[n] - self.drive0[l][n]))
                .collect();
        }
        let mut sum = 0.0;
        for j in 0..x.len() / k {
            let diff: Vec<f64> = (0..k).map(|n| x[j * k + n] - self.target[j * k + n]).collect();
            let e = conv(&self.eps, &diff);
            sum += e.iter().map(|v| v * v).sum::<f64>();
        }
        0.5 * sum * self.dt
    }
}

impl Point {
    pub fn at(net: &Network) -> Self {
        Self {
            weights: net.layers.iter().map(|p| p.weights.clone()).collect(),
            offsets: net.layers.iter().map(|p| vec![0.0; p.weights.len()]).collect(),
        }
    }
}

/// Central differences of the reference objective for every weight and
/// every delay, laid out like the library's gradient vectors.
pub fn finite_differences(lin: &Linearized, net: &Network, hw: f64, hd: f64) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let base = Point::at(net);
    let mut gw = Vec::new();
    let mut gd = Vec::new();
    for l in 0..net.layers.len() {
        let n = net.layers[l].weights.len();
        let mut lw = vec![0.0; n];
        let mut ld = vec![0.0; n];
        for s in 0..n {
            let mut p = base.clone();
            p.weights[l][s] += hw;
            let up = lin.loss(&p);
            p.weights[l][s] -= 2.0 * hw;
            let down = lin.loss(&p);
            lw[s] = (up - down) / (2.0 * hw);

            let mut p = base.clone();
            p.offsets[l][s] = hd;
            let up = lin.loss(&p);
            p.offsets[l][s] = -hd;
            let down = lin.loss(&p);
            ld[s] = (up - down) / (2.0 * hd);
        }
        gw.push(lw);
        gd.push(ld);
    }
    (gw, gd)
}

/// `max |a - b| / max |b|`, the block-wise relative error.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}
