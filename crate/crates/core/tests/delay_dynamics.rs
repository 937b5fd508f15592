//! How delays shape the membrane potential of a neuron fed by two input
//! spikes, and which way the delay gradient points in that setting.

use delay_snn_core::delay::DelayMatrix;
use delay_snn_core::loss::{loss_and_error, make_target, TargetSpec};
use delay_snn_core::network::LayerParams;
use delay_snn_core::optim::{step_network, AdamState, TrainMode};
use delay_snn_core::signal::{SpikeRaster, SpikeTrain};
use delay_snn_core::srm::SrmConfig;
use delay_snn_core::{Network, NetworkConfig, SurrogateConfig, TimeGrid};
use proptest::prelude::*;

/// Two input neurons onto one output neuron.
fn two_input_net(grid: TimeGrid, tau_s: f64, threshold: f64, w: [f64; 2], d: [f64; 2]) -> Network {
    let mut cfg = NetworkConfig::with_sizes(vec![2, 1]);
    cfg.grid = grid;
    cfg.d_max = grid.duration();
    cfg.srm = SrmConfig { threshold, tau_s, ..SrmConfig::default() };
    let delays = DelayMatrix::from_values(1, 2, grid, d.to_vec()).unwrap();
    let layer = LayerParams::new(w.to_vec(), delays).unwrap();
    Network::from_layers(cfg, vec![layer]).unwrap()
}

fn inputs(grid: TimeGrid, t1: usize, t2: usize) -> SpikeRaster {
    SpikeRaster::from_trains(grid, &[SpikeTrain::from_steps(grid, &[t1]), SpikeTrain::from_steps(grid, &[t2])]).unwrap()
}

fn peak(net: &Network, input: &SpikeRaster) -> f64 {
    let trace = net.forward(input).unwrap();
    trace.layers[0].membrane.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// With the threshold out of reach the membrane is the sum of two PSPs.
    /// Pulling the later one further away lowers the peak; moving the
    /// earlier one toward the later one raises it.
    #[test]
    fn peak_falls_as_the_spikes_separate(
        tau_s in 0.5f64..3.0,
        w in 0.5f64..5.0,
        t1 in 0usize..5,
        gap in 0usize..20,
        extra in 1usize..10,
    ) {
        let grid = TimeGrid::new(0.5, 60).unwrap();
        let net_at = |d1: f64, d2: f64| two_input_net(grid, tau_s, 1e9, [w, w], [d1, d2]);
        let input = inputs(grid, t1, t1);
        let dt = grid.dt();
        // both spikes enter at t1; the delays alone set their separation
        let base = peak(&net_at(0.0, gap as f64 * dt), &input);
        let later_moved_away = peak(&net_at(0.0, (gap + extra) as f64 * dt), &input);
        prop_assert!(later_moved_away <= base + 1e-12);
        if gap > 0 {
            let toward = extra.min(gap) as f64 * dt;
            let earlier_moved_closer = peak(&net_at(toward, gap as f64 * dt), &input);
            prop_assert!(earlier_moved_closer >= base - 1e-12);
        }
    }
}

/// Two 7 mV synapses whose PSPs peak three steps apart: the neuron stays
/// silent although the target wants it to fire. The gradient asks for
/// more delay on the earlier spike, and delay-only training makes the
/// neuron fire.
#[test]
fn delay_gradient_aligns_the_early_spike_with_the_late_one() {
    let grid = TimeGrid::default();
    let mut net = two_input_net(grid, 1.0, 10.0, [7.0, 7.0], [0.2, 0.2]);
    net.layers[0].weights_frozen = true;
    let input = inputs(grid, 0, 3);
    let target = make_target(0, &TargetSpec::new(1, grid)).unwrap();
    let surrogate = SurrogateConfig::default();

    let trace = net.forward(&input).unwrap();
    assert_eq!(trace.output().total_spikes(), 0);
    let out = loss_and_error(trace.output(), &target, &net.kernels.eps).unwrap();
    let g = net.backward(&trace, &surrogate, &out.error).unwrap();
    assert!(g.layers[0].delays[0] < 0.0, "earlier synapse gradient {}", g.layers[0].delays[0]);

    let mut adam = AdamState::for_layers(0.1, &net.layers);
    let before = peak(&net, &input);
    for _ in 0..60 {
        let trace = net.forward(&input).unwrap();
        let out = loss_and_error(trace.output(), &target, &net.kernels.eps).unwrap();
        let g = net.backward(&trace, &surrogate, &out.error).unwrap();
        step_network(&mut adam, &mut net.layers, &g, TrainMode::DelaysFreeWeights).unwrap();
    }
    assert!(net.layers[0].delays.get(0, 0) > net.layers[0].delays.get(0, 1));
    assert!(peak(&net, &input) > before);
    assert!(net.forward(&input).unwrap().output().total_spikes() > 0);
}

/// An output neuron whose error is zero at every step passes no credit
/// back to its incoming synapses.
#[test]
fn output_neurons_without_error_get_no_gradient() {
    let mut cfg = NetworkConfig::with_sizes(vec![6, 5, 3]);
    cfg.init[1].weight_mean = 0.8;
    cfg.seed = 11;
    let net = Network::new(cfg).unwrap();
    let grid = net.grid();
    let mut input = SpikeRaster::empty(grid, 6);
    for i in 0..6 {
        input.set(i, i % 3);
    }
    let trace = net.forward(&input).unwrap();
    let k = grid.steps();
    let mut error = vec![0.0; 3 * k];
    for (j, e) in error.chunks_mut(k).enumerate() {
        if j != 1 {
            e.iter_mut().enumerate().for_each(|(m, v)| *v = 0.3 - 0.1 * m as f64);
        }
    }
    let g = net.backward(&trace, &SurrogateConfig { alpha: 1.0, beta: 0.2 }, &error).unwrap();
    let pre = 5;
    assert!(g.layers[1].weights[pre..2 * pre].iter().all(|&v| v == 0.0));
    assert!(g.layers[1].delays[pre..2 * pre].iter().all(|&v| v == 0.0));
    assert!(g.layers[1].weights.iter().any(|&v| v != 0.0));
}
