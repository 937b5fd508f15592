//! Loss and decoding checked exhaustively on small windows.

use delay_snn_core::loss::{decode, loss_and_error, make_target, TargetSpec};
use delay_snn_core::signal::{SpikeRaster, SpikeTrain, TimeGrid};
use delay_snn_core::srm::{eval_kernels, SrmConfig};

fn train_from_bits(grid: TimeGrid, bits: u32) -> SpikeTrain {
    let counts = (0..grid.steps()).map(|k| ((bits >> k) & 1) as u8).collect();
    SpikeTrain::new(grid, counts).unwrap()
}

/// `eps[0] = 0`, so a spike in the last step never reaches the filtered
/// trace inside the window. The loss therefore vanishes exactly when the
/// trains agree on every step but the last one.
#[test]
fn loss_is_zero_exactly_when_the_visible_steps_agree() {
    let grid = TimeGrid::default();
    let eps = eval_kernels(&SrmConfig::default(), grid).unwrap().eps;
    let rasters: Vec<SpikeRaster> = (0..1u32 << 10)
        .map(|b| SpikeRaster::from_trains(grid, &[train_from_bits(grid, b)]).unwrap())
        .collect();
    for (a, ra) in rasters.iter().enumerate() {
        for (b, rb) in rasters.iter().enumerate() {
            let loss = loss_and_error(ra, rb, &eps).unwrap().loss;
            assert!(loss >= 0.0);
            let visible = (a & 0x1ff) == (b & 0x1ff);
            assert_eq!(loss == 0.0, visible, "trains {a:#x} and {b:#x}: loss {loss}");
        }
    }
}

/// Ranking written straight from the rule: earliest first spike, then most
/// spikes, then lowest index.
fn oracle(trains: &[Vec<u8>]) -> Option<usize> {
    let mut candidates: Vec<(usize, i64, usize)> = trains
        .iter()
        .enumerate()
        .filter_map(|(j, t)| {
            let first = t.iter().position(|&c| c == 1)?;
            let count = t.iter().filter(|&&c| c == 1).count() as i64;
            Some((first, -count, j))
        })
        .collect();
    candidates.sort();
    candidates.first().map(|c| c.2)
}

#[test]
fn decode_agrees_with_the_ranking_rule_on_all_sparse_outputs() {
    const K: usize = 4;
    const N: usize = 10;
    let grid = TimeGrid::new(1.0, K).unwrap();
    let patterns: Vec<Vec<u8>> = (1..1u32 << K).map(|b| (0..K).map(|k| ((b >> k) & 1) as u8).collect()).collect();
    let mut cases = 0;
    let mut check = |trains: Vec<Vec<u8>>| {
        let raster = SpikeRaster::from_trains(
            grid,
            &trains.iter().map(|t| SpikeTrain::new(grid, t.clone()).unwrap()).collect::<Vec<_>>(),
        )
        .unwrap();
        assert_eq!(decode(&raster).class, oracle(&trains), "{trains:?}");
        cases += 1;
    };
    check(vec![vec![0; K]; N]);
    for a in 0..N {
        for pa in &patterns {
            let mut t = vec![vec![0; K]; N];
            t[a] = pa.clone();
            check(t.clone());
            for b in a + 1..N {
                for pb in &patterns {
                    let mut t2 = t.clone();
                    t2[b] = pb.clone();
                    check(t2);
                }
            }
        }
    }
    assert_eq!(cases, 1 + N * 15 + N * (N - 1) / 2 * 15 * 15);
}

#[test]
fn decode_inverts_make_target() {
    for steps in [1, 4, 10] {
        let grid = TimeGrid::new(1.0, steps).unwrap();
        let spec = TargetSpec::new(10, grid);
        for c in 0..10 {
            let target = make_target(c, &spec).unwrap();
            assert_eq!(decode(&target).class, Some(c));
        }
    }
}
