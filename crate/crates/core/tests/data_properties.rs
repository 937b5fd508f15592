use delay_snn_core::data::{encode_threshold, load_idx, write_idx, ImageSample, Split, SplitSpec, IMAGE_PIXELS};
use delay_snn_core::TimeGrid;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_the_selected_indices(
        len in 1usize..3000,
        fraction in 0.05f64..1.0,
        limit in prop::option::of(1usize..4000),
        seed in any::<u64>(),
        epoch in 0u64..50,
        batch in 1usize..100,
    ) {
        let split = Split::new(len, &SplitSpec { train_fraction: fraction, seed, limit }).unwrap();
        let used = limit.map_or(len, |l| l.min(len));
        prop_assert_eq!(split.train.len() + split.val.len(), used);
        let mut all: Vec<usize> = split.train.iter().chain(&split.val).copied().collect();
        all.sort_unstable();
        all.dedup();
        prop_assert_eq!(all.len(), used);
        prop_assert!(all.iter().all(|&i| i < len));

        let batches = split.epoch_batches(epoch, batch).unwrap();
        prop_assert!(batches.iter().all(|b| !b.is_empty() && b.len() <= batch));
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        let mut train = split.train.clone();
        train.sort_unstable();
        prop_assert_eq!(seen, train);
    }

    #[test]
    fn idx_round_trip(images in prop::collection::vec((prop::collection::vec(any::<u8>(), IMAGE_PIXELS), 0u8..10), 0..6)) {
        let samples: Vec<ImageSample> = images.into_iter().map(|(p, l)| ImageSample::new(p, l).unwrap()).collect();
        let dir = tempfile::tempdir().unwrap();
        let (img, lbl) = (dir.path().join("images"), dir.path().join("labels"));
        write_idx(&samples, &img, &lbl).unwrap();
        let back = load_idx(&img, &lbl).unwrap();
        prop_assert_eq!(&back, &samples);
        for s in &back {
            let raster = encode_threshold(s, TimeGrid::default());
            let bright = s.pixels.iter().filter(|&&p| p > 127).count();
            prop_assert_eq!(raster.total_spikes(), bright);
            prop_assert!((0..IMAGE_PIXELS).all(|i| raster.row(i)[1..].iter().all(|&c| c == 0)));
        }
    }
}
