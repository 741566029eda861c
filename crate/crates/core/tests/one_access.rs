use emoma::{CuckooBaseline, Dictionary, Emoma, EmomaConfig, Mode};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_search_reads_one_bucket(
        seed in any::<u64>(),
        double in any::<bool>(),
        load in 0.1f64..0.95,
        probes in prop::collection::vec(any::<u64>(), 200),
    ) {
        let mode = if double { Mode::Double } else { Mode::Single };
        let mut d = Emoma::new(EmomaConfig::new(mode, 1 << 8).seed(seed)).unwrap();
        let n = (load * d.capacity() as f64) as u64;
        let keys: Vec<u64> = (0..n).map(|i| seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15)).collect();
        for &k in &keys {
            prop_assert!(!d.insert(k, !k).unwrap().failed);
        }
        for &k in keys.iter().chain(&probes) {
            let before = d.access_stats();
            let found = d.search(k);
            let reads = d.access_stats().since(&before).offchip_reads;
            if d.stash().contains(k) {
                prop_assert_eq!(reads, 0);
            } else {
                prop_assert_eq!(reads, 1);
            }
            if keys.contains(&k) {
                prop_assert_eq!(found, Some(!k));
            }
        }
    }

    #[test]
    fn baseline_search_reads_at_most_two(seed in any::<u64>(), probes in prop::collection::vec(any::<u64>(), 200)) {
        let mut d = CuckooBaseline::new(EmomaConfig::single(1 << 8).seed(seed)).unwrap();
        for i in 0..900u64 {
            d.insert(seed ^ i.wrapping_mul(0x9e37_79b9_7f4a_7c15), i).unwrap();
        }
        for k in probes {
            let before = d.access_stats();
            d.search(k);
            prop_assert!(d.access_stats().since(&before).offchip_reads <= 2);
        }
    }
}
