mod common;

use qshard::engine::{simulate, EngineConfig, Optimizations};
use qshard::ket::fidelity;
use qshard::validate::dense_reference;

#[test]
fn every_flag_subset_is_exact() {
    let suite = common::exactness_suite();
    let refs: Vec<_> = suite.iter().map(|c| dense_reference(c).unwrap()).collect();
    for mask in 0..(1u8 << Optimizations::COUNT) {
        let cfg = EngineConfig::default().with_optimizations(Optimizations::from_mask(mask));
        for (i, (c, r)) in suite.iter().zip(&refs).enumerate() {
            let mut h = simulate(c, &cfg).unwrap();
            let k = h.full_ket().unwrap();
            let f = fidelity(&k, r).unwrap();
            assert!(f >= 1.0 - 1e-9, "mask {mask:05b} circuit {i}: fidelity {f}");
            let worst = k
                .amplitudes()
                .iter()
                .zip(r.amplitudes())
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(worst < 1e-9, "mask {mask:05b} circuit {i}: amplitude error {worst}");
        }
    }
}
