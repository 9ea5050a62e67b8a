mod common;

use proptest::prelude::*;

use qshard::circuit::{build_qft, build_random_circuit, Gate};
use qshard::engine::{simulate, EngineConfig, EngineError, HybridState, Optimizations};
use qshard::ket::{self, DenseKet};
use qshard::rng;
use qshard::validate::dense_reference;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn recorded_epsilons_are_bounded_and_exact(width in 3usize..=8, depth in 2usize..=8, seed in any::<u64>(), pk in 1usize..=40) {
        let p = pk as f64 / 40.0;
        let c = build_random_circuit(width, depth, seed).unwrap();
        let mut h = HybridState::new(width, EngineConfig::default().with_sdrp(p)).unwrap();
        h.set_projection_audit(true);
        h.apply_circuit(&c).unwrap();
        h.flush_all().unwrap();
        prop_assert_eq!(h.epsilons().len(), h.projection_audits().len());
        for a in h.projection_audits() {
            prop_assert!(a.epsilon > 0.0 && a.epsilon <= p / 2.0);
            prop_assert!((a.fidelity - (1.0 - a.epsilon)).abs() < 1e-9);
        }
    }

    #[test]
    fn peak_never_exceeds_budget(width in 4usize..=10, depth in 1usize..=8, seed in any::<u64>(), log_budget in 2u32..=10, pk in 0usize..=4) {
        let c = build_random_circuit(width, depth, seed).unwrap();
        let budget = 1usize << log_budget;
        let mut h = HybridState::new(width, EngineConfig::default().with_mem_budget(budget).with_sdrp(pk as f64 / 4.0)).unwrap();
        let r = h.apply_circuit(&c).and_then(|_| h.flush_all());
        if let Err(e) = r {
            let is_oom = matches!(e, EngineError::OutOfMemory { .. });
            prop_assert!(is_oom);
        }
        prop_assert!(h.peak_amplitudes() <= budget);
        prop_assert!(h.dense_amplitudes() <= budget);
    }

    #[test]
    fn amplitudes_match_reference(seed in any::<u64>()) {
        let c = build_random_circuit(8, 6, seed).unwrap();
        let reference = dense_reference(&c).unwrap();
        let mut h = simulate(&c, &EngineConfig::default()).unwrap();
        let mut r = rng::seeded(seed);
        for _ in 0..100 {
            let idx = rng::below(&mut r, 256) as usize;
            let bits: Vec<bool> = (0..8).map(|q| idx >> q & 1 == 1).collect();
            let a = h.get_amplitude(&bits).unwrap();
            prop_assert!((a - reference.amplitude(idx)).norm() < 1e-9);
        }
    }
}

#[test]
fn qft_on_zero_keeps_linear_memory() {
    for n in [1, 2, 5, 10, 20, 40, 64] {
        for hybrid in [true, false] {
            let opts = Optimizations {
                stabilizer_hybrid: hybrid,
                ..Optimizations::all()
            };
            let h = simulate(&build_qft(n).unwrap(), &EngineConfig::default().with_optimizations(opts)).unwrap();
            assert!(h.peak_amplitudes() <= 8 * n, "n={n} hybrid={hybrid}: {}", h.peak_amplitudes());
        }
    }
}

#[test]
fn swaps_write_no_amplitudes() {
    let mut h = HybridState::from_ket(DenseKet::random(10, &mut rng::seeded(5)), EngineConfig::default()).unwrap();
    h.flush_all().unwrap();
    let before = ket::counters();
    let mut r = rng::seeded(6);
    for _ in 0..1000 {
        let a = rng::below(&mut r, 10) as usize;
        let b = (a + 1 + rng::below(&mut r, 9) as usize) % 10;
        h.apply_gate(&Gate::swap(a, b)).unwrap();
    }
    let d = ket::counters().since(before);
    assert_eq!((d.passes, d.allocations), (0, 0));
}

#[test]
fn rounding_never_raises_peak_memory() {
    let c = build_random_circuit(20, 8, 2024).unwrap();
    let exact = simulate(&c, &EngineConfig::default()).unwrap();
    let rounded = simulate(&c, &EngineConfig::default().with_sdrp(0.3)).unwrap();
    assert!(rounded.peak_amplitudes() <= exact.peak_amplitudes());
}

#[test]
fn ghz_500_measures_on_tableau() {
    let c = qshard::circuit::build_ghz(500).unwrap();
    let before = ket::counters();
    let start = std::time::Instant::now();
    for seed in 0..4 {
        let mut h = simulate(&c, &EngineConfig::default().with_seed(seed)).unwrap();
        let bits = h.measure_all().unwrap();
        assert!(bits.iter().all(|&b| b == bits[0]));
    }
    assert!(start.elapsed().as_secs_f64() < 4.0);
    assert_eq!(ket::counters().since(before).allocations, 0);
}

#[test]
fn plus_states_sample_uniformly() {
    let mut c = qshard::circuit::Circuit::new(3).unwrap();
    for q in 0..3 {
        c.push(Gate::single(qshard::circuit::GateKind::H, q)).unwrap();
    }
    let mut counts = [0usize; 8];
    for seed in 0..8000 {
        let mut h = simulate(&c, &EngineConfig::default().with_seed(seed)).unwrap();
        let bits = h.measure_all().unwrap();
        counts[bits.iter().enumerate().map(|(q, &b)| (b as usize) << q).sum::<usize>()] += 1;
    }
    // Multinomial cell: mean 1000, σ = √(8000 · 1/8 · 7/8).
    let sigma = (8000.0f64 * 0.125 * 0.875).sqrt();
    for c in counts {
        assert!((c as f64 - 1000.0).abs() <= 3.0 * sigma, "{counts:?}");
    }
}
