mod common;

use qshard::circuit::GateKind;
use qshard::ket::{self, fidelity};
use qshard::matrix::C64;
use qshard::rng;
use qshard::tableau::StabilizerShard;
use qshard::validate::{dense_reference, dense_reference_forced};

/// Runs a Clifford circuit on a tableau; returns it, the measurement record
/// and the product of dropped global phases.
fn run(c: &qshard::circuit::Circuit, seed: u64, check: bool) -> (StabilizerShard, Vec<bool>, C64) {
    let mut t = StabilizerShard::new(c.width()).unwrap();
    let mut r = rng::seeded(seed);
    let mut outcomes = Vec::new();
    let mut phase = C64::new(1.0, 0.0);
    for g in c.gates() {
        if let GateKind::Measure = g.kind {
            outcomes.push(t.measure(g.targets[0], &mut r).unwrap());
        } else {
            phase *= t.apply_clifford(g).unwrap();
        }
        if check {
            assert!(t.symplectic_ok());
        }
    }
    (t, outcomes, phase)
}

#[test]
fn symplectic_invariant_holds_after_every_gate() {
    for seed in 0..100 {
        let c = common::clifford_circuit(1 + seed as usize % 6, 40, seed, true);
        run(&c, seed, true);
    }
}

#[test]
fn tableau_agrees_with_dense_replay() {
    for seed in 0..500u64 {
        let width = 1 + (seed % 6) as usize;
        let gates = 1 + (seed * 7 % 40) as usize;
        let c = common::clifford_circuit(width, gates, seed, true);
        let (t, outcomes, _) = run(&c, seed ^ 0xabc, false);
        let dense = dense_reference_forced(&c, &outcomes).unwrap();
        let f = fidelity(&t.to_ket(), &dense).unwrap();
        assert!(f >= 1.0 - 1e-9, "seed {seed}: {f}");
    }
}

#[test]
fn clifford_words_replay_exactly() {
    for seed in 0..50 {
        let c = common::clifford_circuit(4, 20, seed, false);
        let (t, _, phase) = run(&c, seed, false);
        let mut k = t.to_ket();
        k.scale(phase);
        let dense = dense_reference(&c).unwrap();
        for (a, b) in k.amplitudes().iter().zip(dense.amplitudes()) {
            assert!((a - b).norm() < 1e-10);
        }
    }
}

#[test]
fn replayed_state_is_stabilized() {
    for seed in 0..50 {
        let c = common::clifford_circuit(5, 40, seed + 1000, true);
        let (t, _, _) = run(&c, seed, false);
        let k = t.to_ket();
        for i in 0..5 {
            let mut v = k.clone();
            t.stabilizer(i).apply_dense(&mut v);
            let ip: C64 = v.amplitudes().iter().zip(k.amplitudes()).map(|(x, y)| x.conj() * y).sum();
            assert!((ip - C64::new(1.0, 0.0)).norm() < 1e-9, "seed {seed} row {i}");
        }
    }
}

#[test]
fn no_dense_allocation_before_replay() {
    let before = ket::counters();
    for seed in 0..20 {
        let c = common::clifford_circuit(60, 400, seed, true);
        run(&c, seed, false);
    }
    assert_eq!(ket::counters().since(before).allocations, 0);
}
