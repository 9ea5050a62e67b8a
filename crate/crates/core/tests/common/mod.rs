#![allow(dead_code)]

use std::f64::consts::PI;

use qshard::circuit::{build_random_circuit, Circuit, Gate, GateKind};
use qshard::rng::{self, SimRng};

fn pick_single(r: &mut SimRng) -> GateKind {
    match rng::below(r, 9) {
        0 => GateKind::H,
        1 => GateKind::X,
        2 => GateKind::Y,
        3 => GateKind::Z,
        4 => GateKind::Phase(PI / 2.0),
        5 => GateKind::Phase(-PI / 2.0),
        6 => GateKind::Rz(rng::uniform(r) * 2.0 * PI),
        7 => GateKind::Phase(PI / 4.0),
        _ => GateKind::U3 {
            theta: rng::uniform(r) * 2.0 * PI,
            phi: rng::uniform(r) * 2.0 * PI,
            lambda: rng::uniform(r) * 2.0 * PI,
        },
    }
}

fn distinct(r: &mut SimRng, width: usize, k: usize) -> Vec<usize> {
    let mut v: Vec<usize> = Vec::new();
    while v.len() < k {
        let q = rng::below(r, width as u64) as usize;
        if !v.contains(&q) {
            v.push(q);
        }
    }
    v
}

/// Gate soup mixing Clifford and non-Clifford gates, both control
/// polarities, SWAPs and doubly controlled gates.
pub fn mixed_circuit(width: usize, gates: usize, seed: u64) -> Circuit {
    let mut r = rng::seeded(seed);
    let mut c = Circuit::new(width).unwrap();
    for _ in 0..gates {
        let kind = rng::below(&mut r, 10);
        let g = if width < 2 || kind < 4 {
            Gate::single(pick_single(&mut r), rng::below(&mut r, width as u64) as usize)
        } else if kind == 4 {
            let q = distinct(&mut r, width, 2);
            Gate::swap(q[0], q[1])
        } else if kind == 5 && width >= 3 {
            let q = distinct(&mut r, width, 3);
            let inner = if rng::coin(&mut r) { GateKind::X } else { GateKind::Phase(PI / 3.0) };
            Gate::new(
                GateKind::Controlled {
                    inner: Box::new(inner),
                    controls: vec![q[0], q[1]],
                    polarity: vec![rng::coin(&mut r), true],
                },
                vec![q[2]],
            )
        } else {
            let q = distinct(&mut r, width, 2);
            let inner = match rng::below(&mut r, 6) {
                0 => GateKind::X,
                1 => GateKind::Y,
                2 => GateKind::Z,
                3 => GateKind::Phase(rng::uniform(&mut r) * 2.0 * PI),
                4 => GateKind::H,
                _ => pick_single(&mut r),
            };
            Gate::controlled(inner, q[0], rng::below(&mut r, 4) != 0, q[1])
        };
        c.push(g).unwrap();
    }
    c
}

/// Random Clifford circuit (optionally with measurements).
pub fn clifford_circuit(width: usize, gates: usize, seed: u64, measure: bool) -> Circuit {
    let mut r = rng::seeded(seed);
    let mut c = Circuit::new(width).unwrap();
    for _ in 0..gates {
        let k = rng::below(&mut r, if measure { 11 } else { 10 });
        let q = rng::below(&mut r, width as u64) as usize;
        let g = match k {
            0 => Gate::single(GateKind::H, q),
            1 => Gate::single(GateKind::Phase(PI / 2.0), q),
            2 => Gate::single(GateKind::Phase(-PI / 2.0), q),
            3 => Gate::single(GateKind::X, q),
            4 => Gate::single(GateKind::Y, q),
            5 => Gate::single(GateKind::Z, q),
            10 => Gate::single(GateKind::Measure, q),
            _ if width < 2 => Gate::single(GateKind::H, q),
            6 => {
                let p = distinct(&mut r, width, 2);
                Gate::swap(p[0], p[1])
            }
            _ => {
                let p = distinct(&mut r, width, 2);
                let inner = [GateKind::X, GateKind::Y, GateKind::Z][k as usize - 7].clone();
                Gate::controlled(inner, p[0], rng::coin(&mut r), p[1])
            }
        };
        c.push(g).unwrap();
    }
    c
}

/// The 300-circuit exactness suite: half Sycamore-style random circuits,
/// half mixed gate soups; width ≤ 10, depth ≤ 10.
pub fn exactness_suite() -> Vec<Circuit> {
    let mut r = rng::seeded(0x5eed);
    (0..300)
        .map(|i| {
            let width = 2 + rng::below(&mut r, 9) as usize;
            let depth = 1 + rng::below(&mut r, 10) as usize;
            if i % 2 == 0 {
                build_random_circuit(width, depth, i as u64).unwrap()
            } else {
                mixed_circuit(width, depth * width, i as u64)
            }
        })
        .collect()
}
