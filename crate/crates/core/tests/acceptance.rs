//! Acceptance report: one line per criterion, nonzero exit on any failure
//! not marked unattainable.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use qshard::circuit::{build_ghz, build_qft, GateKind};
use qshard::engine::{simulate, EngineConfig, HybridState, Optimizations};
use qshard::ket::{self, fidelity, DenseKet};
use qshard::matrix::{self, C64};
use qshard::rng;
use qshard::tableau::StabilizerShard;
use qshard::validate::{
    default_p_grid, dense_reference, dense_reference_forced, dft_oracle, fidelity_pairs, heatmap, min_sdrp_series,
    rmse, sdrp_sweep, VALIDATION_GRID,
};

#[derive(PartialEq)]
enum Verdict {
    Pass,
    Fail,
    /// Fails because the stated condition cannot occur; reported, not gating.
    Unattainable,
}

struct Report {
    lines: Vec<(String, Verdict, String)>,
}

impl Report {
    fn record(&mut self, id: &str, verdict: Verdict, detail: String) {
        let tag = match verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => "FAIL",
            Verdict::Unattainable => "FAIL (unattainable)",
        };
        println!("[{tag}] {id}: {detail}");
        self.lines.push((id.to_string(), verdict, detail));
    }

    fn check(&mut self, id: &str, ok: bool, detail: String) {
        self.record(id, if ok { Verdict::Pass } else { Verdict::Fail }, detail);
    }
}

fn max_amp_err(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn time_qft(n: usize, ghz: bool, repeats: usize) -> f64 {
    let mut c = if ghz { build_ghz(n).unwrap() } else { qshard::circuit::Circuit::new(n).unwrap() };
    c.extend(&build_qft(n).unwrap()).unwrap();
    let run = || {
        let t = Instant::now();
        simulate(&c, &EngineConfig::default()).unwrap();
        t.elapsed().as_secs_f64()
    };
    run();
    median((0..repeats).map(|_| run()).collect())
}

/// Least-squares slope of `ln t` against `n`, as a per-qubit growth factor.
fn growth_factor(points: &[(usize, f64)]) -> f64 {
    let m = points.len() as f64;
    let mx = points.iter().map(|p| p.0 as f64).sum::<f64>() / m;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / m;
    let sxy: f64 = points.iter().map(|p| (p.0 as f64 - mx) * (p.1.ln() - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 as f64 - mx).powi(2)).sum();
    (sxy / sxx).exp()
}

fn criterion_1(r: &mut Report) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for n in 2..=20 {
        let mut h = simulate(&build_qft(n).unwrap(), &EngineConfig::default()).unwrap();
        let out = h.full_ket().unwrap();
        let d = dft_oracle(DenseKet::zero(n).amplitudes()).unwrap();
        worst = worst.max(max_amp_err(out.amplitudes(), &d));
    }
    let mut rnd = rng::seeded(1);
    for n in 2..=12 {
        let qft = build_qft(n).unwrap();
        for _ in 0..50 {
            let x = DenseKet::random(n, &mut rnd);
            let d = dft_oracle(x.amplitudes()).unwrap();
            let mut h = HybridState::from_ket(x, EngineConfig::default()).unwrap();
            h.apply_circuit(&qft).unwrap();
            worst = worst.max(max_amp_err(h.full_ket().unwrap().amplitudes(), &d));
        }
    }
    let secs = t.elapsed().as_secs_f64();
    r.check(
        "1 QFT vs DFT oracle",
        worst <= 1e-9 && secs < 120.0,
        format!("max amplitude error {worst:.2e} (tol 1e-9), {secs:.1} s (limit 120 s)"),
    );
}

fn criterion_2(r: &mut Report) {
    let mut peak_ok = true;
    let mut zero = Vec::new();
    for n in (10..=30).step_by(2) {
        let h = simulate(&build_qft(n).unwrap(), &EngineConfig::default()).unwrap();
        peak_ok &= h.peak_amplitudes() <= 8 * n;
        zero.push((n, time_qft(n, false, 5)));
    }
    let zero_growth = growth_factor(&zero);
    let ghz: Vec<(usize, f64)> = (15..=19).map(|n| (n, time_qft(n, true, 3))).collect();
    let ghz_growth = growth_factor(&ghz);
    // Sub-exponential: far below doubling per qubit over 10..30.
    let ok = peak_ok && zero_growth < 1.3 && ghz_growth >= 1.7;
    r.check(
        "2 factorized-input scaling",
        ok,
        format!(
            "zero input peak <= 8n: {peak_ok}; zero-input growth x{zero_growth:.3}/qubit over n=10..30 (must be < 1.3); GHZ growth x{ghz_growth:.2}/qubit over n=15..19 (must be >= 1.7)"
        ),
    );
}

fn criterion_3(r: &mut Report) {
    let t = Instant::now();
    let suite = common::exactness_suite();
    let refs: Vec<_> = suite.iter().map(|c| dense_reference(c).unwrap()).collect();
    let mut worst: f64 = 1.0;
    for mask in 0..(1u8 << Optimizations::COUNT) {
        let cfg = EngineConfig::default().with_optimizations(Optimizations::from_mask(mask));
        for (c, reference) in suite.iter().zip(&refs) {
            let mut h = simulate(c, &cfg).unwrap();
            worst = worst.min(fidelity(&h.full_ket().unwrap(), reference).unwrap());
        }
    }
    let secs = t.elapsed().as_secs_f64();
    r.check(
        "3 exactness of rewrites",
        worst >= 1.0 - 1e-9 && secs < 600.0,
        format!("300 circuits x 32 flag subsets, min fidelity {worst:.12} (tol 1 - 1e-9), {secs:.1} s (limit 600 s)"),
    );
}

/// `√(1−ε)|φ⟩|a⟩ + √ε|φ⊥⟩|a⊥⟩` with qubit 0 holding `φ`.
fn schmidt_state(eps: f64, width: usize, r: &mut rng::SimRng) -> DenseKet {
    let a = DenseKet::random(width - 1, r);
    let b = DenseKet::random(width - 1, r);
    let ov: C64 = a.amplitudes().iter().zip(b.amplitudes()).map(|(x, y)| x.conj() * y).sum();
    let mut perp: Vec<C64> = b.amplitudes().iter().zip(a.amplitudes()).map(|(y, x)| y - ov * x).collect();
    let nrm = perp.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    perp.iter_mut().for_each(|z| *z /= nrm);
    let mut amps = vec![matrix::ZERO; 1 << width];
    for j in 0..a.len() {
        amps[j << 1] = (1.0 - eps).sqrt() * a.amplitude(j);
        amps[(j << 1) | 1] = eps.sqrt() * perp[j];
    }
    let mut k = DenseKet::from_amplitudes(amps).unwrap();
    let [t, p, l] = [0; 3].map(|_| rng::uniform(r) * 6.283185307179586);
    k.apply_1q(0, &matrix::u3(t, p, l)).unwrap();
    k
}

fn criterion_4(r: &mut Report) {
    let mut rnd = rng::seeded(4);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for &eps in &[0.001, 0.01, 0.1, 0.25, 0.5] {
        for i in 0..20 {
            let input = schmidt_state(eps, 3 + i % 4, &mut rnd);
            let mut h = HybridState::from_ket(input.clone(), EngineConfig::default()).unwrap();
            let got = h.sdrp_round(0, 1.0).unwrap().expect("projection happens at p = 1");
            let f = fidelity(&h.full_ket().unwrap(), &input).unwrap();
            worst = worst.max((f - (1.0 - eps)).abs()).max((got - eps).abs());
            count += 1;
        }
    }
    r.check(
        "4 per-projection fidelity",
        worst <= 1e-9,
        format!("{count} states, max |F - (1 - eps)| and |eps_measured - eps| = {worst:.2e} (tol 1e-9)"),
    );
}

fn criterion_5(r: &mut Report) {
    let t = Instant::now();
    let grid = default_p_grid();
    let mut all = Vec::new();
    let mut cells = Vec::new();
    let mut cells_ok = true;
    for (i, &(w, d)) in VALIDATION_GRID.iter().enumerate() {
        let recs = sdrp_sweep(w, d, 100, &grid, 0xA11CE + i as u64, &EngineConfig::default());
        let pairs = fidelity_pairs(&recs);
        let complete = pairs.len() == 100 * grid.len();
        let e = rmse(&pairs).unwrap();
        cells_ok &= complete && e <= 0.12;
        cells.push(format!("{w}x{d}={e:.4}"));
        all.extend(pairs);
    }
    let overall = rmse(&all).unwrap();
    r.check(
        "5 fidelity-model calibration",
        cells_ok && overall <= 0.10,
        format!(
            "per-cell RMSE {} (tol 0.12), overall {overall:.4} (tol 0.10), {} pairs, {:.0} s",
            cells.join(" "),
            all.len(),
            t.elapsed().as_secs_f64()
        ),
    );
}

fn non_increasing(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[1] <= w[0] + slack)
}

fn criterion_6(r: &mut Report) {
    let depths: Vec<usize> = (1..=10).collect();
    let series = min_sdrp_series(16, &depths, 100, 1 << 20, 0.025, 0x6A).unwrap();
    let means: Vec<f64> = series.iter().map(|p| p.mean_f_model).collect();
    r.check(
        "6a min-SDRP depth series, width 16, budget 2^20: monotone",
        non_increasing(&means, 0.05),
        format!("mean f_model by depth {means:.3?} (slack 0.05)"),
    );
    let saturation = series.iter().find(|p| 2 * p.exact < p.circuits);
    match saturation {
        Some(p) => r.check(
            "6a min-SDRP depth series, width 16, budget 2^20: below 0.5 at saturation",
            p.mean_f_model < 0.5,
            format!("saturation at depth {}, mean f_model {:.3}", p.depth, p.mean_f_model),
        ),
        None => r.record(
            "6a min-SDRP depth series, width 16, budget 2^20: below 0.5 at saturation",
            Verdict::Unattainable,
            format!(
                "a 16-qubit state holds 2^16 amplitudes, so a 2^20 budget never saturates (max peak {})",
                series.iter().map(|p| p.max_peak_amplitudes).max().unwrap()
            ),
        ),
    }
    let scaled = min_sdrp_series(16, &depths, 100, 1 << 12, 0.025, 0x6A).unwrap();
    let means: Vec<f64> = scaled.iter().map(|p| p.mean_f_model).collect();
    let sat = scaled.iter().find(|p| 2 * p.exact < p.circuits);
    r.check(
        "6a' same series at budget 2^12 (saturating)",
        non_increasing(&means, 0.05) && sat.is_some_and(|p| p.mean_f_model < 0.5),
        format!(
            "mean f_model by depth {means:.3?}; saturation depth {:?}",
            sat.map(|p| (p.depth, (p.mean_f_model * 1000.0).round() / 1000.0))
        ),
    );

    let ps: Vec<f64> = (1..=10).map(|i| i as f64 / 10.0).collect();
    let depths: Vec<usize> = (1..=8).collect();
    let t = Instant::now();
    let cells = heatmap(25, &depths, &ps, 100, 1 << 20, 0x6B);
    let n = 100;
    let value = |d: usize, k: usize| {
        let c = &cells[d * ps.len() + k];
        (2 * c.completed >= n).then(|| c.mean_f_model.unwrap())
    };
    let mut violations = Vec::new();
    for k in 0..ps.len() {
        let col: Vec<f64> = (0..depths.len()).map_while(|d| value(d, k)).collect();
        if !non_increasing(&col, 0.05) {
            violations.push(format!("p={} over depth", ps[k]));
        }
    }
    for d in 0..depths.len() {
        let row: Vec<f64> = (0..ps.len()).filter_map(|k| value(d, k)).collect();
        if !non_increasing(&row, 0.05) {
            violations.push(format!("depth {} over p", depths[d]));
        }
    }
    let populated = (0..depths.len()).flat_map(|d| (0..ps.len()).map(move |k| (d, k))).filter(|&(d, k)| value(d, k).is_some()).count();
    r.check(
        "6b width-25 p x depth heat map",
        violations.is_empty() && populated >= cells.len() / 2,
        format!(
            "{populated}/{} cells with >= 50% completions; monotonicity violations beyond 0.05: {violations:?}; {:.0} s",
            cells.len(),
            t.elapsed().as_secs_f64()
        ),
    );
}

fn criterion_7(r: &mut Report) {
    let mut worst: f64 = 1.0;
    for seed in 0..500u64 {
        let c = common::clifford_circuit(1 + (seed % 6) as usize, 1 + (seed * 7 % 40) as usize, seed, true);
        let mut t = StabilizerShard::new(c.width()).unwrap();
        let mut rnd = rng::seeded(seed);
        let mut outcomes = Vec::new();
        for g in c.gates() {
            if let GateKind::Measure = g.kind {
                outcomes.push(t.measure(g.targets[0], &mut rnd).unwrap());
            } else {
                t.apply_clifford(g).unwrap();
            }
        }
        let dense = dense_reference_forced(&c, &outcomes).unwrap();
        worst = worst.min(fidelity(&t.to_ket(), &dense).unwrap());
    }
    let ghz = build_ghz(500).unwrap();
    let before = ket::counters();
    let start = Instant::now();
    let mut h = simulate(&ghz, &EngineConfig::default().with_seed(7)).unwrap();
    let bits = h.measure_all().unwrap();
    let secs = start.elapsed().as_secs_f64();
    let allocs = ket::counters().since(before).allocations;
    let correlated = bits.iter().all(|&b| b == bits[0]);
    r.check(
        "7 stabilizer path",
        worst >= 1.0 - 1e-9 && secs < 1.0 && correlated && allocs == 0,
        format!(
            "500 Clifford circuits min fidelity {worst:.12} (tol 1 - 1e-9); GHZ-500 {secs:.3} s (limit 1 s), correlated {correlated}, dense allocations {allocs}"
        ),
    );
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut r = Report { lines: Vec::new() };
    criterion_1(&mut r);
    criterion_2(&mut r);
    criterion_3(&mut r);
    criterion_4(&mut r);
    criterion_5(&mut r);
    criterion_6(&mut r);
    criterion_7(&mut r);
    let secs = start.elapsed().as_secs_f64();
    r.check(
        "8 headless suite",
        secs < 1800.0,
        format!("acceptance run {secs:.0} s (limit 1800 s); invariant suites run under cargo test"),
    );
    let failed = r.lines.iter().filter(|l| l.1 == Verdict::Fail).count();
    let unattainable = r.lines.iter().filter(|l| l.1 == Verdict::Unattainable).count();
    println!(
        "acceptance: {} checks, {failed} failed, {unattainable} unattainable",
        r.lines.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
