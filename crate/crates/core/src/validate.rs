//! Reference oracles and the fidelity-validation harness.

use std::f64::consts::PI;
use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::circuit::{build_random_circuit, Circuit, CircuitError, Gate, GateKind};
use crate::engine::{simulate, EngineConfig, EngineError};
use crate::ket::{fidelity, DenseKet, KetError};
use crate::matrix::C64;
use crate::rng::{derive_seed, RNG_ALGORITHM};

/// Amplitude ceiling for the dense reference path.
pub const REFERENCE_BUDGET: usize = 1 << 26;

/// Desk-scale validation cells as `(width, depth)`.
pub const VALIDATION_GRID: [(usize, usize); 4] = [(6, 6), (12, 6), (12, 12), (15, 15)];

#[derive(Debug, Error)]
pub enum ValidateError {
    #[error("length {0} is not a power of two")]
    NotPowerOfTwo(usize),
    #[error("empty input")]
    Empty,
    #[error("reference needs {needed} amplitudes, budget {budget}")]
    Budget { needed: u128, budget: usize },
    #[error("measurement at gate {0} has no forced outcome")]
    MissingOutcome(usize),
    #[error("p_step must be positive")]
    BadStep,
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Ket(#[from] KetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn check_pow2(len: usize) -> Result<(), ValidateError> {
    if len == 0 || !len.is_power_of_two() {
        Err(ValidateError::NotPowerOfTwo(len))
    } else {
        Ok(())
    }
}

fn fft(x: &[C64]) -> Vec<C64> {
    let n = x.len();
    if n == 1 {
        return x.to_vec();
    }
    let even: Vec<C64> = x.iter().step_by(2).copied().collect();
    let odd: Vec<C64> = x.iter().skip(1).step_by(2).copied().collect();
    let (e, o) = (fft(&even), fft(&odd));
    let mut y = vec![C64::new(0.0, 0.0); n];
    for k in 0..n / 2 {
        let t = C64::from_polar(1.0, 2.0 * PI * k as f64 / n as f64) * o[k];
        y[k] = e[k] + t;
        y[k + n / 2] = e[k] - t;
    }
    y
}

/// `y_j = N^{-1/2} Σ_k x_k e^{2πi jk/N}` by radix-2 recursion.
pub fn dft_oracle(x: &[C64]) -> Result<Vec<C64>, ValidateError> {
    check_pow2(x.len())?;
    let s = 1.0 / (x.len() as f64).sqrt();
    Ok(fft(x).into_iter().map(|v| v * s).collect())
}

/// The same transform as [`dft_oracle`] by direct summation.
pub fn dft_direct(x: &[C64]) -> Result<Vec<C64>, ValidateError> {
    check_pow2(x.len())?;
    let n = x.len();
    let s = 1.0 / (n as f64).sqrt();
    Ok((0..n)
        .map(|j| {
            x.iter()
                .enumerate()
                .map(|(k, v)| v * C64::from_polar(1.0, 2.0 * PI * ((j * k) % n) as f64 / n as f64))
                .sum::<C64>()
                * s
        })
        .collect())
}

/// Applies one gate with plain dense kernels. Measurements are rejected.
pub fn apply_dense(ket: &mut DenseKet, g: &Gate) -> Result<(), ValidateError> {
    match &g.kind {
        GateKind::Swap => ket.apply_swap(g.targets[0], g.targets[1])?,
        GateKind::Measure => return Err(ValidateError::MissingOutcome(0)),
        GateKind::Controlled {
            inner,
            controls,
            polarity,
        } => {
            let m = inner
                .matrix()
                .ok_or_else(|| CircuitError::Unrepresentable(inner.name().into()))?;
            ket.apply_controlled(controls, polarity, g.targets[0], &m)?
        }
        k => ket.apply_1q(g.targets[0], &k.matrix().expect("single-qubit kind"))?,
    }
    Ok(())
}

fn run_dense(c: &Circuit, mut ket: DenseKet, outcomes: &[bool]) -> Result<DenseKet, ValidateError> {
    let mut next = outcomes.iter();
    for (i, g) in c.gates().iter().enumerate() {
        if let GateKind::Measure = g.kind {
            let &b = next.next().ok_or(ValidateError::MissingOutcome(i))?;
            ket.project_and_renormalize(g.targets[0], b)?;
        } else {
            apply_dense(&mut ket, g)?;
        }
    }
    Ok(ket)
}

fn reference_budget(width: usize) -> Result<(), ValidateError> {
    if width >= 64 || (1usize << width) > REFERENCE_BUDGET {
        return Err(ValidateError::Budget {
            needed: if width >= 127 { u128::MAX } else { 1u128 << width },
            budget: REFERENCE_BUDGET,
        });
    }
    Ok(())
}

/// Runs `c` on |0…0⟩ with dense kernels only.
pub fn dense_reference(c: &Circuit) -> Result<DenseKet, ValidateError> {
    reference_budget(c.width())?;
    run_dense(c, DenseKet::zero(c.width()), &[])
}

/// Runs `c` on an arbitrary input state.
pub fn dense_reference_from(c: &Circuit, input: DenseKet) -> Result<DenseKet, ValidateError> {
    if input.width() != c.width() {
        return Err(KetError::WidthMismatch(input.width(), c.width()).into());
    }
    run_dense(c, input, &[])
}

/// Runs `c` on |0…0⟩, post-selecting its measurements on `outcomes` in order.
pub fn dense_reference_forced(c: &Circuit, outcomes: &[bool]) -> Result<DenseKet, ValidateError> {
    reference_budget(c.width())?;
    run_dense(c, DenseKet::zero(c.width()), outcomes)
}

/// `(f_exact, f_model)` for one engine run against the dense reference.
pub fn exact_fidelity(c: &Circuit, cfg: &EngineConfig) -> Result<(f64, f64), ValidateError> {
    let reference = dense_reference(c)?;
    let mut h = simulate(c, cfg)?;
    let out = h.full_ket()?;
    Ok((fidelity(&out, &reference)?, h.estimated_fidelity()))
}

/// Root-mean-square of `f_model − f_exact`.
pub fn rmse(pairs: &[(f64, f64)]) -> Result<f64, ValidateError> {
    if pairs.is_empty() {
        return Err(ValidateError::Empty);
    }
    let s: f64 = pairs.iter().map(|(m, e)| (m - e) * (m - e)).sum();
    Ok((s / pairs.len() as f64).sqrt())
}

/// `0, 0.025, …, 1` (41 points).
pub fn default_p_grid() -> Vec<f64> {
    (0..=40).map(|i| i as f64 / 40.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRecord {
    pub width: usize,
    pub depth: usize,
    pub seed: u64,
    pub p: f64,
    /// Empty when the engine run failed.
    pub f_model: Option<f64>,
    pub f_exact: Option<f64>,
    pub wall_ms: u64,
    pub peak_amplitudes: usize,
    #[serde(skip)]
    pub error: Option<String>,
}

/// Seed of circuit `index` in an ensemble keyed by `base`.
pub fn circuit_seed(base: u64, index: usize) -> u64 {
    derive_seed(base, index as u64)
}

fn sweep_circuit(width: usize, depth: usize, seed: u64, p_grid: &[f64], cfg: &EngineConfig) -> Vec<SweepRecord> {
    let circuit = match build_random_circuit(width, depth, seed) {
        Ok(c) => c,
        Err(e) => {
            return p_grid
                .iter()
                .map(|&p| SweepRecord {
                    width,
                    depth,
                    seed,
                    p,
                    f_model: None,
                    f_exact: None,
                    wall_ms: 0,
                    peak_amplitudes: 0,
                    error: Some(e.to_string()),
                })
                .collect()
        }
    };
    let reference = dense_reference(&circuit).ok();
    p_grid
        .iter()
        .map(|&p| {
            let start = Instant::now();
            let run = simulate(&circuit, &cfg.clone().with_sdrp(p));
            let wall_ms = start.elapsed().as_millis() as u64;
            match run {
                Ok(mut h) => {
                    let f_exact = reference
                        .as_ref()
                        .and_then(|r| h.full_ket().ok().and_then(|k| fidelity(&k, r).ok()));
                    SweepRecord {
                        width,
                        depth,
                        seed,
                        p,
                        f_model: Some(h.estimated_fidelity()),
                        f_exact,
                        wall_ms,
                        peak_amplitudes: h.peak_amplitudes(),
                        error: None,
                    }
                }
                Err(e) => SweepRecord {
                    width,
                    depth,
                    seed,
                    p,
                    f_model: None,
                    f_exact: None,
                    wall_ms,
                    peak_amplitudes: 0,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// One record per (circuit, p); circuits run in parallel, output order is
/// circuit-major and independent of scheduling.
pub fn sdrp_sweep(
    width: usize,
    depth: usize,
    n_circuits: usize,
    p_grid: &[f64],
    base_seed: u64,
    cfg: &EngineConfig,
) -> Vec<SweepRecord> {
    (0..n_circuits)
        .into_par_iter()
        .map(|i| sweep_circuit(width, depth, circuit_seed(base_seed, i), p_grid, cfg))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// `(f_model, f_exact)` pairs of the records that have both.
pub fn fidelity_pairs(records: &[SweepRecord]) -> Vec<(f64, f64)> {
    records
        .iter()
        .filter_map(|r| Some((r.f_model?, r.f_exact?)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MinSdrpResult {
    /// `None` when even `p = 1` runs out of memory.
    pub p_min: Option<f64>,
    pub f_model: f64,
    pub peak_amplitudes: usize,
    /// Engine runs performed, failures included.
    pub runs: usize,
}

/// `1, 1 − step, …` down to 0 inclusive.
pub fn descending_p_values(step: f64) -> Result<Vec<f64>, ValidateError> {
    if !(step > 0.0) {
        return Err(ValidateError::BadStep);
    }
    let k = (1.0 / step + 1e-9).floor() as usize;
    let mut v: Vec<f64> = (0..=k)
        .map(|i| {
            let p = 1.0 - i as f64 * step;
            if p.abs() < step * 1e-6 {
                0.0
            } else {
                p
            }
        })
        .collect();
    if *v.last().unwrap() != 0.0 {
        v.push(0.0);
    }
    Ok(v)
}

/// Lowers `p` from 1 by `p_step` until the run exceeds `mem_budget`; returns
/// the last successful `p`. When the full state fits the budget no run can
/// fail, so only `p = 0` is executed.
pub fn min_sdrp_search(
    width: usize,
    depth: usize,
    seed: u64,
    mem_budget: usize,
    p_step: f64,
) -> Result<MinSdrpResult, ValidateError> {
    let circuit = build_random_circuit(width, depth, seed)?;
    let cfg = EngineConfig::default().with_mem_budget(mem_budget).with_seed(seed);
    let mut values = descending_p_values(p_step)?;
    if width < 64 && (1usize << width) <= mem_budget {
        values = vec![0.0];
    }
    let mut best = MinSdrpResult {
        p_min: None,
        f_model: 0.0,
        peak_amplitudes: 0,
        runs: 0,
    };
    for p in values {
        best.runs += 1;
        match simulate(&circuit, &cfg.clone().with_sdrp(p)) {
            Ok(h) => {
                best.p_min = Some(p);
                best.f_model = h.estimated_fidelity();
                best.peak_amplitudes = h.peak_amplitudes();
            }
            Err(EngineError::OutOfMemory { .. }) => break,
            Err(e) => return Err(e.into()),
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DepthPoint {
    pub depth: usize,
    pub circuits: usize,
    pub feasible: usize,
    /// Circuits that completed at `p = 0`.
    pub exact: usize,
    pub mean_f_model: f64,
    pub mean_p_min: f64,
    pub max_peak_amplitudes: usize,
}

/// Min-SDRP search over `n_circuits` circuits per depth. Infeasible
/// circuits count as fidelity 0 in the mean.
pub fn min_sdrp_series(
    width: usize,
    depths: &[usize],
    n_circuits: usize,
    mem_budget: usize,
    p_step: f64,
    base_seed: u64,
) -> Result<Vec<DepthPoint>, ValidateError> {
    depths
        .iter()
        .map(|&depth| {
            let results: Vec<MinSdrpResult> = (0..n_circuits)
                .into_par_iter()
                .map(|i| {
                    let seed = circuit_seed(derive_seed(base_seed, depth as u64), i);
                    min_sdrp_search(width, depth, seed, mem_budget, p_step)
                })
                .collect::<Result<_, _>>()?;
            let feasible: Vec<&MinSdrpResult> = results.iter().filter(|r| r.p_min.is_some()).collect();
            let n = results.len().max(1) as f64;
            Ok(DepthPoint {
                depth,
                circuits: results.len(),
                feasible: feasible.len(),
                exact: feasible.iter().filter(|r| r.p_min == Some(0.0)).count(),
                mean_f_model: results.iter().map(|r| r.f_model).sum::<f64>() / n,
                mean_p_min: feasible.iter().map(|r| r.p_min.unwrap()).sum::<f64>() / feasible.len().max(1) as f64,
                max_peak_amplitudes: results.iter().map(|r| r.peak_amplitudes).max().unwrap_or(0),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HeatCell {
    pub depth: usize,
    pub p: f64,
    pub completed: usize,
    pub failed: usize,
    /// Mean estimated fidelity over completed runs; empty if none completed.
    pub mean_f_model: Option<f64>,
    pub max_peak_amplitudes: usize,
}

/// Mean estimated fidelity on a depth × p grid.
pub fn heatmap(
    width: usize,
    depths: &[usize],
    p_grid: &[f64],
    n_circuits: usize,
    mem_budget: usize,
    base_seed: u64,
) -> Vec<HeatCell> {
    let tasks: Vec<(usize, usize, usize)> = (0..depths.len())
        .flat_map(|d| (0..p_grid.len()).flat_map(move |k| (0..n_circuits).map(move |i| (d, k, i))))
        .collect();
    let runs: Vec<Option<(f64, usize)>> = tasks
        .par_iter()
        .map(|&(d, k, i)| {
            let seed = circuit_seed(derive_seed(base_seed, depths[d] as u64), i);
            let c = build_random_circuit(width, depths[d], seed).ok()?;
            let cfg = EngineConfig::default()
                .with_mem_budget(mem_budget)
                .with_seed(seed)
                .with_sdrp(p_grid[k]);
            simulate(&c, &cfg).ok().map(|h| (h.estimated_fidelity(), h.peak_amplitudes()))
        })
        .collect();
    let mut cells = Vec::new();
    for (d, &depth) in depths.iter().enumerate() {
        for (k, &p) in p_grid.iter().enumerate() {
            let base = (d * p_grid.len() + k) * n_circuits;
            let ok: Vec<(f64, usize)> = runs[base..base + n_circuits].iter().flatten().copied().collect();
            cells.push(HeatCell {
                depth,
                p,
                completed: ok.len(),
                failed: n_circuits - ok.len(),
                mean_f_model: (!ok.is_empty()).then(|| ok.iter().map(|r| r.0).sum::<f64>() / ok.len() as f64),
                max_peak_amplitudes: ok.iter().map(|r| r.1).max().unwrap_or(0),
            });
        }
    }
    cells
}

/// Provenance written as comment lines above every CSV.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvStamp {
    pub engine: String,
    pub rng: String,
    pub threads: usize,
}

impl EnvStamp {
    pub fn current() -> Self {
        EnvStamp {
            engine: format!("qshard {}", env!("CARGO_PKG_VERSION")),
            rng: RNG_ALGORITHM.to_string(),
            threads: rayon::current_num_threads(),
        }
    }

    pub fn write_comment(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "# engine={}, rng={}, threads={}", self.engine, self.rng, self.threads)
    }
}

/// Writes the stamp comment, a header row and one row per record.
pub fn write_csv<T: Serialize>(mut w: impl Write, stamp: &EnvStamp, rows: &[T]) -> Result<(), ValidateError> {
    stamp.write_comment(&mut w)?;
    let mut cw = csv::Writer::from_writer(w);
    for r in rows {
        cw.serialize(r)?;
    }
    cw.flush()?;
    Ok(())
}
