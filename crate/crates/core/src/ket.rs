//! Dense state-vector shards.
//!
//! Local qubit `q` of a shard is bit `q` of the amplitude index. Kernels over
//! shards of at least [`PARALLEL_MIN_AMPS`] amplitudes split the array into
//! disjoint stripes processed by the rayon pool; every kernel finishes before
//! returning.

use std::cell::Cell;
use std::io::{self, Write};

use rand::RngCore;
use rayon::prelude::*;
use thiserror::Error;

use crate::matrix::{Mat2, Pauli, C64, ONE, ZERO};
use crate::rng;

pub const PARALLEL_MIN_AMPS: usize = 1 << 14;

/// Default tolerance for exact factorization attempts.
pub const DEFAULT_SEPARABILITY_TOL: f64 = 1e-10;

/// Outcome probabilities below this are treated as impossible.
pub const MIN_OUTCOME_PROBABILITY: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KetError {
    #[error("qubit {qubit} out of range for shard width {width}")]
    QubitOutOfRange { qubit: usize, width: usize },
    #[error("qubit {0} appears more than once")]
    DuplicateQubit(usize),
    #[error("outcome {outcome} on qubit {qubit} has probability {probability:e}")]
    ImpossibleOutcome {
        qubit: usize,
        outcome: bool,
        probability: f64,
    },
    #[error("width mismatch: {0} vs {1}")]
    WidthMismatch(usize, usize),
    #[error("amplitude count {0} is not a power of two >= 2")]
    BadLength(usize),
    #[error("state norm {0} is not 1")]
    NotNormalized(f64),
}

thread_local! {
    static ALLOCATIONS: Cell<u64> = const { Cell::new(0) };
    static PASSES: Cell<u64> = const { Cell::new(0) };
}

/// Per-thread instrumentation: amplitude arrays allocated and mutating
/// kernel passes executed on this thread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KetCounters {
    pub allocations: u64,
    pub passes: u64,
}

impl KetCounters {
    pub fn since(self, earlier: KetCounters) -> KetCounters {
        KetCounters {
            allocations: self.allocations - earlier.allocations,
            passes: self.passes - earlier.passes,
        }
    }
}

pub fn counters() -> KetCounters {
    KetCounters {
        allocations: ALLOCATIONS.with(Cell::get),
        passes: PASSES.with(Cell::get),
    }
}

fn count_allocation() {
    ALLOCATIONS.with(|c| c.set(c.get() + 1));
}

fn count_pass() {
    PASSES.with(|c| c.set(c.get() + 1));
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlochVector {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl BlochVector {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        BlochVector { rx, ry, rz }
    }

    pub fn length(&self) -> f64 {
        (self.rx * self.rx + self.ry * self.ry + self.rz * self.rz).sqrt()
    }

    /// The pure single-qubit state whose Bloch vector points along `self`.
    /// A (numerically) zero vector maps to |0⟩.
    pub fn pure_state(&self) -> [C64; 2] {
        let len = self.length();
        if len < 1e-12 {
            return [ONE, ZERO];
        }
        let (x, y, z) = (self.rx / len, self.ry / len, self.rz / len);
        if 1.0 + z < 1e-12 {
            return [ZERO, ONE];
        }
        let c = ((1.0 + z) / 2.0).sqrt();
        let s = 1.0 / (2.0 * (1.0 + z)).sqrt();
        [C64::new(c, 0.0), C64::new(x * s, y * s)]
    }
}

/// Schmidt weight of the minor branch, `(1 - min(|r|, 1)) / 2`.
pub fn epsilon_from_bloch(r: &BlochVector) -> f64 {
    (1.0 - r.length().min(1.0)) / 2.0
}

/// Unitary mapping `phi` to |0⟩ (rows ⟨φ| and ⟨φ⊥|).
pub fn rotation_to_zero(phi: [C64; 2]) -> Mat2 {
    [[phi[0].conj(), phi[1].conj()], [-phi[1], phi[0]]]
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseKet {
    amps: Vec<C64>,
}

impl DenseKet {
    /// Computational-basis state `index` on `width` qubits.
    pub fn basis(width: usize, index: usize) -> Self {
        assert!(width >= 1 && index < 1 << width);
        let mut amps = vec![ZERO; 1 << width];
        amps[index] = ONE;
        count_allocation();
        DenseKet { amps }
    }

    pub fn zero(width: usize) -> Self {
        Self::basis(width, 0)
    }

    /// Single-qubit state from its two amplitudes (normalized here).
    pub fn qubit(a0: C64, a1: C64) -> Self {
        let n = (a0.norm_sqr() + a1.norm_sqr()).sqrt();
        count_allocation();
        DenseKet {
            amps: vec![a0 / n, a1 / n],
        }
    }

    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self, KetError> {
        if amps.len() < 2 || !amps.len().is_power_of_two() {
            return Err(KetError::BadLength(amps.len()));
        }
        let norm: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
        if (norm - 1.0).abs() > 1e-9 {
            return Err(KetError::NotNormalized(norm));
        }
        count_allocation();
        Ok(DenseKet { amps })
    }

    /// Haar-like random state: i.i.d. complex Gaussian amplitudes, normalized.
    pub fn random(width: usize, rng: &mut impl RngCore) -> Self {
        let mut amps: Vec<C64> = (0..1usize << width)
            .map(|_| {
                let u1 = 1.0 - rng::uniform(rng);
                let u2 = rng::uniform(rng);
                let r = (-2.0 * u1.ln()).sqrt();
                let t = 2.0 * std::f64::consts::PI * u2;
                C64::new(r * t.cos(), r * t.sin())
            })
            .collect();
        let n = amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        amps.iter_mut().for_each(|a| *a /= n);
        count_allocation();
        DenseKet { amps }
    }

    pub fn width(&self) -> usize {
        self.amps.len().trailing_zeros() as usize
    }

    pub fn len(&self) -> usize {
        self.amps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitude(&self, index: usize) -> C64 {
        self.amps[index]
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        let amps = &self.amps;
        block_sum(amps.len(), 0.0, |x, y| x + y, |k| amps[k].norm_sqr())
    }

    pub fn scale(&mut self, s: C64) {
        count_pass();
        if self.amps.len() >= PARALLEL_MIN_AMPS {
            self.amps.par_iter_mut().for_each(|a| *a *= s);
        } else {
            self.amps.iter_mut().for_each(|a| *a *= s);
        }
    }

    fn check_qubit(&self, q: usize) -> Result<(), KetError> {
        if q >= self.width() {
            Err(KetError::QubitOutOfRange {
                qubit: q,
                width: self.width(),
            })
        } else {
            Ok(())
        }
    }

    /// Runs `f(lo_index, a_lo, a_hi)` over every amplitude pair that differs
    /// only in bit `q`.
    fn for_each_pair<F>(&mut self, q: usize, f: F)
    where
        F: Fn(usize, &mut C64, &mut C64) + Sync + Send,
    {
        count_pass();
        let stride = 1usize << q;
        let block = stride << 1;
        let blocks = self.amps.len() / block;
        let f = &f;
        if self.amps.len() < PARALLEL_MIN_AMPS {
            for (b, chunk) in self.amps.chunks_mut(block).enumerate() {
                let (lo, hi) = chunk.split_at_mut(stride);
                for (i, (a, c)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    f(b * block + i, a, c);
                }
            }
        } else if blocks >= 64 {
            self.amps.par_chunks_mut(block).enumerate().for_each(|(b, chunk)| {
                let (lo, hi) = chunk.split_at_mut(stride);
                for (i, (a, c)) in lo.iter_mut().zip(hi.iter_mut()).enumerate() {
                    f(b * block + i, a, c);
                }
            });
        } else {
            for (b, chunk) in self.amps.chunks_mut(block).enumerate() {
                let (lo, hi) = chunk.split_at_mut(stride);
                lo.par_iter_mut()
                    .zip(hi.par_iter_mut())
                    .enumerate()
                    .with_min_len(1024)
                    .for_each(|(i, (a, c))| f(b * block + i, a, c));
            }
        }
    }

    pub fn apply_1q(&mut self, q: usize, m: &Mat2) -> Result<(), KetError> {
        self.check_qubit(q)?;
        let m = *m;
        if m[0][1] == ZERO && m[1][0] == ZERO {
            let (d0, d1) = (m[0][0], m[1][1]);
            self.for_each_pair(q, move |_, a, b| {
                *a *= d0;
                *b *= d1;
            });
        } else {
            self.for_each_pair(q, move |_, a, b| {
                let (x, y) = (*a, *b);
                *a = m[0][0] * x + m[0][1] * y;
                *b = m[1][0] * x + m[1][1] * y;
            });
        }
        Ok(())
    }

    /// Applies `m` to `target` on basis states where every control bit equals
    /// its polarity.
    pub fn apply_controlled(
        &mut self,
        controls: &[usize],
        polarity: &[bool],
        target: usize,
        m: &Mat2,
    ) -> Result<(), KetError> {
        assert_eq!(controls.len(), polarity.len());
        self.check_qubit(target)?;
        let mut mask = 0usize;
        let mut value = 0usize;
        for (&c, &p) in controls.iter().zip(polarity) {
            self.check_qubit(c)?;
            if c == target || mask & (1 << c) != 0 {
                return Err(KetError::DuplicateQubit(c));
            }
            mask |= 1 << c;
            if p {
                value |= 1 << c;
            }
        }
        let m = *m;
        self.for_each_pair(target, move |i, a, b| {
            if i & mask == value {
                let (x, y) = (*a, *b);
                *a = m[0][0] * x + m[0][1] * y;
                *b = m[1][0] * x + m[1][1] * y;
            }
        });
        Ok(())
    }

    pub fn apply_swap(&mut self, a: usize, b: usize) -> Result<(), KetError> {
        self.check_qubit(a)?;
        self.check_qubit(b)?;
        if a == b {
            return Err(KetError::DuplicateQubit(a));
        }
        count_pass();
        let (bl, bh) = (1usize << a, 1usize << b);
        let amps = &mut self.amps;
        for i in 0..amps.len() {
            if i & bl != 0 && i & bh == 0 {
                amps.swap(i, i ^ bl ^ bh);
            }
        }
        Ok(())
    }

    /// Applies a product of Paulis in one traversal of the amplitude array.
    pub fn apply_pauli_layer(&mut self, ops: &[(usize, Pauli)]) -> Result<(), KetError> {
        let mut xmask = 0usize;
        let mut zmask = 0usize;
        let mut seen = 0usize;
        let mut ys = 0u32;
        for &(q, p) in ops {
            self.check_qubit(q)?;
            if seen & (1 << q) != 0 {
                return Err(KetError::DuplicateQubit(q));
            }
            seen |= 1 << q;
            match p {
                Pauli::I => {}
                Pauli::X => xmask |= 1 << q,
                Pauli::Z => zmask |= 1 << q,
                Pauli::Y => {
                    xmask |= 1 << q;
                    zmask |= 1 << q;
                    ys += 1;
                }
            }
        }
        count_pass();
        let base = [ONE, C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)][(ys % 4) as usize];
        // P|i⟩ = base * (-1)^{popcount(i & zmask)} |i ^ xmask⟩
        let factor = move |i: usize| {
            if (i & zmask).count_ones() % 2 == 1 {
                -base
            } else {
                base
            }
        };
        let parallel = self.amps.len() >= PARALLEL_MIN_AMPS;
        if xmask == 0 {
            if parallel {
                self.amps
                    .par_iter_mut()
                    .enumerate()
                    .with_min_len(1024)
                    .for_each(|(i, a)| *a *= factor(i));
            } else {
                self.amps.iter_mut().enumerate().for_each(|(i, a)| *a *= factor(i));
            }
            return Ok(());
        }
        let top = 1usize << (usize::BITS - 1 - xmask.leading_zeros());
        let block = top << 1;
        let kernel = move |b: usize, chunk: &mut [C64]| {
            let (lo, hi) = chunk.split_at_mut(top);
            let off = b * block;
            for i in 0..top {
                let j = (i ^ xmask) - top;
                let (x, y) = (lo[i], hi[j]);
                hi[j] = factor(off + i) * x;
                lo[i] = factor(off + top + j) * y;
            }
        };
        if parallel {
            self.amps
                .par_chunks_mut(block)
                .enumerate()
                .for_each(|(b, chunk)| kernel(b, chunk));
        } else {
            self.amps
                .chunks_mut(block)
                .enumerate()
                .for_each(|(b, chunk)| kernel(b, chunk));
        }
        Ok(())
    }

    /// Sums `(|a0|², |a1|², conj(a0)·a1)` over the pairs of qubit `q`.
    fn pair_moments(&self, q: usize) -> (f64, f64, C64) {
        let stride = 1usize << q;
        let amps = &self.amps;
        let add = |x: (f64, f64, C64), y: (f64, f64, C64)| (x.0 + y.0, x.1 + y.1, x.2 + y.2);
        block_sum(amps.len() / 2, (0.0, 0.0, ZERO), add, |k| {
            let lo = ((k >> q) << (q + 1)) | (k & (stride - 1));
            let (a, b) = (amps[lo], amps[lo | stride]);
            (a.norm_sqr(), b.norm_sqr(), a.conj() * b)
        })
    }

    /// `(⟨X_q⟩, ⟨Y_q⟩, ⟨Z_q⟩)` from a single pass over the amplitudes.
    pub fn bloch_vector(&self, q: usize) -> Result<BlochVector, KetError> {
        self.check_qubit(q)?;
        let (p0, p1, c) = self.pair_moments(q);
        Ok(BlochVector::new(2.0 * c.re, 2.0 * c.im, p0 - p1))
    }

    pub fn prob_one(&self, q: usize) -> Result<f64, KetError> {
        self.check_qubit(q)?;
        let stride = 1usize << q;
        let amps = &self.amps;
        Ok(block_sum(amps.len() / 2, 0.0, |x, y| x + y, |k| {
            let lo = ((k >> q) << (q + 1)) | (k & (stride - 1));
            amps[lo | stride].norm_sqr()
        }))
    }

    /// Post-selects qubit `q` on `outcome`, rescales to unit norm and returns
    /// the outcome's probability before projection.
    pub fn project_and_renormalize(&mut self, q: usize, outcome: bool) -> Result<f64, KetError> {
        let p1 = self.prob_one(q)?;
        let p = if outcome { p1 } else { 1.0 - p1 };
        if p <= MIN_OUTCOME_PROBABILITY {
            return Err(KetError::ImpossibleOutcome {
                qubit: q,
                outcome,
                probability: p,
            });
        }
        let s = 1.0 / p.sqrt();
        self.for_each_pair(q, move |_, a, b| {
            if outcome {
                *a = ZERO;
                *b *= s;
            } else {
                *a *= s;
                *b = ZERO;
            }
        });
        Ok(p)
    }

    /// Tensor product with `self` on the low qubits and `high` above them:
    /// `result[i | j << self.width()] = self[i] * high[j]`.
    pub fn kron_compose(&self, high: &DenseKet) -> DenseKet {
        let lo = &self.amps;
        let mut amps = vec![ZERO; lo.len() * high.amps.len()];
        let fill = |(j, chunk): (usize, &mut [C64])| {
            let h = high.amps[j];
            for (dst, a) in chunk.iter_mut().zip(lo) {
                *dst = a * h;
            }
        };
        if amps.len() >= PARALLEL_MIN_AMPS {
            amps.par_chunks_mut(lo.len()).enumerate().for_each(fill);
        } else {
            amps.chunks_mut(lo.len()).enumerate().for_each(fill);
        }
        count_allocation();
        DenseKet { amps }
    }

    /// Partial inner product `⟨φ|_q |self⟩`, renormalized; qubits above `q`
    /// shift down by one. Returns the remainder and its pre-normalization
    /// weight.
    fn contract_qubit(&self, q: usize, phi: [C64; 2]) -> (DenseKet, f64) {
        let stride = 1usize << q;
        let (c0, c1) = (phi[0].conj(), phi[1].conj());
        let mut out = Vec::with_capacity(self.amps.len() / 2);
        for chunk in self.amps.chunks(stride << 1) {
            let (lo, hi) = chunk.split_at(stride);
            out.extend(lo.iter().zip(hi).map(|(a, b)| c0 * a + c1 * b));
        }
        let w: f64 = out.iter().map(|a| a.norm_sqr()).sum();
        let s = 1.0 / w.sqrt();
        out.iter_mut().for_each(|a| *a *= s);
        count_allocation();
        (DenseKet { amps: out }, w)
    }

    /// Removes qubit `q` when it holds the definite value `bit`; the
    /// remainder keeps the surviving amplitudes unchanged.
    pub fn drop_basis_qubit(&self, q: usize, bit: bool) -> DenseKet {
        let stride = 1usize << q;
        let mut out = Vec::with_capacity(self.amps.len() / 2);
        for chunk in self.amps.chunks(stride << 1) {
            let (lo, hi) = chunk.split_at(stride);
            out.extend_from_slice(if bit { hi } else { lo });
        }
        count_allocation();
        DenseKet { amps: out }
    }

    /// Splits qubit `q` out when its Schmidt weight `ε ≤ tol`.
    ///
    /// The qubit factor is the pure state along the Bloch vector; the
    /// remainder is the conditional state of the other qubits given that
    /// factor (the dominant Schmidt branch). `self` is left untouched.
    pub fn try_decompose(&self, q: usize, tol: f64) -> Option<(DenseKet, DenseKet)> {
        if self.width() < 2 {
            return None;
        }
        let r = self.bloch_vector(q).ok()?;
        if epsilon_from_bloch(&r) > tol {
            return None;
        }
        let phi = r.pure_state();
        let (rest, _) = self.contract_qubit(q, phi);
        Some((DenseKet::qubit(phi[0], phi[1]), rest))
    }

    /// Moves local qubits: bit `k` of the old index becomes bit `perm[k]`.
    pub fn permuted(&self, perm: &[usize]) -> DenseKet {
        assert_eq!(perm.len(), self.width());
        let mut amps = vec![ZERO; self.amps.len()];
        for (i, a) in self.amps.iter().enumerate() {
            let mut j = 0usize;
            let mut rest = i;
            while rest != 0 {
                let k = rest.trailing_zeros() as usize;
                j |= 1 << perm[k];
                rest &= rest - 1;
            }
            amps[j] = *a;
        }
        count_allocation();
        DenseKet { amps }
    }

    /// Index drawn from the Born distribution given `u ∈ [0, 1)`.
    pub fn sample_index(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (i, a) in self.amps.iter().enumerate() {
            acc += a.norm_sqr();
            if u < acc {
                return i;
            }
        }
        // Rounding left a sliver above the cumulative sum: take the last
        // index with nonzero weight.
        self.amps.iter().rposition(|a| a.norm_sqr() > 0.0).unwrap_or(0)
    }

    /// Writes one `index re im` line per amplitude, index ascending.
    pub fn write_dump(&self, mut w: impl Write) -> io::Result<()> {
        for (i, a) in self.amps.iter().enumerate() {
            writeln!(w, "{i} {:e} {:e}", a.re, a.im)?;
        }
        Ok(())
    }
}

/// Sums `f(k)` for `k < count` over fixed blocks, so parallel and serial
/// runs group the additions identically.
fn block_sum<T: Send + Sync + Copy>(
    count: usize,
    zero: T,
    add: impl Fn(T, T) -> T + Sync,
    f: impl Fn(usize) -> T + Sync,
) -> T {
    const BLOCK: usize = 4096;
    let block = |b: usize| (b * BLOCK..((b + 1) * BLOCK).min(count)).fold(zero, |acc, k| add(acc, f(k)));
    let blocks = count.div_ceil(BLOCK);
    if count >= PARALLEL_MIN_AMPS {
        let parts: Vec<T> = (0..blocks).into_par_iter().map(block).collect();
        parts.into_iter().fold(zero, &add)
    } else {
        (0..blocks).map(block).fold(zero, &add)
    }
}

/// `|⟨a|b⟩|²`, insensitive to global phase.
pub fn fidelity(a: &DenseKet, b: &DenseKet) -> Result<f64, KetError> {
    if a.amps.len() != b.amps.len() {
        return Err(KetError::WidthMismatch(a.width(), b.width()));
    }
    let ip = block_sum(a.amps.len(), ZERO, |x, y| x + y, |k| a.amps[k].conj() * b.amps[k]);
    Ok(ip.norm_sqr().min(1.0))
}

pub fn kron_compose(a: &DenseKet, b: &DenseKet) -> DenseKet {
    a.kron_compose(b)
}
