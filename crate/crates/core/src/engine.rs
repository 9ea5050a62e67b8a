//! Hybrid factorized simulator.
//!
//! The represented state is `phase · (⊗_q U_q) · P_k ⋯ P_1 · |committed⟩`:
//! `committed` is a tensor product of shards (stabilizer tableaux or dense
//! kets), `P_i` are pending single-control gates whose inner matrix is
//! diagonal or antidiagonal, and `U_q` is the per-qubit single-qubit buffer.
//! Gates go into the buffers when that is exact and reach the shards only
//! when an observable or a gate that cannot be buffered needs them.

use thiserror::Error;

use crate::circuit::{Circuit, CircuitError, Gate, GateKind};
use crate::ket::{self, epsilon_from_bloch, rotation_to_zero, DenseKet, KetError, MIN_OUTCOME_PROBABILITY};
use crate::matrix::{self, Mat2, Pauli, C64};
use crate::rng::{self, SimRng};
use crate::tableau::{self, CliffordOp, StabilizerShard, TableauError};

/// Tolerance for classifying buffered matrices (diagonal, Pauli, identity).
pub const BUFFER_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("simulator needs at least one qubit")]
    ZeroWidth,
    #[error("invalid config: {0}")]
    Config(String),
    #[error("memory budget exceeded: needs {needed} amplitudes, budget {budget}")]
    OutOfMemory { needed: u128, budget: usize },
    #[error("circuit width {circuit} does not match simulator width {simulator}")]
    WidthMismatch { circuit: usize, simulator: usize },
    #[error("qubit {0} is not in a dense shard of width >= 2")]
    NotEntangledDense(usize),
    #[error("bitstring has length {got}, expected {expected}")]
    BitstringLength { got: usize, expected: usize },
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Ket(#[from] KetError),
    #[error(transparent)]
    Tableau(#[from] TableauError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Optimizations {
    pub control_elimination: bool,
    pub hx_commutation: bool,
    pub label_swap: bool,
    pub pauli_coalescing: bool,
    pub stabilizer_hybrid: bool,
}

impl Optimizations {
    pub const COUNT: usize = 5;

    pub fn all() -> Self {
        Self::from_mask(0b11111)
    }

    pub fn none() -> Self {
        Self::from_mask(0)
    }

    /// Bit `i` enables the `i`-th flag in declaration order.
    pub fn from_mask(mask: u8) -> Self {
        Optimizations {
            control_elimination: mask & 1 != 0,
            hx_commutation: mask & 2 != 0,
            label_swap: mask & 4 != 0,
            pauli_coalescing: mask & 8 != 0,
            stabilizer_hybrid: mask & 16 != 0,
        }
    }

    pub fn mask(&self) -> u8 {
        self.control_elimination as u8
            | (self.hx_commutation as u8) << 1
            | (self.label_swap as u8) << 2
            | (self.pauli_coalescing as u8) << 3
            | (self.stabilizer_hybrid as u8) << 4
    }
}

impl Default for Optimizations {
    fn default() -> Self {
        Self::all()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineConfig {
    pub sdrp: f64,
    pub separability_tol: f64,
    pub mem_budget: usize,
    pub rng_seed: u64,
    pub optimizations: Optimizations,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            sdrp: 0.0,
            separability_tol: ket::DEFAULT_SEPARABILITY_TOL,
            mem_budget: 1 << 26,
            rng_seed: 0,
            optimizations: Optimizations::all(),
        }
    }
}

impl EngineConfig {
    pub fn with_sdrp(mut self, p: f64) -> Self {
        self.sdrp = p;
        self
    }

    pub fn with_mem_budget(mut self, amplitudes: usize) -> Self {
        self.mem_budget = amplitudes;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_optimizations(mut self, o: Optimizations) -> Self {
        self.optimizations = o;
        self
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        if !(0.0..=1.0).contains(&self.sdrp) {
            return Err(EngineError::Config(format!("sdrp {} outside [0, 1]", self.sdrp)));
        }
        if !(self.separability_tol >= 0.0) {
            return Err(EngineError::Config("separability_tol must be >= 0".into()));
        }
        if self.mem_budget < 2 {
            return Err(EngineError::Config(format!("mem_budget {} < 2", self.mem_budget)));
        }
        Ok(())
    }
}

/// Counters of where gates ended up.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    /// Kernel passes over dense amplitude arrays.
    pub amplitude_kernels: u64,
    pub tableau_gates: u64,
    pub eliminated: u64,
    pub buffered: u64,
    pub label_swaps: u64,
    pub merges: u64,
    pub splits: u64,
}

/// Per-projection check recorded when auditing is enabled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionAudit {
    pub qubit: usize,
    pub epsilon: f64,
    /// `|⟨out|in⟩|²` on the affected shard.
    pub fidelity: f64,
}

#[derive(Debug, Clone)]
enum Repr {
    Stabilizer(StabilizerShard),
    Dense(DenseKet),
}

#[derive(Debug, Clone)]
struct Shard {
    repr: Repr,
    /// Global label of each local position.
    qubits: Vec<usize>,
}

impl Shard {
    fn width(&self) -> usize {
        self.qubits.len()
    }

    fn dense_amps(&self) -> usize {
        match &self.repr {
            Repr::Dense(k) => k.len(),
            Repr::Stabilizer(_) => 0,
        }
    }

    fn is_stabilizer(&self) -> bool {
        matches!(self.repr, Repr::Stabilizer(_))
    }
}

#[derive(Debug, Clone, Copy)]
struct PendingOp {
    control: usize,
    polarity: bool,
    target: usize,
    inner: Mat2,
}

impl PendingOp {
    fn touches(&self, q: usize) -> bool {
        self.control == q || self.target == q
    }
}

enum Op {
    Controlled {
        controls: Vec<usize>,
        polarity: Vec<bool>,
        target: usize,
        inner: Mat2,
    },
    Swap(usize, usize),
}

fn amps_for(width: usize) -> u128 {
    if width >= 127 {
        u128::MAX
    } else {
        1u128 << width
    }
}

fn diag_or_anti(m: &Mat2) -> bool {
    matrix::is_diagonal(m, BUFFER_TOL) || matrix::is_antidiagonal(m, BUFFER_TOL)
}

fn diag(a: C64, b: C64) -> Mat2 {
    [[a, matrix::ZERO], [matrix::ZERO, b]]
}

#[derive(Debug, Clone)]
pub struct HybridState {
    n: usize,
    cfg: EngineConfig,
    shards: Vec<Option<Shard>>,
    free: Vec<usize>,
    /// Global label to (shard id, local position).
    loc: Vec<(usize, usize)>,
    ubuf: Vec<Mat2>,
    pending: Vec<PendingOp>,
    eps: Vec<f64>,
    rng: SimRng,
    dense_total: usize,
    peak: usize,
    phase: C64,
    measurements: Vec<(usize, bool)>,
    audits: Option<Vec<ProjectionAudit>>,
    stats: EngineStats,
}

impl HybridState {
    /// `n` qubits in |0…0⟩, one single-qubit shard each.
    pub fn new(n: usize, cfg: EngineConfig) -> Result<Self, EngineError> {
        if n == 0 {
            return Err(EngineError::ZeroWidth);
        }
        cfg.validate()?;
        let hybrid = cfg.optimizations.stabilizer_hybrid;
        let dense_total = if hybrid { 0 } else { 2 * n };
        if dense_total > cfg.mem_budget {
            return Err(EngineError::OutOfMemory {
                needed: dense_total as u128,
                budget: cfg.mem_budget,
            });
        }
        let shards = (0..n)
            .map(|q| {
                let repr = if hybrid {
                    Repr::Stabilizer(StabilizerShard::new(1).expect("width 1"))
                } else {
                    Repr::Dense(DenseKet::zero(1))
                };
                Some(Shard { repr, qubits: vec![q] })
            })
            .collect();
        Ok(HybridState {
            n,
            rng: rng::seeded(cfg.rng_seed),
            cfg,
            shards,
            free: Vec::new(),
            loc: (0..n).map(|q| (q, 0)).collect(),
            ubuf: vec![matrix::IDENTITY; n],
            pending: Vec::new(),
            eps: Vec::new(),
            dense_total,
            peak: dense_total,
            phase: matrix::ONE,
            measurements: Vec::new(),
            audits: None,
            stats: EngineStats::default(),
        })
    }

    /// Starts from an arbitrary dense state held as a single shard.
    pub fn from_ket(ket: DenseKet, cfg: EngineConfig) -> Result<Self, EngineError> {
        let n = ket.width();
        let mut h = HybridState::new(n.max(1), cfg)?;
        if ket.len() > h.cfg.mem_budget {
            return Err(EngineError::OutOfMemory {
                needed: ket.len() as u128,
                budget: h.cfg.mem_budget,
            });
        }
        h.dense_total = ket.len();
        h.peak = h.dense_total;
        h.shards = vec![Some(Shard {
            repr: Repr::Dense(ket),
            qubits: (0..n).collect(),
        })];
        h.loc = (0..n).map(|q| (0, q)).collect();
        Ok(h)
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn config(&self) -> &EngineConfig {
        &self.cfg
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    pub fn epsilons(&self) -> &[f64] {
        &self.eps
    }

    /// Product of `1 − ε_j` over every recorded projection.
    pub fn estimated_fidelity(&self) -> f64 {
        self.eps.iter().map(|e| 1.0 - e).product()
    }

    pub fn peak_amplitudes(&self) -> usize {
        self.peak
    }

    pub fn dense_amplitudes(&self) -> usize {
        self.dense_total
    }

    pub fn measurements(&self) -> &[(usize, bool)] {
        &self.measurements
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn shard_count(&self) -> usize {
        self.shards.iter().flatten().count()
    }

    /// `(width, is_stabilizer)` per live shard, ordered by lowest member.
    pub fn shard_layout(&self) -> Vec<(usize, bool)> {
        let mut v: Vec<_> = self
            .shards
            .iter()
            .flatten()
            .map(|s| (*s.qubits.iter().min().unwrap(), s.width(), s.is_stabilizer()))
            .collect();
        v.sort();
        v.into_iter().map(|(_, w, s)| (w, s)).collect()
    }

    pub fn is_stabilizer(&self, q: usize) -> bool {
        self.shard(self.loc[q].0).is_stabilizer()
    }

    pub fn shard_width_of(&self, q: usize) -> usize {
        self.shard(self.loc[q].0).width()
    }

    pub fn set_projection_audit(&mut self, on: bool) {
        self.audits = on.then(Vec::new);
    }

    pub fn projection_audits(&self) -> &[ProjectionAudit] {
        self.audits.as_deref().unwrap_or(&[])
    }

    fn shard(&self, id: usize) -> &Shard {
        self.shards[id].as_ref().expect("live shard")
    }

    fn shard_mut(&mut self, id: usize) -> &mut Shard {
        self.shards[id].as_mut().expect("live shard")
    }

    fn add_shard(&mut self, s: Shard) -> usize {
        if let Some(id) = self.free.pop() {
            self.shards[id] = Some(s);
            id
        } else {
            self.shards.push(Some(s));
            self.shards.len() - 1
        }
    }

    fn remove_shard(&mut self, id: usize) -> Shard {
        self.free.push(id);
        self.shards[id].take().expect("live shard")
    }

    fn reserve(&self, needed: u128) -> Result<(), EngineError> {
        if needed > self.cfg.mem_budget as u128 {
            Err(EngineError::OutOfMemory {
                needed,
                budget: self.cfg.mem_budget,
            })
        } else {
            Ok(())
        }
    }

    fn set_dense_total(&mut self, total: usize) {
        self.dense_total = total;
        self.peak = self.peak.max(total);
    }

    pub fn apply_circuit(&mut self, c: &Circuit) -> Result<(), EngineError> {
        if c.width() != self.n {
            return Err(EngineError::WidthMismatch {
                circuit: c.width(),
                simulator: self.n,
            });
        }
        for g in c.gates() {
            self.apply_gate(g)?;
        }
        Ok(())
    }

    pub fn apply_gate(&mut self, g: &Gate) -> Result<(), EngineError> {
        g.validate(self.n)?;
        match &g.kind {
            GateKind::Swap => self.apply_swap(g.targets[0], g.targets[1]),
            GateKind::Measure => self.measure_qubit(g.targets[0]).map(|_| ()),
            GateKind::Controlled {
                inner,
                controls,
                polarity,
            } => {
                let m = inner
                    .matrix()
                    .ok_or_else(|| CircuitError::Unrepresentable(format!("controlled {}", inner.name())))?;
                self.apply_controlled(controls, polarity, g.targets[0], m)
            }
            kind => {
                let m = kind.matrix().expect("single-qubit kind");
                let q = g.targets[0];
                self.ubuf[q] = matrix::mul(&m, &self.ubuf[q]);
                Ok(())
            }
        }
    }

    fn apply_swap(&mut self, a: usize, b: usize) -> Result<(), EngineError> {
        if self.cfg.optimizations.label_swap {
            let (la, lb) = (self.loc[a], self.loc[b]);
            self.loc[a] = lb;
            self.loc[b] = la;
            self.shard_mut(la.0).qubits[la.1] = b;
            self.shard_mut(lb.0).qubits[lb.1] = a;
            self.ubuf.swap(a, b);
            let relabel = |q: usize| if q == a { b } else if q == b { a } else { q };
            for op in &mut self.pending {
                op.control = relabel(op.control);
                op.target = relabel(op.target);
            }
            self.stats.label_swaps += 1;
            Ok(())
        } else {
            self.flush(&[a, b])?;
            self.commit_op(&Op::Swap(a, b))
        }
    }

    /// Definite Z value of `q` in the committed state, when cheap to see.
    fn committed_z(&self, q: usize) -> Option<bool> {
        let (sid, l) = self.loc[q];
        match &self.shard(sid).repr {
            Repr::Stabilizer(t) => t.deterministic_z(l).ok().flatten(),
            Repr::Dense(k) if k.width() == 1 => {
                let rz = k.amplitude(0).norm_sqr() - k.amplitude(1).norm_sqr();
                let tol = self.cfg.separability_tol;
                if rz >= 1.0 - tol {
                    Some(false)
                } else if rz <= -1.0 + tol {
                    Some(true)
                } else {
                    None
                }
            }
            Repr::Dense(_) => None,
        }
    }

    /// Definite Z value of `q` in the represented state (buffers included).
    fn effective_z(&self, q: usize) -> Option<bool> {
        if self.pending.iter().any(|op| op.touches(q)) {
            return None;
        }
        let u = &self.ubuf[q];
        let flip = if matrix::is_diagonal(u, BUFFER_TOL) {
            false
        } else if matrix::is_antidiagonal(u, BUFFER_TOL) {
            true
        } else {
            return None;
        };
        self.committed_z(q).map(|b| b ^ flip)
    }

    fn apply_controlled(&mut self, controls: &[usize], polarity: &[bool], target: usize, m: Mat2) -> Result<(), EngineError> {
        let mut cs = controls.to_vec();
        let mut ps = polarity.to_vec();
        if self.cfg.optimizations.control_elimination {
            let mut i = 0;
            while i < cs.len() {
                match self.effective_z(cs[i]) {
                    Some(bit) => {
                        self.stats.eliminated += 1;
                        if bit != ps[i] {
                            return Ok(());
                        }
                        cs.remove(i);
                        ps.remove(i);
                    }
                    None => i += 1,
                }
            }
            if cs.is_empty() {
                self.ubuf[target] = matrix::mul(&m, &self.ubuf[target]);
                return Ok(());
            }
            if cs.len() == 1 && matrix::is_diagonal(&m, BUFFER_TOL) {
                if let Some(b) = self.effective_z(target) {
                    let d = m[b as usize][b as usize];
                    let dm = if ps[0] { diag(matrix::ONE, d) } else { diag(d, matrix::ONE) };
                    self.ubuf[cs[0]] = matrix::mul(&dm, &self.ubuf[cs[0]]);
                    self.stats.eliminated += 1;
                    return Ok(());
                }
            }
        }
        if cs.len() == 1 {
            let (c, pol) = (cs[0], ps[0]);
            if let Some(op) = self.conjugate_into_buffer(c, pol, target, &m) {
                self.pending.push(op);
                self.stats.buffered += 1;
                return Ok(());
            }
            if diag_or_anti(&m) {
                self.flush(&[c, target])?;
                self.pending.push(PendingOp {
                    control: c,
                    polarity: pol,
                    target,
                    inner: m,
                });
                self.stats.buffered += 1;
                return Ok(());
            }
        }
        let mut operands = cs.clone();
        operands.push(target);
        self.flush(&operands)?;
        self.commit_op(&Op::Controlled {
            controls: cs,
            polarity: ps,
            target,
            inner: m,
        })
    }

    /// Moves a controlled gate below the single-qubit buffers of its
    /// operands when the result is still a controlled phase or inversion.
    fn conjugate_into_buffer(&self, c: usize, pol: bool, t: usize, m: &Mat2) -> Option<PendingOp> {
        let uc = &self.ubuf[c];
        let polarity = if matrix::is_diagonal(uc, BUFFER_TOL) {
            pol
        } else if matrix::is_antidiagonal(uc, BUFFER_TOL) {
            !pol
        } else {
            return None;
        };
        let ut = &self.ubuf[t];
        let inner = if self.cfg.optimizations.hx_commutation {
            matrix::mul(&matrix::adjoint(ut), &matrix::mul(m, ut))
        } else if matrix::is_identity_up_to_phase(ut, BUFFER_TOL) {
            *m
        } else {
            return None;
        };
        diag_or_anti(&inner).then_some(PendingOp {
            control: c,
            polarity,
            target: t,
            inner,
        })
    }

    /// Commits every buffered gate on `q` (and whatever pending gates must
    /// precede them) into the shards.
    pub fn flush_buffers(&mut self, q: usize) -> Result<(), EngineError> {
        if q >= self.n {
            return Err(CircuitError::QubitOutOfRange { qubit: q, width: self.n }.into());
        }
        self.flush(&[q])
    }

    pub fn flush_all(&mut self) -> Result<(), EngineError> {
        let all: Vec<usize> = (0..self.n).collect();
        self.flush(&all)
    }

    fn flush(&mut self, set: &[usize]) -> Result<(), EngineError> {
        let mut mark = vec![false; self.n];
        for &q in set {
            mark[q] = true;
        }
        let mut selected = Vec::new();
        for (i, op) in self.pending.iter().enumerate().rev() {
            if mark[op.control] || mark[op.target] {
                mark[op.control] = true;
                mark[op.target] = true;
                selected.push(i);
            }
        }
        selected.reverse();
        let mut done = 0;
        let mut result = Ok(());
        for &i in &selected {
            let op = self.pending[i];
            let r = self.commit_op(&Op::Controlled {
                controls: vec![op.control],
                polarity: vec![op.polarity],
                target: op.target,
                inner: op.inner,
            });
            if let Err(e) = r {
                result = Err(e);
                break;
            }
            done += 1;
        }
        if done > 0 {
            let mut committed = selected[..done].iter().peekable();
            let mut i = 0;
            self.pending.retain(|_| {
                let keep = committed.peek() != Some(&&i);
                if !keep {
                    committed.next();
                }
                i += 1;
                keep
            });
        }
        result?;
        self.commit_buffers(set)
    }

    fn commit_buffers(&mut self, set: &[usize]) -> Result<(), EngineError> {
        let mut qs = set.to_vec();
        qs.sort_unstable();
        qs.dedup();
        let mut layers: Vec<(usize, Vec<(usize, Pauli)>)> = Vec::new();
        for &q in &qs {
            let u = self.ubuf[q];
            if let Some(ph) = matrix::equal_up_to_phase(&u, &matrix::IDENTITY, BUFFER_TOL) {
                self.phase *= ph;
                self.ubuf[q] = matrix::IDENTITY;
                continue;
            }
            if !self.cfg.optimizations.pauli_coalescing {
                continue;
            }
            let (sid, l) = self.loc[q];
            if self.shard(sid).is_stabilizer() {
                continue;
            }
            if let Some((p, ph)) = matrix::as_pauli(&u, BUFFER_TOL) {
                self.phase *= ph;
                self.ubuf[q] = matrix::IDENTITY;
                match layers.iter_mut().find(|(id, _)| *id == sid) {
                    Some((_, ops)) => ops.push((l, p)),
                    None => layers.push((sid, vec![(l, p)])),
                }
            }
        }
        for (sid, ops) in layers {
            if let Repr::Dense(k) = &mut self.shard_mut(sid).repr {
                k.apply_pauli_layer(&ops)?;
            }
            self.stats.amplitude_kernels += 1;
        }
        for &q in &qs {
            let u = self.ubuf[q];
            if matrix::max_diff(&u, &matrix::IDENTITY) == 0.0 {
                continue;
            }
            self.commit_1q(q, &u)?;
            self.ubuf[q] = matrix::IDENTITY;
        }
        Ok(())
    }

    /// Applies `u` on `q` directly to its shard.
    fn commit_1q(&mut self, q: usize, u: &Mat2) -> Result<(), EngineError> {
        let (sid, l) = self.loc[q];
        if let Repr::Stabilizer(t) = &mut self.shard_mut(sid).repr {
            if let Some((word, ph)) = tableau::clifford_word(u) {
                for op in tableau::word_ops(word, l) {
                    t.apply(op)?;
                }
                self.phase *= ph;
                self.stats.tableau_gates += 1;
                return Ok(());
            }
        }
        self.ensure_dense(sid)?;
        if let Repr::Dense(k) = &mut self.shard_mut(sid).repr {
            k.apply_1q(l, u)?;
        }
        self.stats.amplitude_kernels += 1;
        Ok(())
    }

    fn ensure_dense(&mut self, sid: usize) -> Result<(), EngineError> {
        let s = self.shard(sid);
        if let Repr::Stabilizer(t) = &s.repr {
            let needed = self.dense_total as u128 + amps_for(s.width());
            self.reserve(needed)?;
            let k = t.to_ket();
            self.shard_mut(sid).repr = Repr::Dense(k);
            self.set_dense_total(needed as usize);
        }
        Ok(())
    }

    /// Brings the shards of `operands` together. The result stays a tableau
    /// only when `keep_stabilizer` is set and every input is a tableau.
    fn merge(&mut self, operands: &[usize], keep_stabilizer: bool) -> Result<usize, EngineError> {
        let mut ids: Vec<usize> = operands.iter().map(|&q| self.loc[q].0).collect();
        ids.sort_unstable();
        ids.dedup();
        let all_stab = ids.iter().all(|&id| self.shard(id).is_stabilizer());
        if ids.len() == 1 && (!all_stab || keep_stabilizer) {
            return Ok(ids[0]);
        }
        // Larger shards first; they end up in the low local positions.
        ids.sort_by_key(|&id| (std::cmp::Reverse(self.shard(id).width()), id));
        let keep = ids[0];
        if keep_stabilizer && all_stab {
            for &id in &ids[1..] {
                let other = self.remove_shard(id);
                let base = self.shard_mut(keep);
                if let (Repr::Stabilizer(a), Repr::Stabilizer(b)) = (&mut base.repr, &other.repr) {
                    *a = a.tensor(b);
                }
                base.qubits.extend(other.qubits);
            }
        } else {
            let width: usize = ids.iter().map(|&id| self.shard(id).width()).sum();
            let freed: usize = ids.iter().map(|&id| self.shard(id).dense_amps()).sum();
            let needed = (self.dense_total - freed) as u128 + amps_for(width);
            self.reserve(needed)?;
            let mut base = self.shards[keep].take().expect("live shard");
            let mut ket = match base.repr {
                Repr::Dense(k) => k,
                Repr::Stabilizer(t) => t.to_ket(),
            };
            for &id in &ids[1..] {
                let other = self.remove_shard(id);
                let high = match other.repr {
                    Repr::Dense(k) => k,
                    Repr::Stabilizer(t) => t.to_ket(),
                };
                ket = ket.kron_compose(&high);
                base.qubits.extend(other.qubits);
            }
            base.repr = Repr::Dense(ket);
            self.shards[keep] = Some(base);
            self.set_dense_total(needed as usize);
        }
        if ids.len() > 1 {
            self.stats.merges += 1;
        }
        let qubits = self.shard(keep).qubits.clone();
        for (l, g) in qubits.into_iter().enumerate() {
            self.loc[g] = (keep, l);
        }
        Ok(keep)
    }

    fn commit_op(&mut self, op: &Op) -> Result<(), EngineError> {
        match op {
            Op::Swap(a, b) => {
                let hybrid = self.cfg.optimizations.stabilizer_hybrid;
                let sid = self.merge(&[*a, *b], hybrid)?;
                let (la, lb) = (self.loc[*a].1, self.loc[*b].1);
                match &mut self.shard_mut(sid).repr {
                    Repr::Stabilizer(t) => {
                        t.apply(CliffordOp::Swap(la, lb))?;
                        self.stats.tableau_gates += 1;
                        Ok(())
                    }
                    Repr::Dense(k) => {
                        k.apply_swap(la, lb)?;
                        self.stats.amplitude_kernels += 1;
                        self.after_entangling(&[*a, *b])
                    }
                }
            }
            Op::Controlled {
                controls,
                polarity,
                target,
                inner,
            } => {
                let (mut cs, mut ps) = (controls.clone(), polarity.clone());
                let target = *target;
                if self.cfg.optimizations.control_elimination {
                    let mut i = 0;
                    while i < cs.len() {
                        match self.committed_z(cs[i]) {
                            Some(bit) => {
                                self.stats.eliminated += 1;
                                if bit != ps[i] {
                                    return Ok(());
                                }
                                cs.remove(i);
                                ps.remove(i);
                            }
                            None => i += 1,
                        }
                    }
                    if cs.is_empty() {
                        return self.commit_1q(target, inner);
                    }
                    if cs.len() == 1 && matrix::is_diagonal(inner, BUFFER_TOL) {
                        if let Some(b) = self.committed_z(target) {
                            let d = inner[b as usize][b as usize];
                            let dm = if ps[0] { diag(matrix::ONE, d) } else { diag(d, matrix::ONE) };
                            self.stats.eliminated += 1;
                            return self.commit_1q(cs[0], &dm);
                        }
                    }
                }
                let clifford_ops = (self.cfg.optimizations.stabilizer_hybrid && cs.len() == 1)
                    .then(|| tableau::controlled_clifford_ops(inner, 0, ps[0], 1))
                    .flatten()
                    .is_some();
                let mut operands = cs.clone();
                operands.push(target);
                let sid = self.merge(&operands, clifford_ops)?;
                let locals: Vec<usize> = cs.iter().map(|&c| self.loc[c].1).collect();
                let lt = self.loc[target].1;
                match &mut self.shard_mut(sid).repr {
                    Repr::Stabilizer(t) => {
                        let ops = tableau::controlled_clifford_ops(inner, locals[0], ps[0], lt).expect("checked Clifford");
                        for op in ops {
                            t.apply(op)?;
                        }
                        self.stats.tableau_gates += 1;
                        Ok(())
                    }
                    Repr::Dense(k) => {
                        k.apply_controlled(&locals, &ps, lt, inner)?;
                        self.stats.amplitude_kernels += 1;
                        self.after_entangling(&operands)
                    }
                }
            }
        }
    }

    /// Factors operand qubits back out of their dense shard: exactly when
    /// separable, otherwise by rounding when `sdrp > 0`.
    fn after_entangling(&mut self, operands: &[usize]) -> Result<(), EngineError> {
        let p = self.cfg.sdrp;
        for &q in operands {
            let (sid, l) = self.loc[q];
            let s = self.shard(sid);
            let Repr::Dense(k) = &s.repr else { continue };
            if s.width() < 2 {
                continue;
            }
            if let Some((factor, rest)) = k.try_decompose(l, self.cfg.separability_tol) {
                self.split(q, factor, rest);
                continue;
            }
            if p > 0.0 {
                self.round(q, p)?;
            }
        }
        Ok(())
    }

    /// Replaces `q`'s dense shard by `factor ⊗ rest`, with `rest` holding the
    /// other members in their original order.
    fn split(&mut self, q: usize, factor: DenseKet, rest: DenseKet) {
        let (sid, l) = self.loc[q];
        let old = self.shard(sid).dense_amps();
        let new_total = self.dense_total - old + rest.len() + factor.len();
        let s = self.shard_mut(sid);
        s.repr = Repr::Dense(rest);
        s.qubits.remove(l);
        let moved: Vec<usize> = s.qubits[l..].to_vec();
        for (i, g) in moved.into_iter().enumerate() {
            self.loc[g] = (sid, l + i);
        }
        let id = self.add_shard(Shard {
            repr: Repr::Dense(factor),
            qubits: vec![q],
        });
        self.loc[q] = (id, 0);
        self.set_dense_total(new_total);
        self.stats.splits += 1;
    }

    /// Rounds `q` out of its shard after flushing its buffers. Returns the
    /// recorded ε, if a projection happened.
    pub fn sdrp_round(&mut self, q: usize, p: f64) -> Result<Option<f64>, EngineError> {
        if q >= self.n {
            return Err(CircuitError::QubitOutOfRange { qubit: q, width: self.n }.into());
        }
        self.flush(&[q])?;
        let s = self.shard(self.loc[q].0);
        if s.is_stabilizer() || s.width() < 2 {
            return Err(EngineError::NotEntangledDense(q));
        }
        self.round(q, p)
    }

    fn round(&mut self, q: usize, p: f64) -> Result<Option<f64>, EngineError> {
        let (sid, l) = self.loc[q];
        let tol = self.cfg.separability_tol;
        let Repr::Dense(k) = &self.shard(sid).repr else {
            return Err(EngineError::NotEntangledDense(q));
        };
        let r = k.bloch_vector(l)?;
        let eps = epsilon_from_bloch(&r);
        if eps > p / 2.0 {
            return Ok(None);
        }
        if eps <= tol {
            if let Some((factor, rest)) = k.try_decompose(l, tol) {
                self.split(q, factor, rest);
            }
            return Ok(None);
        }
        // After rotating r onto +Z the |0⟩ weight is (1 + |r|)/2.
        if (1.0 + r.length().min(1.0)) / 2.0 < MIN_OUTCOME_PROBABILITY {
            return Ok(None);
        }
        let before = self.audits.is_some().then(|| k.clone());
        let phi = r.pure_state();
        let mut work = k.clone();
        work.apply_1q(l, &rotation_to_zero(phi))?;
        work.project_and_renormalize(l, false)?;
        let rest = work.drop_basis_qubit(l, false);
        let factor = DenseKet::qubit(phi[0], phi[1]);
        if let Some(before) = before {
            let w = before.width();
            let perm: Vec<usize> = std::iter::once(l)
                .chain((0..w - 1).map(|i| if i < l { i } else { i + 1 }))
                .collect();
            let after = factor.kron_compose(&rest).permuted(&perm);
            let fidelity = ket::fidelity(&before, &after)?;
            self.audits.as_mut().unwrap().push(ProjectionAudit {
                qubit: q,
                epsilon: eps,
                fidelity,
            });
        }
        self.split(q, factor, rest);
        self.eps.push(eps);
        Ok(Some(eps))
    }

    fn measure_qubit(&mut self, q: usize) -> Result<bool, EngineError> {
        self.flush(&[q])?;
        let (sid, l) = self.loc[q];
        let shard = self.shards[sid].as_mut().expect("live shard");
        let width = shard.qubits.len();
        let (outcome, rest) = match &mut shard.repr {
            Repr::Stabilizer(t) => (t.measure(l, &mut self.rng)?, None),
            Repr::Dense(k) => {
                let p1 = k.prob_one(l)?;
                let b = rng::uniform(&mut self.rng) < p1;
                k.project_and_renormalize(l, b)?;
                (b, (width >= 2).then(|| k.drop_basis_qubit(l, b)))
            }
        };
        if let Some(rest) = rest {
            self.split(q, DenseKet::basis(1, outcome as usize), rest);
        }
        if self.cfg.optimizations.stabilizer_hybrid && !self.is_stabilizer(q) {
            self.replace_with_basis(q, outcome);
        }
        self.measurements.push((q, outcome));
        Ok(outcome)
    }

    /// Turns the single-qubit dense shard of `q` into a basis tableau.
    fn replace_with_basis(&mut self, q: usize, bit: bool) {
        let sid = self.loc[q].0;
        let mut t = StabilizerShard::new(1).expect("width 1");
        if bit {
            t.apply(CliffordOp::X(0)).expect("in range");
        }
        let old = self.shard(sid).dense_amps();
        self.shard_mut(sid).repr = Repr::Stabilizer(t);
        self.dense_total -= old;
    }

    /// Samples every qubit (`bits[q]` is qubit `q`) and collapses the state to
    /// the sampled basis state.
    pub fn measure_all(&mut self) -> Result<Vec<bool>, EngineError> {
        self.flush_all()?;
        let mut bits = vec![false; self.n];
        let mut order: Vec<(usize, usize)> = self
            .shards
            .iter()
            .enumerate()
            .filter_map(|(id, s)| s.as_ref().map(|s| (*s.qubits.iter().min().unwrap(), id)))
            .collect();
        order.sort_unstable();
        for (_, id) in order {
            let shard = self.shards[id].as_mut().expect("live shard");
            match &mut shard.repr {
                Repr::Stabilizer(t) => {
                    for (l, &g) in shard.qubits.iter().enumerate() {
                        bits[g] = t.measure(l, &mut self.rng)?;
                    }
                }
                Repr::Dense(k) => {
                    let idx = k.sample_index(rng::uniform(&mut self.rng));
                    for (l, &g) in shard.qubits.iter().enumerate() {
                        bits[g] = idx >> l & 1 == 1;
                    }
                }
            }
        }
        let hybrid = self.cfg.optimizations.stabilizer_hybrid;
        self.shards = bits
            .iter()
            .enumerate()
            .map(|(q, &b)| {
                let repr = if hybrid {
                    let mut t = StabilizerShard::new(1).expect("width 1");
                    if b {
                        t.apply(CliffordOp::X(0)).expect("in range");
                    }
                    Repr::Stabilizer(t)
                } else {
                    Repr::Dense(DenseKet::basis(1, b as usize))
                };
                Some(Shard { repr, qubits: vec![q] })
            })
            .collect();
        self.free.clear();
        self.loc = (0..self.n).map(|q| (q, 0)).collect();
        self.dense_total = if hybrid { 0 } else { 2 * self.n };
        self.phase = matrix::ONE;
        self.measurements.extend(bits.iter().enumerate().map(|(q, &b)| (q, b)));
        Ok(bits)
    }

    /// Amplitude of the basis state with qubit `q` set to `bits[q]`.
    pub fn get_amplitude(&mut self, bits: &[bool]) -> Result<C64, EngineError> {
        if bits.len() != self.n {
            return Err(EngineError::BitstringLength {
                got: bits.len(),
                expected: self.n,
            });
        }
        self.flush_all()?;
        let mut amp = self.phase;
        for s in self.shards.iter().flatten() {
            let idx = s
                .qubits
                .iter()
                .enumerate()
                .fold(0usize, |acc, (l, &g)| acc | (bits[g] as usize) << l);
            amp *= match &s.repr {
                Repr::Dense(k) => k.amplitude(idx),
                Repr::Stabilizer(t) => {
                    self.reserve(self.dense_total as u128 + amps_for(s.width()))?;
                    t.to_ket().amplitude(idx)
                }
            };
        }
        Ok(amp)
    }

    /// Full state vector with global qubit `q` at bit `q` of the index.
    pub fn full_ket(&mut self) -> Result<DenseKet, EngineError> {
        self.reserve(amps_for(self.n))?;
        self.flush_all()?;
        let mut ket: Option<DenseKet> = None;
        let mut order = Vec::with_capacity(self.n);
        for s in self.shards.iter().flatten() {
            let part = match &s.repr {
                Repr::Dense(k) => k.clone(),
                Repr::Stabilizer(t) => t.to_ket(),
            };
            ket = Some(match ket {
                None => part,
                Some(acc) => acc.kron_compose(&part),
            });
            order.extend_from_slice(&s.qubits);
        }
        let mut ket = ket.expect("at least one shard").permuted(&order);
        ket.scale(self.phase);
        Ok(ket)
    }
}

/// Runs `c` from |0…0⟩ and commits every buffer.
pub fn simulate(c: &Circuit, cfg: &EngineConfig) -> Result<HybridState, EngineError> {
    let mut h = HybridState::new(c.width(), cfg.clone())?;
    h.apply_circuit(c)?;
    h.flush_all()?;
    Ok(h)
}

/// Parses a bitstring written with qubit `n − 1` first.
pub fn parse_bits(s: &str) -> Option<Vec<bool>> {
    s.chars()
        .rev()
        .map(|ch| match ch {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        })
        .collect()
}

/// Formats `bits[q]` with qubit `n − 1` first.
pub fn format_bits(bits: &[bool]) -> String {
    bits.iter().rev().map(|&b| if b { '1' } else { '0' }).collect()
}
