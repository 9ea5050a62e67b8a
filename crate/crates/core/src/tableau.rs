//! CHP stabilizer shards (Aaronson–Gottesman tableau) with a replay log.
//!
//! Rows `0..w` are destabilizers and rows `w..2w` stabilizers; each row packs
//! its X and Z bits into 64-bit words. Every applied Clifford gate and every
//! measurement outcome is appended to the log, and [`StabilizerShard::to_ket`]
//! rebuilds the dense state by replaying it from |0…0⟩.

use std::sync::OnceLock;

use rand::RngCore;
use thiserror::Error;

use crate::circuit::{Gate, GateKind};
use crate::ket::DenseKet;
use crate::matrix::{self, Mat2, C64};
use crate::rng;

/// Tolerance for recognising a matrix as a Clifford up to global phase.
pub const CLIFFORD_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableauError {
    #[error("stabilizer shard needs at least one qubit")]
    ZeroWidth,
    #[error("qubit {qubit} out of range for width {width}")]
    QubitOutOfRange { qubit: usize, width: usize },
    #[error("gate {0} is not a supported Clifford")]
    NotClifford(String),
}

/// Primitive Clifford operations understood by the tableau and by replay.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CliffordOp {
    H(usize),
    S(usize),
    Sdg(usize),
    X(usize),
    Y(usize),
    Z(usize),
    Cx(usize, usize),
    Cy(usize, usize),
    Cz(usize, usize),
    Swap(usize, usize),
}

impl CliffordOp {
    fn qubits(&self) -> [Option<usize>; 2] {
        match *self {
            CliffordOp::H(a)
            | CliffordOp::S(a)
            | CliffordOp::Sdg(a)
            | CliffordOp::X(a)
            | CliffordOp::Y(a)
            | CliffordOp::Z(a) => [Some(a), None],
            CliffordOp::Cx(a, b) | CliffordOp::Cy(a, b) | CliffordOp::Cz(a, b) | CliffordOp::Swap(a, b) => {
                [Some(a), Some(b)]
            }
        }
    }

    fn shifted(self, k: usize) -> CliffordOp {
        match self {
            CliffordOp::H(a) => CliffordOp::H(a + k),
            CliffordOp::S(a) => CliffordOp::S(a + k),
            CliffordOp::Sdg(a) => CliffordOp::Sdg(a + k),
            CliffordOp::X(a) => CliffordOp::X(a + k),
            CliffordOp::Y(a) => CliffordOp::Y(a + k),
            CliffordOp::Z(a) => CliffordOp::Z(a + k),
            CliffordOp::Cx(a, b) => CliffordOp::Cx(a + k, b + k),
            CliffordOp::Cy(a, b) => CliffordOp::Cy(a + k, b + k),
            CliffordOp::Cz(a, b) => CliffordOp::Cz(a + k, b + k),
            CliffordOp::Swap(a, b) => CliffordOp::Swap(a + k, b + k),
        }
    }

    /// Applies the exact unitary of this op to a dense ket.
    pub fn apply_dense(&self, ket: &mut DenseKet) {
        let s = matrix::phase(std::f64::consts::FRAC_PI_2);
        let sdg = matrix::adjoint(&s);
        let r = match *self {
            CliffordOp::H(a) => ket.apply_1q(a, &matrix::hadamard()),
            CliffordOp::S(a) => ket.apply_1q(a, &s),
            CliffordOp::Sdg(a) => ket.apply_1q(a, &sdg),
            CliffordOp::X(a) => ket.apply_1q(a, &matrix::PAULI_X),
            CliffordOp::Y(a) => ket.apply_1q(a, &matrix::PAULI_Y),
            CliffordOp::Z(a) => ket.apply_1q(a, &matrix::PAULI_Z),
            CliffordOp::Cx(a, b) => ket.apply_controlled(&[a], &[true], b, &matrix::PAULI_X),
            CliffordOp::Cy(a, b) => ket.apply_controlled(&[a], &[true], b, &matrix::PAULI_Y),
            CliffordOp::Cz(a, b) => ket.apply_controlled(&[a], &[true], b, &matrix::PAULI_Z),
            CliffordOp::Swap(a, b) => ket.apply_swap(a, b),
        };
        r.expect("log entries are validated when recorded");
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogEntry {
    Gate(CliffordOp),
    Measure { qubit: usize, outcome: bool },
}

/// A Pauli product `(-1)^sign ⊗ P_k` read out of the tableau.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PauliString {
    pub x: Vec<bool>,
    pub z: Vec<bool>,
    pub negative: bool,
}

impl PauliString {
    /// Dense matrix action on a ket, including the sign.
    pub fn apply_dense(&self, ket: &mut DenseKet) {
        for q in 0..self.x.len() {
            let m = match (self.x[q], self.z[q]) {
                (false, false) => continue,
                (true, false) => matrix::PAULI_X,
                (false, true) => matrix::PAULI_Z,
                (true, true) => matrix::PAULI_Y,
            };
            ket.apply_1q(q, &m).expect("width matches");
        }
        if self.negative {
            ket.scale(C64::new(-1.0, 0.0));
        }
    }
}

#[derive(Debug, Clone)]
pub struct StabilizerShard {
    width: usize,
    words: usize,
    xs: Vec<u64>,
    zs: Vec<u64>,
    signs: Vec<bool>,
    log: Vec<LogEntry>,
}

#[inline]
fn bit(q: usize) -> (usize, u64) {
    (q / 64, 1u64 << (q % 64))
}

impl StabilizerShard {
    /// |0…0⟩: destabilizers `X_i`, stabilizers `Z_i`.
    pub fn new(width: usize) -> Result<Self, TableauError> {
        if width == 0 {
            return Err(TableauError::ZeroWidth);
        }
        let words = width.div_ceil(64);
        let rows = 2 * width;
        let mut t = StabilizerShard {
            width,
            words,
            xs: vec![0; rows * words],
            zs: vec![0; rows * words],
            signs: vec![false; rows],
            log: Vec::new(),
        };
        for i in 0..width {
            let (w, m) = bit(i);
            t.xs[i * words + w] |= m;
            t.zs[(width + i) * words + w] |= m;
        }
        Ok(t)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    fn check(&self, q: usize) -> Result<(), TableauError> {
        if q >= self.width {
            Err(TableauError::QubitOutOfRange {
                qubit: q,
                width: self.width,
            })
        } else {
            Ok(())
        }
    }

    #[inline]
    fn xbit(&self, row: usize, q: usize) -> bool {
        let (w, m) = bit(q);
        self.xs[row * self.words + w] & m != 0
    }

    #[inline]
    fn zbit(&self, row: usize, q: usize) -> bool {
        let (w, m) = bit(q);
        self.zs[row * self.words + w] & m != 0
    }

    fn row(&self, row: usize) -> PauliString {
        PauliString {
            x: (0..self.width).map(|q| self.xbit(row, q)).collect(),
            z: (0..self.width).map(|q| self.zbit(row, q)).collect(),
            negative: self.signs[row],
        }
    }

    pub fn stabilizer(&self, i: usize) -> PauliString {
        self.row(self.width + i)
    }

    pub fn destabilizer(&self, i: usize) -> PauliString {
        self.row(i)
    }

    /// Per-row update on column `q`: `f(x, z, sign) -> (x, z, sign)`.
    fn update_column(&mut self, q: usize, f: impl Fn(bool, bool, bool) -> (bool, bool, bool)) {
        let (w, m) = bit(q);
        for row in 0..2 * self.width {
            let k = row * self.words + w;
            let x = self.xs[k] & m != 0;
            let z = self.zs[k] & m != 0;
            let (nx, nz, flip) = f(x, z, self.signs[row]);
            self.xs[k] = if nx { self.xs[k] | m } else { self.xs[k] & !m };
            self.zs[k] = if nz { self.zs[k] | m } else { self.zs[k] & !m };
            self.signs[row] = flip;
        }
    }

    fn raw_h(&mut self, a: usize) {
        self.update_column(a, |x, z, r| (z, x, r ^ (x & z)));
    }

    fn raw_s(&mut self, a: usize) {
        self.update_column(a, |x, z, r| (x, z ^ x, r ^ (x & z)));
    }

    fn raw_sdg(&mut self, a: usize) {
        self.update_column(a, |x, z, r| (x, z ^ x, r ^ (x & !z)));
    }

    fn raw_cx(&mut self, a: usize, b: usize) {
        let (wa, ma) = bit(a);
        let (wb, mb) = bit(b);
        for row in 0..2 * self.width {
            let base = row * self.words;
            let xa = self.xs[base + wa] & ma != 0;
            let za = self.zs[base + wa] & ma != 0;
            let xb = self.xs[base + wb] & mb != 0;
            let zb = self.zs[base + wb] & mb != 0;
            self.signs[row] ^= xa & zb & !(xb ^ za);
            if xa {
                self.xs[base + wb] ^= mb;
            }
            if zb {
                self.zs[base + wa] ^= ma;
            }
        }
    }

    fn raw_swap(&mut self, a: usize, b: usize) {
        let (wa, ma) = bit(a);
        let (wb, mb) = bit(b);
        for row in 0..2 * self.width {
            let base = row * self.words;
            for v in [&mut self.xs, &mut self.zs] {
                let ba = v[base + wa] & ma != 0;
                let bb = v[base + wb] & mb != 0;
                if ba != bb {
                    v[base + wa] ^= ma;
                    v[base + wb] ^= mb;
                }
            }
        }
    }

    /// Applies one primitive op and records it in the log.
    pub fn apply(&mut self, op: CliffordOp) -> Result<(), TableauError> {
        for q in op.qubits().into_iter().flatten() {
            self.check(q)?;
        }
        if let [Some(a), Some(b)] = op.qubits() {
            if a == b {
                return Err(TableauError::NotClifford(format!("{op:?} repeats a qubit")));
            }
        }
        match op {
            CliffordOp::H(a) => self.raw_h(a),
            CliffordOp::S(a) => self.raw_s(a),
            CliffordOp::Sdg(a) => self.raw_sdg(a),
            CliffordOp::X(a) => self.update_column(a, |x, z, r| (x, z, r ^ z)),
            CliffordOp::Z(a) => self.update_column(a, |x, z, r| (x, z, r ^ x)),
            CliffordOp::Y(a) => self.update_column(a, |x, z, r| (x, z, r ^ x ^ z)),
            CliffordOp::Cx(a, b) => self.raw_cx(a, b),
            CliffordOp::Cz(a, b) => {
                self.raw_h(b);
                self.raw_cx(a, b);
                self.raw_h(b);
            }
            CliffordOp::Cy(a, b) => {
                self.raw_sdg(b);
                self.raw_cx(a, b);
                self.raw_s(b);
            }
            CliffordOp::Swap(a, b) => self.raw_swap(a, b),
        }
        self.log.push(LogEntry::Gate(op));
        Ok(())
    }

    /// Applies a circuit gate that is Clifford per [`is_clifford`]. Returns
    /// the global phase dropped by the tableau (`gate = phase · applied ops`).
    pub fn apply_clifford(&mut self, g: &Gate) -> Result<C64, TableauError> {
        let (ops, phase) = clifford_decomposition(g).ok_or_else(|| TableauError::NotClifford(format!("{:?}", g.kind)))?;
        for op in &ops {
            for q in op.qubits().into_iter().flatten() {
                self.check(q)?;
            }
        }
        for op in ops {
            self.apply(op)?;
        }
        Ok(phase)
    }

    /// Sets row `h` to the product of rows `i` and `h` (CHP `rowsum`).
    fn rowsum(&mut self, h: usize, i: usize) {
        let (hb, ib) = (h * self.words, i * self.words);
        let mut plus = 0u32;
        let mut minus = 0u32;
        for w in 0..self.words {
            let (x1, z1) = (self.xs[ib + w], self.zs[ib + w]);
            let (x2, z2) = (self.xs[hb + w], self.zs[hb + w]);
            let p = (x1 & z1 & !x2 & z2) | (x1 & !z1 & x2 & z2) | (!x1 & z1 & x2 & !z2);
            let m = (x1 & z1 & x2 & !z2) | (x1 & !z1 & !x2 & z2) | (!x1 & z1 & x2 & z2);
            plus += p.count_ones();
            minus += m.count_ones();
            self.xs[hb + w] = x1 ^ x2;
            self.zs[hb + w] = z1 ^ z2;
        }
        let total = 2 * (self.signs[h] as i64) + 2 * (self.signs[i] as i64) + plus as i64 - minus as i64;
        self.signs[h] = total.rem_euclid(4) == 2;
    }

    /// Outcome of measuring `Z_q` when it is deterministic.
    pub fn deterministic_z(&self, q: usize) -> Result<Option<bool>, TableauError> {
        self.check(q)?;
        let n = self.width;
        if (n..2 * n).any(|row| self.xbit(row, q)) {
            return Ok(None);
        }
        // Accumulate the stabilizers paired with destabilizers that
        // anticommute with Z_q into a scratch row.
        let mut scratch = self.clone_rows_with_scratch();
        let s = 2 * n;
        for i in 0..n {
            if self.xbit(i, q) {
                scratch.rowsum(s, i + n);
            }
        }
        Ok(Some(scratch.signs[s]))
    }

    fn clone_rows_with_scratch(&self) -> StabilizerShard {
        let mut t = StabilizerShard {
            width: self.width,
            words: self.words,
            xs: self.xs.clone(),
            zs: self.zs.clone(),
            signs: self.signs.clone(),
            log: Vec::new(),
        };
        t.xs.extend(std::iter::repeat(0).take(self.words));
        t.zs.extend(std::iter::repeat(0).take(self.words));
        t.signs.push(false);
        t
    }

    /// Computational-basis measurement of qubit `q`; random outcomes draw
    /// from `rng`. The outcome is appended to the log.
    pub fn measure(&mut self, q: usize, rng: &mut impl RngCore) -> Result<bool, TableauError> {
        self.check(q)?;
        let n = self.width;
        let outcome = if let Some(p) = (n..2 * n).find(|&row| self.xbit(row, q)) {
            let outcome = rng::coin(rng);
            for i in 0..2 * n {
                if i != p && self.xbit(i, q) {
                    self.rowsum(i, p);
                }
            }
            let (dst, src) = ((p - n) * self.words, p * self.words);
            for w in 0..self.words {
                self.xs[dst + w] = self.xs[src + w];
                self.zs[dst + w] = self.zs[src + w];
                self.xs[src + w] = 0;
                self.zs[src + w] = 0;
            }
            self.signs[p - n] = self.signs[p];
            let (w, m) = bit(q);
            self.zs[src + w] = m;
            self.signs[p] = outcome;
            outcome
        } else {
            self.deterministic_z(q)?.expect("no stabilizer anticommutes with Z_q")
        };
        self.log.push(LogEntry::Measure { qubit: q, outcome });
        Ok(outcome)
    }

    /// Dense state obtained by replaying the log on |0…0⟩, with measurement
    /// entries replayed as post-selections on the recorded outcomes.
    pub fn to_ket(&self) -> DenseKet {
        let mut ket = DenseKet::zero(self.width);
        for e in &self.log {
            match *e {
                LogEntry::Gate(op) => op.apply_dense(&mut ket),
                LogEntry::Measure { qubit, outcome } => {
                    ket.project_and_renormalize(qubit, outcome)
                        .expect("recorded outcomes have nonzero probability");
                }
            }
        }
        ket
    }

    /// Tensor product with `self` on the low qubits and `high` above.
    pub fn tensor(&self, high: &StabilizerShard) -> StabilizerShard {
        let (na, nb) = (self.width, high.width);
        let mut t = StabilizerShard::new(na + nb).expect("nonzero width");
        t.xs.iter_mut().for_each(|w| *w = 0);
        t.zs.iter_mut().for_each(|w| *w = 0);
        let n = na + nb;
        let copy = |t: &mut StabilizerShard, src: &StabilizerShard, src_row: usize, dst_row: usize, off: usize| {
            for q in 0..src.width {
                let (w, m) = bit(q + off);
                if src.xbit(src_row, q) {
                    t.xs[dst_row * t.words + w] |= m;
                }
                if src.zbit(src_row, q) {
                    t.zs[dst_row * t.words + w] |= m;
                }
            }
            t.signs[dst_row] = src.signs[src_row];
        };
        for i in 0..na {
            copy(&mut t, self, i, i, 0);
            copy(&mut t, self, na + i, n + i, 0);
        }
        for i in 0..nb {
            copy(&mut t, high, i, na + i, na);
            copy(&mut t, high, nb + i, n + na + i, na);
        }
        t.log = self.log.clone();
        t.log.extend(high.log.iter().map(|e| match *e {
            LogEntry::Gate(op) => LogEntry::Gate(op.shifted(na)),
            LogEntry::Measure { qubit, outcome } => LogEntry::Measure {
                qubit: qubit + na,
                outcome,
            },
        }));
        t
    }

    /// Destabilizer `i` anticommutes exactly with stabilizer `i`; all other
    /// row pairs commute.
    pub fn symplectic_ok(&self) -> bool {
        let n = self.width;
        let anticommute = |a: usize, b: usize| {
            let mut parity = 0u32;
            for w in 0..self.words {
                let (xa, za) = (self.xs[a * self.words + w], self.zs[a * self.words + w]);
                let (xb, zb) = (self.xs[b * self.words + w], self.zs[b * self.words + w]);
                parity += ((xa & zb) ^ (za & xb)).count_ones();
            }
            parity % 2 == 1
        };
        for a in 0..2 * n {
            for b in a + 1..2 * n {
                let expected = b == a + n && a < n;
                if anticommute(a, b) != expected {
                    return false;
                }
            }
        }
        true
    }
}

/// Single-qubit primitive in a Clifford word.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clifford1 {
    H,
    S,
}

struct CliffordTable {
    entries: Vec<(Mat2, Vec<Clifford1>)>,
}

fn word_matrix(word: &[Clifford1]) -> Mat2 {
    let s = matrix::phase(std::f64::consts::FRAC_PI_2);
    let h = matrix::hadamard();
    word.iter().fold(matrix::IDENTITY, |acc, g| {
        let m = match g {
            Clifford1::H => &h,
            Clifford1::S => &s,
        };
        matrix::mul(m, &acc)
    })
}

fn clifford_table() -> &'static CliffordTable {
    static TABLE: OnceLock<CliffordTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mut entries: Vec<(Mat2, Vec<Clifford1>)> = vec![(matrix::IDENTITY, Vec::new())];
        let mut frontier = 0;
        while frontier < entries.len() {
            let word = entries[frontier].1.clone();
            frontier += 1;
            for g in [Clifford1::H, Clifford1::S] {
                let mut w = word.clone();
                w.push(g);
                let m = word_matrix(&w);
                if !entries
                    .iter()
                    .any(|(e, _)| matrix::equal_up_to_phase(&m, e, 1e-9).is_some())
                {
                    entries.push((m, w));
                }
            }
        }
        debug_assert_eq!(entries.len(), 24);
        CliffordTable { entries }
    })
}

/// Number of single-qubit Cliffords modulo phase (24).
pub fn single_qubit_clifford_count() -> usize {
    clifford_table().entries.len()
}

/// If `m = phase · W` for a Clifford word `W` (applied first element first),
/// returns `(W, phase)`.
pub fn clifford_word(m: &Mat2) -> Option<(&'static [Clifford1], C64)> {
    clifford_table()
        .entries
        .iter()
        .find_map(|(e, w)| matrix::equal_up_to_phase(m, e, CLIFFORD_TOL).map(|ph| (w.as_slice(), ph)))
}

pub fn word_ops(word: &[Clifford1], q: usize) -> impl Iterator<Item = CliffordOp> + '_ {
    word.iter().map(move |g| match g {
        Clifford1::H => CliffordOp::H(q),
        Clifford1::S => CliffordOp::S(q),
    })
}

/// Decomposes a single-control gate with inner `phase · P` (P a Pauli or
/// identity, phase a power of i) into tableau ops.
pub fn controlled_clifford_ops(inner: &Mat2, control: usize, polarity: bool, target: usize) -> Option<Vec<CliffordOp>> {
    let (p, ph) = matrix::as_pauli(inner, CLIFFORD_TOL)?;
    let k = [C64::new(1.0, 0.0), C64::new(0.0, 1.0), C64::new(-1.0, 0.0), C64::new(0.0, -1.0)]
        .iter()
        .position(|u| (u - ph).norm() <= CLIFFORD_TOL)?;
    let mut ops = Vec::new();
    if !polarity {
        ops.push(CliffordOp::X(control));
    }
    match p {
        matrix::Pauli::I => {}
        matrix::Pauli::X => ops.push(CliffordOp::Cx(control, target)),
        matrix::Pauli::Y => ops.push(CliffordOp::Cy(control, target)),
        matrix::Pauli::Z => ops.push(CliffordOp::Cz(control, target)),
    }
    // Controlled global phase i^k is S^k on the control.
    match k {
        1 => ops.push(CliffordOp::S(control)),
        2 => ops.push(CliffordOp::Z(control)),
        3 => ops.push(CliffordOp::Sdg(control)),
        _ => {}
    }
    if !polarity {
        ops.push(CliffordOp::X(control));
    }
    Some(ops)
}

/// Tableau ops implementing `g` exactly up to the returned global phase.
pub fn clifford_decomposition(g: &Gate) -> Option<(Vec<CliffordOp>, C64)> {
    let one = C64::new(1.0, 0.0);
    match &g.kind {
        GateKind::Swap => Some((vec![CliffordOp::Swap(g.targets[0], g.targets[1])], one)),
        GateKind::Measure => None,
        GateKind::Controlled {
            inner,
            controls,
            polarity,
        } => {
            if controls.len() != 1 {
                return None;
            }
            let m = inner.matrix()?;
            controlled_clifford_ops(&m, controls[0], polarity[0], g.targets[0]).map(|ops| (ops, one))
        }
        kind => {
            let m = kind.matrix()?;
            let (word, ph) = clifford_word(&m)?;
            Some((word_ops(word, g.targets[0]).collect(), ph))
        }
    }
}

/// Whether a gate of this kind can be applied to a stabilizer shard: single
/// qubit unitaries equal to a Clifford up to phase, SWAP, and single-control
/// gates whose inner gate is a Pauli (or identity) times a power of i, with
/// either polarity.
pub fn is_clifford(kind: &GateKind) -> bool {
    match kind {
        GateKind::Swap => true,
        GateKind::Measure => false,
        GateKind::Controlled { inner, controls, .. } => {
            controls.len() == 1
                && inner
                    .matrix()
                    .is_some_and(|m| controlled_clifford_ops(&m, 0, true, 1).is_some())
        }
        k => k.matrix().is_some_and(|m| clifford_word(&m).is_some()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ket::fidelity;
    use std::f64::consts::PI;

    fn pauli_str(p: &PauliString) -> String {
        let mut s = String::from(if p.negative { "-" } else { "+" });
        for q in 0..p.x.len() {
            s.push(match (p.x[q], p.z[q]) {
                (false, false) => 'I',
                (true, false) => 'X',
                (false, true) => 'Z',
                (true, true) => 'Y',
            });
        }
        s
    }

    #[test]
    fn fresh_tableau() {
        let t = StabilizerShard::new(1).unwrap();
        assert_eq!(pauli_str(&t.stabilizer(0)), "+Z");
        assert!(StabilizerShard::new(0).is_err());
        let mut t = StabilizerShard::new(3).unwrap();
        let mut r = rng::seeded(1);
        for q in 0..3 {
            assert!(!t.measure(q, &mut r).unwrap());
        }
        let k = StabilizerShard::new(2).unwrap().to_ket();
        assert_eq!(k.amplitudes()[0], C64::new(1.0, 0.0));
    }

    #[test]
    fn bell_stabilizers() {
        let mut t = StabilizerShard::new(2).unwrap();
        t.apply(CliffordOp::H(0)).unwrap();
        t.apply(CliffordOp::Cx(0, 1)).unwrap();
        let mut stabs: Vec<String> = (0..2).map(|i| pauli_str(&t.stabilizer(i))).collect();
        stabs.sort();
        assert_eq!(stabs, vec!["+XX", "+ZZ"]);
        assert!(t.symplectic_ok());
        let k = t.to_ket();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        assert!((k.amplitudes()[0].re - s).abs() < 1e-12 && (k.amplitudes()[3].re - s).abs() < 1e-12);
    }

    #[test]
    fn swap_is_involution() {
        let mut t = StabilizerShard::new(2).unwrap();
        t.apply(CliffordOp::H(0)).unwrap();
        t.apply(CliffordOp::S(1)).unwrap();
        let before = (t.xs.clone(), t.zs.clone(), t.signs.clone());
        t.apply(CliffordOp::Swap(0, 1)).unwrap();
        t.apply(CliffordOp::Swap(0, 1)).unwrap();
        assert_eq!(before, (t.xs.clone(), t.zs.clone(), t.signs.clone()));
    }

    #[test]
    fn bell_measurements_correlate() {
        for seed in 0..20 {
            let mut t = StabilizerShard::new(2).unwrap();
            t.apply(CliffordOp::H(0)).unwrap();
            t.apply(CliffordOp::Cx(0, 1)).unwrap();
            let mut r = rng::seeded(seed);
            let a = t.measure(0, &mut r).unwrap();
            let b = t.measure(1, &mut r).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn plus_measurement_is_fair() {
        let mut r = rng::seeded(77);
        let mut ones = 0;
        for _ in 0..10_000 {
            let mut t = StabilizerShard::new(1).unwrap();
            t.apply(CliffordOp::H(0)).unwrap();
            ones += t.measure(0, &mut r).unwrap() as usize;
        }
        let f = ones as f64 / 10_000.0;
        assert!((0.47..=0.53).contains(&f), "{f}");
    }

    #[test]
    fn clifford_recognition() {
        assert_eq!(single_qubit_clifford_count(), 24);
        assert!(is_clifford(&GateKind::H));
        assert!(!is_clifford(&GateKind::Rz(PI / 4.0)));
        assert!(is_clifford(&GateKind::Rz(PI / 2.0)));
        assert!(is_clifford(&GateKind::U3 {
            theta: PI,
            phi: 0.0,
            lambda: PI
        }));
        assert!(!is_clifford(&GateKind::U3 {
            theta: 0.3,
            phi: 0.0,
            lambda: 0.0
        }));
        assert!(is_clifford(&GateKind::Phase(-PI / 2.0)));
        assert!(is_clifford(&Gate::controlled(GateKind::Y, 0, false, 1).kind));
        assert!(is_clifford(&Gate::cphase(PI, 0, 1).kind));
        assert!(!is_clifford(&Gate::cphase(PI / 2.0, 0, 1).kind));
        assert!(!is_clifford(&GateKind::Measure));
    }

    #[test]
    fn apply_clifford_rejects_non_clifford() {
        let mut t = StabilizerShard::new(1).unwrap();
        assert!(matches!(
            t.apply_clifford(&Gate::single(GateKind::Rz(0.1), 0)),
            Err(TableauError::NotClifford(_))
        ));
        assert!(t.log().is_empty());
    }

    #[test]
    fn tensor_matches_kron() {
        let mut a = StabilizerShard::new(2).unwrap();
        a.apply(CliffordOp::H(0)).unwrap();
        a.apply(CliffordOp::Cy(0, 1)).unwrap();
        let mut b = StabilizerShard::new(1).unwrap();
        b.apply(CliffordOp::H(0)).unwrap();
        b.apply(CliffordOp::S(0)).unwrap();
        let t = a.tensor(&b);
        assert!(t.symplectic_ok());
        let k = t.to_ket();
        let expect = a.to_ket().kron_compose(&b.to_ket());
        assert!(fidelity(&k, &expect).unwrap() > 1.0 - 1e-12);
        for i in 0..3 {
            let mut v = k.clone();
            t.stabilizer(i).apply_dense(&mut v);
            assert!(fidelity(&v, &k).unwrap() > 1.0 - 1e-12);
            let ip: C64 = v.amplitudes().iter().zip(k.amplitudes()).map(|(x, y)| x.conj() * y).sum();
            assert!((ip - C64::new(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn deterministic_z_reports_value() {
        let mut t = StabilizerShard::new(2).unwrap();
        t.apply(CliffordOp::X(1)).unwrap();
        assert_eq!(t.deterministic_z(1).unwrap(), Some(true));
        assert_eq!(t.deterministic_z(0).unwrap(), Some(false));
        t.apply(CliffordOp::H(0)).unwrap();
        assert_eq!(t.deterministic_z(0).unwrap(), None);
        t.apply(CliffordOp::Cx(0, 1)).unwrap();
        assert_eq!(t.deterministic_z(1).unwrap(), None);
    }
}
