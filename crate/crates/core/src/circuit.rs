//! Circuit representation, deterministic circuit builders and the line-oriented
//! circuit file format.
//!
//! Qubit 0 is the least-significant bit of a computational-basis index.

use std::f64::consts::PI;
use std::fmt::Write as _;

use thiserror::Error;

use crate::matrix::{self, Mat2};
use crate::rng;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("circuit width must be at least {min}, got {got}")]
    Width { min: usize, got: usize },
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("qubit {qubit} out of range for width {width}")]
    QubitOutOfRange { qubit: usize, width: usize },
    #[error("qubit {0} used more than once in one gate")]
    DuplicateQubit(usize),
    #[error("gate {kind} expects {expected} target(s), got {got}")]
    Arity {
        kind: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("controlled gate needs a single-qubit inner gate and one polarity bit per control")]
    BadControl,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("gate {0} has no mnemonic in the circuit file format")]
    Unrepresentable(String),
}

/// Gate kinds. Angles are in radians.
#[derive(Debug, Clone, PartialEq)]
pub enum GateKind {
    H,
    X,
    Y,
    Z,
    Rz(f64),
    /// `diag(1, e^{iθ})`.
    Phase(f64),
    U3 {
        theta: f64,
        phi: f64,
        lambda: f64,
    },
    Swap,
    /// `inner` acts on the single target when every control matches its
    /// polarity bit (`true` activates on |1⟩, `false` on |0⟩).
    Controlled {
        inner: Box<GateKind>,
        controls: Vec<usize>,
        polarity: Vec<bool>,
    },
    Measure,
}

impl GateKind {
    pub fn name(&self) -> &'static str {
        match self {
            GateKind::H => "h",
            GateKind::X => "x",
            GateKind::Y => "y",
            GateKind::Z => "z",
            GateKind::Rz(_) => "rz",
            GateKind::Phase(_) => "p",
            GateKind::U3 { .. } => "u3",
            GateKind::Swap => "swap",
            GateKind::Controlled { .. } => "controlled",
            GateKind::Measure => "m",
        }
    }

    /// Matrix of a single-qubit unitary kind; `None` for SWAP, controlled
    /// gates and measurement.
    pub fn matrix(&self) -> Option<Mat2> {
        Some(match *self {
            GateKind::H => matrix::hadamard(),
            GateKind::X => matrix::PAULI_X,
            GateKind::Y => matrix::PAULI_Y,
            GateKind::Z => matrix::PAULI_Z,
            GateKind::Rz(t) => matrix::rz(t),
            GateKind::Phase(t) => matrix::phase(t),
            GateKind::U3 { theta, phi, lambda } => u3_matrix(theta, phi, lambda),
            GateKind::Swap | GateKind::Controlled { .. } | GateKind::Measure => return None,
        })
    }

    pub fn is_single_qubit_unitary(&self) -> bool {
        self.matrix().is_some()
    }

    fn target_count(&self) -> usize {
        match self {
            GateKind::Swap => 2,
            _ => 1,
        }
    }
}

pub fn u3_matrix(theta: f64, phi: f64, lambda: f64) -> Mat2 {
    matrix::u3(theta, phi, lambda)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub kind: GateKind,
    pub targets: Vec<usize>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<usize>) -> Self {
        Gate { kind, targets }
    }

    pub fn single(kind: GateKind, q: usize) -> Self {
        Gate::new(kind, vec![q])
    }

    pub fn controlled(inner: GateKind, control: usize, polarity: bool, target: usize) -> Self {
        Gate::new(
            GateKind::Controlled {
                inner: Box::new(inner),
                controls: vec![control],
                polarity: vec![polarity],
            },
            vec![target],
        )
    }

    pub fn cx(c: usize, t: usize) -> Self {
        Gate::controlled(GateKind::X, c, true, t)
    }

    pub fn cz(c: usize, t: usize) -> Self {
        Gate::controlled(GateKind::Z, c, true, t)
    }

    pub fn cphase(theta: f64, c: usize, t: usize) -> Self {
        Gate::controlled(GateKind::Phase(theta), c, true, t)
    }

    pub fn swap(a: usize, b: usize) -> Self {
        Gate::new(GateKind::Swap, vec![a, b])
    }

    /// Every qubit the gate touches: controls first, then targets.
    pub fn qubits(&self) -> Vec<usize> {
        let mut qs = match &self.kind {
            GateKind::Controlled { controls, .. } => controls.clone(),
            _ => Vec::new(),
        };
        qs.extend_from_slice(&self.targets);
        qs
    }

    pub fn validate(&self, width: usize) -> Result<(), CircuitError> {
        let expected = self.kind.target_count();
        if self.targets.len() != expected {
            return Err(CircuitError::Arity {
                kind: self.kind.name(),
                expected,
                got: self.targets.len(),
            });
        }
        if let GateKind::Controlled {
            inner,
            controls,
            polarity,
        } = &self.kind
        {
            if !inner.is_single_qubit_unitary() || controls.len() != polarity.len() || controls.is_empty() {
                return Err(CircuitError::BadControl);
            }
        }
        let qs = self.qubits();
        for (i, &q) in qs.iter().enumerate() {
            if q >= width {
                return Err(CircuitError::QubitOutOfRange { qubit: q, width });
            }
            if qs[..i].contains(&q) {
                return Err(CircuitError::DuplicateQubit(q));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Circuit {
    width: usize,
    gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(width: usize) -> Result<Self, CircuitError> {
        if width == 0 {
            return Err(CircuitError::Width { min: 1, got: 0 });
        }
        Ok(Circuit {
            width,
            gates: Vec::new(),
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }

    pub fn push(&mut self, gate: Gate) -> Result<(), CircuitError> {
        gate.validate(self.width)?;
        self.gates.push(gate);
        Ok(())
    }

    /// Appends all gates of `other`, which must not be wider.
    pub fn extend(&mut self, other: &Circuit) -> Result<(), CircuitError> {
        for g in other.gates() {
            self.push(g.clone())?;
        }
        Ok(())
    }

    fn push_unchecked(&mut self, gate: Gate) {
        debug_assert!(gate.validate(self.width).is_ok());
        self.gates.push(gate);
    }
}

/// QFT: for each qubit from the top down, a Hadamard followed by controlled
/// phases `π/2^k` from the `k`-th lower qubit, then a bit-reversal made of
/// SWAPs. Acting on amplitudes `x` it yields `y_j = N^{-1/2} Σ_k x_k e^{2πi jk/N}`.
pub fn build_qft(n: usize) -> Result<Circuit, CircuitError> {
    let mut c = Circuit::new(n)?;
    for j in (0..n).rev() {
        c.push_unchecked(Gate::single(GateKind::H, j));
        for k in 1..=j {
            c.push_unchecked(Gate::cphase(PI / (1u64 << k) as f64, j - k, j));
        }
    }
    for i in 0..n / 2 {
        c.push_unchecked(Gate::swap(i, n - 1 - i));
    }
    Ok(c)
}

pub fn build_ghz(n: usize) -> Result<Circuit, CircuitError> {
    let mut c = Circuit::new(n)?;
    c.push_unchecked(Gate::single(GateKind::H, 0));
    for q in 1..n {
        c.push_unchecked(Gate::cx(q - 1, q));
    }
    Ok(c)
}

/// Coupler-edge classes of the random-circuit grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EdgeClass {
    A,
    B,
    C,
    D,
}

const LAYER_PATTERN: [EdgeClass; 8] = [
    EdgeClass::A,
    EdgeClass::B,
    EdgeClass::C,
    EdgeClass::D,
    EdgeClass::C,
    EdgeClass::D,
    EdgeClass::A,
    EdgeClass::B,
];

/// Edge class used by layer `layer` (ABCDCDAB, repeating).
pub fn layer_class(layer: usize) -> EdgeClass {
    LAYER_PATTERN[layer % LAYER_PATTERN.len()]
}

/// Near-square grid: `rows = floor(sqrt(width))`, `cols = ceil(width / rows)`,
/// qubit `r * cols + c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub rows: usize,
    pub cols: usize,
}

impl Grid {
    pub fn for_width(width: usize) -> Self {
        let rows = ((width as f64).sqrt().floor() as usize).max(1);
        let cols = width.div_ceil(rows);
        Grid { rows, cols }
    }

    /// Edges of one class, restricted to qubits `< width`, in row-major order.
    ///
    /// A: horizontal edges starting on an even column, B: horizontal from an
    /// odd column, C: vertical from an even row, D: vertical from an odd row.
    /// Each class is a matching.
    pub fn edges(&self, class: EdgeClass, width: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.rows {
            for c in 0..self.cols {
                let a = r * self.cols + c;
                let b = match class {
                    EdgeClass::A if c % 2 == 0 && c + 1 < self.cols => a + 1,
                    EdgeClass::B if c % 2 == 1 && c + 1 < self.cols => a + 1,
                    EdgeClass::C if r % 2 == 0 && r + 1 < self.rows => a + self.cols,
                    EdgeClass::D if r % 2 == 1 && r + 1 < self.rows => a + self.cols,
                    _ => continue,
                };
                if a < width && b < width {
                    out.push((a, b));
                }
            }
        }
        out
    }
}

/// Sycamore-style random circuit.
///
/// Each layer applies `U3(θ, φ, λ)` with all three angles uniform on `[0, 2π)`
/// to every qubit, then one coupler from {CX, CY, CZ, AX, AY, AZ} with random
/// orientation on each edge of the layer's class.
pub fn build_random_circuit(width: usize, depth: usize, seed: u64) -> Result<Circuit, CircuitError> {
    if width < 2 {
        return Err(CircuitError::Width { min: 2, got: width });
    }
    if depth == 0 {
        return Err(CircuitError::ZeroDepth);
    }
    let grid = Grid::for_width(width);
    let mut r = rng::seeded(seed);
    let mut c = Circuit::new(width)?;
    let tau = 2.0 * PI;
    for layer in 0..depth {
        for q in 0..width {
            let theta = tau * rng::uniform(&mut r);
            let phi = tau * rng::uniform(&mut r);
            let lambda = tau * rng::uniform(&mut r);
            c.push_unchecked(Gate::single(GateKind::U3 { theta, phi, lambda }, q));
        }
        for (a, b) in grid.edges(layer_class(layer), width) {
            let choice = rng::below(&mut r, 6);
            let (ctl, tgt) = if rng::coin(&mut r) { (a, b) } else { (b, a) };
            let inner = match choice % 3 {
                0 => GateKind::X,
                1 => GateKind::Y,
                _ => GateKind::Z,
            };
            c.push_unchecked(Gate::controlled(inner, ctl, choice < 3, tgt));
        }
    }
    Ok(c)
}

/// Parses the line-oriented circuit format (`qubits <n>` header, one gate per
/// line, `#` comments).
pub fn parse_circuit(text: &str) -> Result<Circuit, CircuitError> {
    let mut circuit: Option<Circuit> = None;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let err = |message: String| CircuitError::Parse { line, message };
        let mut words = content.split_whitespace();
        let op = words.next().unwrap_or_default();
        let args: Vec<&str> = words.collect();
        let Some(c) = circuit.as_mut() else {
            if op != "qubits" || args.len() != 1 {
                return Err(err("expected `qubits <n>` header".into()));
            }
            let n: usize = args[0]
                .parse()
                .map_err(|_| err(format!("invalid qubit count `{}`", args[0])))?;
            circuit = Some(Circuit::new(n).map_err(|e| err(e.to_string()))?);
            continue;
        };
        let (angle_count, qubit_count) = match op {
            "h" | "x" | "y" | "z" | "m" => (0, 1),
            "rz" | "p" => (1, 1),
            "u3" => (3, 1),
            "swap" | "cx" | "cy" | "cz" | "ax" | "ay" | "az" => (0, 2),
            "cp" => (1, 2),
            "qubits" => return Err(err("duplicate `qubits` header".into())),
            other => return Err(err(format!("unknown gate `{other}`"))),
        };
        if args.len() != angle_count + qubit_count {
            return Err(err(format!(
                "`{op}` takes {} operand(s), got {}",
                angle_count + qubit_count,
                args.len()
            )));
        }
        let mut angles = Vec::with_capacity(angle_count);
        for a in &args[..angle_count] {
            let v: f64 = a.parse().map_err(|_| err(format!("invalid angle `{a}`")))?;
            if !v.is_finite() {
                return Err(err(format!("non-finite angle `{a}`")));
            }
            angles.push(v);
        }
        let mut qs = Vec::with_capacity(qubit_count);
        for a in &args[angle_count..] {
            qs.push(a.parse::<usize>().map_err(|_| err(format!("invalid qubit `{a}`")))?);
        }
        let gate = match op {
            "h" => Gate::single(GateKind::H, qs[0]),
            "x" => Gate::single(GateKind::X, qs[0]),
            "y" => Gate::single(GateKind::Y, qs[0]),
            "z" => Gate::single(GateKind::Z, qs[0]),
            "m" => Gate::single(GateKind::Measure, qs[0]),
            "rz" => Gate::single(GateKind::Rz(angles[0]), qs[0]),
            "p" => Gate::single(GateKind::Phase(angles[0]), qs[0]),
            "u3" => Gate::single(
                GateKind::U3 {
                    theta: angles[0],
                    phi: angles[1],
                    lambda: angles[2],
                },
                qs[0],
            ),
            "swap" => Gate::swap(qs[0], qs[1]),
            "cp" => Gate::cphase(angles[0], qs[0], qs[1]),
            _ => {
                let inner = match &op[1..] {
                    "x" => GateKind::X,
                    "y" => GateKind::Y,
                    _ => GateKind::Z,
                };
                Gate::controlled(inner, qs[0], op.starts_with('c'), qs[1])
            }
        };
        c.push(gate).map_err(|e| err(e.to_string()))?;
    }
    circuit.ok_or(CircuitError::Parse {
        line: text.lines().count().max(1),
        message: "missing `qubits <n>` header".into(),
    })
}

pub fn serialize_circuit(c: &Circuit) -> Result<String, CircuitError> {
    let mut out = format!("qubits {}\n", c.width());
    for g in c.gates() {
        let t = &g.targets;
        // Writing into a String cannot fail.
        let _ = match &g.kind {
            GateKind::H | GateKind::X | GateKind::Y | GateKind::Z | GateKind::Measure => {
                writeln!(out, "{} {}", g.kind.name(), t[0])
            }
            GateKind::Rz(a) | GateKind::Phase(a) => writeln!(out, "{} {a} {}", g.kind.name(), t[0]),
            GateKind::U3 { theta, phi, lambda } => writeln!(out, "u3 {theta} {phi} {lambda} {}", t[0]),
            GateKind::Swap => writeln!(out, "swap {} {}", t[0], t[1]),
            GateKind::Controlled {
                inner,
                controls,
                polarity,
            } if controls.len() == 1 => {
                let prefix = if polarity[0] { 'c' } else { 'a' };
                match inner.as_ref() {
                    GateKind::X | GateKind::Y | GateKind::Z => {
                        writeln!(out, "{prefix}{} {} {}", inner.name(), controls[0], t[0])
                    }
                    GateKind::Phase(a) if polarity[0] => writeln!(out, "cp {a} {} {}", controls[0], t[0]),
                    _ => return Err(CircuitError::Unrepresentable(format!("{:?}", g.kind))),
                }
            }
            other => return Err(CircuitError::Unrepresentable(format!("{other:?}"))),
        };
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qft_small_shapes() {
        let c = build_qft(1).unwrap();
        assert_eq!(c.gates(), &[Gate::single(GateKind::H, 0)]);
        let c = build_qft(2).unwrap();
        assert_eq!(
            c.gates(),
            &[
                Gate::single(GateKind::H, 1),
                Gate::cphase(PI / 2.0, 0, 1),
                Gate::single(GateKind::H, 0),
                Gate::swap(0, 1),
            ]
        );
        assert!(build_qft(0).is_err());
    }

    #[test]
    fn ghz_shape() {
        let c = build_ghz(3).unwrap();
        assert_eq!(
            c.gates(),
            &[Gate::single(GateKind::H, 0), Gate::cx(0, 1), Gate::cx(1, 2)]
        );
        assert!(build_ghz(0).is_err());
    }

    #[test]
    fn random_circuit_rejects_bad_sizes() {
        assert!(build_random_circuit(1, 3, 0).is_err());
        assert!(build_random_circuit(4, 0, 0).is_err());
    }

    #[test]
    fn random_circuit_is_deterministic() {
        let a = build_random_circuit(4, 1, 7).unwrap();
        let b = build_random_circuit(4, 1, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, build_random_circuit(4, 1, 8).unwrap());
    }

    #[test]
    fn grid_classes_are_matchings() {
        for width in 2..40 {
            let g = Grid::for_width(width);
            assert!(g.rows * g.cols >= width);
            for class in [EdgeClass::A, EdgeClass::B, EdgeClass::C, EdgeClass::D] {
                let mut seen = vec![false; width];
                for (a, b) in g.edges(class, width) {
                    assert!(!seen[a] && !seen[b]);
                    seen[a] = true;
                    seen[b] = true;
                }
            }
        }
    }

    #[test]
    fn parse_ghz_file() {
        let c = parse_circuit("qubits 2\nh 0\ncx 0 1\n").unwrap();
        assert_eq!(c, build_ghz(2).unwrap());
    }

    #[test]
    fn parse_comments_and_blank_lines() {
        let c = parse_circuit("# header\n\nqubits 3 # three\nu3 0.1 0.2 0.3 2\nay 2 0 # anti\nm 1\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.gates()[1], Gate::controlled(GateKind::Y, 2, false, 0));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_circuit("qubits 2\nh 5\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }), "{e}");
        let e = parse_circuit("qubits 2\nh 0\nfoo 1\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 3, .. }));
        let e = parse_circuit("qubits 2\ncx 0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
        let e = parse_circuit("qubits 2\ncx 1 1\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
        let e = parse_circuit("h 0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 1, .. }));
        let e = parse_circuit("qubits 2\nrz abc 0\n").unwrap_err();
        assert!(matches!(e, CircuitError::Parse { line: 2, .. }));
    }

    #[test]
    fn serialize_round_trip_ghz() {
        let c = build_ghz(2).unwrap();
        assert_eq!(parse_circuit(&serialize_circuit(&c).unwrap()).unwrap(), c);
    }

    #[test]
    fn serialize_rejects_multi_control() {
        let mut c = Circuit::new(3).unwrap();
        c.push(Gate::new(
            GateKind::Controlled {
                inner: Box::new(GateKind::X),
                controls: vec![0, 1],
                polarity: vec![true, true],
            },
            vec![2],
        ))
        .unwrap();
        assert!(matches!(serialize_circuit(&c), Err(CircuitError::Unrepresentable(_))));
    }

    #[test]
    fn gate_validation() {
        assert!(Gate::cx(0, 0).validate(2).is_err());
        assert!(Gate::cx(0, 2).validate(2).is_err());
        assert!(Gate::new(GateKind::Swap, vec![0]).validate(2).is_err());
        let bad = Gate::new(
            GateKind::Controlled {
                inner: Box::new(GateKind::X),
                controls: vec![0],
                polarity: vec![],
            },
            vec![1],
        );
        assert_eq!(bad.validate(2), Err(CircuitError::BadControl));
    }
}
