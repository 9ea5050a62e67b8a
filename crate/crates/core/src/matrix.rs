//! 2×2 complex matrices used for single-qubit gates and gate buffers.

use num_complex::Complex64;

pub type C64 = Complex64;

/// Row-major 2×2 complex matrix.
pub type Mat2 = [[C64; 2]; 2];

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub const IDENTITY: Mat2 = [[ONE, ZERO], [ZERO, ONE]];
pub const PAULI_X: Mat2 = [[ZERO, ONE], [ONE, ZERO]];
pub const PAULI_Y: Mat2 = [[ZERO, C64::new(0.0, -1.0)], [I, ZERO]];
pub const PAULI_Z: Mat2 = [[ONE, ZERO], [ZERO, C64::new(-1.0, 0.0)]];

pub fn hadamard() -> Mat2 {
    let s = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    [[s, s], [s, -s]]
}

pub fn phase(theta: f64) -> Mat2 {
    [[ONE, ZERO], [ZERO, C64::from_polar(1.0, theta)]]
}

pub fn rz(theta: f64) -> Mat2 {
    [
        [C64::from_polar(1.0, -theta / 2.0), ZERO],
        [ZERO, C64::from_polar(1.0, theta / 2.0)],
    ]
}

/// General single-qubit unitary
/// `[[cos(θ/2), -e^{iλ} sin(θ/2)], [e^{iφ} sin(θ/2), e^{i(φ+λ)} cos(θ/2)]]`.
pub fn u3(theta: f64, phi: f64, lambda: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    [
        [C64::new(c, 0.0), -C64::from_polar(s, lambda)],
        [C64::from_polar(s, phi), C64::from_polar(c, phi + lambda)],
    ]
}

pub fn mul(a: &Mat2, b: &Mat2) -> Mat2 {
    [
        [
            a[0][0] * b[0][0] + a[0][1] * b[1][0],
            a[0][0] * b[0][1] + a[0][1] * b[1][1],
        ],
        [
            a[1][0] * b[0][0] + a[1][1] * b[1][0],
            a[1][0] * b[0][1] + a[1][1] * b[1][1],
        ],
    ]
}

pub fn adjoint(a: &Mat2) -> Mat2 {
    [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ]
}

pub fn scale(a: &Mat2, s: C64) -> Mat2 {
    [[a[0][0] * s, a[0][1] * s], [a[1][0] * s, a[1][1] * s]]
}

/// Largest elementwise modulus of `a - b`.
pub fn max_diff(a: &Mat2, b: &Mat2) -> f64 {
    let mut m: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            m = m.max((a[r][c] - b[r][c]).norm());
        }
    }
    m
}

pub fn is_unitary(a: &Mat2, tol: f64) -> bool {
    max_diff(&mul(&adjoint(a), a), &IDENTITY) <= tol
}

pub fn is_diagonal(a: &Mat2, tol: f64) -> bool {
    a[0][1].norm() <= tol && a[1][0].norm() <= tol
}

pub fn is_antidiagonal(a: &Mat2, tol: f64) -> bool {
    a[0][0].norm() <= tol && a[1][1].norm() <= tol
}

pub fn is_identity_up_to_phase(a: &Mat2, tol: f64) -> bool {
    equal_up_to_phase(a, &IDENTITY, tol).is_some()
}

/// If `a = e^{iα} b` within `tol`, returns `e^{iα}`.
///
/// Both arguments are assumed unitary.
pub fn equal_up_to_phase(a: &Mat2, b: &Mat2, tol: f64) -> Option<C64> {
    // Tr(b† a) = 2 e^{iα} exactly when a = e^{iα} b.
    let tr = b[0][0].conj() * a[0][0]
        + b[1][0].conj() * a[1][0]
        + b[0][1].conj() * a[0][1]
        + b[1][1].conj() * a[1][1];
    if tr.norm() < 1.0 {
        return None;
    }
    let ph = tr / tr.norm();
    if max_diff(a, &scale(b, ph)) <= tol {
        Some(ph)
    } else {
        None
    }
}

/// Decomposes `a = e^{iα} P` for a Pauli `P` (including identity).
pub fn as_pauli(a: &Mat2, tol: f64) -> Option<(Pauli, C64)> {
    for (p, m) in [
        (Pauli::I, IDENTITY),
        (Pauli::X, PAULI_X),
        (Pauli::Y, PAULI_Y),
        (Pauli::Z, PAULI_Z),
    ] {
        if let Some(ph) = equal_up_to_phase(a, &m, tol) {
            return Some((p, ph));
        }
    }
    None
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pauli {
    I,
    X,
    Y,
    Z,
}

impl Pauli {
    pub fn matrix(self) -> Mat2 {
        match self {
            Pauli::I => IDENTITY,
            Pauli::X => PAULI_X,
            Pauli::Y => PAULI_Y,
            Pauli::Z => PAULI_Z,
        }
    }
}
