//! Factorized hybrid simulator for gate-model quantum circuits.
//!
//! The global state is kept as a tensor product of shards, each either a
//! stabilizer tableau or a dense state vector. Gates pass through per-qubit
//! buffers and unobservable rewrites before touching amplitudes, and an
//! optional Schmidt-rounding step projects weakly entangled qubits out of
//! their shards while recording the fidelity it costs.

pub mod circuit;
pub mod engine;
pub mod ket;
pub mod matrix;
pub mod rng;
pub mod tableau;
pub mod validate;
