//! Shared fixtures for the benchmark suite.

use std::f64::consts::TAU;

use qcorr_core::{build_bath, NoiseModel, SpinSystem};

/// Single 13C-like spin at the parameters used throughout the test suite.
pub fn single_spin_system() -> SpinSystem {
    build_bath(TAU * 5.395e5, TAU * 5.84e4, TAU * 6.04e4, 0.5, 1).unwrap()
}

/// Same couplings replicated over `n` spins; dimension grows as 2^(n+1).
pub fn multi_spin_system(n: usize) -> SpinSystem {
    build_bath(TAU * 5.395e5, TAU * 5.84e4, TAU * 6.04e4, 0.5, n).unwrap()
}

pub fn lorentzian_noise() -> NoiseModel {
    NoiseModel::ou_lorentzian(5.0 * TAU * 6.04e4, 4.5e3, 5.59e5, 31).unwrap()
}
