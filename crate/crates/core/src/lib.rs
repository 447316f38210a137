//! Correlation-protocol simulator for a qubit sensor coupled to nuclear
//! spins.
//!
//! The crate models two pulse protocols that estimate the autocorrelation
//! of the field seen by a single sensor qubit:
//!
//! * the QC protocol, which dephases the sensor between two interrogation
//!   windows and therefore responds only to the quantum (commutator) part
//!   of the bath correlation, and
//! * the CC protocol, which stores the first window's phase as population
//!   before dephasing and therefore also picks up classical field
//!   correlations.
//!
//! Module map:
//!
//! * [`linalg`]: dense complex matrices, Kronecker products, Hermitian
//!   exponentials, partial trace.
//! * [`spin`]: sensor operators and the nuclear-spin bath (Hamiltonian,
//!   coupling operator, thermal-polarized state).
//! * [`noise`]: classical field models (coherent tones, white,
//!   Lorentzian-band Ornstein-Uhlenbeck) with deterministic per-trajectory
//!   streams and a periodogram estimator.
//! * [`protocol`]: sequence builders, the exact and Monte-Carlo executors,
//!   delay sweeps.
//! * [`analysis`]: correlation traces, spectra, peak finding, second-order
//!   closed-form predictions.
//! * [`oracle`]: an independent naive integrator used to cross-check the
//!   executor, plus the calibration of the closed-form prefactor.
//! * [`tol`]: the named numerical tolerances used everywhere.

pub mod analysis;
pub mod error;
pub mod linalg;
pub mod noise;
pub mod oracle;
pub mod protocol;
pub mod spin;
pub mod tol;

pub use analysis::{
    find_peak, fit_sin_cos, predict_cc_eq2, predict_qc_eq1, predict_qc_eq3, spectrum,
    CorrelationTrace, PeakInfo, Spectrum, Window, EQ3_CALIBRATION,
};
pub use error::{Error, Result};
pub use linalg::{
    anticommutator, commutator, expm_hermitian, kron, partial_trace_bath, ComplexMatrix,
};
pub use noise::{
    default_noise_dt, psd_estimate, sample_trajectory, NoiseKind, NoiseModel, NoiseTrajectory,
};
pub use oracle::{calibrate_eq3_constant, oracle_execute};
pub use protocol::{
    build_cc_sequence, build_qc_sequence, default_substep_dt, execute_checked, execute_exact,
    execute_mc, execute_with_phase, mc_stats, pairwise_sum, sweep_delay, ExecMode, ExecutionResult,
    McOptions, ProtocolKind, ProtocolSequence, ProtocolStep, RandomizeMode, RunMode, SweepOptions,
};
pub use spin::{
    build_bath, build_bath_multi, heisenberg_b, phase_operator, Axis, BathSpinParams, SensorOps,
    Sign, SpinSystem, GAMMA_C13_HZ_PER_T,
};
