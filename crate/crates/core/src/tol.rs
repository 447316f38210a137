//! Shared numerical tolerances. Every structural assertion in the crate
//! references one of these named constants; no ad-hoc magic numbers.

/// Structural identities: hermiticity, unitarity, trace preservation.
pub const STRUCTURAL: f64 = 1e-10;

/// Tight numerical identities: exact cancellations and closed forms that
/// hold to machine precision.
pub const NUMERIC_IDENTITY: f64 = 1e-12;

/// Most negative eigenvalue tolerated in a density matrix before the
/// state is declared non-physical.
pub const PSD_FLOOR: f64 = -1e-8;

/// Relative deviation allowed when checking that a grid is uniform.
pub const GRID_UNIFORMITY: f64 = 1e-9;

/// Slack past 1.0 tolerated in a Pauli expectation value before the
/// executor aborts.
pub const EXPECTATION_BOUND_SLACK: f64 = 1e-9;
