//! Sensor and bath operator construction.
//!
//! The sensor is a two-level system with S_z = diag(1/2, -1/2). Each bath
//! spin is a nuclear spin-1/2 with operators I_alpha = sigma_alpha / 2,
//! precessing under h_bath = (omega0 + a_par/2) I_z and coupling to the
//! sensor through b_op = a_perp I_x. All angular frequencies are rad/s.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{expm_hermitian, kron, ComplexMatrix};
use crate::tol;

/// 13C gyromagnetic ratio over 2 pi, Hz per tesla.
pub const GAMMA_C13_HZ_PER_T: f64 = 10.705e6;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[
        vec![c(0.0, 0.0), c(1.0, 0.0)],
        vec![c(1.0, 0.0), c(0.0, 0.0)],
    ])
    .expect("static 2x2")
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_rows(&[
        vec![c(0.0, 0.0), c(0.0, -1.0)],
        vec![c(0.0, 1.0), c(0.0, 0.0)],
    ])
    .expect("static 2x2")
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diag(&[1.0, -1.0])
}

/// Sensor-side operators used by the protocol executors.
#[derive(Debug, Clone)]
pub struct SensorOps {
    pub s_z: ComplexMatrix,
    pub pauli_x: ComplexMatrix,
    pub pauli_y: ComplexMatrix,
    pub pauli_z: ComplexMatrix,
    /// |x><x|, the +1 eigenstate of sigma_x as a density matrix.
    pub plus_x_state: ComplexMatrix,
}

impl SensorOps {
    pub fn new() -> Self {
        let half = 0.5;
        let plus_x_state = ComplexMatrix::from_fn(2, |_, _| c(half, 0.0));
        Self {
            s_z: ComplexMatrix::from_real_diag(&[0.5, -0.5]),
            pauli_x: pauli_x(),
            pauli_y: pauli_y(),
            pauli_z: pauli_z(),
            plus_x_state,
        }
    }

    /// Density matrix (1 + sign * sigma_axis) / 2 for the given axis.
    pub fn eigenstate(&self, axis: Axis, sign: Sign) -> ComplexMatrix {
        let sigma = match axis {
            Axis::X => &self.pauli_x,
            Axis::Y => &self.pauli_y,
            Axis::Z => &self.pauli_z,
        };
        let signed = sigma.scaled_re(sign.value() * 0.5);
        &ComplexMatrix::identity(2).scaled_re(0.5) + &signed
    }

    pub fn sigma(&self, axis: Axis) -> &ComplexMatrix {
        match axis {
            Axis::X => &self.pauli_x,
            Axis::Y => &self.pauli_y,
            Axis::Z => &self.pauli_z,
        }
    }
}

impl Default for SensorOps {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
    Z,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    pub fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// Hyperfine parameters of one bath spin (rad/s, rad/s, dimensionless).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BathSpinParams {
    pub a_par: f64,
    pub a_perp: f64,
    pub p_z: f64,
}

/// A sensor qubit coupled to a register of nuclear bath spins.
#[derive(Debug, Clone)]
pub struct SpinSystem {
    pub dim_sensor: usize,
    pub dim_bath: usize,
    /// Free bath Hamiltonian, sum of (omega0 + a_par_i/2) I_z^(i).
    pub h_bath: ComplexMatrix,
    /// Coupling operator, sum of a_perp_i I_x^(i).
    pub b_op: ComplexMatrix,
    /// Initial bath state, product of (1/2 + p_z_i I_z^(i)).
    pub rho_bath: ComplexMatrix,
    pub omega0: f64,
    pub spins: Vec<BathSpinParams>,
}

impl SpinSystem {
    pub fn n_spins(&self) -> usize {
        self.spins.len()
    }

    /// Effective precession frequency omega0 + a_par/2 of one bath spin.
    pub fn effective_omega(&self, spin: usize) -> f64 {
        self.omega0 + self.spins[spin].a_par / 2.0
    }

    pub fn joint_dim(&self) -> usize {
        self.dim_sensor * self.dim_bath
    }
}

/// Embeds a single-spin operator at position `slot` of an n-spin register.
fn embed(op: &ComplexMatrix, slot: usize, n_spins: usize) -> ComplexMatrix {
    let mut out = ComplexMatrix::identity(1);
    for i in 0..n_spins {
        let factor = if i == slot {
            op.clone()
        } else {
            ComplexMatrix::identity(2)
        };
        out = kron(&out, &factor);
    }
    out
}

/// Builds a bath of identical spins. For distinct hyperfine parameters use
/// [`build_bath_multi`].
pub fn build_bath(
    omega0: f64,
    a_par: f64,
    a_perp: f64,
    p_z: f64,
    n_spins: usize,
) -> Result<SpinSystem> {
    let spin = BathSpinParams { a_par, a_perp, p_z };
    build_bath_multi(omega0, &vec![spin; n_spins])
}

/// Builds a bath where each spin carries its own (a_par, a_perp, p_z).
pub fn build_bath_multi(omega0: f64, spins: &[BathSpinParams]) -> Result<SpinSystem> {
    if spins.is_empty() {
        return Err(Error::InvalidArgument(
            "bath needs at least one spin".into(),
        ));
    }
    if !omega0.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite omega0 {omega0}"
        )));
    }
    for (i, s) in spins.iter().enumerate() {
        if !(s.a_par.is_finite() && s.a_perp.is_finite() && s.p_z.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "non-finite parameters on spin {i}"
            )));
        }
        if s.p_z.abs() > 1.0 {
            return Err(Error::InvalidPolarization(s.p_z));
        }
    }
    let n = spins.len();
    let dim_bath = 1usize << n;
    let i_z = pauli_z().scaled_re(0.5);
    let i_x = pauli_x().scaled_re(0.5);

    let mut h_bath = ComplexMatrix::zeros(dim_bath);
    let mut b_op = ComplexMatrix::zeros(dim_bath);
    let mut rho_bath = ComplexMatrix::identity(1);
    for (i, s) in spins.iter().enumerate() {
        let omega_i = omega0 + s.a_par / 2.0;
        h_bath = &h_bath + &embed(&i_z, i, n).scaled_re(omega_i);
        b_op = &b_op + &embed(&i_x, i, n).scaled_re(s.a_perp);
        let single = &ComplexMatrix::identity(2).scaled_re(0.5) + &i_z.scaled_re(s.p_z);
        rho_bath = kron(&rho_bath, &single);
    }

    debug_assert!(h_bath.is_hermitian(tol::STRUCTURAL));
    debug_assert!(b_op.is_hermitian(tol::STRUCTURAL));
    debug_assert!(rho_bath.is_psd(tol::STRUCTURAL));
    debug_assert!(rho_bath.has_unit_trace(tol::STRUCTURAL));

    Ok(SpinSystem {
        dim_sensor: 2,
        dim_bath,
        h_bath,
        b_op,
        rho_bath,
        omega0,
        spins: spins.to_vec(),
    })
}

/// Heisenberg-picture coupling operator exp(i h_bath t) b_op exp(-i h_bath t).
pub fn heisenberg_b(sys: &SpinSystem, t: f64) -> Result<ComplexMatrix> {
    let fwd = expm_hermitian(&sys.h_bath, t)?;
    Ok(&(&fwd * &sys.b_op) * &fwd.adjoint())
}

/// Accumulated interrogation phase operator t_interr * b(t_center).
pub fn phase_operator(sys: &SpinSystem, t_interr: f64, t_center: f64) -> Result<ComplexMatrix> {
    if t_interr < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "negative t_interr {t_interr}"
        )));
    }
    Ok(heisenberg_b(sys, t_center)?.scaled_re(t_interr))
}
