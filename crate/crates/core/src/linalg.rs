//! Dense complex matrices plus the handful of operations the simulator
//! needs: Kronecker products, Hermitian matrix exponentials, bath partial
//! traces and (anti)commutators.
//!
//! Composite indices follow sensor (x) bath ordering with the left factor
//! slowest: row = sensor_row * dim_bath + bath_row.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tol;

/// Square complex matrix with f64 components.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    pub(crate) data: DMatrix<Complex64>,
}

impl ComplexMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            data: DMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            data: DMatrix::identity(dim, dim),
        }
    }

    /// Builds a matrix from a row-major closure over (row, col).
    pub fn from_fn(dim: usize, f: impl Fn(usize, usize) -> Complex64) -> Self {
        Self {
            data: DMatrix::from_fn(dim, dim, f),
        }
    }

    /// Builds a square matrix from row-major nested slices.
    pub fn from_rows(rows: &[Vec<Complex64>]) -> Result<Self> {
        let dim = rows.len();
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::DimensionMismatch(format!(
                "expected {dim} entries per row for a {dim}x{dim} matrix"
            )));
        }
        Ok(Self::from_fn(dim, |r, c| rows[r][c]))
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self::from_fn(diag.len(), |r, c| {
            if r == c {
                Complex64::new(diag[r], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        })
    }

    pub(crate) fn from_raw(data: DMatrix<Complex64>) -> Self {
        assert!(data.is_square(), "ComplexMatrix must be square");
        Self { data }
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn get(&self, row: usize, col: usize) -> Complex64 {
        self.data[(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, value: Complex64) {
        self.data[(row, col)] = value;
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> Self {
        Self {
            data: self.data.adjoint(),
        }
    }

    pub fn trace(&self) -> Complex64 {
        self.data.trace()
    }

    pub fn scaled(&self, factor: Complex64) -> Self {
        Self {
            data: &self.data * factor,
        }
    }

    pub fn scaled_re(&self, factor: f64) -> Self {
        self.scaled(Complex64::new(factor, 0.0))
    }

    /// Largest |a_ij| over all entries.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest |a_ij - conj(a_ji)| over all entries.
    pub fn hermiticity_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for r in 0..self.dim() {
            for c in r..self.dim() {
                dev = dev.max((self.data[(r, c)] - self.data[(c, r)].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        let product = &self.data * self.data.adjoint();
        let identity = DMatrix::<Complex64>::identity(self.dim(), self.dim());
        (product - identity).iter().all(|z| z.norm() <= tol)
    }

    /// Hermitian within `tol` and all eigenvalues at or above `-tol`.
    pub fn is_psd(&self, tol: f64) -> bool {
        if !self.is_hermitian(tol.max(tol::STRUCTURAL)) {
            return false;
        }
        self.data.symmetric_eigenvalues().iter().all(|&v| v >= -tol)
    }

    pub fn has_unit_trace(&self, tol: f64) -> bool {
        (self.trace() - Complex64::new(1.0, 0.0)).norm() <= tol
    }

    /// Eigenvalues of a Hermitian matrix, ascending.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        self.require_hermitian()?;
        let mut vals: Vec<f64> = self.data.symmetric_eigenvalues().iter().copied().collect();
        vals.sort_by(|a, b| a.total_cmp(b));
        Ok(vals)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    fn require_hermitian(&self) -> Result<()> {
        let deviation = self.hermiticity_deviation();
        if deviation > tol::STRUCTURAL {
            return Err(Error::NotHermitian {
                deviation,
                tol: tol::STRUCTURAL,
            });
        }
        Ok(())
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, idx: (usize, usize)) -> &Complex64 {
        &self.data[idx]
    }
}

impl std::ops::Add for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            data: &self.data + &rhs.data,
        }
    }
}

impl std::ops::Sub for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            data: &self.data - &rhs.data,
        }
    }
}

impl std::ops::Mul for &ComplexMatrix {
    type Output = ComplexMatrix;
    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        ComplexMatrix {
            data: &self.data * &rhs.data,
        }
    }
}

/// Kronecker product; the left factor owns the slow index.
pub fn kron(a: &ComplexMatrix, b: &ComplexMatrix) -> ComplexMatrix {
    ComplexMatrix {
        data: a.data.kronecker(&b.data),
    }
}

/// [a, b] = ab - ba.
pub fn commutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_same_dim(a, b, "commutator")?;
    Ok(ComplexMatrix {
        data: &a.data * &b.data - &b.data * &a.data,
    })
}

/// {a, b} = ab + ba.
pub fn anticommutator(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    check_same_dim(a, b, "anticommutator")?;
    Ok(ComplexMatrix {
        data: &a.data * &b.data + &b.data * &a.data,
    })
}

fn check_same_dim(a: &ComplexMatrix, b: &ComplexMatrix, op: &str) -> Result<()> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{op} needs equal dimensions, got {} and {}",
            a.dim(),
            b.dim()
        )));
    }
    Ok(())
}

/// exp(i * scale * h) for Hermitian h, via eigendecomposition. The result
/// is unitary by construction.
pub fn expm_hermitian(h: &ComplexMatrix, scale: f64) -> Result<ComplexMatrix> {
    let deviation = h.hermiticity_deviation();
    if deviation > tol::STRUCTURAL {
        return Err(Error::NotHermitian {
            deviation,
            tol: tol::STRUCTURAL,
        });
    }
    if !scale.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "non-finite exponent scale {scale}"
        )));
    }
    let eig = h.data.clone().symmetric_eigen();
    let dim = h.dim();
    let mut phased = eig.eigenvectors.clone();
    // Columns scaled by the eigenvalue phases; product with the adjoint
    // reassembles V diag(e^{i s lambda}) V^dagger.
    for (col, &lambda) in eig.eigenvalues.iter().enumerate() {
        let phase = Complex64::from_polar(1.0, scale * lambda);
        for row in 0..dim {
            phased[(row, col)] *= phase;
        }
    }
    Ok(ComplexMatrix {
        data: phased * eig.eigenvectors.adjoint(),
    })
}

/// Traces out the bath (fast) factor of a sensor (x) bath operator.
pub fn partial_trace_bath(
    rho: &ComplexMatrix,
    dim_sensor: usize,
    dim_bath: usize,
) -> Result<ComplexMatrix> {
    if dim_sensor * dim_bath != rho.dim() {
        return Err(Error::DimensionMismatch(format!(
            "partial trace expects dim {} but matrix has dim {}",
            dim_sensor * dim_bath,
            rho.dim()
        )));
    }
    let mut reduced = ComplexMatrix::zeros(dim_sensor);
    for sr in 0..dim_sensor {
        for sc in 0..dim_sensor {
            let mut sum = Complex64::new(0.0, 0.0);
            for b in 0..dim_bath {
                sum += rho.data[(sr * dim_bath + b, sc * dim_bath + b)];
            }
            reduced.data[(sr, sc)] = sum;
        }
    }
    Ok(reduced)
}
