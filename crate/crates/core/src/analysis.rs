//! Correlation traces, their spectra, and closed-form predictions for the
//! quantum-correlation (QC) and classical-correlation (CC) signals.
//!
//! Bath averages are taken as <O> = Tr{O rho_bath} under the I = sigma/2
//! spin normalization; [`EQ3_CALIBRATION`] pins the matching prefactor of
//! the short-time QC amplitude formula.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::linalg::{anticommutator, commutator};
use crate::spin::{phase_operator, SpinSystem};
use crate::tol;

/// Calibration constant of [`predict_qc_eq3`]: the ratio between the exact
/// short-time QC amplitude and a_perp^2 t^2 p_z sin(omega dt) / 4. Pinned
/// against the independent integrator by `oracle::calibrate_eq3_constant`.
pub const EQ3_CALIBRATION: f64 = 1.0;

/// Signal versus delay between the two interrogation windows.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTrace {
    pub delays: Vec<f64>,
    pub values: Vec<f64>,
    pub stderrs: Vec<f64>,
}

impl CorrelationTrace {
    pub fn new(delays: Vec<f64>, values: Vec<f64>, stderrs: Vec<f64>) -> Result<Self> {
        if delays.len() != values.len() || delays.len() != stderrs.len() {
            return Err(Error::DimensionMismatch(format!(
                "trace columns disagree: {} delays, {} values, {} stderrs",
                delays.len(),
                values.len(),
                stderrs.len()
            )));
        }
        if delays.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument(
                "delays must be strictly increasing".into(),
            ));
        }
        if delays
            .iter()
            .chain(values.iter())
            .chain(stderrs.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidArgument(
                "trace contains non-finite entries".into(),
            ));
        }
        Ok(Self {
            delays,
            values,
            stderrs,
        })
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Grid step if the delays are uniform within [`tol::GRID_UNIFORMITY`].
    pub fn uniform_step(&self) -> Result<f64> {
        if self.len() < 2 {
            return Err(Error::InvalidArgument("need at least two delays".into()));
        }
        let step = self.delays[1] - self.delays[0];
        for w in self.delays.windows(2) {
            let d = w[1] - w[0];
            if (d - step).abs() > tol::GRID_UNIFORMITY * step.abs() {
                return Err(Error::NonUniformGrid(format!(
                    "delay steps vary: {step:.6e} vs {d:.6e}"
                )));
            }
        }
        Ok(step)
    }
}

/// One-sided spectrum of a trace or noise record.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub amplitudes: Vec<f64>,
    /// Bin width in Hz.
    pub resolution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Rect,
    /// Symmetric Hann taper 0.5 (1 - cos(2 pi j / (n - 1))).
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|j| 0.5 * (1.0 - (std::f64::consts::TAU * j as f64 / (n as f64 - 1.0)).cos()))
                .collect(),
        }
    }
}

/// Magnitude spectrum of a mean-removed trace on a uniform delay grid.
///
/// Amplitudes are normalized by the window gain so a full-scale sinusoid
/// centered on a bin keeps its time-domain amplitude. The mean (DC) bin is
/// removed before transforming.
pub fn spectrum(trace: &CorrelationTrace, window: Window) -> Result<Spectrum> {
    let n = trace.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "need at least 4 samples, got {n}"
        )));
    }
    let step = trace.uniform_step()?;
    let mean = crate::protocol::pairwise_sum(&trace.values) / n as f64;
    let coeffs = window.coefficients(n);
    let gain: f64 = coeffs.iter().sum();

    let mut buf: Vec<Complex64> = trace
        .values
        .iter()
        .zip(coeffs.iter())
        .map(|(&v, &w)| Complex64::new((v - mean) * w, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let n_bins = n / 2 + 1;
    let mut freqs = Vec::with_capacity(n_bins);
    let mut amplitudes = Vec::with_capacity(n_bins);
    let resolution = 1.0 / (n as f64 * step);
    for k in 0..n_bins {
        freqs.push(k as f64 * resolution);
        let onesided = if k == 0 || (n % 2 == 0 && k == n / 2) {
            1.0
        } else {
            2.0
        };
        amplitudes.push(onesided * buf[k].norm() / gain);
    }
    Ok(Spectrum {
        freqs,
        amplitudes,
        resolution,
    })
}

/// Location and size of the dominant spectral feature in a band.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakInfo {
    pub frequency_hz: f64,
    pub amplitude: f64,
    /// False when the band has no peak at least twice its median level;
    /// the result then points at the lowest-frequency bin of the band.
    pub distinct: bool,
}

/// Finds the maximum bin in [f_lo, f_hi] and refines the frequency with a
/// three-point parabolic interpolation.
pub fn find_peak(spec: &Spectrum, f_lo: f64, f_hi: f64) -> Result<PeakInfo> {
    if f_lo > f_hi {
        return Err(Error::InvalidArgument(format!(
            "band is inverted: {f_lo} > {f_hi}"
        )));
    }
    let band: Vec<usize> = (0..spec.freqs.len())
        .filter(|&k| spec.freqs[k] >= f_lo && spec.freqs[k] <= f_hi)
        .collect();
    if band.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "band [{f_lo}, {f_hi}] Hz contains no spectral bins"
        )));
    }
    let mut sorted: Vec<f64> = band.iter().map(|&k| spec.amplitudes[k]).collect();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let &argmax = band
        .iter()
        .max_by(|&&a, &&b| spec.amplitudes[a].total_cmp(&spec.amplitudes[b]))
        .expect("band is non-empty");
    let max = spec.amplitudes[argmax];

    if !(max > 0.0 && max >= 2.0 * median) {
        return Ok(PeakInfo {
            frequency_hz: spec.freqs[band[0]],
            amplitude: spec.amplitudes[band[0]],
            distinct: false,
        });
    }

    let mut frequency_hz = spec.freqs[argmax];
    let mut amplitude = max;
    if argmax > 0 && argmax + 1 < spec.amplitudes.len() {
        let (ym, y0, yp) = (
            spec.amplitudes[argmax - 1],
            max,
            spec.amplitudes[argmax + 1],
        );
        let denom = ym - 2.0 * y0 + yp;
        if denom.abs() > f64::EPSILON * y0 {
            // Vertex of the parabola through the three bins, at most half
            // a bin away from the maximum.
            let shift = (0.5 * (ym - yp) / denom).clamp(-0.5, 0.5);
            frequency_hz += shift * spec.resolution;
            amplitude = y0 - 0.25 * (ym - yp) * shift;
        }
    }
    Ok(PeakInfo {
        frequency_hz,
        amplitude,
        distinct: true,
    })
}

/// QC signal at second order: -i/2 Tr{[phi(t2), phi(t1)] rho_bath}.
/// `t1` and `t2` are the interrogation window centers.
pub fn predict_qc_eq1(sys: &SpinSystem, t_interr: f64, t1: f64, t2: f64) -> Result<f64> {
    let phi1 = phase_operator(sys, t_interr, t1)?;
    let phi2 = phase_operator(sys, t_interr, t2)?;
    let bracket = commutator(&phi2, &phi1)?;
    let tr = (&bracket * &sys.rho_bath).trace();
    let value = Complex64::new(0.0, -0.5) * tr;
    reject_imaginary_residue(value, t_interr * sys.b_op.max_abs())
}

/// CC signal at second order: 1/2 Tr{{phi(t2), phi(t1)} rho_bath}.
pub fn predict_cc_eq2(sys: &SpinSystem, t_interr: f64, t1: f64, t2: f64) -> Result<f64> {
    let phi1 = phase_operator(sys, t_interr, t1)?;
    let phi2 = phase_operator(sys, t_interr, t2)?;
    let bracket = anticommutator(&phi2, &phi1)?;
    let tr = (&bracket * &sys.rho_bath).trace();
    reject_imaginary_residue(tr * Complex64::new(0.5, 0.0), t_interr * sys.b_op.max_abs())
}

/// Closed-form single-spin QC amplitude:
/// EQ3_CALIBRATION * (a_perp^2 t^2 / 4) p_z sin(omega delay).
pub fn predict_qc_eq3(a_perp: f64, t_interr: f64, p_z: f64, omega: f64, delay: f64) -> f64 {
    EQ3_CALIBRATION * 0.25 * (a_perp * t_interr).powi(2) * p_z * (omega * delay).sin()
}

fn reject_imaginary_residue(value: Complex64, scale: f64) -> Result<f64> {
    let allowed = tol::NUMERIC_IDENTITY * scale.powi(2).max(1.0);
    if value.im.abs() > allowed {
        return Err(Error::Numerical(format!(
            "expected a real expectation value, imaginary residue {:.3e}",
            value.im
        )));
    }
    Ok(value.re)
}

/// Least-squares quadratures (a, b) of y ~ a sin(omega x) + b cos(omega x).
pub fn fit_sin_cos(xs: &[f64], ys: &[f64], omega: f64) -> Result<(f64, f64)> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::InvalidArgument(
            "need matching xs/ys with at least 2 points".into(),
        ));
    }
    let (mut ss, mut cc, mut sc, mut sy, mut cy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys.iter()) {
        let (s, c) = (omega * x).sin_cos();
        ss += s * s;
        cc += c * c;
        sc += s * c;
        sy += s * y;
        cy += c * y;
    }
    let det = ss * cc - sc * sc;
    if det.abs() <= 1e-12 * (ss * cc).max(1e-300) {
        return Err(Error::Numerical(
            "sin/cos design matrix is singular on this grid".into(),
        ));
    }
    Ok(((cy * -sc + sy * cc) / det, (cy * ss - sy * sc) / det))
}
