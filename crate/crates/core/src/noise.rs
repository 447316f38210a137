//! Classical magnetic-noise waveforms injected into the interrogation
//! windows: deterministic AC tones, AC tones with a random phase per
//! realization, Ornstein-Uhlenbeck noise with a Lorentzian spectrum
//! (optionally mixed onto a carrier), and band-limited white noise.
//!
//! Trajectories are keyed by (seed_base, trajectory index) through
//! independent ChaCha streams, so realization i is reproducible bitwise
//! regardless of how many workers run the Monte Carlo. Extending the
//! timeline extends the same realization: random draws are consumed in a
//! fixed order (phase first, then increments in time order).

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;

use crate::analysis::Spectrum;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseKind {
    None,
    Ac,
    RandomPhaseAc,
    OuLorentzian,
    White,
}

/// Classical field b(t) in rad/s added to the sensor detuning during
/// interrogation.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub kind: NoiseKind,
    /// Peak amplitude for AC kinds, stationary standard deviation for
    /// OU and white noise (rad/s).
    pub amplitude: f64,
    pub frequency_hz: f64,
    /// Fixed carrier phase of the deterministic AC tone (rad).
    pub phase0: f64,
    /// Lorentzian full width at half maximum (Hz); the OU correlation
    /// time is tau = 1 / (pi fwhm).
    pub fwhm_hz: f64,
    /// Carrier the OU envelope is mixed onto; 0 keeps it at baseband.
    pub center_freq_hz: f64,
    pub seed_base: u64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self {
            kind: NoiseKind::None,
            amplitude: 0.0,
            frequency_hz: 0.0,
            phase0: 0.0,
            fwhm_hz: 0.0,
            center_freq_hz: 0.0,
            seed_base: 0,
        }
    }

    pub fn ac(amplitude: f64, frequency_hz: f64, phase0: f64) -> Result<Self> {
        check_finite("amplitude", amplitude)?;
        check_finite("phase0", phase0)?;
        check_positive("frequency_hz", frequency_hz)?;
        Ok(Self {
            kind: NoiseKind::Ac,
            amplitude,
            frequency_hz,
            phase0,
            ..Self::none()
        })
    }

    pub fn random_phase_ac(amplitude: f64, frequency_hz: f64, seed_base: u64) -> Result<Self> {
        check_finite("amplitude", amplitude)?;
        check_positive("frequency_hz", frequency_hz)?;
        Ok(Self {
            kind: NoiseKind::RandomPhaseAc,
            amplitude,
            frequency_hz,
            seed_base,
            ..Self::none()
        })
    }

    pub fn ou_lorentzian(
        sigma: f64,
        fwhm_hz: f64,
        center_freq_hz: f64,
        seed_base: u64,
    ) -> Result<Self> {
        check_nonnegative("sigma", sigma)?;
        check_positive("fwhm_hz", fwhm_hz)?;
        check_nonnegative("center_freq_hz", center_freq_hz)?;
        Ok(Self {
            kind: NoiseKind::OuLorentzian,
            amplitude: sigma,
            fwhm_hz,
            center_freq_hz,
            seed_base,
            ..Self::none()
        })
    }

    pub fn white(sigma: f64, seed_base: u64) -> Result<Self> {
        check_nonnegative("sigma", sigma)?;
        Ok(Self {
            kind: NoiseKind::White,
            amplitude: sigma,
            seed_base,
            ..Self::none()
        })
    }

    pub fn with_seed(mut self, seed_base: u64) -> Self {
        self.seed_base = seed_base;
        self
    }

    /// Whether distinct trajectory indices can produce distinct samples.
    pub fn is_stochastic(&self) -> bool {
        matches!(
            self.kind,
            NoiseKind::RandomPhaseAc | NoiseKind::OuLorentzian | NoiseKind::White
        )
    }

    /// Highest frequency scale (Hz) the waveform carries; 0 for flat or
    /// silent kinds.
    pub fn characteristic_frequency_hz(&self) -> f64 {
        match self.kind {
            NoiseKind::None | NoiseKind::White => 0.0,
            NoiseKind::Ac | NoiseKind::RandomPhaseAc => self.frequency_hz,
            NoiseKind::OuLorentzian => self.center_freq_hz.max(10.0 * self.fwhm_hz),
        }
    }
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::InvalidNoise(format!(
            "{name} must be finite, got {v}"
        )));
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v <= 0.0 {
        return Err(Error::InvalidNoise(format!(
            "{name} must be positive, got {v}"
        )));
    }
    Ok(())
}

fn check_nonnegative(name: &str, v: f64) -> Result<()> {
    check_finite(name, v)?;
    if v < 0.0 {
        return Err(Error::InvalidNoise(format!(
            "{name} must be non-negative, got {v}"
        )));
    }
    Ok(())
}

/// One realization of b(t) on a uniform grid t_k = k dt starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTrajectory {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub trajectory_index: u64,
}

impl NoiseTrajectory {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        (self.samples.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Linear interpolation between grid samples, clamped at the ends.
    pub fn value_at(&self, t: f64) -> f64 {
        let n = self.samples.len();
        if n == 1 {
            return self.samples[0];
        }
        let pos = (t / self.dt).clamp(0.0, (n - 1) as f64);
        let idx = (pos.floor() as usize).min(n - 2);
        let frac = pos - idx as f64;
        self.samples[idx] * (1.0 - frac) + self.samples[idx + 1] * frac
    }
}

/// Incremental cos(theta0 + k dtheta) evaluation; one complex multiply per
/// step instead of trig calls in the hot sampling loops.
struct Carrier {
    state: Complex64,
    step: Complex64,
}

impl Carrier {
    fn new(theta0: f64, dtheta: f64) -> Self {
        Self {
            state: Complex64::from_polar(1.0, theta0),
            step: Complex64::from_polar(1.0, dtheta),
        }
    }

    fn cos(&self) -> f64 {
        self.state.re
    }

    fn advance(&mut self) {
        self.state *= self.step;
    }
}

/// Generates realization `traj_index` of the model covering `timeline`
/// seconds, with ceil(timeline / dt) + 1 samples.
pub fn sample_trajectory(
    model: &NoiseModel,
    timeline: f64,
    dt: f64,
    traj_index: u64,
) -> Result<NoiseTrajectory> {
    if !(timeline.is_finite() && timeline > 0.0) {
        return Err(Error::InvalidNoise(format!(
            "timeline must be positive, got {timeline}"
        )));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidNoise(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let n_steps = (timeline / dt).ceil() as usize;
    let n = n_steps + 1;
    if n > 200_000_000 {
        return Err(Error::InvalidNoise(format!(
            "trajectory would need {n} samples; refuse to allocate"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(model.seed_base);
    rng.set_stream(traj_index);

    let mut samples = vec![0.0; n];
    match model.kind {
        NoiseKind::None => {}
        NoiseKind::Ac => {
            let mut carrier = Carrier::new(model.phase0, TAU * model.frequency_hz * dt);
            for s in samples.iter_mut() {
                *s = model.amplitude * carrier.cos();
                carrier.advance();
            }
        }
        NoiseKind::RandomPhaseAc => {
            let theta: f64 = rng.gen::<f64>() * TAU;
            let mut carrier = Carrier::new(theta, TAU * model.frequency_hz * dt);
            for s in samples.iter_mut() {
                *s = model.amplitude * carrier.cos();
                carrier.advance();
            }
        }
        NoiseKind::OuLorentzian => {
            let tau = 1.0 / (PI * model.fwhm_hz);
            let decay = (-dt / tau).exp();
            let diffusion = model.amplitude * (1.0 - decay * decay).sqrt();
            // Draw order: carrier phase, stationary start, then increments.
            let theta: f64 = if model.center_freq_hz > 0.0 {
                rng.gen::<f64>() * TAU
            } else {
                0.0
            };
            let mut carrier = Carrier::new(theta, TAU * model.center_freq_hz * dt);
            let mut x: f64 = model.amplitude * rng.sample::<f64, _>(StandardNormal);
            for (k, s) in samples.iter_mut().enumerate() {
                if k > 0 {
                    x = x * decay + diffusion * rng.sample::<f64, _>(StandardNormal);
                    carrier.advance();
                }
                *s = if model.center_freq_hz > 0.0 {
                    x * carrier.cos()
                } else {
                    x
                };
            }
        }
        NoiseKind::White => {
            // Per-sample variance sigma^2 / dt: flat two-sided density of
            // sigma^2 up to the grid Nyquist.
            let scale = model.amplitude / dt.sqrt();
            for s in samples.iter_mut() {
                *s = scale * rng.sample::<f64, _>(StandardNormal);
            }
        }
    }
    Ok(NoiseTrajectory {
        dt,
        samples,
        trajectory_index: traj_index,
    })
}

/// Sampling step suited to the model's fastest feature; falls back to the
/// executor substep for kinds without an intrinsic scale.
pub fn default_noise_dt(model: &NoiseModel, substep_dt: f64) -> f64 {
    let f = model.characteristic_frequency_hz();
    match model.kind {
        NoiseKind::White => substep_dt,
        NoiseKind::None => substep_dt * 64.0,
        _ if f > 0.0 => 1.0 / (40.0 * f),
        _ => substep_dt,
    }
}

/// Averaged one-sided periodogram with density scaling: a process with
/// two-sided power spectral density S(f) averages to 2 S(f) on interior
/// bins. No detrending is applied.
pub fn psd_estimate(trajs: &[NoiseTrajectory]) -> Result<Spectrum> {
    let first = trajs.first().ok_or_else(|| {
        Error::InvalidArgument("psd_estimate needs at least one trajectory".into())
    })?;
    let n = first.len();
    if n < 4 {
        return Err(Error::InvalidArgument(format!(
            "trajectories too short: {n} samples"
        )));
    }
    for t in trajs {
        if t.len() != n || (t.dt - first.dt).abs() > 1e-12 * first.dt {
            return Err(Error::DimensionMismatch(
                "trajectories must share sample count and dt".into(),
            ));
        }
    }

    let dt = first.dt;
    let n_bins = n / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut acc = vec![0.0; n_bins];
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for traj in trajs {
        for (b, &s) in buf.iter_mut().zip(traj.samples.iter()) {
            *b = Complex64::new(s, 0.0);
        }
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            let onesided = if k == 0 || (n % 2 == 0 && k == n / 2) {
                1.0
            } else {
                2.0
            };
            *a += onesided * buf[k].norm_sqr() * dt / n as f64;
        }
    }
    let m = trajs.len() as f64;
    let resolution = 1.0 / (n as f64 * dt);
    Ok(Spectrum {
        freqs: (0..n_bins).map(|k| k as f64 * resolution).collect(),
        amplitudes: acc.into_iter().map(|a| a / m).collect(),
        resolution,
    })
}
