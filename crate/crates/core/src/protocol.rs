//! Protocol sequences and their executors.
//!
//! Both correlation protocols interrogate the bath twice for `t_interr`
//! seconds, separated by `delay` (start to start), and read out sigma_y.
//! The QC variant dephases the sensor between the windows so only the
//! commutator part of the bath correlation survives; the CC variant first
//! converts the accumulated phase into population with an x rotation and
//! therefore keeps the anticommutator part plus any classical signal.
//!
//! During interrogation H = S_z (x) b_op + 1 (x) h_bath + b(t) S_z (x) 1.
//! The classical term commutes with the rest, so the exact window
//! propagator factors into a cached exp(-i t H_0) times a sensor phase
//! whose angle is the midpoint-rule integral of b(t) over the window.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::analysis::CorrelationTrace;
use crate::error::{Error, Result};
use crate::linalg::{expm_hermitian, kron, partial_trace_bath, ComplexMatrix};
use crate::noise::{default_noise_dt, sample_trajectory, NoiseModel, NoiseTrajectory};
use crate::spin::{Axis, SensorOps, Sign, SpinSystem};
use crate::tol;

/// Decouples the sampled-phase stream from the noise stream when the same
/// seed is used for both.
const PHASE_STREAM_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProtocolStep {
    /// Reset the joint state to sensor eigenstate (x) bath state.
    Initialize { axis: Axis, sign: Sign },
    /// Couple sensor and bath (plus classical noise) for `duration`.
    Interrogate { duration: f64 },
    /// Instantaneous sensor rotation exp(-i angle sigma_axis / 2).
    Rotate { axis: Axis, angle: f64 },
    /// Scramble the sensor phase; the executor either applies the exact
    /// z-dephasing channel or a sampled uniform z rotation.
    PhaseRandomize,
    /// Free bath evolution with the sensor decoupled.
    Wait { duration: f64 },
    /// Expectation value of sigma_axis on the sensor.
    Measure { axis: Axis },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSequence {
    pub steps: Vec<ProtocolStep>,
    pub t_interr: f64,
    /// Start-to-start separation of the two interrogation windows.
    pub delay: f64,
}

impl ProtocolSequence {
    /// Total wall time covered by the sequence.
    pub fn timeline(&self) -> f64 {
        self.t_interr + self.delay
    }

    pub fn validate(&self) -> Result<Self> {
        let fail = |msg: String| Err(Error::InvalidSequence(msg));
        if !(self.t_interr.is_finite() && self.t_interr > 0.0) {
            return fail(format!("t_interr must be positive, got {}", self.t_interr));
        }
        if !(self.delay.is_finite() && self.delay >= self.t_interr * (1.0 - 1e-12)) {
            return fail(format!(
                "delay {} must be at least t_interr {} so the windows do not overlap",
                self.delay, self.t_interr
            ));
        }
        match self.steps.first() {
            Some(ProtocolStep::Initialize { .. }) => {}
            _ => return fail("sequence must start with Initialize".into()),
        }
        match self.steps.last() {
            Some(ProtocolStep::Measure { .. }) => {}
            _ => return fail("sequence must end with Measure".into()),
        }
        let count = |f: fn(&ProtocolStep) -> bool| self.steps.iter().filter(|s| f(s)).count();
        if count(|s| matches!(s, ProtocolStep::Initialize { .. })) != 1 {
            return fail("sequence must contain exactly one Initialize".into());
        }
        if count(|s| matches!(s, ProtocolStep::Measure { .. })) != 1 {
            return fail("sequence must contain exactly one Measure".into());
        }
        if count(|s| matches!(s, ProtocolStep::PhaseRandomize)) != 1 {
            return fail("sequence must contain exactly one PhaseRandomize".into());
        }
        let windows: Vec<f64> = self
            .steps
            .iter()
            .filter_map(|s| match s {
                ProtocolStep::Interrogate { duration } => Some(*duration),
                _ => None,
            })
            .collect();
        if windows.len() != 2 {
            return fail(format!(
                "expected two interrogation windows, found {}",
                windows.len()
            ));
        }
        for d in &windows {
            if (d - self.t_interr).abs() > 1e-12 * self.t_interr {
                return fail(format!(
                    "window duration {d} differs from t_interr {}",
                    self.t_interr
                ));
            }
        }
        let wait_expected = self.delay - self.t_interr;
        let waits: Vec<f64> = self
            .steps
            .iter()
            .filter_map(|s| match s {
                ProtocolStep::Wait { duration } => Some(*duration),
                _ => None,
            })
            .collect();
        let wait_total: f64 = waits.iter().sum();
        if waits.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return fail("wait durations must be non-negative".into());
        }
        if (wait_total - wait_expected).abs() > 1e-12 * self.timeline() {
            return fail(format!(
                "total wait {wait_total} does not bridge the delay (expected {wait_expected})"
            ));
        }
        for s in &self.steps {
            if let ProtocolStep::Rotate { angle, .. } = s {
                if !angle.is_finite() {
                    return fail(format!("non-finite rotation angle {angle}"));
                }
            }
        }
        Ok(self.clone())
    }
}

/// Interrogate, dephase, wait, rotate into the conjugate quadrature,
/// interrogate again, read sigma_y.
pub fn build_qc_sequence(t_interr: f64, delay: f64) -> Result<ProtocolSequence> {
    ProtocolSequence {
        steps: vec![
            ProtocolStep::Initialize {
                axis: Axis::X,
                sign: Sign::Plus,
            },
            ProtocolStep::Interrogate { duration: t_interr },
            ProtocolStep::PhaseRandomize,
            ProtocolStep::Wait {
                duration: delay - t_interr,
            },
            ProtocolStep::Rotate {
                axis: Axis::Y,
                angle: FRAC_PI_2,
            },
            ProtocolStep::Interrogate { duration: t_interr },
            ProtocolStep::Measure { axis: Axis::Y },
        ],
        t_interr,
        delay,
    }
    .validate()
}

/// Like the QC sequence but with an x rotation converting phase into
/// population before the dephasing, which keeps classical correlations.
pub fn build_cc_sequence(t_interr: f64, delay: f64) -> Result<ProtocolSequence> {
    ProtocolSequence {
        steps: vec![
            ProtocolStep::Initialize {
                axis: Axis::X,
                sign: Sign::Plus,
            },
            ProtocolStep::Interrogate { duration: t_interr },
            ProtocolStep::Rotate {
                axis: Axis::X,
                angle: FRAC_PI_2,
            },
            ProtocolStep::PhaseRandomize,
            ProtocolStep::Wait {
                duration: delay - t_interr,
            },
            ProtocolStep::Rotate {
                axis: Axis::Y,
                angle: FRAC_PI_2,
            },
            ProtocolStep::Interrogate { duration: t_interr },
            ProtocolStep::Measure { axis: Axis::Y },
        ],
        t_interr,
        delay,
    }
    .validate()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolKind {
    Qc,
    Cc,
}

impl ProtocolKind {
    pub fn build(self, t_interr: f64, delay: f64) -> Result<ProtocolSequence> {
        match self {
            ProtocolKind::Qc => build_qc_sequence(t_interr, delay),
            ProtocolKind::Cc => build_cc_sequence(t_interr, delay),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RandomizeMode {
    /// Exact z-dephasing channel: off-diagonal sensor blocks are zeroed.
    ExactChannel,
    /// One uniform z rotation drawn per trajectory.
    Sampled,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExecutionResult {
    pub value: f64,
    pub stderr: f64,
    pub n_traj: usize,
    pub mode: ExecMode,
}

/// Substep small enough to sample the fastest system or noise frequency.
pub fn default_substep_dt(sys: &SpinSystem, model: &NoiseModel, t_interr: f64) -> f64 {
    let mut f_max: f64 = sys.omega0.abs() / TAU;
    for i in 0..sys.n_spins() {
        f_max = f_max.max(sys.effective_omega(i).abs() / TAU);
        f_max = f_max.max(sys.spins[i].a_perp.abs() / TAU);
    }
    f_max = f_max.max(model.characteristic_frequency_hz());
    let base = t_interr / 64.0;
    if f_max > 0.0 {
        base.min(1.0 / (50.0 * f_max))
    } else {
        base
    }
}

/// Unitaries reused across trajectories of the same sequence.
struct StepPropagators {
    /// exp(-i t_interr (S_z (x) b_op + 1 (x) h_bath)).
    window: DMatrix<Complex64>,
    /// exp(-i wait 1 (x) h_bath) per Wait step with nonzero duration.
    waits: Vec<Option<DMatrix<Complex64>>>,
    /// Joint sensor rotation per Rotate step, in step order.
    rotations: Vec<DMatrix<Complex64>>,
}

impl StepPropagators {
    fn build(seq: &ProtocolSequence, sys: &SpinSystem) -> Result<Self> {
        let ops = SensorOps::new();
        let identity_sensor = ComplexMatrix::identity(sys.dim_sensor);
        let h0 = &kron(&ops.s_z, &sys.b_op) + &kron(&identity_sensor, &sys.h_bath);
        let window = expm_hermitian(&h0, -seq.t_interr)?.data;

        let mut waits = Vec::new();
        let mut rotations = Vec::new();
        for step in &seq.steps {
            match step {
                ProtocolStep::Wait { duration } => {
                    if *duration > 0.0 {
                        let bath = expm_hermitian(&sys.h_bath, -duration)?;
                        waits.push(Some(kron(&identity_sensor, &bath).data));
                    } else {
                        waits.push(None);
                    }
                }
                ProtocolStep::Rotate { axis, angle } => {
                    let sensor = expm_hermitian(ops.sigma(*axis), -angle / 2.0)?;
                    rotations.push(kron(&sensor, &ComplexMatrix::identity(sys.dim_bath)).data);
                }
                _ => {}
            }
        }
        Ok(Self {
            window,
            waits,
            rotations,
        })
    }
}

fn conjugate(rho: &DMatrix<Complex64>, u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    u * rho * u.adjoint()
}

/// Multiplies the off-diagonal sensor blocks by exp(-+ i phase), i.e.
/// conjugates by the diagonal unitary exp(-i phase S_z (x) 1).
fn apply_sensor_phase(rho: &mut DMatrix<Complex64>, phase: f64, dim_bath: usize) {
    let rot = Complex64::from_polar(1.0, -phase);
    for r in 0..dim_bath {
        for c in dim_bath..2 * dim_bath {
            rho[(r, c)] *= rot;
            rho[(c, r)] *= rot.conj();
        }
    }
}

fn zero_sensor_coherences(rho: &mut DMatrix<Complex64>, dim_bath: usize) {
    for r in 0..dim_bath {
        for c in dim_bath..2 * dim_bath {
            rho[(r, c)] = Complex64::new(0.0, 0.0);
            rho[(c, r)] = Complex64::new(0.0, 0.0);
        }
    }
}

struct StateChecks {
    every_step: bool,
}

impl StateChecks {
    fn after_step(&self, rho: &DMatrix<Complex64>, step: &ProtocolStep) -> Result<()> {
        let trace = rho.trace();
        if (trace - Complex64::new(1.0, 0.0)).norm() > tol::STRUCTURAL {
            return Err(Error::Numerical(format!(
                "trace drifted to {trace} after {step:?}"
            )));
        }
        if self.every_step {
            Self::structural(rho, step)?;
        }
        Ok(())
    }

    fn structural(rho: &DMatrix<Complex64>, step: &ProtocolStep) -> Result<()> {
        let wrapped = ComplexMatrix::from_raw(rho.clone());
        let dev = wrapped.hermiticity_deviation();
        if dev > tol::STRUCTURAL {
            return Err(Error::Numerical(format!(
                "state lost hermiticity ({dev:.3e}) after {step:?}"
            )));
        }
        let min = wrapped.min_eigenvalue()?;
        if min < tol::PSD_FLOOR {
            return Err(Error::Numerical(format!(
                "state eigenvalue {min:.3e} below floor after {step:?}"
            )));
        }
        Ok(())
    }
}

fn run_once(
    seq: &ProtocolSequence,
    sys: &SpinSystem,
    traj: &NoiseTrajectory,
    substep_dt: f64,
    phase: Option<f64>,
    props: &StepPropagators,
    checks: &StateChecks,
) -> Result<f64> {
    if !(substep_dt.is_finite() && substep_dt > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "substep_dt must be positive: {substep_dt}"
        )));
    }
    let timeline = seq.timeline();
    if traj.duration() < timeline * (1.0 - 1e-9) {
        return Err(Error::TimelineTooShort {
            have: traj.duration(),
            need: timeline,
        });
    }

    let ops = SensorOps::new();
    let db = sys.dim_bath;
    let mut rho: DMatrix<Complex64> = DMatrix::zeros(sys.joint_dim(), sys.joint_dim());
    let mut t = 0.0;
    let mut wait_idx = 0;
    let mut rot_idx = 0;

    for step in &seq.steps {
        match step {
            ProtocolStep::Initialize { axis, sign } => {
                rho = kron(&ops.eigenstate(*axis, *sign), &sys.rho_bath).data;
            }
            ProtocolStep::Interrogate { duration } => {
                let n_sub = ((duration / substep_dt).ceil() as usize).max(1);
                let dt = duration / n_sub as f64;
                // Midpoint-rule integral of the classical field over the
                // window; commutes with everything else in H.
                let mut beta = 0.0;
                for k in 0..n_sub {
                    beta += traj.value_at(t + (k as f64 + 0.5) * dt);
                }
                beta *= dt;
                rho = conjugate(&rho, &props.window);
                apply_sensor_phase(&mut rho, beta, db);
                t += duration;
            }
            ProtocolStep::Wait { duration } => {
                if let Some(u) = &props.waits[wait_idx] {
                    rho = conjugate(&rho, u);
                }
                wait_idx += 1;
                t += duration;
            }
            ProtocolStep::Rotate { .. } => {
                rho = conjugate(&rho, &props.rotations[rot_idx]);
                rot_idx += 1;
            }
            ProtocolStep::PhaseRandomize => match phase {
                None => zero_sensor_coherences(&mut rho, db),
                Some(theta) => apply_sensor_phase(&mut rho, theta, db),
            },
            ProtocolStep::Measure { axis } => {
                checks.after_step(&rho, step)?;
                StateChecks::structural(&rho, step)?;
                let reduced =
                    partial_trace_bath(&ComplexMatrix::from_raw(rho.clone()), sys.dim_sensor, db)?;
                let value = (ops.sigma(*axis) * &reduced).trace();
                if value.im.abs() > tol::STRUCTURAL {
                    return Err(Error::Numerical(format!(
                        "measurement has imaginary residue {:.3e}",
                        value.im
                    )));
                }
                if value.re.abs() > 1.0 + tol::EXPECTATION_BOUND_SLACK {
                    return Err(Error::Numerical(format!(
                        "expectation value {} outside [-1, 1]",
                        value.re
                    )));
                }
                return Ok(value.re);
            }
        }
        checks.after_step(&rho, step)?;
    }
    Err(Error::InvalidSequence(
        "sequence ended without Measure".into(),
    ))
}

/// Runs one trajectory with the exact dephasing channel.
pub fn execute_exact(
    seq: &ProtocolSequence,
    sys: &SpinSystem,
    traj: &NoiseTrajectory,
    substep_dt: f64,
) -> Result<ExecutionResult> {
    let value = execute_with_phase(seq, sys, traj, substep_dt, None)?;
    Ok(ExecutionResult {
        value,
        stderr: 0.0,
        n_traj: 1,
        mode: ExecMode::Exact,
    })
}

/// Like [`execute_exact`] but with the dephasing realized as the given z
/// rotation. `None` applies the exact channel instead.
pub fn execute_with_phase(
    seq: &ProtocolSequence,
    sys: &SpinSystem,
    traj: &NoiseTrajectory,
    substep_dt: f64,
    phase: Option<f64>,
) -> Result<f64> {
    let seq = seq.validate()?;
    let props = StepPropagators::build(&seq, sys)?;
    run_once(
        &seq,
        sys,
        traj,
        substep_dt,
        phase,
        &props,
        &StateChecks { every_step: false },
    )
}

/// [`execute_exact`] with hermiticity and positivity verified after every
/// step instead of only at measurement. Used by stress tests.
pub fn execute_checked(
    seq: &ProtocolSequence,
    sys: &SpinSystem,
    traj: &NoiseTrajectory,
    substep_dt: f64,
) -> Result<ExecutionResult> {
    let seq = seq.validate()?;
    let props = StepPropagators::build(&seq, sys)?;
    let value = run_once(
        &seq,
        sys,
        traj,
        substep_dt,
        None,
        &props,
        &StateChecks { every_step: true },
    )?;
    Ok(ExecutionResult {
        value,
        stderr: 0.0,
        n_traj: 1,
        mode: ExecMode::Exact,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n_traj: usize,
    /// Integration substep; defaults to [`default_substep_dt`].
    pub substep_dt: Option<f64>,
    /// Noise grid step; defaults to [`default_noise_dt`].
    pub noise_dt: Option<f64>,
    pub randomize_mode: RandomizeMode,
    /// Seeds the sampled-phase stream (salted, so it never collides with
    /// the noise stream even for equal seeds).
    pub seed: u64,
    /// First trajectory index; lets sweeps use disjoint realization sets.
    pub traj_index_offset: u64,
}

impl McOptions {
    pub fn new(n_traj: usize, seed: u64) -> Self {
        Self {
            n_traj,
            substep_dt: None,
            noise_dt: None,
            randomize_mode: RandomizeMode::ExactChannel,
            seed,
            traj_index_offset: 0,
        }
    }
}

/// Averages the protocol outcome over noise realizations (and, in sampled
/// mode, over dephasing draws). Deterministic for a fixed seed regardless
/// of worker count: trajectory i is keyed by its index and the reduction
/// is an index-ordered pairwise sum.
pub fn execute_mc(
    seq: &ProtocolSequence,
    sys: &SpinSystem,
    model: &NoiseModel,
    opts: &McOptions,
) -> Result<ExecutionResult> {
    let seq = seq.validate()?;
    if opts.n_traj == 0 {
        return Err(Error::InvalidArgument("n_traj must be at least 1".into()));
    }
    let substep_dt = opts
        .substep_dt
        .unwrap_or_else(|| default_substep_dt(sys, model, seq.t_interr));
    let noise_dt = opts
        .noise_dt
        .unwrap_or_else(|| default_noise_dt(model, substep_dt));
    let props = StepPropagators::build(&seq, sys)?;
    let timeline = seq.timeline();
    let checks = StateChecks { every_step: false };

    let values: Result<Vec<f64>> = (0..opts.n_traj)
        .into_par_iter()
        .map(|j| {
            let idx = opts.traj_index_offset + j as u64;
            let traj = sample_trajectory(model, timeline, noise_dt, idx)?;
            let phase = match opts.randomize_mode {
                RandomizeMode::ExactChannel => None,
                RandomizeMode::Sampled => {
                    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ PHASE_STREAM_SALT);
                    rng.set_stream(idx);
                    Some(rng.gen::<f64>() * TAU)
                }
            };
            run_once(&seq, sys, &traj, substep_dt, phase, &props, &checks)
        })
        .collect();
    let values = values?;
    let (mean, stderr) = mc_stats(&values);
    Ok(ExecutionResult {
        value: mean,
        stderr,
        n_traj: opts.n_traj,
        mode: ExecMode::MonteCarlo,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RunMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub mode: RunMode,
    pub n_traj: usize,
    pub substep_dt: Option<f64>,
    pub noise_dt: Option<f64>,
    pub randomize_mode: RandomizeMode,
    pub seed: u64,
}

impl SweepOptions {
    pub fn exact() -> Self {
        Self {
            mode: RunMode::Exact,
            n_traj: 1,
            substep_dt: None,
            noise_dt: None,
            randomize_mode: RandomizeMode::ExactChannel,
            seed: 0,
        }
    }

    pub fn monte_carlo(n_traj: usize, seed: u64) -> Self {
        Self {
            mode: RunMode::MonteCarlo,
            n_traj,
            seed,
            ..Self::exact()
        }
    }
}

/// Runs the protocol across a delay grid. Monte-Carlo sweeps give each
/// delay its own disjoint set of trajectory indices.
pub fn sweep_delay(
    kind: ProtocolKind,
    t_interr: f64,
    sys: &SpinSystem,
    model: &NoiseModel,
    delays: &[f64],
    opts: &SweepOptions,
) -> Result<CorrelationTrace> {
    if delays.is_empty() {
        return Err(Error::InvalidArgument("empty delay grid".into()));
    }
    let substep_dt = opts
        .substep_dt
        .unwrap_or_else(|| default_substep_dt(sys, model, t_interr));
    let noise_dt = opts
        .noise_dt
        .unwrap_or_else(|| default_noise_dt(model, substep_dt));

    let results: Result<Vec<(f64, f64)>> = match opts.mode {
        RunMode::Exact => delays
            .par_iter()
            .map(|&delay| {
                let seq = kind.build(t_interr, delay)?;
                let traj = sample_trajectory(model, seq.timeline(), noise_dt, 0)?;
                let r = execute_exact(&seq, sys, &traj, substep_dt)?;
                Ok((r.value, r.stderr))
            })
            .collect(),
        RunMode::MonteCarlo => delays
            .iter()
            .enumerate()
            .map(|(i, &delay)| {
                let seq = kind.build(t_interr, delay)?;
                let mc = McOptions {
                    n_traj: opts.n_traj,
                    substep_dt: Some(substep_dt),
                    noise_dt: Some(noise_dt),
                    randomize_mode: opts.randomize_mode,
                    seed: opts.seed,
                    traj_index_offset: (i * opts.n_traj) as u64,
                };
                let r = execute_mc(&seq, sys, model, &mc)?;
                Ok((r.value, r.stderr))
            })
            .collect(),
    };
    let results = results?;
    CorrelationTrace::new(
        delays.to_vec(),
        results.iter().map(|r| r.0).collect(),
        results.iter().map(|r| r.1).collect(),
    )
}

/// Fixed-order pairwise summation; independent of thread count and cheaper
/// in rounding error than a running sum.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
        }
    }
}

/// Mean and standard error of the mean; stderr is 0 for a single sample.
pub fn mc_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (0.0, 0.0);
    }
    let mean = pairwise_sum(values) / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let squares: Vec<f64> = values.iter().map(|v| (v - mean).powi(2)).collect();
    let var = pairwise_sum(&squares) / (n - 1) as f64;
    ((mean), (var / n as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::{fit_sin_cos, predict_qc_eq1, predict_qc_eq3};
    use crate::spin::build_bath;
    use proptest::prelude::*;

    fn standard_system() -> SpinSystem {
        build_bath(TAU * 5.395e5, TAU * 5.84e4, TAU * 6.04e4, 0.5, 1).unwrap()
    }

    fn silent_traj(timeline: f64) -> NoiseTrajectory {
        sample_trajectory(&NoiseModel::none(), timeline, timeline / 16.0, 0).unwrap()
    }

    #[test]
    fn builders_produce_expected_shapes() {
        let qc = build_qc_sequence(1.0e-7, 5.0e-7).unwrap();
        assert_eq!(qc.steps.len(), 7);
        let cc = build_cc_sequence(1.0e-7, 5.0e-7).unwrap();
        assert_eq!(cc.steps.len(), 8);
        assert!(matches!(
            cc.steps[2],
            ProtocolStep::Rotate { axis: Axis::X, .. }
        ));
        // Back-to-back windows leave a zero-length wait.
        let tight = build_qc_sequence(1.0e-7, 1.0e-7).unwrap();
        let waits: Vec<f64> = tight
            .steps
            .iter()
            .filter_map(|s| match s {
                ProtocolStep::Wait { duration } => Some(*duration),
                _ => None,
            })
            .collect();
        assert_eq!(waits, vec![0.0]);
        assert!(build_qc_sequence(1.0e-7, 0.5e-7).is_err());
        assert!(build_qc_sequence(0.0, 1.0e-7).is_err());
    }

    #[test]
    fn classical_field_alone_leaves_qc_silent() {
        // No quantum coupling: any classical waveform cancels exactly in
        // the dephased protocol.
        let sys = build_bath(TAU * 5.395e5, TAU * 5.84e4, 0.0, 0.5, 1).unwrap();
        // Strong field: amplitude * t_interr near pi.
        let t_interr = 1.0e-6;
        let model = NoiseModel::ac(3.0e6, 5.0e5, 0.7).unwrap();
        for &delay in &[1.0e-6, 3.7e-6, 9.1e-6] {
            let seq = build_qc_sequence(t_interr, delay).unwrap();
            let traj = sample_trajectory(&model, seq.timeline(), 2.0e-8, 0).unwrap();
            let r = execute_exact(&seq, &sys, &traj, t_interr / 64.0).unwrap();
            assert!(
                r.value.abs() <= tol::NUMERIC_IDENTITY,
                "delay {delay}: QC = {}",
                r.value
            );
        }
    }

    #[test]
    fn unpolarized_decoupled_bath_gives_null_signal() {
        let sys = build_bath(TAU * 5.395e5, TAU * 5.84e4, TAU * 6.04e4, 0.0, 1).unwrap();
        let seq = build_qc_sequence(2.0e-7, 3.0e-6).unwrap();
        let traj = silent_traj(seq.timeline());
        let r = execute_exact(&seq, &sys, &traj, 1.0e-8).unwrap();
        assert!(r.value.abs() <= tol::STRUCTURAL, "QC = {}", r.value);
    }

    #[test]
    fn executor_matches_second_order_prediction() {
        let sys = standard_system();
        let t_interr = 5.0e-8;
        for &delay in &[5.0e-7, 1.3e-6, 2.9e-6] {
            let seq = build_qc_sequence(t_interr, delay).unwrap();
            let traj = silent_traj(seq.timeline());
            let got = execute_exact(&seq, &sys, &traj, t_interr / 64.0)
                .unwrap()
                .value;
            // Window centers sit half a window after each start.
            let predicted =
                predict_qc_eq1(&sys, t_interr, t_interr / 2.0, delay + t_interr / 2.0).unwrap();
            let scale = predicted.abs().max(1e-9);
            assert!(
                (got - predicted).abs() / scale < 0.02,
                "delay {delay}: executor {got:.6e} vs prediction {predicted:.6e}"
            );
        }
    }

    #[test]
    fn residual_against_prediction_shrinks_fourth_order() {
        let sys = standard_system();
        let delay = 2.0e-6;
        let residual = |t_interr: f64| {
            let seq = build_qc_sequence(t_interr, delay).unwrap();
            let traj = silent_traj(seq.timeline());
            let got = execute_exact(&seq, &sys, &traj, t_interr / 64.0)
                .unwrap()
                .value;
            let predicted =
                predict_qc_eq1(&sys, t_interr, t_interr / 2.0, delay + t_interr / 2.0).unwrap();
            (got - predicted).abs()
        };
        let coarse = residual(8.0e-7);
        let fine = residual(4.0e-7);
        let factor = coarse / fine;
        assert!(
            (8.0..=32.0).contains(&factor),
            "residuals {coarse:.3e} -> {fine:.3e}, factor {factor:.2}"
        );
    }

    #[test]
    fn forced_opposite_phases_average_to_the_channel() {
        let sys = standard_system();
        let seq = build_qc_sequence(1.0e-7, 8.0e-7).unwrap();
        let traj = silent_traj(seq.timeline());
        let dt = 1.0e-9;
        let channel = execute_with_phase(&seq, &sys, &traj, dt, None).unwrap();
        let up = execute_with_phase(&seq, &sys, &traj, dt, Some(0.0)).unwrap();
        let down = execute_with_phase(&seq, &sys, &traj, dt, Some(std::f64::consts::PI)).unwrap();
        assert!(
            ((up + down) / 2.0 - channel).abs() <= tol::NUMERIC_IDENTITY,
            "avg {} vs channel {}",
            (up + down) / 2.0,
            channel
        );
    }

    #[test]
    fn sampled_randomization_converges_to_the_channel() {
        let sys = standard_system();
        let t_interr = 1.0e-7;
        let delay = 1.4e-6;
        let seq = build_qc_sequence(t_interr, delay).unwrap();
        let model = NoiseModel::none();
        let exact = {
            let traj = silent_traj(seq.timeline());
            execute_exact(&seq, &sys, &traj, t_interr / 64.0)
                .unwrap()
                .value
        };
        let mut opts = McOptions::new(1000, 2024);
        opts.randomize_mode = RandomizeMode::Sampled;
        let mc = execute_mc(&seq, &sys, &model, &opts).unwrap();
        assert!(mc.stderr > 0.0);
        assert!(
            (mc.value - exact).abs() <= 3.0 * mc.stderr,
            "MC {} +/- {} vs exact {}",
            mc.value,
            mc.stderr,
            exact
        );
    }

    #[test]
    fn qc_is_sine_and_cc_is_cosine_quadrature() {
        let sys = standard_system();
        let t_interr = 5.0e-8;
        let omega = sys.effective_omega(0);
        let delays: Vec<f64> = (0..96).map(|i| t_interr + i as f64 * 1.0e-7).collect();
        let model = NoiseModel::none();
        let opts = SweepOptions::exact();
        let qc = sweep_delay(ProtocolKind::Qc, t_interr, &sys, &model, &delays, &opts).unwrap();
        let cc = sweep_delay(ProtocolKind::Cc, t_interr, &sys, &model, &delays, &opts).unwrap();
        let (qs, qcq) = fit_sin_cos(&qc.delays, &qc.values, omega).unwrap();
        let (cs, ccq) = fit_sin_cos(&cc.delays, &cc.values, omega).unwrap();
        assert!(
            qcq.abs() < 0.02 * qs.abs(),
            "QC quadratures {qs:.3e} sin, {qcq:.3e} cos"
        );
        assert!(
            cs.abs() < 0.02 * ccq.abs(),
            "CC quadratures {cs:.3e} sin, {ccq:.3e} cos"
        );
        // One polarized spin: QC amplitude p_z-weighted, CC amplitude not.
        let eq3 = predict_qc_eq3(
            sys.spins[0].a_perp,
            t_interr,
            sys.spins[0].p_z,
            omega,
            0.25 * TAU / omega,
        );
        assert!(
            qs * eq3 > 0.0,
            "QC sine quadrature should share the closed-form sign"
        );
    }

    #[test]
    fn qc_frequency_fits_effective_omega_within_one_percent() {
        let sys = standard_system();
        let t_interr = 5.0e-8;
        let delays: Vec<f64> = (0..128).map(|i| t_interr + i as f64 * 5.0e-7).collect();
        let qc = sweep_delay(
            ProtocolKind::Qc,
            t_interr,
            &sys,
            &NoiseModel::none(),
            &delays,
            &SweepOptions::exact(),
        )
        .unwrap();
        let omega0 = sys.effective_omega(0);
        // Matched-filter scan over a +/-5% band around the true frequency.
        let mut best = (0.0, 0.0);
        for k in -250..=250 {
            let omega = omega0 * (1.0 + k as f64 * 2.0e-4);
            let (a, b) = fit_sin_cos(&qc.delays, &qc.values, omega).unwrap();
            let power = a * a + b * b;
            if power > best.1 {
                best = (omega, power);
            }
        }
        assert!(
            (best.0 - omega0).abs() <= 0.01 * omega0,
            "fitted omega {} vs true {}",
            best.0,
            omega0
        );
    }

    #[test]
    fn monte_carlo_results_are_thread_count_invariant() {
        let sys = standard_system();
        let t_interr = 1.0e-7;
        let model = NoiseModel::ou_lorentzian(2.0e5, 4.5e3, 5.6e5, 99).unwrap();
        let delays: Vec<f64> = (0..4).map(|i| t_interr + i as f64 * 8.0e-7).collect();
        let mut opts = SweepOptions::monte_carlo(64, 7);
        opts.randomize_mode = RandomizeMode::Sampled;
        let run = |threads: usize| {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap();
            pool.install(|| {
                sweep_delay(ProtocolKind::Cc, t_interr, &sys, &model, &delays, &opts).unwrap()
            })
        };
        let single = run(1);
        let quad = run(4);
        assert_eq!(single, quad, "sweep must not depend on worker count");
    }

    #[test]
    fn pairwise_sum_is_exact_on_integers_and_split_invariant() {
        let xs: Vec<f64> = (1..=1000).map(|i| i as f64).collect();
        assert_eq!(pairwise_sum(&xs), 500500.0);
        let (mean, stderr) = mc_stats(&[2.0, 4.0, 6.0, 8.0]);
        assert_eq!(mean, 5.0);
        let expected = (20.0f64 / 3.0 / 4.0).sqrt();
        assert!((stderr - expected).abs() < 1e-15);
        assert_eq!(mc_stats(&[3.25]).1, 0.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn prop_state_stays_physical_under_noise(
            omega0_khz in 100.0f64..700.0,
            a_par_khz in -80.0f64..80.0,
            a_perp_khz in 5.0f64..90.0,
            p_z in -1.0f64..1.0,
            t_interr_ns in 50.0f64..400.0,
            delay_factor in 1.0f64..8.0,
            amp_khz in 0.0f64..200.0,
            cc in proptest::bool::ANY,
        ) {
            let sys = build_bath(
                TAU * omega0_khz * 1e3,
                TAU * a_par_khz * 1e3,
                TAU * a_perp_khz * 1e3,
                p_z,
                1,
            ).unwrap();
            let t_interr = t_interr_ns * 1e-9;
            let delay = t_interr * delay_factor;
            let kind = if cc { ProtocolKind::Cc } else { ProtocolKind::Qc };
            let seq = kind.build(t_interr, delay).unwrap();
            let model = NoiseModel::ac(TAU * amp_khz * 1e3, 5.0e5, 1.1).unwrap();
            let traj = sample_trajectory(&model, seq.timeline(), 5.0e-8, 0).unwrap();
            // Checked executor verifies trace, hermiticity and positivity
            // after every step.
            let r = execute_checked(&seq, &sys, &traj, t_interr / 32.0).unwrap();
            prop_assert!(r.value.abs() <= 1.0 + tol::EXPECTATION_BOUND_SLACK);
        }
    }
}
