//! Subcommand implementations, shared by the binary and the tests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use qcorr_core::{
    calibrate_eq3_constant, default_noise_dt, default_substep_dt, execute_exact, oracle_execute,
    psd_estimate, sample_trajectory, spectrum, sweep_delay, NoiseModel, ProtocolKind, Spectrum,
    Window,
};

use crate::config::{parse_scenario, OutputFormat, ScenarioConfig};
use crate::io;
use crate::{CliError, Result};

pub fn version_string() -> String {
    format!("qcorr {}", env!("CARGO_PKG_VERSION"))
}

/// Everything a `run` needs beyond the scenario file itself.
#[derive(Debug, Clone)]
pub struct RunRequest {
    pub config_path: PathBuf,
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub seed_override: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub trace_path: PathBuf,
    pub spectrum_path: Option<PathBuf>,
    pub manifest_path: PathBuf,
    pub n_points: usize,
    pub seed: u64,
    pub wall_time_s: f64,
}

/// Runs `f` inside a rayon pool with exactly `workers` threads. Results do
/// not depend on the thread count; only throughput does.
fn with_pool<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match workers {
        None => f(),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| {
                    CliError::config(None, format!("cannot build a {n}-thread worker pool: {e}"))
                })?;
            pool.install(f)
        }
    }
}

fn load_scenario(path: &Path) -> Result<(String, ScenarioConfig)> {
    let text = fs::read_to_string(path)?;
    let cfg = parse_scenario(&text)?;
    Ok((text, cfg))
}

pub fn cmd_run(req: &RunRequest) -> Result<RunReport> {
    let started = Instant::now();
    let (config_text, cfg) = load_scenario(&req.config_path)?;
    let sys = cfg.build_system()?;
    let opts = cfg.sweep_options(req.seed_override);
    let delays = cfg.sweep.delays();

    let trace = with_pool(req.workers, || {
        Ok(sweep_delay(
            cfg.protocol.kind,
            cfg.protocol.t_interr_s,
            &sys,
            &cfg.noise,
            &delays,
            &opts,
        )?)
    })?;

    let stem = &cfg.output.path;
    let trace_path = match cfg.output.format {
        OutputFormat::Csv => {
            let p = req.out_dir.join(format!("{stem}.csv"));
            io::write_text(&p, &io::trace_to_csv(&trace))?;
            p
        }
        OutputFormat::Json => {
            let p = req.out_dir.join(format!("{stem}.json"));
            io::write_text(&p, &io::trace_to_json(&trace))?;
            p
        }
    };

    let spectrum_path = if cfg.output.emit_spectrum {
        let spec = spectrum(&trace, Window::Hann)?;
        let p = req.out_dir.join(format!("{stem}_spectrum.csv"));
        io::write_text(&p, &io::spectrum_to_csv(&spec))?;
        Some(p)
    } else {
        None
    };

    let wall_time_s = started.elapsed().as_secs_f64();
    let mut outputs = vec![trace_path.display().to_string()];
    if let Some(p) = &spectrum_path {
        outputs.push(p.display().to_string());
    }
    let manifest = serde_json::json!({
        "command": "run",
        "config_path": req.config_path.display().to_string(),
        "config": config_text,
        "seed": opts.seed,
        "version": version_string(),
        "wall_time_s": wall_time_s,
        "outputs": outputs,
    });
    let manifest_path = req.out_dir.join(format!("{stem}_manifest.json"));
    let mut manifest_text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    manifest_text.push('\n');
    io::write_text(&manifest_path, &manifest_text)?;

    Ok(RunReport {
        trace_path,
        spectrum_path,
        manifest_path,
        n_points: trace.len(),
        seed: opts.seed,
        wall_time_s,
    })
}

/// Reads a trace CSV back and writes its spectrum next to `out_path`.
pub fn cmd_spectrum(trace_path: &Path, out_path: &Path, window: Window) -> Result<Spectrum> {
    let trace = io::read_trace_csv(trace_path)?;
    let spec = spectrum(&trace, window)?;
    io::write_text(out_path, &io::spectrum_to_csv(&spec))?;
    Ok(spec)
}

/// Samples noise trajectories for the configured model over the full sweep
/// timeline and writes the averaged one-sided power spectral density.
pub fn cmd_psd(req: &RunRequest) -> Result<(PathBuf, Spectrum)> {
    let (_, cfg) = load_scenario(&req.config_path)?;
    if !cfg.noise.is_stochastic() {
        return Err(CliError::config(
            None,
            "psd needs a stochastic noise kind (random_phase_ac, ou_lorentzian, white)",
        ));
    }
    let sys = cfg.build_system()?;
    let model = match req.seed_override {
        Some(seed) => cfg.noise.clone().with_seed(seed),
        None => cfg.noise.clone(),
    };
    let last_delay =
        cfg.sweep.delay_start_s + (cfg.sweep.n_points - 1) as f64 * cfg.sweep.delay_step_s;
    let timeline = last_delay + cfg.protocol.t_interr_s;
    let substep = cfg
        .run
        .substep_dt_s
        .unwrap_or_else(|| default_substep_dt(&sys, &model, cfg.protocol.t_interr_s));
    let dt = cfg
        .noise_dt_s
        .unwrap_or_else(|| default_noise_dt(&model, substep));

    let trajs = with_pool(req.workers, || {
        (0..cfg.run.n_traj)
            .map(|i| Ok(sample_trajectory(&model, timeline, dt, i as u64)?))
            .collect::<Result<Vec<_>>>()
    })?;
    let psd = psd_estimate(&trajs)?;

    let out = req.out_dir.join(format!("{}_psd.csv", cfg.output.path));
    io::write_text(&out, &io::spectrum_to_csv(&psd))?;
    Ok((out, psd))
}

const VALIDATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone)]
pub struct ValidationLine {
    pub label: String,
    pub abs_diff: f64,
    pub pass: bool,
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub lines: Vec<ValidationLine>,
    pub calibration: f64,
    pub pass: bool,
}

/// Cross-checks the production executor against the independent
/// brute-force reference on a fixed scenario table, then reports the
/// response calibration constant measured from the reference alone.
pub fn cmd_validate() -> Result<ValidationReport> {
    struct Case {
        omega0_hz: f64,
        a_par_hz: f64,
        a_perp_hz: f64,
        p_z: f64,
        t_interr_s: f64,
        delay_mult: f64,
        kind: ProtocolKind,
        noise: Option<(f64, f64, f64)>, // (amplitude rad/s, frequency Hz, phase rad)
    }
    let cases = [
        Case {
            omega0_hz: 2.5e5,
            a_par_hz: 2.0e4,
            a_perp_hz: 4.5e4,
            p_z: 0.6,
            t_interr_s: 1.2e-7,
            delay_mult: 3.0,
            kind: ProtocolKind::Qc,
            noise: None,
        },
        Case {
            omega0_hz: 2.5e5,
            a_par_hz: -1.5e4,
            a_perp_hz: 3.0e4,
            p_z: 0.4,
            t_interr_s: 1.5e-7,
            delay_mult: 2.2,
            kind: ProtocolKind::Cc,
            noise: None,
        },
        Case {
            omega0_hz: 4.0e5,
            a_par_hz: 0.0,
            a_perp_hz: 5.5e4,
            p_z: 0.8,
            t_interr_s: 9.0e-8,
            delay_mult: 4.1,
            kind: ProtocolKind::Qc,
            noise: Some((3.0e5, 4.2e5, 0.3)),
        },
        Case {
            omega0_hz: 1.8e5,
            a_par_hz: 3.5e4,
            a_perp_hz: 2.5e4,
            p_z: -0.5,
            t_interr_s: 2.0e-7,
            delay_mult: 1.8,
            kind: ProtocolKind::Cc,
            noise: Some((2.0e5, 2.6e5, 1.1)),
        },
        Case {
            omega0_hz: 3.2e5,
            a_par_hz: 1.0e4,
            a_perp_hz: 6.0e4,
            p_z: 1.0,
            t_interr_s: 8.0e-8,
            delay_mult: 5.5,
            kind: ProtocolKind::Qc,
            noise: None,
        },
        Case {
            omega0_hz: 5.0e5,
            a_par_hz: -4.0e4,
            a_perp_hz: 4.0e4,
            p_z: 0.25,
            t_interr_s: 1.1e-7,
            delay_mult: 2.7,
            kind: ProtocolKind::Cc,
            noise: Some((4.0e5, 6.1e5, 2.0)),
        },
    ];

    use std::f64::consts::TAU;
    let mut lines = Vec::with_capacity(cases.len());
    for (i, c) in cases.iter().enumerate() {
        let sys = qcorr_core::build_bath(
            TAU * c.omega0_hz,
            TAU * c.a_par_hz,
            TAU * c.a_perp_hz,
            c.p_z,
            1,
        )?;
        let delay = c.delay_mult * c.t_interr_s;
        let seq = c.kind.build(c.t_interr_s, delay)?;
        let model = match c.noise {
            Some((amp, freq, phase)) => NoiseModel::ac(amp, freq, phase)?,
            None => NoiseModel::none(),
        };
        let noise_dt = match c.noise {
            Some(_) => 1.0e-9,
            None => c.t_interr_s,
        };
        let traj = sample_trajectory(&model, seq.timeline(), noise_dt, 0)?;
        let fast = execute_exact(&seq, &sys, &traj, c.t_interr_s / 256.0)?.value;
        let slow = oracle_execute(&seq, &sys, &traj, 256, 16)?;
        let abs_diff = (fast - slow).abs();
        let kind = match c.kind {
            ProtocolKind::Qc => "qc",
            ProtocolKind::Cc => "cc",
        };
        let tone = if c.noise.is_some() {
            "ac tone"
        } else {
            "silent"
        };
        lines.push(ValidationLine {
            label: format!("case {i} ({kind}, {tone})"),
            abs_diff,
            pass: abs_diff <= VALIDATE_TOL,
        });
    }

    let calibration = calibrate_eq3_constant()?;
    let pass = lines.iter().all(|l| l.pass);
    Ok(ValidationReport {
        lines,
        calibration,
        pass,
    })
}
