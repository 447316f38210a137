//! Strict INI-style scenario files.
//!
//! `[section]` headers, `key = value` pairs, `#` comments. Unknown
//! sections, unknown keys, duplicate keys, and keys that do not apply to
//! the selected noise kind are all rejected with the offending line
//! number. Every numeric key carries its unit in the suffix.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use qcorr_core::{
    build_bath, NoiseModel, ProtocolKind, RandomizeMode, RunMode, SpinSystem, SweepOptions,
    GAMMA_C13_HZ_PER_T,
};

use crate::{CliError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BathConfig {
    /// Bare Larmor angular frequency (rad/s), from `omega0_hz` or from
    /// `b_z_gauss` times the gyromagnetic ratio.
    pub omega0_rad_s: f64,
    pub a_par_rad_s: f64,
    pub a_perp_rad_s: f64,
    pub p_z: f64,
    pub n_spins: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    pub t_interr_s: f64,
    pub randomize_mode: RandomizeMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub delay_start_s: f64,
    pub delay_step_s: f64,
    pub n_points: usize,
}

impl SweepConfig {
    pub fn delays(&self) -> Vec<f64> {
        (0..self.n_points)
            .map(|i| self.delay_start_s + i as f64 * self.delay_step_s)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub mode: RunMode,
    pub n_traj: usize,
    pub substep_dt_s: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// Base name for all emitted files (no directory separators).
    pub path: String,
    pub format: OutputFormat,
    pub emit_spectrum: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub bath: BathConfig,
    pub noise: NoiseModel,
    /// Optional noise-grid override from `[noise] dt_s`.
    pub noise_dt_s: Option<f64>,
    pub protocol: ProtocolConfig,
    pub sweep: SweepConfig,
    pub run: RunConfig,
    pub output: OutputConfig,
}

impl ScenarioConfig {
    pub fn build_system(&self) -> Result<SpinSystem> {
        Ok(build_bath(
            self.bath.omega0_rad_s,
            self.bath.a_par_rad_s,
            self.bath.a_perp_rad_s,
            self.bath.p_z,
            self.bath.n_spins,
        )?)
    }

    pub fn sweep_options(&self, seed_override: Option<u64>) -> SweepOptions {
        SweepOptions {
            mode: self.run.mode,
            n_traj: self.run.n_traj,
            substep_dt: self.run.substep_dt_s,
            noise_dt: self.noise_dt_s,
            randomize_mode: self.protocol.randomize_mode,
            seed: seed_override.unwrap_or(self.run.seed),
        }
    }
}

struct SectionReader {
    name: String,
    header_line: usize,
    entries: BTreeMap<String, (usize, String)>,
}

impl SectionReader {
    fn take_raw(&mut self, key: &str) -> Option<(usize, String)> {
        self.entries.remove(key)
    }

    fn take_str(&mut self, key: &str) -> Option<String> {
        self.take_raw(key).map(|(_, v)| v)
    }

    fn take_f64(&mut self, key: &str) -> Result<Option<f64>> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Ok(Some(x)),
                _ => Err(CliError::config(
                    Some(line),
                    format!("`{}.{key}` expects a finite number, got `{v}`", self.name),
                )),
            },
        }
    }

    fn take_u64(&mut self, key: &str) -> Result<Option<u64>> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => v.parse::<u64>().map(Some).map_err(|_| {
                CliError::config(
                    Some(line),
                    format!(
                        "`{}.{key}` expects an unsigned integer, got `{v}`",
                        self.name
                    ),
                )
            }),
        }
    }

    fn take_usize(&mut self, key: &str) -> Result<Option<usize>> {
        Ok(self.take_u64(key)?.map(|v| v as usize))
    }

    fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take_raw(key) {
            None => Ok(None),
            Some((line, v)) => match v.as_str() {
                "true" => Ok(Some(true)),
                "false" => Ok(Some(false)),
                _ => Err(CliError::config(
                    Some(line),
                    format!("`{}.{key}` expects true or false, got `{v}`", self.name),
                )),
            },
        }
    }

    /// Rejects everything not consumed by the section builder.
    fn finish(self) -> Result<()> {
        if let Some((key, (line, _))) = self.entries.into_iter().next() {
            return Err(CliError::config(
                Some(line),
                format!("unknown or inapplicable key `{key}` in [{}]", self.name),
            ));
        }
        Ok(())
    }
}

fn require<T>(value: Option<T>, section: &str, header_line: usize, key: &str) -> Result<T> {
    value.ok_or_else(|| {
        CliError::config(
            Some(header_line),
            format!("missing required key `{key}` in [{section}]"),
        )
    })
}

fn split_sections(text: &str) -> Result<BTreeMap<String, SectionReader>> {
    let mut sections: BTreeMap<String, SectionReader> = BTreeMap::new();
    let mut current: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| CliError::config(Some(line_no), "section header missing `]`"))?
                .trim()
                .to_string();
            if name.is_empty() {
                return Err(CliError::config(Some(line_no), "empty section name"));
            }
            if sections.contains_key(&name) {
                return Err(CliError::config(
                    Some(line_no),
                    format!("duplicate section [{name}]"),
                ));
            }
            sections.insert(
                name.clone(),
                SectionReader {
                    name: name.clone(),
                    header_line: line_no,
                    entries: BTreeMap::new(),
                },
            );
            current = Some(name);
        } else {
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::config(
                    Some(line_no),
                    format!("expected `key = value`, got `{line}`"),
                )
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() {
                return Err(CliError::config(Some(line_no), "empty key"));
            }
            let section = current.as_ref().ok_or_else(|| {
                CliError::config(
                    Some(line_no),
                    format!("key `{key}` appears before any [section]"),
                )
            })?;
            let reader = sections.get_mut(section).expect("current section exists");
            if reader
                .entries
                .insert(key.clone(), (line_no, value))
                .is_some()
            {
                return Err(CliError::config(
                    Some(line_no),
                    format!("duplicate key `{key}` in [{section}]"),
                ));
            }
        }
    }
    Ok(sections)
}

fn in_range(value: f64, lo: f64, hi: f64, name: &str, line: usize) -> Result<f64> {
    if !(lo..=hi).contains(&value) {
        return Err(CliError::config(
            Some(line),
            format!("`{name}` = {value} outside the allowed range [{lo}, {hi}]"),
        ));
    }
    Ok(value)
}

fn positive(value: f64, name: &str, line: usize) -> Result<f64> {
    if value <= 0.0 {
        return Err(CliError::config(
            Some(line),
            format!("`{name}` must be positive, got {value}"),
        ));
    }
    Ok(value)
}

fn build_bath_config(mut s: SectionReader) -> Result<BathConfig> {
    let header = s.header_line;
    let omega0_hz = s.take_f64("omega0_hz")?;
    let b_z_gauss = s.take_f64("b_z_gauss")?;
    let gamma = s.take_f64("gamma_hz_per_t")?;
    let omega0_rad_s = match (omega0_hz, b_z_gauss) {
        (Some(_), Some(_)) => {
            return Err(CliError::config(
                Some(header),
                "give either `bath.omega0_hz` or `bath.b_z_gauss`, not both",
            ))
        }
        (Some(f), None) => {
            if gamma.is_some() {
                return Err(CliError::config(
                    Some(header),
                    "`bath.gamma_hz_per_t` only applies together with `bath.b_z_gauss`",
                ));
            }
            TAU * f
        }
        (None, Some(b)) => TAU * gamma.unwrap_or(GAMMA_C13_HZ_PER_T) * (b * 1.0e-4),
        (None, None) => {
            return Err(CliError::config(
                Some(header),
                "missing `bath.omega0_hz` or `bath.b_z_gauss`",
            ))
        }
    };
    let a_par_rad_s = TAU * s.take_f64("a_par_hz")?.unwrap_or(0.0);
    let a_perp_rad_s = TAU * s.take_f64("a_perp_hz")?.unwrap_or(0.0);
    let p_z = match s.take_raw("p_z") {
        None => 0.0,
        Some((line, v)) => {
            let x = v.parse::<f64>().map_err(|_| {
                CliError::config(
                    Some(line),
                    format!("`bath.p_z` expects a number, got `{v}`"),
                )
            })?;
            in_range(x, -1.0, 1.0, "bath.p_z", line)?
        }
    };
    let n_spins = s.take_usize("n_spins")?.unwrap_or(1);
    if !(1..=10).contains(&n_spins) {
        return Err(CliError::config(
            Some(header),
            format!("`bath.n_spins` = {n_spins} outside the supported range [1, 10]"),
        ));
    }
    s.finish()?;
    Ok(BathConfig {
        omega0_rad_s,
        a_par_rad_s,
        a_perp_rad_s,
        p_z,
        n_spins,
    })
}

fn build_noise_config(mut s: SectionReader) -> Result<(NoiseModel, Option<f64>)> {
    let header = s.header_line;
    let kind = s.take_str("kind").unwrap_or_else(|| "none".into());
    let dt_s = match s.take_f64("dt_s")? {
        Some(v) => Some(positive(v, "noise.dt_s", header)?),
        None => None,
    };
    let seed_base = s.take_u64("seed_base")?;
    let model = match kind.as_str() {
        "none" => {
            if seed_base.is_some() {
                return Err(CliError::config(
                    Some(header),
                    "`noise.seed_base` does not apply to kind `none`",
                ));
            }
            NoiseModel::none()
        }
        "ac" => {
            if seed_base.is_some() {
                return Err(CliError::config(
                    Some(header),
                    "`noise.seed_base` does not apply to the deterministic `ac` kind",
                ));
            }
            let amplitude = s.take_f64("amplitude_rad_s")?;
            let amplitude = require(amplitude, "noise", header, "amplitude_rad_s")?;
            let frequency = s.take_f64("frequency_hz")?;
            let frequency = require(frequency, "noise", header, "frequency_hz")?;
            let phase0 = s.take_f64("phase0_rad")?.unwrap_or(0.0);
            NoiseModel::ac(amplitude, frequency, phase0)?
        }
        "random_phase_ac" => {
            let amplitude = s.take_f64("amplitude_rad_s")?;
            let amplitude = require(amplitude, "noise", header, "amplitude_rad_s")?;
            let frequency = s.take_f64("frequency_hz")?;
            let frequency = require(frequency, "noise", header, "frequency_hz")?;
            NoiseModel::random_phase_ac(amplitude, frequency, seed_base.unwrap_or(0))?
        }
        "ou_lorentzian" => {
            let sigma = s.take_f64("sigma_rad_s")?;
            let sigma = require(sigma, "noise", header, "sigma_rad_s")?;
            let fwhm = s.take_f64("fwhm_hz")?;
            let fwhm = require(fwhm, "noise", header, "fwhm_hz")?;
            let center = s.take_f64("center_freq_hz")?.unwrap_or(0.0);
            NoiseModel::ou_lorentzian(sigma, fwhm, center, seed_base.unwrap_or(0))?
        }
        "white" => {
            let sigma = s.take_f64("sigma_rad_per_sqrt_s")?;
            let sigma = require(sigma, "noise", header, "sigma_rad_per_sqrt_s")?;
            NoiseModel::white(sigma, seed_base.unwrap_or(0))?
        }
        other => {
            return Err(CliError::config(
                Some(header),
                format!(
                    "unknown noise kind `{other}` (expected none, ac, random_phase_ac, ou_lorentzian, white)"
                ),
            ))
        }
    };
    s.finish()?;
    Ok((model, dt_s))
}

fn build_protocol_config(mut s: SectionReader) -> Result<ProtocolConfig> {
    let header = s.header_line;
    let kind_str = s.take_str("kind");
    let kind = match require(kind_str, "protocol", header, "kind")?.as_str() {
        "qc" => ProtocolKind::Qc,
        "cc" => ProtocolKind::Cc,
        other => {
            return Err(CliError::config(
                Some(header),
                format!("`protocol.kind` must be qc or cc, got `{other}`"),
            ))
        }
    };
    let t = s.take_f64("t_interr_s")?;
    let t_interr_s = positive(
        require(t, "protocol", header, "t_interr_s")?,
        "protocol.t_interr_s",
        header,
    )?;
    let randomize_mode = match s.take_str("randomize_mode").as_deref() {
        None | Some("exact_channel") => RandomizeMode::ExactChannel,
        Some("sampled") => RandomizeMode::Sampled,
        Some(other) => {
            return Err(CliError::config(
                Some(header),
                format!(
                    "`protocol.randomize_mode` must be exact_channel or sampled, got `{other}`"
                ),
            ))
        }
    };
    s.finish()?;
    Ok(ProtocolConfig {
        kind,
        t_interr_s,
        randomize_mode,
    })
}

fn build_sweep_config(mut s: SectionReader, t_interr_s: f64) -> Result<SweepConfig> {
    let header = s.header_line;
    let start = s.take_f64("delay_start_s")?;
    let delay_start_s = require(start, "sweep", header, "delay_start_s")?;
    if delay_start_s < t_interr_s {
        return Err(CliError::config(
            Some(header),
            format!(
                "`sweep.delay_start_s` = {delay_start_s} must be at least `protocol.t_interr_s` = {t_interr_s}"
            ),
        ));
    }
    let step = s.take_f64("delay_step_s")?;
    let delay_step_s = positive(
        require(step, "sweep", header, "delay_step_s")?,
        "sweep.delay_step_s",
        header,
    )?;
    let n = s.take_usize("n_points")?;
    let n_points = require(n, "sweep", header, "n_points")?;
    if !(1..=2_000_000).contains(&n_points) {
        return Err(CliError::config(
            Some(header),
            format!("`sweep.n_points` = {n_points} outside the supported range [1, 2e6]"),
        ));
    }
    s.finish()?;
    Ok(SweepConfig {
        delay_start_s,
        delay_step_s,
        n_points,
    })
}

fn build_run_config(mut s: SectionReader) -> Result<RunConfig> {
    let header = s.header_line;
    let mode = match s.take_str("mode").as_deref() {
        None | Some("exact") => RunMode::Exact,
        Some("mc") => RunMode::MonteCarlo,
        Some(other) => {
            return Err(CliError::config(
                Some(header),
                format!("`run.mode` must be exact or mc, got `{other}`"),
            ))
        }
    };
    let n_traj = s.take_usize("n_traj")?.unwrap_or(1000);
    if n_traj == 0 {
        return Err(CliError::config(
            Some(header),
            "`run.n_traj` must be at least 1",
        ));
    }
    let substep_dt_s = match s.take_f64("substep_dt_s")? {
        Some(v) => Some(positive(v, "run.substep_dt_s", header)?),
        None => None,
    };
    let seed = s.take_u64("seed")?.unwrap_or(0);
    s.finish()?;
    Ok(RunConfig {
        mode,
        n_traj,
        substep_dt_s,
        seed,
    })
}

fn build_output_config(mut s: SectionReader) -> Result<OutputConfig> {
    let header = s.header_line;
    let path = s.take_str("path").unwrap_or_else(|| "trace".into());
    if path.is_empty() || path.contains('/') || path.contains('\\') {
        return Err(CliError::config(
            Some(header),
            format!("`output.path` must be a bare file stem, got `{path}`"),
        ));
    }
    let format = match s.take_str("format").as_deref() {
        None | Some("csv") => OutputFormat::Csv,
        Some("json") => OutputFormat::Json,
        Some(other) => {
            return Err(CliError::config(
                Some(header),
                format!("`output.format` must be csv or json, got `{other}`"),
            ))
        }
    };
    let emit_spectrum = s.take_bool("emit_spectrum")?.unwrap_or(false);
    s.finish()?;
    Ok(OutputConfig {
        path,
        format,
        emit_spectrum,
    })
}

pub fn parse_scenario(text: &str) -> Result<ScenarioConfig> {
    let mut sections = split_sections(text)?;

    const KNOWN: [&str; 7] = [
        "sensor", "bath", "noise", "protocol", "sweep", "run", "output",
    ];
    if let Some((name, sect)) = sections
        .iter()
        .find(|(name, _)| !KNOWN.contains(&name.as_str()))
    {
        return Err(CliError::config(
            Some(sect.header_line),
            format!("unknown section [{name}]"),
        ));
    }

    // The sensor has no knobs; the section may appear but must be empty.
    if let Some(sensor) = sections.remove("sensor") {
        sensor.finish()?;
    }

    let bath = build_bath_config(
        sections
            .remove("bath")
            .ok_or_else(|| CliError::config(None, "missing [bath] section"))?,
    )?;
    let (noise, noise_dt_s) = match sections.remove("noise") {
        Some(sect) => build_noise_config(sect)?,
        None => (NoiseModel::none(), None),
    };
    let protocol = build_protocol_config(
        sections
            .remove("protocol")
            .ok_or_else(|| CliError::config(None, "missing [protocol] section"))?,
    )?;
    let sweep = build_sweep_config(
        sections
            .remove("sweep")
            .ok_or_else(|| CliError::config(None, "missing [sweep] section"))?,
        protocol.t_interr_s,
    )?;
    let run = match sections.remove("run") {
        Some(sect) => build_run_config(sect)?,
        None => RunConfig {
            mode: RunMode::Exact,
            n_traj: 1000,
            substep_dt_s: None,
            seed: 0,
        },
    };
    let output = match sections.remove("output") {
        Some(sect) => build_output_config(sect)?,
        None => OutputConfig {
            path: "trace".into(),
            format: OutputFormat::Csv,
            emit_spectrum: false,
        },
    };

    Ok(ScenarioConfig {
        bath,
        noise,
        noise_dt_s,
        protocol,
        sweep,
        run,
        output,
    })
}
