//! Trace and spectrum serialization.
//!
//! Numbers are written with 17 significant digits so a round trip through
//! text reproduces the exact f64 bit pattern.

use std::fs;
use std::path::Path;

use qcorr_core::{CorrelationTrace, Spectrum};

use crate::{CliError, Result};

pub const TRACE_HEADER: &str = "delay_s,value,stderr";
pub const SPECTRUM_HEADER: &str = "freq_hz,amplitude";

fn fmt(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn trace_to_csv(trace: &CorrelationTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for i in 0..trace.len() {
        out.push_str(&fmt(trace.delays[i]));
        out.push(',');
        out.push_str(&fmt(trace.values[i]));
        out.push(',');
        out.push_str(&fmt(trace.stderrs[i]));
        out.push('\n');
    }
    out
}

pub fn spectrum_to_csv(spec: &Spectrum) -> String {
    let mut out = String::with_capacity(48 * (spec.freqs.len() + 1));
    out.push_str(SPECTRUM_HEADER);
    out.push('\n');
    for (f, a) in spec.freqs.iter().zip(&spec.amplitudes) {
        out.push_str(&fmt(*f));
        out.push(',');
        out.push_str(&fmt(*a));
        out.push('\n');
    }
    out
}

pub fn trace_to_json(trace: &CorrelationTrace) -> String {
    let obj = serde_json::json!({
        "delays_s": trace.delays,
        "values": trace.values,
        "stderrs": trace.stderrs,
    });
    let mut text = serde_json::to_string_pretty(&obj).expect("trace arrays serialize");
    text.push('\n');
    text
}

fn parse_field(token: &str, line_no: usize, column: &str) -> Result<f64> {
    token.trim().parse::<f64>().map_err(|_| {
        CliError::config(
            Some(line_no),
            format!("trace csv: `{column}` is not a number, got `{token}`"),
        )
    })
}

pub fn read_trace_csv(path: &Path) -> Result<CorrelationTrace> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == TRACE_HEADER => {}
        Some((_, header)) => {
            return Err(CliError::config(
                Some(1),
                format!("trace csv: expected header `{TRACE_HEADER}`, got `{header}`"),
            ))
        }
        None => return Err(CliError::config(Some(1), "trace csv: empty file")),
    }

    let mut delays = Vec::new();
    let mut values = Vec::new();
    let mut stderrs = Vec::new();
    for (idx, line) in lines {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut cols = line.split(',');
        let (d, v, e) = match (cols.next(), cols.next(), cols.next(), cols.next()) {
            (Some(d), Some(v), Some(e), None) => (d, v, e),
            _ => {
                return Err(CliError::config(
                    Some(line_no),
                    format!("trace csv: expected 3 comma separated fields, got `{line}`"),
                ))
            }
        };
        delays.push(parse_field(d, line_no, "delay_s")?);
        values.push(parse_field(v, line_no, "value")?);
        stderrs.push(parse_field(e, line_no, "stderr")?);
    }
    Ok(CorrelationTrace::new(delays, values, stderrs)?)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}
