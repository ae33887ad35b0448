//! CSV forms of pulses. Lines starting with `#` are metadata and are
//! skipped on read.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::pulse::{SampledPulse, Segment};

pub const STAGE1_HEADER: &str = "segment_index,duration,re_p,im_p";
pub const STAGE2_HEADER: &str = "t_start,dt,re_p,im_p";

fn preamble(out: &mut String, meta: &[(&str, &str)]) {
    for (k, v) in meta {
        writeln!(out, "# {k}: {v}").expect("writing to a String");
    }
}

/// Piecewise pulse, one row per segment.
pub fn stage1_csv(segments: &[Segment], meta: &[(&str, &str)]) -> String {
    let mut out = String::new();
    preamble(&mut out, meta);
    out.push_str(STAGE1_HEADER);
    out.push('\n');
    for (i, s) in segments.iter().enumerate() {
        writeln!(out, "{i},{},{},{}", s.duration, s.amplitude.re, s.amplitude.im).expect("writing to a String");
    }
    out
}

/// Fine-grid pulse, one row per cell.
pub fn stage2_csv(pulse: &SampledPulse, meta: &[(&str, &str)]) -> String {
    let mut out = String::new();
    preamble(&mut out, meta);
    out.push_str(STAGE2_HEADER);
    out.push('\n');
    for (i, a) in pulse.amplitudes.iter().enumerate() {
        writeln!(out, "{},{},{},{}", i as f64 * pulse.dt, pulse.dt, a.re, a.im).expect("writing to a String");
    }
    out
}

/// Reads either CSV layout back into segments.
pub fn read_pulse_csv(text: &str) -> Result<Vec<Segment>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse(format!("pulse file header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let joined = header.join(",");
    if joined != STAGE1_HEADER && joined != STAGE2_HEADER {
        return Err(Error::Parse(format!(
            "pulse file header `{joined}` is neither `{STAGE1_HEADER}` nor `{STAGE2_HEADER}`"
        )));
    }
    let mut segments = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse(format!("pulse file row {}: {e}", line + 1)))?;
        let field = |i: usize| -> Result<f64> {
            let raw = rec.get(i).unwrap_or("");
            let v: f64 = raw
                .parse()
                .map_err(|_| Error::Parse(format!("pulse file row {}: `{raw}` is not a number", line + 1)))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse(format!("pulse file row {}: non-finite value", line + 1)))
            }
        };
        let duration = field(1)?;
        if duration < 0.0 {
            return Err(Error::Parse(format!("pulse file row {}: negative duration", line + 1)));
        }
        segments.push(Segment { duration, amplitude: C64::new(field(2)?, field(3)?) });
    }
    if segments.is_empty() {
        return Err(Error::Parse("pulse file has no rows".into()));
    }
    Ok(segments)
}
