//! On-disk formats: JSON with 17-significant-digit floats and the CSV
//! schemas for tail curves and trajectory checkpoints.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use serde::Serialize;

use crate::analysis::{TailCurve, TailRow};
use crate::dynamics::Trajectory;
use crate::error::{Error, Result};

/// serde_json formatter that prints every float with 17 significant digits,
/// enough to round-trip any f64 exactly.
struct SigDigits17;

impl serde_json::ser::Formatter for SigDigits17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W>(&mut self, writer: &mut W, value: f32) -> io::Result<()>
    where
        W: ?Sized + io::Write,
    {
        write!(writer, "{value:.16e}")
    }
}

/// Formats one float for CSV output: 17 significant digits.
pub fn fmt_f64(value: f64) -> String {
    format!("{value:.16e}")
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, SigDigits17);
    value.serialize(&mut ser)?;
    Ok(String::from_utf8(out).expect("serde_json emits utf-8"))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = to_json_string(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub const TAIL_CSV_HEADER: &str = "k,theta,tau,n,n_exceed,p_hat,ci_lo,ci_hi";

pub fn tail_csv_string(curve: &TailCurve) -> String {
    let mut s = String::with_capacity(64 * (curve.rows.len() + 1));
    s.push_str(TAIL_CSV_HEADER);
    s.push('\n');
    for r in &curve.rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            r.k,
            fmt_f64(r.theta_cum),
            fmt_f64(r.tau),
            r.n_chains,
            r.n_exceed,
            fmt_f64(r.p_hat),
            fmt_f64(r.ci_lo),
            fmt_f64(r.ci_hi),
        ));
    }
    s
}

pub fn write_tail_csv(path: &Path, curve: &TailCurve) -> Result<()> {
    fs::write(path, tail_csv_string(curve))?;
    Ok(())
}

pub fn read_tail_csv(path: &Path) -> Result<TailCurve> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == TAIL_CSV_HEADER => {}
        other => {
            return Err(Error::invalid(format!(
                "unexpected tail.csv header {other:?}; want '{TAIL_CSV_HEADER}'"
            )))
        }
    }
    let mut rows = Vec::new();
    for (ln, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 8 {
            return Err(Error::invalid(format!(
                "tail.csv line {}: expected 8 fields, got {}",
                ln + 2,
                fields.len()
            )));
        }
        let parse_u = |s: &str| {
            s.trim()
                .parse::<u64>()
                .map_err(|e| Error::invalid(format!("tail.csv line {}: {e}", ln + 2)))
        };
        let parse_f = |s: &str| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| Error::invalid(format!("tail.csv line {}: {e}", ln + 2)))
        };
        rows.push(TailRow {
            k: parse_u(fields[0])?,
            theta_cum: parse_f(fields[1])?,
            tau: parse_f(fields[2])?,
            n_chains: parse_u(fields[3])?,
            n_exceed: parse_u(fields[4])?,
            p_hat: parse_f(fields[5])?,
            ci_lo: parse_f(fields[6])?,
            ci_hi: parse_f(fields[7])?,
        });
    }
    Ok(TailCurve {
        delta: f64::NAN,
        rows,
    })
}

/// Streams trajectory checkpoints as CSV. Coordinates are included only on
/// request (`record_x`); for d > 3 they are omitted regardless.
pub fn write_trajectories_csv(
    path: &Path,
    trajectories: &[Trajectory],
    record_x: bool,
) -> Result<()> {
    let dim = trajectories
        .first()
        .and_then(|t| t.checkpoints.first())
        .map(|c| c.x.len())
        .unwrap_or(0);
    let with_x = record_x && dim > 0 && dim <= 3;
    let file = fs::File::create(path)?;
    let mut w = io::BufWriter::new(file);
    let mut header = String::from("chain_id,k,theta,tau,f_value");
    if with_x {
        for ax in 0..dim {
            header.push_str(&format!(",x{ax}"));
        }
    }
    writeln!(w, "{header}")?;
    for t in trajectories {
        for c in &t.checkpoints {
            write!(
                w,
                "{},{},{},{},{}",
                t.chain_id,
                c.k,
                fmt_f64(c.theta_cum),
                fmt_f64(c.tau),
                fmt_f64(c.f_value)
            )?;
            if with_x {
                for v in &c.x {
                    write!(w, ",{}", fmt_f64(*v))?;
                }
            }
            writeln!(w)?;
        }
    }
    w.flush()?;
    Ok(())
}
