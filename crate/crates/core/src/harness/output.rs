//! Curve CSV files and the summary JSON.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a
//! reader parsing them back recovers the exact doubles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::experiment::{AggregateCurve, ExperimentResult, SummaryEntry};
use crate::error::{Error, Result};

pub const CURVE_HEADER: &str = "k,mean_f_last,mean_f_avg,n_runs";

pub fn curve_csv(curve: &AggregateCurve) -> String {
    let mut s = String::with_capacity(64 * curve.k.len());
    s.push_str(CURVE_HEADER);
    s.push('\n');
    for i in 0..curve.k.len() {
        writeln!(
            s,
            "{},{:?},{:?},{}",
            curve.k[i], curve.mean_f_last[i], curve.mean_f_avg[i], curve.n_runs
        )
        .expect("writing to a String");
    }
    s
}

pub fn write_curve_csv(path: &Path, curve: &AggregateCurve) -> Result<()> {
    fs::write(path, curve_csv(curve))?;
    Ok(())
}

/// One parsed curve file row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow {
    pub k: u64,
    pub mean_f_last: f64,
    pub mean_f_avg: f64,
    pub n_runs: usize,
}

/// Parses a curve CSV, enforcing the header and strictly increasing `k`.
pub fn parse_curve_csv(text: &str, origin: &str) -> Result<Vec<CurveRow>> {
    let err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == CURVE_HEADER => {}
        Some((_, h)) => {
            return Err(err(1, format!("header '{h}' differs from '{CURVE_HEADER}'")));
        }
        None => return Err(err(1, "empty file".into())),
    }
    let mut rows: Vec<CurveRow> = Vec::new();
    for (i, line) in lines {
        let n = i + 1;
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 4 {
            return Err(err(n, format!("expected 4 columns, found {}", cols.len())));
        }
        let bad = |c: &str| err(n, format!("cannot parse '{c}'"));
        let row = CurveRow {
            k: cols[0].parse().map_err(|_| bad(cols[0]))?,
            mean_f_last: cols[1].parse().map_err(|_| bad(cols[1]))?,
            mean_f_avg: cols[2].parse().map_err(|_| bad(cols[2]))?,
            n_runs: cols[3].parse().map_err(|_| bad(cols[3]))?,
        };
        if rows.last().is_some_and(|r| r.k >= row.k) {
            return Err(err(n, format!("k = {} is not increasing", row.k)));
        }
        rows.push(row);
    }
    Ok(rows)
}

pub fn summary_json(entries: &BTreeMap<String, SummaryEntry>) -> Result<String> {
    let mut s = serde_json::to_string_pretty(entries)?;
    s.push('\n');
    Ok(s)
}

pub fn write_summary_json(path: &Path, entries: &BTreeMap<String, SummaryEntry>) -> Result<()> {
    fs::write(path, summary_json(entries)?)?;
    Ok(())
}

/// Writes `<label>.csv` per result plus `summary.json` into `dir`.
pub fn write_results(dir: &Path, results: &[ExperimentResult]) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut summary = BTreeMap::new();
    for r in results {
        write_curve_csv(&dir.join(format!("{}.csv", r.label)), &r.curve)?;
        summary.insert(r.label.clone(), r.summary());
    }
    write_summary_json(&dir.join("summary.json"), &summary)
}
