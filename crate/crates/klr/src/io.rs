//! Delimited text matrices: one observation per row.
//!
//! The delimiter is taken from the first data line (comma, tab or
//! semicolon, otherwise runs of whitespace). A first row that does not
//! parse as numbers is treated as a header. Lines starting with `#` are
//! skipped.

use std::fs;
use std::io::Write;
use std::path::Path;

use klr_core::Sample;

use crate::error::{CliError, CliResult};

fn detect_delimiter(line: &str) -> Option<u8> {
    [b',', b'\t', b';'].into_iter().find(|&d| line.as_bytes().contains(&d))
}

fn parse_fields(fields: &[&str]) -> Result<Vec<f64>, String> {
    fields
        .iter()
        .map(|f| {
            let f = f.trim();
            let v: f64 = f.parse().map_err(|_| format!("`{f}` is not a number"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("`{f}` is not finite"))
            }
        })
        .collect()
}

fn split_records(text: &str, origin: &str) -> CliResult<Vec<(usize, Vec<String>)>> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let first = lines.clone().next();
    let Some((_, first)) = first else {
        return Ok(Vec::new());
    };
    let Some(delim) = detect_delimiter(first) else {
        return Ok(lines
            .map(|(n, l)| (n, l.split_whitespace().map(str::to_owned).collect()))
            .collect());
    };
    let mut out = Vec::new();
    for (n, l) in lines {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(false)
            .delimiter(delim)
            .trim(csv::Trim::All)
            .from_reader(l.as_bytes());
        let record = reader.records().next().transpose().map_err(|e| CliError::Parse {
            path: origin.to_owned(),
            line: n,
            reason: e.to_string(),
        })?;
        out.push((n, record.map(|r| r.iter().map(str::to_owned).collect()).unwrap_or_default()));
    }
    Ok(out)
}

/// Parses a matrix from text; `origin` names the source in error messages.
pub fn parse_sample(text: &str, origin: &str) -> CliResult<Sample> {
    let records = split_records(text, origin)?;
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(records.len());
    for (idx, (line, fields)) in records.iter().enumerate() {
        let refs: Vec<&str> = fields.iter().map(String::as_str).collect();
        match parse_fields(&refs) {
            Ok(row) => rows.push(row),
            Err(_) if idx == 0 => continue,
            Err(reason) => {
                return Err(CliError::Parse {
                    path: origin.to_owned(),
                    line: *line,
                    reason,
                })
            }
        }
        let width = rows[0].len();
        let last = rows.last().map_or(0, Vec::len);
        if last != width {
            return Err(CliError::Parse {
                path: origin.to_owned(),
                line: *line,
                reason: format!("expected {width} columns, found {last}"),
            });
        }
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(CliError::EmptyInput(format!("{origin} has no data rows")));
    }
    Sample::from_rows(&rows).map_err(|e| CliError::Parse {
        path: origin.to_owned(),
        line: 0,
        reason: e.to_string(),
    })
}

pub fn read_sample(path: &Path) -> CliResult<Sample> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_sample(&text, &path.display().to_string())
}

/// Reads two samples and checks they share a column count.
pub fn read_pair(x: &Path, y: &Path) -> CliResult<(Sample, Sample)> {
    let a = read_sample(x)?;
    let b = read_sample(y)?;
    if a.dim() != b.dim() {
        return Err(CliError::ColumnMismatch(format!(
            "{} has {} columns but {} has {}",
            x.display(),
            a.dim(),
            y.display(),
            b.dim()
        )));
    }
    Ok((a, b))
}

/// Writes rows as comma-separated values with round-trip float formatting.
pub fn write_sample<W: Write>(out: W, sample: &Sample) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in sample.rows() {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
