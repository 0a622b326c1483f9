//! Capitalization series in CSV form.
//!
//! Caps files have the header `time,X1,...,Xn` and one row per grid point.
//! Covariance files have the header `time,s_1_1,s_1_2,...,s_n_n` and one
//! row per step, holding the row-major covariance in force at the start of
//! the step. Numbers are written in shortest round-trip form so a written
//! path reads back bit-exactly.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::sim::MarketPath;

pub const DEFAULT_COVARIANCE_WINDOW: usize = 20;

fn parse_field(s: &str, row: usize, col: usize) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Csv(format!("row {row}, column {col}: `{s}` is not a number")))
}

fn read_table<R: Read>(reader: R, first: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header.first().map(String::as_str) != Some(first) {
        return Err(Error::Csv(format!("first column must be `{first}`")));
    }
    let mut rows = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = rec
            .iter()
            .enumerate()
            .map(|(c, s)| parse_field(s, r + 1, c + 1))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn check_times(times: &[f64]) -> Result<()> {
    if let Some(t) = times.iter().find(|t| !t.is_finite()) {
        return Err(Error::Csv(format!("time {t} is not finite")));
    }
    if let Some(k) = times.windows(2).position(|w| !(w[1] > w[0])) {
        return Err(Error::Csv(format!(
            "times are not strictly increasing at row {} ({} after {})",
            k + 2,
            times[k + 1],
            times[k]
        )));
    }
    Ok(())
}

/// Reads `time,X1,...,Xn`. Returns the grid and the `(M + 1) x n` caps.
pub fn read_caps_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let (header, rows) = read_table(reader, "time")?;
    if header.len() < 3 {
        return Err(Error::Csv("need a time column and at least two caps columns".into()));
    }
    let mut times = Vec::with_capacity(rows.len());
    let mut caps = Vec::with_capacity(rows.len());
    for row in rows {
        times.push(row[0]);
        let x = row[1..].to_vec();
        if let Some((i, v)) = x.iter().enumerate().find(|(_, v)| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::NonPositiveCap { index: i, value: *v });
        }
        caps.push(x);
    }
    check_times(&times)?;
    Ok((times, caps))
}

/// Reads a per-step covariance file for `n` stocks.
pub fn read_covariance_csv<R: Read>(reader: R, n: usize) -> Result<(Vec<f64>, Vec<DMatrix<f64>>)> {
    let (header, rows) = read_table(reader, "time")?;
    if header.len() != 1 + n * n {
        return Err(Error::Csv(format!(
            "covariance file has {} value columns, expected {}",
            header.len() - 1,
            n * n
        )));
    }
    let times: Vec<f64> = rows.iter().map(|r| r[0]).collect();
    let sigma = rows.iter().map(|r| DMatrix::from_row_slice(n, n, &r[1..])).collect();
    Ok((times, sigma))
}

/// Realized covariance of log-caps per year over a trailing window of
/// `window` steps. The estimate for step `k` uses steps `k - window .. k`;
/// the first `window` steps share the estimate from steps `0 .. window`.
pub fn realized_covariance(times: &[f64], caps: &[Vec<f64>], window: usize) -> Result<Vec<DMatrix<f64>>> {
    if window == 0 {
        return Err(Error::InvalidParameter("covariance window must be at least 1".into()));
    }
    if caps.len() < window + 1 {
        return Err(Error::InsufficientRows {
            required: window + 1,
            actual: caps.len(),
        });
    }
    let n = caps[0].len();
    let steps = caps.len() - 1;
    let dlog: Vec<Vec<f64>> = caps
        .windows(2)
        .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| b.ln() - a.ln()).collect())
        .collect();
    let estimate = |from: usize| {
        let mut s = DMatrix::zeros(n, n);
        let mut span = 0.0;
        for j in from..from + window {
            span += times[j + 1] - times[j];
            for a in 0..n {
                for b in 0..n {
                    s[(a, b)] += dlog[j][a] * dlog[j][b];
                }
            }
        }
        s / span
    };
    let warmup = estimate(0);
    Ok((0..steps)
        .map(|k| if k < window { warmup.clone() } else { estimate(k - window) })
        .collect())
}

/// Caps file plus rolling covariance estimate.
pub fn ingest_caps_csv<R: Read>(reader: R, window: usize) -> Result<MarketPath> {
    let (times, caps) = read_caps_csv(reader)?;
    let sigma = realized_covariance(&times, &caps, window)?;
    MarketPath::from_caps(times, caps, sigma, None)
}

/// Caps file plus a companion covariance file on the same grid.
pub fn ingest_with_covariance<R: Read, S: Read>(caps: R, covariance: S) -> Result<MarketPath> {
    let (times, caps) = read_caps_csv(caps)?;
    let (cov_times, sigma) = read_covariance_csv(covariance, caps[0].len())?;
    if cov_times.len() + 1 != times.len() || cov_times.iter().zip(&times).any(|(a, b)| a != b) {
        return Err(Error::GridMismatch);
    }
    MarketPath::from_caps(times, caps, sigma, None)
}

pub fn ingest_caps_file(path: &Path, window: usize) -> Result<MarketPath> {
    ingest_caps_csv(File::open(path)?, window)
}

pub fn ingest_files(caps: &Path, covariance: &Path) -> Result<MarketPath> {
    ingest_with_covariance(File::open(caps)?, File::open(covariance)?)
}

pub fn write_caps_csv<W: Write>(writer: W, path: &MarketPath) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    header.extend((1..=path.n()).map(|i| format!("X{i}")));
    w.write_record(&header)?;
    for (t, row) in path.times.iter().zip(&path.caps) {
        let mut rec = vec![format!("{t:e}")];
        rec.extend(row.iter().map(|x| format!("{x:e}")));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_covariance_csv<W: Write>(writer: W, path: &MarketPath) -> Result<()> {
    let n = path.n();
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string()];
    for i in 1..=n {
        header.extend((1..=n).map(|j| format!("s_{i}_{j}")));
    }
    w.write_record(&header)?;
    for (t, s) in path.times.iter().zip(&path.sigma) {
        let mut rec = vec![format!("{t:e}")];
        for i in 0..n {
            rec.extend((0..n).map(|j| format!("{:e}", s[(i, j)])));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
