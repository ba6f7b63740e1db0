//! Loading, validating, and differencing scalar time series.
//!
//! A `PriceSeries` is an ordered run of finite samples on an implicitly
//! uniform index: sample `i` sits at time `start_index + i`, and every lag
//! `tau` is a sample count. Returns are plain differences
//! `r(t, tau) = s(t + tau) - s(t)`, fully overlapping (stride 1).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ordered, finite scalar samples with a uniform time index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    values: Vec<f64>,
    start_index: i64,
    label: String,
}

impl PriceSeries {
    /// Build a series, enforcing finiteness and a minimum length of 2.
    pub fn new(values: Vec<f64>, start_index: i64, label: impl Into<String>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::TooShort {
                got: values.len(),
                need: 2,
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Parse {
                line: pos + 1,
                reason: format!("non-finite sample {}", values[pos]),
            });
        }
        Ok(PriceSeries {
            values,
            start_index,
            label: label.into(),
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn start_index(&self) -> i64 {
        self.start_index
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Sub-series over `[start, end)`, keeping the absolute time origin.
    pub fn window(&self, start: usize, end: usize) -> Result<PriceSeries> {
        if start >= end || end > self.values.len() {
            return Err(Error::InvalidParameter(format!(
                "window [{start}, {end}) outside series of length {}",
                self.values.len()
            )));
        }
        PriceSeries::new(
            self.values[start..end].to_vec(),
            self.start_index + start as i64,
            format!("{}[{start}..{end})", self.label),
        )
    }

    /// Natural-log transform of the prices; all samples must be positive.
    pub fn log_prices(&self) -> Result<PriceSeries> {
        if let Some(pos) = self.values.iter().position(|&v| v <= 0.0) {
            return Err(Error::LogNonpositive {
                index: pos,
                value: self.values[pos],
            });
        }
        PriceSeries::new(
            self.values.iter().map(|v| v.ln()).collect(),
            self.start_index,
            self.label.clone(),
        )
    }

    /// One value per line, full round-trip precision.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::with_capacity(self.values.len() * 12);
        for v in &self.values {
            let _ = writeln!(out, "{v}");
        }
        out
    }
}

/// Differences of a `PriceSeries` at a fixed lag.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries {
    tau: usize,
    values: Vec<f64>,
    source_label: String,
}

impl ReturnSeries {
    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn source_label(&self) -> &str {
        &self.source_label
    }

    #[cfg(test)]
    pub(crate) fn for_test(tau: usize, values: Vec<f64>) -> Self {
        ReturnSeries {
            tau,
            values,
            source_label: "test".into(),
        }
    }
}

/// r(t, tau) = s(t + tau) - s(t) for every t; output length = len - tau.
pub fn compute_returns(series: &PriceSeries, tau: usize) -> Result<ReturnSeries> {
    let n = series.len();
    if tau == 0 || tau > n - 1 {
        return Err(Error::TauOutOfRange { tau, max: n - 1 });
    }
    let s = series.values();
    let values = (0..n - tau).map(|i| s[i + tau] - s[i]).collect();
    Ok(ReturnSeries {
        tau,
        values,
        source_label: series.label().to_string(),
    })
}

/// Which column of a delimited file holds the values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnSpec {
    Index(usize),
    Name(String),
}

impl std::str::FromStr for ColumnSpec {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.parse::<usize>() {
            Ok(i) => ColumnSpec::Index(i),
            Err(_) => ColumnSpec::Name(s.to_string()),
        })
    }
}

impl std::fmt::Display for ColumnSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ColumnSpec::Index(i) => write!(f, "{i}"),
            ColumnSpec::Name(n) => write!(f, "{n}"),
        }
    }
}

/// Load a price series from comma- or tab-separated text.
///
/// The delimiter is sniffed from the first line (tab wins if present). When
/// the column is selected by name the first line must be a header; when
/// selected by index, a first line whose cell does not parse as a number is
/// treated as a header. Malformed or missing values in any data row are hard
/// errors, never skipped.
pub fn load_price_series(path: &Path, column: &ColumnSpec) -> Result<PriceSeries> {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::FileNotFound(path.display().to_string()))
        }
        Err(e) => return Err(Error::Io(e)),
    };
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string());
    parse_price_series(&text, column, label)
}

/// Parse delimited text in memory; see [`load_price_series`].
pub fn parse_price_series(
    text: &str,
    column: &ColumnSpec,
    label: impl Into<String>,
) -> Result<PriceSeries> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty());

    let (first_no, first) = lines.next().ok_or(Error::TooShort { got: 0, need: 2 })?;
    let delim = if first.contains('\t') { '\t' } else { ',' };

    let mut values = Vec::new();
    let col_index;
    match column {
        ColumnSpec::Name(name) => {
            let header: Vec<&str> = first.split(delim).map(str::trim).collect();
            col_index = header
                .iter()
                .position(|h| *h == name)
                .ok_or_else(|| Error::Parse {
                    line: first_no + 1,
                    reason: format!("column {name:?} not in header {header:?}"),
                })?;
        }
        ColumnSpec::Index(idx) => {
            col_index = *idx;
            // A non-numeric first cell at this index means a header row.
            match cell(first, delim, col_index) {
                Some(c) if c.parse::<f64>().is_ok() => {
                    values.push(parse_cell(first, delim, col_index, first_no + 1)?);
                }
                _ => {}
            }
        }
    }

    for (no, line) in lines {
        values.push(parse_cell(line, delim, col_index, no + 1)?);
    }

    if values.len() < 2 {
        return Err(Error::TooShort {
            got: values.len(),
            need: 2,
        });
    }
    PriceSeries::new(values, 0, label)
}

fn cell(line: &str, delim: char, index: usize) -> Option<&str> {
    line.split(delim).nth(index).map(str::trim)
}

fn parse_cell(line: &str, delim: char, index: usize, line_no: usize) -> Result<f64> {
    let raw = cell(line, delim, index).ok_or_else(|| Error::Parse {
        line: line_no,
        reason: format!("missing column {index}"),
    })?;
    let v: f64 = raw.parse().map_err(|_| Error::Parse {
        line: line_no,
        reason: format!("cannot parse {raw:?} as a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line: line_no,
            reason: format!("non-finite value {raw:?}"),
        });
    }
    Ok(v)
}
