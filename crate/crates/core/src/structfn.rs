//! Moment tables X_p(tau) = <|r(t, tau)|^p> and log-log scaling fits.
//!
//! Each table cell is an arithmetic mean accumulated in a fixed left-to-right
//! chunked order, so a table is bit-identical no matter how the grid cells
//! are distributed over threads.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::ols;
use crate::ingest::{compute_returns, PriceSeries, ReturnSeries};

/// Tolerance when matching a requested p or tau against grid values.
pub const GRID_EPS: f64 = 1e-9;

const SUM_CHUNK: usize = 1024;

/// Moment orders and lags over which a table is evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentGrid {
    p_grid: Vec<f64>,
    tau_grid: Vec<usize>,
}

impl MomentGrid {
    pub fn new(p_grid: Vec<f64>, tau_grid: Vec<usize>) -> Result<Self> {
        if p_grid.is_empty() || tau_grid.is_empty() {
            return Err(Error::InvalidParameter("empty moment grid".into()));
        }
        if p_grid.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::InvalidParameter(
                "p grid must contain positive finite values".into(),
            ));
        }
        if p_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "p grid must be strictly increasing".into(),
            ));
        }
        if tau_grid[0] < 1 || tau_grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "tau grid must be strictly increasing and >= 1".into(),
            ));
        }
        Ok(MomentGrid { p_grid, tau_grid })
    }

    /// Regular p grid `start, start + step, ..., stop` (inclusive within fp tolerance).
    pub fn regular_p(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
        if !(start > 0.0 && stop >= start && step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "bad p grid spec: start={start}, stop={stop}, step={step}"
            )));
        }
        let count = ((stop - start) / step + 0.5).floor() as usize + 1;
        Ok((0..count).map(|i| start + i as f64 * step).collect())
    }

    /// Powers of two `1, 2, 4, ..., <= max`.
    pub fn powers_of_two(max: usize) -> Vec<usize> {
        let mut taus = Vec::new();
        let mut t = 1usize;
        while t <= max {
            taus.push(t);
            if t > max / 2 {
                break;
            }
            t *= 2;
        }
        taus
    }

    pub fn p_grid(&self) -> &[f64] {
        &self.p_grid
    }

    pub fn tau_grid(&self) -> &[usize] {
        &self.tau_grid
    }

    pub fn p_index(&self, p: f64) -> Option<usize> {
        self.p_grid.iter().position(|&g| (g - p).abs() <= GRID_EPS)
    }

    pub fn tau_index(&self, tau: usize) -> Option<usize> {
        self.tau_grid.iter().position(|&g| g == tau)
    }

    pub fn max_tau(&self) -> usize {
        *self.tau_grid.last().expect("grid is non-empty")
    }
}

/// X_p(tau) over a full moment grid, with per-lag sample counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructureFunctionTable {
    pub grid: MomentGrid,
    /// Indexed `moments[p_index][tau_index]`.
    pub moments: Vec<Vec<f64>>,
    /// `counts[tau_index]` = number of overlapping returns averaged at that lag.
    pub counts: Vec<usize>,
    pub source_label: String,
    /// Return sampling mode; always "full" (stride-1 overlapping windows).
    pub overlap: String,
}

impl StructureFunctionTable {
    pub fn moment(&self, p_index: usize, tau_index: usize) -> f64 {
        self.moments[p_index][tau_index]
    }

    pub fn p_index(&self, p: f64) -> Result<usize> {
        self.grid.p_index(p).ok_or(Error::GridMismatch {
            axis: "p",
            value: p,
        })
    }

    pub fn tau_index(&self, tau: usize) -> Result<usize> {
        self.grid.tau_index(tau).ok_or(Error::GridMismatch {
            axis: "tau",
            value: tau as f64,
        })
    }

    /// Indices of grid lags inside `[tau_min, tau_max]`, at least `need` of them.
    pub fn tau_indices_in(&self, tau_range: (usize, usize), need: usize) -> Result<Vec<usize>> {
        let idx: Vec<usize> = self
            .grid
            .tau_grid()
            .iter()
            .enumerate()
            .filter(|(_, &t)| t >= tau_range.0 && t <= tau_range.1)
            .map(|(i, _)| i)
            .collect();
        if idx.len() < need {
            return Err(Error::DegenerateRange {
                got: idx.len(),
                need,
            });
        }
        Ok(idx)
    }

    /// Analytic table with `moments[p][tau] = tau^xi(p)` exactly; test oracle
    /// for every estimator downstream of the moment stage.
    pub fn from_scaling_law(grid: MomentGrid, xi: impl Fn(f64) -> f64) -> Self {
        let moments = grid
            .p_grid()
            .iter()
            .map(|&p| {
                grid.tau_grid()
                    .iter()
                    .map(|&t| (t as f64).powf(xi(p)))
                    .collect()
            })
            .collect();
        let counts = vec![0; grid.tau_grid().len()];
        StructureFunctionTable {
            grid,
            moments,
            counts,
            source_label: "analytic".into(),
            overlap: "full".into(),
        }
    }

    /// CSV with rows = tau and columns = p; header row carries the p values.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::new();
        out.push_str("tau");
        for p in self.grid.p_grid() {
            let _ = write!(out, ",{p}");
        }
        out.push('\n');
        for (ti, tau) in self.grid.tau_grid().iter().enumerate() {
            let _ = write!(out, "{tau}");
            for pi in 0..self.grid.p_grid().len() {
                let _ = write!(out, ",{}", self.moments[pi][ti]);
            }
            out.push('\n');
        }
        out
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            reason: e.to_string(),
        })
    }
}

/// Per-p scaling exponents fitted over a declared tau range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub p_grid: Vec<f64>,
    /// Fitted exponent xi(p), the slope of ln X_p(tau) vs ln tau.
    pub xi: Vec<f64>,
    pub stderr: Vec<f64>,
    pub r2: Vec<f64>,
    /// Grid lags actually fitted (first, last).
    pub tau_range: (usize, usize),
}

/// Mean of |v|^p over a fixed chunked summation order.
///
/// Chunk partials and the partial-of-partials are both accumulated left to
/// right, so the result is independent of any outer parallel split.
fn chunked_mean_abs_pow(values: &[f64], p: f64) -> f64 {
    let mut total = 0.0f64;
    for chunk in values.chunks(SUM_CHUNK) {
        let mut part = 0.0f64;
        for &v in chunk {
            part += v.abs().powf(p);
        }
        total += part;
    }
    total / values.len() as f64
}

/// X_p for one return series: the arithmetic mean of |r|^p.
pub fn structure_function(returns: &ReturnSeries, p: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(p > 0.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "moment order p must be positive and finite, got {p}"
        )));
    }
    Ok(chunked_mean_abs_pow(returns.values(), p))
}

/// Evaluate the full moment table.
///
/// Lags are processed in parallel; each cell's reduction order is fixed, so
/// the table is identical across worker counts.
pub fn build_table(series: &PriceSeries, grid: &MomentGrid) -> Result<StructureFunctionTable> {
    let limit = series.len() / 4;
    let max_tau = grid.max_tau();
    if max_tau > limit {
        return Err(Error::GridTooLarge {
            tau_max: max_tau,
            limit,
        });
    }

    let per_tau: Vec<(usize, Vec<f64>)> = grid
        .tau_grid()
        .par_iter()
        .map(|&tau| {
            let returns = compute_returns(series, tau).expect("tau <= len/4 < len");
            let col: Vec<f64> = grid
                .p_grid()
                .iter()
                .map(|&p| chunked_mean_abs_pow(returns.values(), p))
                .collect();
            (returns.len(), col)
        })
        .collect();

    let n_p = grid.p_grid().len();
    let n_tau = grid.tau_grid().len();
    let mut moments = vec![vec![0.0; n_tau]; n_p];
    let mut counts = vec![0; n_tau];
    for (ti, (count, col)) in per_tau.into_iter().enumerate() {
        counts[ti] = count;
        for (pi, m) in col.into_iter().enumerate() {
            moments[pi][ti] = m;
        }
    }

    Ok(StructureFunctionTable {
        grid: grid.clone(),
        moments,
        counts,
        source_label: series.label().to_string(),
        overlap: "full".into(),
    })
}

/// OLS fit of ln X_p(tau) against ln tau for every p, over `tau_range`.
pub fn fit_xi(table: &StructureFunctionTable, tau_range: (usize, usize)) -> Result<ScalingFit> {
    let tau_idx = table.tau_indices_in(tau_range, 3)?;

    for (pi, &p) in table.grid.p_grid().iter().enumerate() {
        for &ti in &tau_idx {
            if table.moments[pi][ti] <= 0.0 {
                return Err(Error::NonpositiveMoment {
                    p,
                    tau: table.grid.tau_grid()[ti],
                });
            }
        }
    }

    let log_tau: Vec<f64> = tau_idx
        .iter()
        .map(|&ti| (table.grid.tau_grid()[ti] as f64).ln())
        .collect();

    let mut xi = Vec::with_capacity(table.grid.p_grid().len());
    let mut stderr = Vec::with_capacity(xi.capacity());
    let mut r2 = Vec::with_capacity(xi.capacity());
    for pi in 0..table.grid.p_grid().len() {
        let log_m: Vec<f64> = tau_idx.iter().map(|&ti| table.moments[pi][ti].ln()).collect();
        let fit = ols(&log_tau, &log_m);
        xi.push(fit.slope);
        stderr.push(fit.stderr_slope);
        r2.push(fit.r2);
    }

    let fitted = (
        table.grid.tau_grid()[tau_idx[0]],
        table.grid.tau_grid()[*tau_idx.last().unwrap()],
    );
    Ok(ScalingFit {
        p_grid: table.grid.p_grid().to_vec(),
        xi,
        stderr,
        r2,
        tau_range: fitted,
    })
}
