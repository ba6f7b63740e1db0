//! Flatness diagnostics, h0 and C estimation, and the assembled pipeline.
//!
//! The limiting moment ratio is never computed directly from finite orders.
//! Instead, the ratio of two finite-order structure functions at lags tau and
//! tau0 isolates it through the weight `Gamma(p, q) = (1-beta^p)/(1-beta^q)`:
//!
//! `F(tau, tau0) = [log2(X_p(tau)/X_p(tau0)) - Gamma * log2(X_q(tau)/X_q(tau0))] / (p - q Gamma)`
//!
//! Under the scaling model `xi(p) = h0 p + C (1 - beta^p)` this equals
//! `h0 * log2(tau/tau0)` for every (p, q): flat in tau exactly when h0 = 0.
//! With h0 pinned, C is the average of `(xi(p) - h0 p) / (1 - beta^p)`.

use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::AnalysisConfig;
use crate::error::{Error, Result};
use crate::fit::ols;
use crate::gess::{build_delta_rho_sequence, estimate_beta, BetaEstimate, DeltaRhoSequence};
use crate::ingest::PriceSeries;
use crate::structfn::{build_table, fit_xi, ScalingFit, StructureFunctionTable};

/// |p - q Gamma| below this counts as a vanishing denominator.
const F_DENOM_EPS: f64 = 1e-9;

/// Gamma(p, q) = (1 - beta^p) / (1 - beta^q).
///
/// Preconditions (asserted): beta in (0, 1), p > 0, q > 0; the denominator is
/// then strictly positive.
pub fn gamma(beta: f64, p: f64, q: f64) -> f64 {
    assert!(beta > 0.0 && beta < 1.0, "beta {beta} outside (0, 1)");
    assert!(p > 0.0 && q > 0.0, "moment orders must be positive");
    (1.0 - beta.powf(p)) / (1.0 - beta.powf(q))
}

/// One flatness sample F_{p,q}(tau, tau0).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlatnessValue {
    pub p: f64,
    pub q: f64,
    pub tau: usize,
    pub f: f64,
}

/// F values over the (p, q, tau) cross product plus the flatness verdict.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlatnessReport {
    pub tau0: usize,
    pub tau_range: (usize, usize),
    pub threshold: f64,
    pub taus: Vec<usize>,
    pub values: Vec<FlatnessValue>,
    pub max_abs_f: f64,
    pub flat: bool,
    /// (p, q) pairs dropped for a vanishing denominator (p = q included).
    pub skipped_pairs: usize,
}

/// F_{p,q}(tau, tau0) from table moments; zero exactly at tau = tau0.
pub fn f_pq(
    table: &StructureFunctionTable,
    beta: f64,
    p: f64,
    q: f64,
    tau: usize,
    tau0: usize,
) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BetaOutOfRange(beta));
    }
    let pi = table.p_index(p)?;
    let qi = table.p_index(q)?;
    let ti = table.tau_index(tau)?;
    let t0 = table.tau_index(tau0)?;

    for (idx, ord) in [(pi, p), (qi, q)] {
        for t in [ti, t0] {
            if table.moment(idx, t) <= 0.0 {
                return Err(Error::NonpositiveMoment {
                    p: ord,
                    tau: table.grid.tau_grid()[t],
                });
            }
        }
    }

    let g = gamma(beta, p, q);
    let denom = p - q * g;
    if denom.abs() < F_DENOM_EPS {
        return Err(Error::DegenerateDenominator(format!(
            "p - q Gamma(p, q) = {denom} for p={p}, q={q}, beta={beta}"
        )));
    }

    let ratio_p = (table.moment(pi, ti) / table.moment(pi, t0)).log2();
    let ratio_q = (table.moment(qi, ti) / table.moment(qi, t0)).log2();
    Ok((ratio_p - g * ratio_q) / denom)
}

/// Evaluate F over `p_set x q_set` (p = q and vanishing denominators skipped)
/// at every grid lag in `tau_range`, and compare max |F| to the threshold.
pub fn flatness_report(
    table: &StructureFunctionTable,
    beta: f64,
    p_set: &[f64],
    q_set: &[f64],
    tau_range: (usize, usize),
    tau0: usize,
    threshold: f64,
) -> Result<FlatnessReport> {
    if p_set.is_empty() || q_set.is_empty() {
        return Err(Error::InvalidParameter(
            "flatness p_set and q_set must be non-empty".into(),
        ));
    }
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BetaOutOfRange(beta));
    }
    if tau0 < tau_range.0 || tau0 > tau_range.1 {
        return Err(Error::InvalidParameter(format!(
            "tau0 = {tau0} outside the flatness range [{}, {}]",
            tau_range.0, tau_range.1
        )));
    }
    table.tau_index(tau0)?;
    let tau_idx = table.tau_indices_in(tau_range, 1)?;
    let taus: Vec<usize> = tau_idx
        .iter()
        .map(|&ti| table.grid.tau_grid()[ti])
        .collect();

    let mut values = Vec::new();
    let mut skipped = 0usize;
    for &p in p_set {
        for &q in q_set {
            if (p - q).abs() <= crate::structfn::GRID_EPS {
                skipped += 1;
                continue;
            }
            // Probe the denominator once per pair.
            match f_pq(table, beta, p, q, tau0, tau0) {
                Err(Error::DegenerateDenominator(_)) => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(e),
                Ok(_) => {}
            }
            for &tau in &taus {
                values.push(FlatnessValue {
                    p,
                    q,
                    tau,
                    f: f_pq(table, beta, p, q, tau, tau0)?,
                });
            }
        }
    }

    if values.is_empty() {
        return Err(Error::AllPairsDegenerate);
    }

    let max_abs_f = values.iter().map(|v| v.f.abs()).fold(0.0, f64::max);
    Ok(FlatnessReport {
        tau0,
        tau_range,
        threshold,
        taus,
        values,
        max_abs_f,
        flat: max_abs_f <= threshold,
        skipped_pairs: skipped,
    })
}

/// Slope of the (p, q)-averaged F against log2(tau); equals h0 under the
/// scaling model, and ~0 for a flat report.
pub fn estimate_h0(report: &FlatnessReport) -> Result<f64> {
    if report.taus.len() < 3 {
        return Err(Error::DegenerateRange {
            got: report.taus.len(),
            need: 3,
        });
    }
    let mut xs = Vec::with_capacity(report.taus.len());
    let mut ys = Vec::with_capacity(report.taus.len());
    for &tau in &report.taus {
        let mut sum = 0.0;
        let mut count = 0usize;
        for v in report.values.iter().filter(|v| v.tau == tau) {
            sum += v.f;
            count += 1;
        }
        if count == 0 {
            continue;
        }
        xs.push((tau as f64).log2());
        ys.push(sum / count as f64);
    }
    if xs.len() < 3 {
        return Err(Error::DegenerateRange {
            got: xs.len(),
            need: 3,
        });
    }
    Ok(ols(&xs, &ys).slope)
}

/// Average of (xi(p) - h0 p) / (1 - beta^p) over grid orders in
/// `[p_min, p_max]`, with the spread of the per-p values.
pub fn estimate_c(
    xi_fit: &ScalingFit,
    beta: f64,
    h0: f64,
    p_min: f64,
    p_max: f64,
) -> Result<(f64, f64)> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BetaOutOfRange(beta));
    }
    let c_values: Vec<f64> = xi_fit
        .p_grid
        .iter()
        .zip(xi_fit.xi.iter())
        .filter(|(&p, _)| p >= p_min - 1e-9 && p <= p_max + 1e-9)
        .map(|(&p, &xi)| (xi - h0 * p) / (1.0 - beta.powf(p)))
        .collect();
    if c_values.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "no fitted orders inside the C averaging range [{p_min}, {p_max}]"
        )));
    }
    let n = c_values.len() as f64;
    let mean = c_values.iter().sum::<f64>() / n;
    let var = c_values.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / n;
    Ok((mean, var.sqrt()))
}

/// A pipeline stage that failed after the beta estimate was secured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub stage: String,
    pub message: String,
}

/// Everything a report needs to be reproduced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub package_version: String,
    pub label: String,
    pub series_len: usize,
    pub series_start_index: i64,
    /// Return sampling mode; stride-1 overlapping windows throughout.
    pub overlap: String,
    pub log_prices: bool,
    pub input_sha256: Option<String>,
    pub config: AnalysisConfig,
    pub config_sha256: String,
}

/// Caller-supplied facts about where the series came from.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InputMeta {
    pub input_sha256: Option<String>,
    pub log_prices: bool,
}

/// The headline output: (beta, C, h0) plus every diagnostic that backs them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HierarchyEstimate {
    pub beta: BetaEstimate,
    /// Slope of mean F against log2(tau); absent when the flatness stage
    /// could not run.
    pub h0: Option<f64>,
    /// Only emitted when the flatness verdict holds (C presumes h0 ~ 0).
    pub c: Option<f64>,
    pub c_spread: Option<f64>,
    pub flatness: Option<FlatnessReport>,
    pub xi_fit: ScalingFit,
    pub delta_rho: DeltaRhoSequence,
    pub provenance: Provenance,
    /// Post-beta stages that failed; beta itself is always present.
    pub stage_failures: Vec<StageFailure>,
}

pub const SCHEMA_VERSION: u32 = 1;

/// Run the full pipeline on one series.
///
/// Errors up to and including the beta estimate abort with a stage-tagged
/// error. Failures in the flatness / h0 / C stages are recorded as markers on
/// the estimate instead, so a windowed scan can still report beta when the
/// invariant check is inconclusive for one window.
pub fn analyze(
    series: &PriceSeries,
    config: &AnalysisConfig,
    meta: InputMeta,
) -> Result<HierarchyEstimate> {
    config
        .validate(series.len())
        .map_err(|e| e.at_stage("config"))?;
    let grid = config
        .moment_grid(series.len())
        .map_err(|e| e.at_stage("config"))?;
    let table = build_table(series, &grid).map_err(|e| e.at_stage("table"))?;
    analyze_table(series, &table, config, meta)
}

/// Pipeline stages downstream of the moment table.
pub fn analyze_table(
    series: &PriceSeries,
    table: &StructureFunctionTable,
    config: &AnalysisConfig,
    meta: InputMeta,
) -> Result<HierarchyEstimate> {
    let xi_fit = fit_xi(table, config.fit_range()).map_err(|e| e.at_stage("xi"))?;
    let delta_rho = build_delta_rho_sequence(
        table,
        config.n,
        config.q,
        config.gess_p_start,
        config.gess_p_end,
        config.delta_p,
        config.fit_range(),
    )
    .map_err(|e| e.at_stage("gess"))?;
    let beta_est = estimate_beta(&delta_rho).map_err(|e| e.at_stage("gess"))?;

    let mut stage_failures = Vec::new();
    let mut flatness = None;
    let mut h0 = None;
    let mut c = None;
    let mut c_spread = None;

    if beta_est.beta > 0.0 && beta_est.beta < 1.0 {
        match flatness_report(
            table,
            beta_est.beta,
            &config.flat_p_set,
            &config.flat_q_set,
            config.fit_range(),
            config.tau0,
            config.flat_threshold,
        ) {
            Ok(report) => {
                match estimate_h0(&report) {
                    Ok(v) => h0 = Some(v),
                    Err(e) => stage_failures.push(StageFailure {
                        stage: "h0".into(),
                        message: e.to_string(),
                    }),
                }
                if report.flat {
                    if let Some(h0v) = h0 {
                        match estimate_c(
                            &xi_fit,
                            beta_est.beta,
                            h0v,
                            config.c_p_min,
                            config.c_p_max,
                        ) {
                            Ok((cv, sv)) => {
                                c = Some(cv);
                                c_spread = Some(sv);
                            }
                            Err(e) => stage_failures.push(StageFailure {
                                stage: "c".into(),
                                message: e.to_string(),
                            }),
                        }
                    }
                }
                flatness = Some(report);
            }
            Err(e) => stage_failures.push(StageFailure {
                stage: "flatness".into(),
                message: e.to_string(),
            }),
        }
    } else {
        stage_failures.push(StageFailure {
            stage: "flatness".into(),
            message: format!(
                "beta estimate {} is at or beyond the monofractal boundary; \
                 the moment-ratio weights are undefined",
                beta_est.beta
            ),
        });
    }

    let provenance = Provenance {
        schema_version: SCHEMA_VERSION,
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        label: series.label().to_string(),
        series_len: series.len(),
        series_start_index: series.start_index(),
        overlap: "full".into(),
        log_prices: meta.log_prices,
        input_sha256: meta.input_sha256,
        config: config.clone(),
        config_sha256: config.sha256_hex(),
    };

    Ok(HierarchyEstimate {
        beta: beta_est,
        h0,
        c,
        c_spread,
        flatness,
        xi_fit,
        delta_rho,
        provenance,
        stage_failures,
    })
}

/// One window of a windowed scan.
#[derive(Debug)]
pub struct WindowOutcome {
    pub start: usize,
    pub end: usize,
    pub result: Result<HierarchyEstimate>,
}

/// Split `len` samples into `count` near-equal contiguous windows.
pub fn equal_windows(len: usize, count: usize) -> Result<Vec<Range<usize>>> {
    if count == 0 || count > len {
        return Err(Error::InvalidParameter(format!(
            "cannot split {len} samples into {count} windows"
        )));
    }
    Ok((0..count)
        .map(|i| (i * len / count)..((i + 1) * len / count))
        .collect())
}

/// Run `analyze` independently on each window; failures stay per-window.
pub fn windowed_analyze(
    series: &PriceSeries,
    windows: &[Range<usize>],
    config: &AnalysisConfig,
    meta: &InputMeta,
) -> Vec<WindowOutcome> {
    windows
        .par_iter()
        .map(|w| {
            let result = series
                .window(w.start, w.end)
                .and_then(|sub| analyze(&sub, config, meta.clone()));
            WindowOutcome {
                start: w.start,
                end: w.end,
                result,
            }
        })
        .collect()
}
