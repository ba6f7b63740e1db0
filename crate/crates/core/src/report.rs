//! Stable serializations of analysis results: the versioned JSON report,
//! the one-line CSV summary, and the plot-data exports.
//!
//! All output is deterministic: struct field order is fixed, floats are
//! printed shortest-round-trip, lines end in LF.

use std::fmt::Write as _;

use crate::gess::DeltaRhoSequence;
use crate::hierarchy::{FlatnessReport, HierarchyEstimate, WindowOutcome};
use crate::structfn::ScalingFit;

/// The full estimate as pretty-printed JSON (schema version inside).
pub fn report_json(estimate: &HierarchyEstimate) -> String {
    let mut s = serde_json::to_string_pretty(estimate).expect("estimate serializes");
    s.push('\n');
    s
}

pub fn summary_csv_header() -> &'static str {
    "label,beta,beta_stderr,h0,C,C_spread,flat,max_abs_f,config_sha256\n"
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Quote a CSV field when it contains a delimiter, quote, or newline.
fn csv_field(raw: &str) -> String {
    if raw.contains([',', '"', '\n']) {
        format!("\"{}\"", raw.replace('"', "\"\""))
    } else {
        raw.to_string()
    }
}

/// One flat summary row for an estimate.
pub fn summary_csv_row(estimate: &HierarchyEstimate) -> String {
    let flat = estimate
        .flatness
        .as_ref()
        .map(|f| f.flat.to_string())
        .unwrap_or_default();
    let max_abs_f = opt(estimate.flatness.as_ref().map(|f| f.max_abs_f));
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        csv_field(&estimate.provenance.label),
        estimate.beta.beta,
        estimate.beta.stderr_beta,
        opt(estimate.h0),
        opt(estimate.c),
        opt(estimate.c_spread),
        flat,
        max_abs_f,
        estimate.provenance.config_sha256,
    )
}

/// xi(p) with fit diagnostics, one row per order.
pub fn xi_vs_p_csv(fit: &ScalingFit) -> String {
    let mut out = String::from("p,xi,stderr,r2\n");
    for i in 0..fit.p_grid.len() {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            fit.p_grid[i], fit.xi[i], fit.stderr[i], fit.r2[i]
        );
    }
    out
}

/// The delta-rho scatter as two columns, one pair per row.
pub fn scatter_csv(sequence: &DeltaRhoSequence) -> String {
    let mut out = String::from("delta_rho,delta_rho_next\n");
    for pair in &sequence.pairs {
        let _ = writeln!(out, "{},{}", pair.current, pair.next);
    }
    out
}

/// F values in long form for external plotting.
pub fn f_vs_log2tau_csv(report: &FlatnessReport) -> String {
    let mut out = String::from("log2_tau,p,q,f\n");
    for v in &report.values {
        let _ = writeln!(out, "{},{},{},{}", (v.tau as f64).log2(), v.p, v.q, v.f);
    }
    out
}

pub fn windows_csv_header() -> &'static str {
    "window_start,window_end,beta,beta_stderr,h0,C,C_spread,flat,max_abs_f,status\n"
}

/// One row per window; errors land in the status column, values stay empty.
pub fn windows_csv_row(outcome: &WindowOutcome) -> String {
    match &outcome.result {
        Ok(est) => {
            let flat = est
                .flatness
                .as_ref()
                .map(|f| f.flat.to_string())
                .unwrap_or_default();
            let max_abs_f = opt(est.flatness.as_ref().map(|f| f.max_abs_f));
            let status = if est.stage_failures.is_empty() {
                "ok".to_string()
            } else {
                est.stage_failures
                    .iter()
                    .map(|f| format!("{} failed: {}", f.stage, f.message))
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                outcome.start,
                outcome.end,
                est.beta.beta,
                est.beta.stderr_beta,
                opt(est.h0),
                opt(est.c),
                opt(est.c_spread),
                flat,
                max_abs_f,
                csv_field(&status),
            )
        }
        Err(e) => format!(
            "{},{},,,,,,,,{}\n",
            outcome.start,
            outcome.end,
            csv_field(&format!("error: {e}"))
        ),
    }
}
