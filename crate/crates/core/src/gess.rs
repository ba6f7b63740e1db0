//! Generalized extended self-similarity: relative exponents rho_n(p, q),
//! the delta-rho recursion, and the beta estimator built on its slope.
//!
//! The moment ratio X_p / X_n^(p/n) regressed against X_q / X_n^(q/n) in
//! log-log space yields rho_n(p, q). Under a log-Poisson hierarchy rho is a
//! closed function of beta alone, and consecutive differences of rho along p
//! satisfy an affine recursion whose slope is beta^delta_p. That slope is
//! what the scatter fit estimates; beta follows by the delta_p-th root.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::ols;
use crate::structfn::StructureFunctionTable;

/// Abscissa spread below this fraction of its magnitude means the normalized
/// structure functions carry no p-dependence: a monofractal series.
const MONOFRACTAL_REL_SPREAD: f64 = 1e-6;

/// The abscissa must scale significantly with ln tau for the GESS regression
/// to carry information; below this t statistic the spread is sampling noise
/// and the series is reported as monofractal at this resolution.
const MONOFRACTAL_T_STAT: f64 = 5.0;

/// Denominators below this are treated as vanishing in the closed forms.
const DENOM_EPS: f64 = 1e-12;

/// Fitted GESS exponent for one (n, p, q) triple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RhoEstimate {
    pub n: f64,
    pub q: f64,
    pub p: f64,
    pub rho: f64,
    pub stderr: f64,
    pub r2: f64,
}

/// One scatter point: delta-rho at p against delta-rho at p + delta_p.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaRhoPair {
    pub p: f64,
    pub current: f64,
    pub next: f64,
}

/// The full delta-rho scatter for fixed (n, q).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaRhoSequence {
    pub n: f64,
    pub q: f64,
    pub delta_p: f64,
    pub p_start: f64,
    pub pairs: Vec<DeltaRhoPair>,
}

/// Beta recovered from the scatter slope, with the intercept consistency check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaEstimate {
    /// Fitted scatter slope; equals beta^delta_p under the hierarchy.
    pub slope: f64,
    pub intercept: f64,
    pub beta: f64,
    /// Delta-method propagation of the slope standard error.
    pub stderr_beta: f64,
    pub n: f64,
    pub q: f64,
    pub delta_p: f64,
    pub r2: f64,
    /// Intercept implied by the fitted beta; reported as a diagnostic.
    pub predicted_intercept: f64,
    /// Set when the slope exceeds 1, i.e. beta leaves (0, 1].
    pub degenerate: bool,
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::BetaOutOfRange(beta));
    }
    Ok(())
}

fn rho_denominator(beta: f64, n: f64, q: f64) -> Result<f64> {
    let d = n * (1.0 - beta.powf(q)) - q * (1.0 - beta.powf(n));
    if d.abs() < DENOM_EPS {
        return Err(Error::DegenerateDenominator(format!(
            "n(1-beta^q) - q(1-beta^n) vanishes for beta={beta}, n={n}, q={q}"
        )));
    }
    Ok(d)
}

/// Closed form of rho_n(p, q) under the hierarchy with parameter beta.
pub fn theoretical_rho(beta: f64, n: f64, p: f64, q: f64) -> Result<f64> {
    check_beta(beta)?;
    let d = rho_denominator(beta, n, q)?;
    Ok((n * (1.0 - beta.powf(p)) - p * (1.0 - beta.powf(n))) / d)
}

/// One step of the affine delta-rho recursion:
/// `beta^dp * current - dp (1-beta^n)(1-beta^dp) / [n(1-beta^q) - q(1-beta^n)]`.
pub fn theoretical_delta_rho_next(
    beta: f64,
    n: f64,
    q: f64,
    delta_p: f64,
    delta_rho_current: f64,
) -> Result<f64> {
    check_beta(beta)?;
    let d = rho_denominator(beta, n, q)?;
    let step = beta.powf(delta_p);
    Ok(step * delta_rho_current - delta_p * (1.0 - beta.powf(n)) * (1.0 - step) / d)
}

/// Intercept of the recursion implied by a given beta.
pub fn predicted_intercept(beta: f64, n: f64, q: f64, delta_p: f64) -> Result<f64> {
    let d = rho_denominator(beta, n, q)?;
    Ok(-delta_p * (1.0 - beta.powf(n)) * (1.0 - beta.powf(delta_p)) / d)
}

/// GESS coordinates at one lag: (abscissa for order q, ordinate for order p),
/// both normalized by the reference order n. Also returns the cancellation
/// scale of the abscissa, i.e. the magnitude of the log moments whose
/// difference forms it.
fn gess_coords(
    table: &StructureFunctionTable,
    tau_idx: &[usize],
    pi: usize,
    qi: usize,
    ni: usize,
    p: f64,
    q: f64,
    n: f64,
) -> Result<(Vec<f64>, Vec<f64>, f64)> {
    let mut xs = Vec::with_capacity(tau_idx.len());
    let mut ys = Vec::with_capacity(tau_idx.len());
    let mut scale = 0.0f64;
    for &ti in tau_idx {
        for (idx, ord) in [(pi, p), (qi, q), (ni, n)] {
            if table.moment(idx, ti) <= 0.0 {
                return Err(Error::NonpositiveMoment {
                    p: ord,
                    tau: table.grid.tau_grid()[ti],
                });
            }
        }
        let ln_n = table.moment(ni, ti).ln();
        let ln_q = table.moment(qi, ti).ln();
        ys.push(table.moment(pi, ti).ln() - (p / n) * ln_n);
        xs.push(ln_q - (q / n) * ln_n);
        scale = scale.max(ln_q.abs() + (q / n) * ln_n.abs());
    }
    Ok((xs, ys, scale))
}

/// Degenerate when the abscissa spread is negligible against the size of the
/// log moments it was cancelled from (exactly monofractal tables give a
/// spread at rounding level), or when its trend across lags is statistically
/// indistinguishable from zero (noisy monofractal data).
fn abscissa_is_degenerate(xs: &[f64], log_taus: &[f64], scale: f64) -> bool {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for &x in xs {
        min = min.min(x);
        max = max.max(x);
    }
    if (max - min) <= MONOFRACTAL_REL_SPREAD * scale.max(f64::MIN_POSITIVE) {
        return true;
    }
    let trend = ols(log_taus, xs);
    trend.stderr_slope > 0.0 && trend.slope.abs() < MONOFRACTAL_T_STAT * trend.stderr_slope
}

/// Fit rho_n(p, q) from a moment table over `tau_range`.
///
/// p, q, and n must sit on the table's p grid; moments are never interpolated.
pub fn estimate_rho(
    table: &StructureFunctionTable,
    n: f64,
    p: f64,
    q: f64,
    tau_range: (usize, usize),
) -> Result<RhoEstimate> {
    let pi = table.p_index(p)?;
    let qi = table.p_index(q)?;
    let ni = table.p_index(n)?;
    let tau_idx = table.tau_indices_in(tau_range, 3)?;

    let (xs, ys, scale) = gess_coords(table, &tau_idx, pi, qi, ni, p, q, n)?;
    let log_taus: Vec<f64> = tau_idx
        .iter()
        .map(|&ti| (table.grid.tau_grid()[ti] as f64).ln())
        .collect();
    if abscissa_is_degenerate(&xs, &log_taus, scale) {
        return Err(Error::MonofractalDegenerate);
    }

    let fit = ols(&xs, &ys);
    Ok(RhoEstimate {
        n,
        q,
        p,
        rho: fit.slope,
        stderr: fit.stderr_slope,
        r2: fit.r2,
    })
}

/// Estimate rho at every delta_p-aligned p in `[p_start, p_end + delta_p]`
/// and chain the differences into scatter pairs.
pub fn build_delta_rho_sequence(
    table: &StructureFunctionTable,
    n: f64,
    q: f64,
    p_start: f64,
    p_end: f64,
    delta_p: f64,
    tau_range: (usize, usize),
) -> Result<DeltaRhoSequence> {
    if !(delta_p > 0.0) || !(p_start > 0.0) || p_end < p_start {
        return Err(Error::InvalidParameter(format!(
            "bad delta-rho range: p_start={p_start}, p_end={p_end}, delta_p={delta_p}"
        )));
    }

    // rho at p_start, p_start + dp, ..., p_end, p_end + dp.
    let steps = ((p_end - p_start) / delta_p + 0.5).floor() as usize + 1;
    let ps: Vec<f64> = (0..=steps).map(|i| p_start + i as f64 * delta_p).collect();

    let rhos: Vec<f64> = ps
        .iter()
        .map(|&p| estimate_rho(table, n, p, q, tau_range).map(|r| r.rho))
        .collect::<Result<_>>()?;

    let delta: Vec<f64> = rhos.windows(2).map(|w| w[1] - w[0]).collect();
    let pairs: Vec<DeltaRhoPair> = delta
        .windows(2)
        .enumerate()
        .map(|(i, w)| DeltaRhoPair {
            p: ps[i],
            current: w[0],
            next: w[1],
        })
        .collect();

    if pairs.len() < 3 {
        return Err(Error::InsufficientPoints { got: pairs.len() });
    }

    Ok(DeltaRhoSequence {
        n,
        q,
        delta_p,
        p_start,
        pairs,
    })
}

/// OLS of next vs current delta-rho; slope^(1/delta_p) is the beta estimate.
pub fn estimate_beta(sequence: &DeltaRhoSequence) -> Result<BetaEstimate> {
    if sequence.pairs.len() < 3 {
        return Err(Error::InsufficientPoints {
            got: sequence.pairs.len(),
        });
    }

    let xs: Vec<f64> = sequence.pairs.iter().map(|pr| pr.current).collect();
    let ys: Vec<f64> = sequence.pairs.iter().map(|pr| pr.next).collect();
    let fit = ols(&xs, &ys);

    if fit.slope <= 0.0 {
        return Err(Error::DegenerateSlope { slope: fit.slope });
    }

    let inv_dp = 1.0 / sequence.delta_p;
    let beta = fit.slope.powf(inv_dp);
    let stderr_beta = fit.stderr_slope * inv_dp * fit.slope.powf(inv_dp - 1.0);
    let degenerate = fit.slope > 1.0;

    // Intercept implied by the estimated beta; at the monofractal boundary
    // the closed form degenerates, so fall back to the fitted value.
    let predicted = if beta < 1.0 {
        predicted_intercept(beta, sequence.n, sequence.q, sequence.delta_p)
            .unwrap_or(fit.intercept)
    } else {
        0.0
    };

    Ok(BetaEstimate {
        slope: fit.slope,
        intercept: fit.intercept,
        beta,
        stderr_beta,
        n: sequence.n,
        q: sequence.q,
        delta_p: sequence.delta_p,
        r2: fit.r2,
        predicted_intercept: predicted,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::structfn::{MomentGrid, StructureFunctionTable};

    fn sl_table(beta: f64, c: f64, h0: f64) -> StructureFunctionTable {
        let grid = MomentGrid::new(
            MomentGrid::regular_p(0.2, 5.0, 0.2).unwrap(),
            MomentGrid::powers_of_two(1024),
        )
        .unwrap();
        StructureFunctionTable::from_scaling_law(grid, move |p| {
            h0 * p + c * (1.0 - beta.powf(p))
        })
    }

    #[test]
    fn closed_form_direct_substitution() {
        // (2 * 0.875 - 3 * 0.75) / (2 * 0.5 - 1 * 0.75) = -0.5 / 0.25 = -2.
        let rho = theoretical_rho(0.5, 2.0, 3.0, 1.0).unwrap();
        assert!((rho + 2.0).abs() < 1e-14);
    }

    #[test]
    fn closed_form_identity_cases() {
        for beta in [0.3, 0.6, 0.9] {
            for (n, q) in [(2.0, 1.0), (1.6, 0.8)] {
                assert!((theoretical_rho(beta, n, q, q).unwrap() - 1.0).abs() < 1e-14);
                assert!(theoretical_rho(beta, n, n, q).unwrap().abs() < 1e-14);
            }
        }
    }

    #[test]
    fn closed_form_rejects_q_equal_n() {
        assert!(matches!(
            theoretical_rho(0.5, 2.0, 3.0, 2.0),
            Err(Error::DegenerateDenominator(_))
        ));
        assert!(matches!(
            theoretical_rho(1.0, 2.0, 3.0, 1.0),
            Err(Error::BetaOutOfRange(_))
        ));
    }

    #[test]
    fn recursion_matches_direct_differences() {
        // The recursion and the closed form agree at every p step.
        let (beta, n, q, dp) = (0.5, 2.0, 1.0, 0.2);
        let mut p = 0.2;
        while p <= 5.0 - 2.0 * dp + 1e-9 {
            let d_cur = theoretical_rho(beta, n, p + dp, q).unwrap()
                - theoretical_rho(beta, n, p, q).unwrap();
            let d_next_direct = theoretical_rho(beta, n, p + 2.0 * dp, q).unwrap()
                - theoretical_rho(beta, n, p + dp, q).unwrap();
            let d_next = theoretical_delta_rho_next(beta, n, q, dp, d_cur).unwrap();
            assert!(
                (d_next - d_next_direct).abs() < 1e-12,
                "residual {} at p={p}",
                (d_next - d_next_direct).abs()
            );
            p += dp;
        }
    }

    #[test]
    fn recursion_zero_step_limit() {
        let next = theoretical_delta_rho_next(0.5, 2.0, 1.0, 1e-14, -0.3).unwrap();
        assert!((next + 0.3).abs() < 1e-10);
    }

    #[test]
    fn recursion_slope_approaches_one_near_monofractal() {
        // The affine map's slope is beta^dp; probe it with two inputs.
        let (beta, dp) = (0.999, 0.2);
        let a = theoretical_delta_rho_next(beta, 2.0, 1.0, dp, -0.1).unwrap();
        let b = theoretical_delta_rho_next(beta, 2.0, 1.0, dp, 0.4).unwrap();
        let slope = (b - a) / 0.5;
        assert!((slope - beta.powf(dp)).abs() < 1e-12);
        assert!((slope - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rho_on_exact_table() {
        let table = sl_table(0.5, 1.0, 0.0);
        let est = estimate_rho(&table, 2.0, 3.0, 1.0, (1, 1024)).unwrap();
        assert!((est.rho + 2.0).abs() < 1e-10);
        assert_eq!(est.r2, 1.0);
    }

    #[test]
    fn rho_self_regression_is_one() {
        let table = sl_table(0.5, 1.0, 0.0);
        let est = estimate_rho(&table, 2.0, 1.0, 1.0, (1, 1024)).unwrap();
        assert_eq!(est.rho, 1.0);
    }

    #[test]
    fn rho_ignores_linear_drift_term() {
        // An h0 p term cancels in the normalized coordinates.
        let with_drift = sl_table(0.5, 1.0, 0.07);
        let est = estimate_rho(&with_drift, 2.0, 3.0, 1.0, (1, 1024)).unwrap();
        assert!((est.rho - theoretical_rho(0.5, 2.0, 3.0, 1.0).unwrap()).abs() < 1e-10);
    }

    #[test]
    fn monofractal_table_is_degenerate() {
        let grid = MomentGrid::new(
            MomentGrid::regular_p(0.2, 5.0, 0.2).unwrap(),
            MomentGrid::powers_of_two(256),
        )
        .unwrap();
        let table = StructureFunctionTable::from_scaling_law(grid, |p| 0.5 * p);
        assert!(matches!(
            estimate_rho(&table, 2.0, 3.0, 1.0, (1, 256)),
            Err(Error::MonofractalDegenerate)
        ));
    }

    #[test]
    fn rho_off_grid_is_mismatch() {
        let table = sl_table(0.5, 1.0, 0.0);
        assert!(matches!(
            estimate_rho(&table, 2.0, 3.14, 1.0, (1, 1024)),
            Err(Error::GridMismatch { axis: "p", .. })
        ));
    }

    #[test]
    fn sequence_pairs_chain_and_lie_on_theory_line() {
        let beta = 0.6;
        let table = sl_table(beta, 1.0, 0.0);
        let seq =
            build_delta_rho_sequence(&table, 2.0, 1.0, 0.2, 4.8, 0.2, (1, 1024)).unwrap();

        // Chaining identity is exact by construction.
        for w in seq.pairs.windows(2) {
            assert_eq!(w[0].next, w[1].current);
        }

        // Every pair sits on the affine recursion with slope beta^dp.
        let slope = beta.powf(0.2);
        assert!((slope - 0.9029).abs() < 1e-4);
        let icpt = predicted_intercept(beta, 2.0, 1.0, 0.2).unwrap();
        for pr in &seq.pairs {
            assert!((pr.next - (slope * pr.current + icpt)).abs() < 1e-9);
        }
    }

    #[test]
    fn sequence_needs_three_pairs() {
        let table = sl_table(0.6, 1.0, 0.0);
        assert!(matches!(
            build_delta_rho_sequence(&table, 2.0, 1.0, 0.2, 0.6, 0.2, (1, 1024)),
            Err(Error::InsufficientPoints { .. })
        ));
    }

    #[test]
    fn beta_from_exact_recursion_pairs() {
        // Pairs generated by iterating the recursion itself.
        let (beta, n, q, dp) = (0.7, 2.0, 1.0, 0.2);
        let mut cur = theoretical_rho(beta, n, 0.4, q).unwrap()
            - theoretical_rho(beta, n, 0.2, q).unwrap();
        let mut pairs = Vec::new();
        let mut p = 0.2;
        for _ in 0..20 {
            let next = theoretical_delta_rho_next(beta, n, q, dp, cur).unwrap();
            pairs.push(DeltaRhoPair { p, current: cur, next });
            cur = next;
            p += dp;
        }
        let seq = DeltaRhoSequence { n, q, delta_p: dp, p_start: 0.2, pairs };
        let est = estimate_beta(&seq).unwrap();
        assert!((est.beta - beta).abs() < 1e-10);
        assert!(!est.degenerate);
        assert!((est.intercept - est.predicted_intercept).abs() < 1e-9);
    }

    #[test]
    fn beta_end_to_end_on_exact_table() {
        let table = sl_table(0.6, 1.0, 0.0);
        let seq =
            build_delta_rho_sequence(&table, 2.0, 1.0, 0.2, 4.8, 0.2, (1, 1024)).unwrap();
        let est = estimate_beta(&seq).unwrap();
        assert!((est.beta - 0.6).abs() < 1e-8);
        // Collinearity: residual sum of squares vanishes relative to spread.
        let xs: Vec<f64> = seq.pairs.iter().map(|p| p.current).collect();
        let ys: Vec<f64> = seq.pairs.iter().map(|p| p.next).collect();
        let fit = crate::fit::ols(&xs, &ys);
        assert!(fit.ss_res <= 1e-20 * fit.ss_tot.max(f64::MIN_POSITIVE));
    }

    #[test]
    fn unit_slope_is_flagged_monofractal_boundary() {
        // Arithmetic progression: next = current + const, slope exactly 1.
        let pairs: Vec<DeltaRhoPair> = (0..6)
            .map(|i| DeltaRhoPair {
                p: 0.2 + 0.2 * i as f64,
                current: 1.0 - 0.1 * i as f64,
                next: 0.9 - 0.1 * i as f64,
            })
            .collect();
        let seq = DeltaRhoSequence { n: 2.0, q: 1.0, delta_p: 0.2, p_start: 0.2, pairs };
        let est = estimate_beta(&seq).unwrap();
        assert_eq!(est.slope, 1.0);
        assert_eq!(est.beta, 1.0);
        assert!(!est.degenerate, "slope exactly 1 is the boundary, not degenerate");
    }

    #[test]
    fn negative_slope_is_degenerate() {
        let pairs: Vec<DeltaRhoPair> = (0..5)
            .map(|i| DeltaRhoPair {
                p: 0.2 + 0.2 * i as f64,
                current: i as f64,
                next: -2.0 * i as f64,
            })
            .collect();
        let seq = DeltaRhoSequence { n: 2.0, q: 1.0, delta_p: 0.2, p_start: 0.2, pairs };
        assert!(matches!(
            estimate_beta(&seq),
            Err(Error::DegenerateSlope { .. })
        ));
    }

    #[test]
    fn insensitivity_to_n_and_q_on_exact_table() {
        let table = sl_table(0.6, 1.5, 0.0);
        let mut betas = Vec::new();
        for n in [1.6, 1.8, 2.0, 2.2, 2.4] {
            for q in [0.6, 0.8, 1.0, 1.2, 1.4] {
                let seq =
                    build_delta_rho_sequence(&table, n, q, 0.2, 4.8, 0.2, (1, 1024)).unwrap();
                betas.push(estimate_beta(&seq).unwrap().beta);
            }
        }
        let min = betas.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = betas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert!(max - min <= 1e-8, "spread {}", max - min);
    }

    #[test]
    fn scale_invariance_of_rho_and_beta() {
        // Multiply all moments by c^p: log-log slopes across tau unchanged.
        let table = sl_table(0.55, 1.2, 0.0);
        let mut scaled = table.clone();
        let c: f64 = 12.3;
        for (pi, &p) in scaled.grid.p_grid().to_vec().iter().enumerate() {
            for m in &mut scaled.moments[pi] {
                *m *= c.powf(p);
            }
        }
        let r1 = estimate_rho(&table, 2.0, 3.0, 1.0, (1, 1024)).unwrap();
        let r2 = estimate_rho(&scaled, 2.0, 3.0, 1.0, (1, 1024)).unwrap();
        assert!((r1.rho - r2.rho).abs() < 1e-10);

        let s1 = build_delta_rho_sequence(&table, 2.0, 1.0, 0.2, 4.8, 0.2, (1, 1024)).unwrap();
        let s2 = build_delta_rho_sequence(&scaled, 2.0, 1.0, 0.2, 4.8, 0.2, (1, 1024)).unwrap();
        let b1 = estimate_beta(&s1).unwrap();
        let b2 = estimate_beta(&s2).unwrap();
        assert!((b1.beta - b2.beta).abs() < 1e-10);
    }
}
