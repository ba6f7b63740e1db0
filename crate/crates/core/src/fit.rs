//! Ordinary least-squares line fit with the diagnostics the estimators report.

/// Result of fitting y = slope * x + intercept by unweighted OLS.
#[derive(Debug, Clone, Copy)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope (0 when the fit has no residual dof).
    pub stderr_slope: f64,
    /// Coefficient of determination, clamped to [0, 1].
    pub r2: f64,
    pub ss_res: f64,
    pub ss_tot: f64,
    pub n: usize,
}

/// Unweighted OLS of y against x.
///
/// Callers guarantee `x.len() == y.len() >= 2` and a non-constant x.
pub fn ols(x: &[f64], y: &[f64]) -> LineFit {
    assert_eq!(x.len(), y.len());
    assert!(x.len() >= 2, "need at least two points to fit a line");

    let n = x.len();
    let nf = n as f64;
    let mean_x = x.iter().sum::<f64>() / nf;
    let mean_y = y.iter().sum::<f64>() / nf;

    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        let dx = x[i] - mean_x;
        sxx += dx * dx;
        sxy += dx * (y[i] - mean_y);
    }
    assert!(sxx > 0.0, "abscissa is constant; regression undefined");

    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;

    let mut ss_res = 0.0;
    let mut ss_tot = 0.0;
    for i in 0..n {
        let resid = y[i] - (slope * x[i] + intercept);
        ss_res += resid * resid;
        let dy = y[i] - mean_y;
        ss_tot += dy * dy;
    }

    let stderr_slope = if n > 2 {
        (ss_res / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };

    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else if ss_res <= f64::EPSILON {
        1.0
    } else {
        0.0
    };

    LineFit {
        slope,
        intercept,
        stderr_slope,
        r2,
        ss_res,
        ss_tot,
        n,
    }
}
