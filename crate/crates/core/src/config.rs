//! Analysis parameters with the documented defaults, plus validation that
//! reports every problem at once.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::structfn::{MomentGrid, GRID_EPS};

/// Series at or below this length default to a 256-sample max lag (daily
/// resolution); longer series default to 1024 (high-frequency resolution).
pub const DAILY_LENGTH_CUTOFF: usize = 32_768;

/// Every knob of the analysis pipeline.
///
/// Defaults: p grid 0.2..5.0 step 0.2; power-of-two lags; scaling fits over
/// tau in [2, 128]; GESS with n = 2, q = 1, delta_p = 0.2 over p in
/// [0.2, 4.8]; flatness probed at tau0 = 64 with threshold 0.05 in log2
/// units; C averaged over p in [1, 4].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub p_start: f64,
    pub p_stop: f64,
    pub p_step: f64,
    /// Max lag of the tau grid; `None` picks 256 or 1024 by series length,
    /// clamped to length / 4.
    pub tau_max: Option<usize>,
    pub fit_tau_min: usize,
    pub fit_tau_max: usize,
    /// GESS reference order.
    pub n: f64,
    /// GESS abscissa order.
    pub q: f64,
    pub delta_p: f64,
    pub gess_p_start: f64,
    pub gess_p_end: f64,
    pub flat_p_set: Vec<f64>,
    pub flat_q_set: Vec<f64>,
    pub tau0: usize,
    pub flat_threshold: f64,
    pub c_p_min: f64,
    pub c_p_max: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            p_start: 0.2,
            p_stop: 5.0,
            p_step: 0.2,
            tau_max: None,
            fit_tau_min: 2,
            fit_tau_max: 128,
            n: 2.0,
            q: 1.0,
            delta_p: 0.2,
            gess_p_start: 0.2,
            gess_p_end: 4.8,
            flat_p_set: vec![1.0, 1.4, 1.8, 2.2, 2.6, 3.0],
            flat_q_set: vec![1.2, 1.6, 2.0, 2.4, 2.8],
            tau0: 64,
            flat_threshold: 0.05,
            c_p_min: 1.0,
            c_p_max: 4.0,
        }
    }
}

fn is_multiple(value: f64, step: f64) -> bool {
    let k = value / step;
    (k - k.round()).abs() <= 1e-6
}

impl AnalysisConfig {
    pub fn p_grid(&self) -> Result<Vec<f64>> {
        MomentGrid::regular_p(self.p_start, self.p_stop, self.p_step)
    }

    /// Effective max lag for a series of `len` samples.
    pub fn effective_tau_max(&self, len: usize) -> usize {
        match self.tau_max {
            Some(t) => t,
            None => {
                let cap = if len <= DAILY_LENGTH_CUTOFF { 256 } else { 1024 };
                let mut t = 1usize;
                while t * 2 <= cap.min(len / 4) {
                    t *= 2;
                }
                t
            }
        }
    }

    pub fn moment_grid(&self, len: usize) -> Result<MomentGrid> {
        MomentGrid::new(
            self.p_grid()?,
            MomentGrid::powers_of_two(self.effective_tau_max(len)),
        )
    }

    pub fn fit_range(&self) -> (usize, usize) {
        (self.fit_tau_min, self.fit_tau_max)
    }

    /// Check every parameter against the downstream preconditions, listing
    /// all violations at once.
    pub fn validate(&self, series_len: usize) -> Result<()> {
        let mut errs = Vec::new();

        if !(self.p_start > 0.0 && self.p_stop >= self.p_start && self.p_step > 0.0) {
            errs.push(format!(
                "p grid: need 0 < p_start <= p_stop and p_step > 0 (got {}, {}, {})",
                self.p_start, self.p_stop, self.p_step
            ));
        }
        if series_len < 2 {
            errs.push(format!("series length {series_len} < 2"));
        }

        let tau_max = self.effective_tau_max(series_len.max(2));
        if tau_max < 1 {
            errs.push("tau grid is empty".into());
        }
        if series_len >= 2 && tau_max > series_len / 4 {
            errs.push(format!(
                "tau grid max {tau_max} exceeds series length / 4 = {}",
                series_len / 4
            ));
        }
        if self.fit_tau_min >= self.fit_tau_max {
            errs.push(format!(
                "fit tau range [{}, {}] is empty",
                self.fit_tau_min, self.fit_tau_max
            ));
        }
        let taus = MomentGrid::powers_of_two(tau_max);
        let in_fit = taus
            .iter()
            .filter(|&&t| t >= self.fit_tau_min && t <= self.fit_tau_max)
            .count();
        if in_fit < 3 {
            errs.push(format!(
                "fit tau range [{}, {}] holds {in_fit} grid lags, need >= 3",
                self.fit_tau_min, self.fit_tau_max
            ));
        }
        if !taus.contains(&self.tau0)
            || self.tau0 < self.fit_tau_min
            || self.tau0 > self.fit_tau_max
        {
            errs.push(format!(
                "tau0 = {} must be a power-of-two lag inside the fit range [{}, {}]",
                self.tau0, self.fit_tau_min, self.fit_tau_max
            ));
        }

        for (name, v) in [("n", self.n), ("q", self.q), ("delta_p", self.delta_p)] {
            if !(v > 0.0) || !v.is_finite() {
                errs.push(format!("{name} must be positive and finite (got {v})"));
            }
        }
        if (self.n - self.q).abs() <= GRID_EPS {
            errs.push(format!("q = n = {} degenerates the GESS closed form", self.n));
        }

        if let Ok(p_grid) = self.p_grid() {
            let on_grid = |v: f64| p_grid.iter().any(|&g| (g - v).abs() <= GRID_EPS);
            for (name, v) in [("n", self.n), ("q", self.q)] {
                if !on_grid(v) {
                    errs.push(format!("GESS order {name} = {v} is not on the p grid"));
                }
            }
            if !is_multiple(self.delta_p, self.p_step) {
                errs.push(format!(
                    "delta_p = {} must be a multiple of p_step = {}",
                    self.delta_p, self.p_step
                ));
            }
            if !on_grid(self.gess_p_start) || !on_grid(self.gess_p_end + self.delta_p) {
                errs.push(format!(
                    "GESS p range [{}, {} + delta_p] must lie on the p grid",
                    self.gess_p_start, self.gess_p_end
                ));
            }
            if self.gess_p_end < self.gess_p_start + 2.0 * self.delta_p {
                errs.push(format!(
                    "GESS p range [{}, {}] too narrow: need p_end >= p_start + 2 delta_p",
                    self.gess_p_start, self.gess_p_end
                ));
            }
            for (label, set) in [("flat_p_set", &self.flat_p_set), ("flat_q_set", &self.flat_q_set)]
            {
                if set.is_empty() {
                    errs.push(format!("{label} is empty"));
                }
                for &v in set.iter() {
                    if !on_grid(v) {
                        errs.push(format!("{label} value {v} is not on the p grid"));
                    }
                }
            }
            if !p_grid
                .iter()
                .any(|&g| g >= self.c_p_min - GRID_EPS && g <= self.c_p_max + GRID_EPS)
            {
                errs.push(format!(
                    "C averaging range [{}, {}] contains no p grid point",
                    self.c_p_min, self.c_p_max
                ));
            }
        }

        if !(self.flat_threshold > 0.0) {
            errs.push(format!(
                "flatness threshold must be positive (got {})",
                self.flat_threshold
            ));
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(errs))
        }
    }

    /// SHA-256 of the canonical JSON form; embedded in reports.
    pub fn sha256_hex(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}
