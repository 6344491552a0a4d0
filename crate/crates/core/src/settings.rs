use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances, proximal schedule and iteration caps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverSettings {
    /// Stationarity tolerance on `|∇_t r| = rq` and on the inner tolerance schedule.
    pub eps_opt: f64,
    /// A stationary point with `r ≤ eps_con` is feasible.
    pub eps_con: f64,
    /// Initial proximal weight σ₀.
    pub sigma0: f64,
    /// Initial inner gradient tolerance δ₀ (shared by both subproblems).
    pub delta0: f64,
    /// Per-outer-iteration shrink factor of δ.
    pub delta_shrink: f64,
    pub sigma_cap: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    /// Armijo sufficient-decrease fraction.
    pub armijo_c: f64,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Gradient tolerance of the final refinement of the subproblem point
    /// before the feasibility decision.
    pub eps_final: f64,
    /// Newton regularization is `μ = mu_factor·|∇|` (clipped), in `Pa` and in
    /// the level-only proximal step; `1` is the unscaled gradient-norm rule.
    pub mu_factor: f64,
    /// Regularize `(x, s)` as well as `t` in the proximal step. With `false`
    /// (the default) only the level is regularized, which makes the step the
    /// exact proximal map of `r*` and keeps it from overshooting the optimal
    /// cost; the full stage objective can overshoot even when solved exactly.
    pub regularize_xs: bool,
    /// Lower bound on the optimal cost used when no warm `t` is supplied.
    pub t0: Option<f64>,
    /// Keep per-Newton-step records in the trace.
    pub verbose_trace: bool,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            eps_opt: 1e-4,
            eps_con: 1e-8,
            sigma0: 1e4,
            delta0: 1e-2,
            delta_shrink: 0.1,
            sigma_cap: 1e12,
            max_outer: 50,
            max_inner: 200,
            armijo_c: 1e-4,
            backtrack_factor: 0.5,
            max_backtracks: 50,
            eps_final: 1e-9,
            mu_factor: 1e-4,
            regularize_xs: false,
            t0: None,
            verbose_trace: false,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("eps_opt", self.eps_opt),
            ("eps_con", self.eps_con),
            ("sigma0", self.sigma0),
            ("delta0", self.delta0),
            ("sigma_cap", self.sigma_cap),
            ("eps_final", self.eps_final),
            ("mu_factor", self.mu_factor),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Settings(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let unit = [
            ("delta_shrink", self.delta_shrink),
            ("armijo_c", self.armijo_c),
            ("backtrack_factor", self.backtrack_factor),
        ];
        for (name, v) in unit {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Settings(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.sigma_cap < self.sigma0 {
            return Err(Error::Settings("sigma_cap must be at least sigma0".into()));
        }
        if self.max_outer == 0 || self.max_inner == 0 {
            return Err(Error::Settings("iteration caps must be nonzero".into()));
        }
        if matches!(self.t0, Some(t) if !t.is_finite()) {
            return Err(Error::Settings("t0 must be finite".into()));
        }
        Ok(())
    }
}
