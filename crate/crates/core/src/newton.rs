//! Semismooth Newton with Armijo backtracking for the two subproblems.
//!
//! * `Pa`: minimize `r(x, s, t_k)` over `(x, s)`. The merit function need not
//!   be strongly convex, so the base Hessian is shifted by `μ = |∇r|`.
//! * `Pb`: minimize the stage objective `φ` over `(x, s, t)`. It is strongly
//!   convex with modulus `1/σ`; no further shift is needed.
//!
//! Both reuse one [`FactorContext`]: the `Pb` Hessian is the `Pa` base block
//! plus `(1/σ)·I`, with the `t` coordinate handled by a bordered solve.

use thiserror::Error;

use crate::linalg::{FactorContext, LinalgError};
use crate::merit::{dot, norm_sq, HessianElement, MeritEval, Mode, ProxCenter, StageEval};
use crate::problem::ProblemData;
use crate::settings::SolverSettings;

/// Upper clip of the `Pa` regularization `μ = |∇r|`.
pub const MU_MAX: f64 = 1e6;
/// Floor used when escalating `μ` after a numeric breakdown.
pub const MU_ESCALATION_FLOOR: f64 = 1e-10;
pub const MAX_MU_ESCALATIONS: usize = 5;
/// Relative floor on the level tolerance of the proximal stage; finer level
/// corrections are lost to rounding.
pub const LEVEL_TOL_FLOOR: f64 = 1e-13;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum NewtonStatus {
    Converged,
    IterLimit,
    LineSearchStall,
}

/// Result of one subproblem solve. The point itself is updated in place.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOutcome {
    pub status: NewtonStatus,
    /// Newton steps taken (one factorization each, escalations excluded).
    pub iters: usize,
    pub grad_norm: f64,
    /// Final objective value (`r` for `Pa`, `φ` for `Pb`).
    pub value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum NewtonError {
    #[error("factorization failed after {escalations} regularization escalations: {source}")]
    Factorization { escalations: usize, source: LinalgError },
}

/// One Newton step, kept when per-step tracing is enabled.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct StepRecord {
    pub mode: &'static str,
    pub value: f64,
    pub grad_norm: f64,
    pub mu: f64,
    pub step: f64,
    pub fallback: bool,
}

/// Outcome of a backtracking search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineSearch {
    pub step: f64,
    pub value: f64,
    pub stalled: bool,
    /// The supplied direction was not a descent direction and `−g` was used.
    pub fallback: bool,
}

/// Largest `ρ ∈ {1, β, β², …}` with `f(ρ) ≤ f0 + c·ρ·slope`.
///
/// `eval(ρ)` returns the objective at `point + ρ·d`. Returns the last tried
/// step with `stalled = true` after `max_backtracks` reductions.
pub fn backtrack(
    f0: f64,
    slope: f64,
    c: f64,
    beta: f64,
    max_backtracks: usize,
    mut eval: impl FnMut(f64) -> f64,
) -> LineSearch {
    let mut rho = 1.0;
    for _ in 0..=max_backtracks {
        let f = eval(rho);
        if f <= f0 + c * rho * slope {
            return LineSearch { step: rho, value: f, stalled: false, fallback: false };
        }
        rho *= beta;
    }
    LineSearch { step: rho / beta, value: f64::NAN, stalled: true, fallback: false }
}

/// Armijo search from `point` along `d` for objective `f` with gradient `g`.
///
/// If `gᵀd ≥ 0`, `d` is replaced by `−g` first and `fallback` is set.
pub fn armijo_search(
    mut f: impl FnMut(&[f64]) -> f64,
    point: &[f64],
    d: &mut [f64],
    g: &[f64],
    settings: &SolverSettings,
) -> LineSearch {
    let mut slope = dot(g, d);
    let mut fallback = false;
    if !(slope < 0.0) {
        for (di, gi) in d.iter_mut().zip(g) {
            *di = -gi;
        }
        slope = -norm_sq(g);
        fallback = true;
    }
    let f0 = f(point);
    let mut trial = point.to_vec();
    let mut ls = backtrack(f0, slope, settings.armijo_c, settings.backtrack_factor, settings.max_backtracks, |rho| {
        for i in 0..point.len() {
            trial[i] = point[i] + rho * d[i];
        }
        f(&trial)
    });
    ls.fallback = fallback;
    ls
}

/// Semismooth Newton engine owning the factorization context and buffers.
#[derive(Debug, Clone)]
pub struct NewtonEngine<'a> {
    prob: &'a ProblemData,
    settings: SolverSettings,
    ctx: FactorContext,
    helem: HessianElement,
    cur: StageEval,
    trial: StageEval,
    g: Vec<f64>,
    d: Vec<f64>,
    x_trial: Vec<f64>,
    s_trial: Vec<f64>,
    /// Per-step records, collected when `Some`.
    pub steps: Option<Vec<StepRecord>>,
    /// Iterates after each accepted step, collected when `Some`.
    pub iterates: Option<Vec<Vec<f64>>>,
}

impl<'a> NewtonEngine<'a> {
    pub fn new(prob: &'a ProblemData, settings: SolverSettings) -> Self {
        Self::with_context(prob, settings, FactorContext::new(prob))
    }

    pub fn with_context(prob: &'a ProblemData, settings: SolverSettings, ctx: FactorContext) -> Self {
        let (n, m) = (prob.n(), prob.m());
        NewtonEngine {
            prob,
            steps: if settings.verbose_trace { Some(Vec::new()) } else { None },
            settings,
            ctx,
            helem: HessianElement::new(n, m),
            cur: StageEval::zeros(n, m),
            trial: StageEval::zeros(n, m),
            g: vec![0.0; n + m],
            d: vec![0.0; n + m],
            x_trial: vec![0.0; n],
            s_trial: vec![0.0; m],
            iterates: None,
        }
    }

    pub fn context(&self) -> &FactorContext {
        &self.ctx
    }

    pub fn context_mut(&mut self) -> &mut FactorContext {
        &mut self.ctx
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    /// Merit evaluation at the last point visited by a solve.
    pub fn last_merit(&self) -> &MeritEval {
        &self.cur.merit
    }

    /// Minimizes `r(·, ·, t)` from `(x, s)` until `|∇_{x,s} r| ≤ tol`.
    ///
    /// With `stop_value = Some(v)` the solve also stops as soon as `r ≤ v`.
    pub fn solve_pa(
        &mut self,
        x: &mut [f64],
        s: &mut [f64],
        t: f64,
        tol: f64,
        stop_value: Option<f64>,
    ) -> Result<NewtonOutcome, NewtonError> {
        let prob = self.prob;
        let (n, m) = (prob.n(), prob.m());
        self.cur.merit.evaluate(prob, x, s, t);
        let mut iters = 0;
        loop {
            let me = &self.cur.merit;
            let gnorm = me.grad_xs_norm();
            let done = gnorm <= tol || stop_value.is_some_and(|v| me.r_value <= v);
            if done || iters >= self.settings.max_inner {
                let status = if done { NewtonStatus::Converged } else { NewtonStatus::IterLimit };
                return Ok(NewtonOutcome { status, iters, grad_norm: gnorm, value: me.r_value });
            }

            self.helem.select(prob, me, s, Mode::Pa, 1.0);
            self.g[..n].copy_from_slice(&me.grad_x);
            self.g[n..].copy_from_slice(&me.grad_s);
            let mu = (self.settings.mu_factor * gnorm).min(MU_MAX);
            let mu = self.factor_and_solve(mu)?;
            iters += 1;

            let mut slope = dot(&self.g, &self.d);
            let fallback = !(slope < 0.0);
            if fallback {
                for (di, gi) in self.d.iter_mut().zip(&self.g) {
                    *di = -gi;
                }
                slope = -norm_sq(&self.g);
            }

            let f0 = self.cur.merit.r_value;
            let (dx, ds) = self.d.split_at(n);
            let (x_trial, s_trial, trial) = (&mut self.x_trial, &mut self.s_trial, &mut self.trial.merit);
            let ls = backtrack(
                f0,
                slope,
                self.settings.armijo_c,
                self.settings.backtrack_factor,
                self.settings.max_backtracks,
                |rho| {
                    for i in 0..n {
                        x_trial[i] = x[i] + rho * dx[i];
                    }
                    for i in 0..m {
                        s_trial[i] = s[i] + rho * ds[i];
                    }
                    trial.evaluate(prob, x_trial, s_trial, t);
                    trial.r_value
                },
            );
            if let Some(log) = self.steps.as_mut() {
                log.push(StepRecord { mode: "pa", value: f0, grad_norm: gnorm, mu, step: ls.step, fallback });
            }
            if ls.stalled {
                return Ok(NewtonOutcome {
                    status: NewtonStatus::LineSearchStall,
                    iters,
                    grad_norm: gnorm,
                    value: f0,
                });
            }
            x.copy_from_slice(&self.x_trial);
            s.copy_from_slice(&self.s_trial);
            std::mem::swap(&mut self.cur.merit, &mut self.trial.merit);
            if let Some(it) = self.iterates.as_mut() {
                it.push(x.iter().chain(s.iter()).copied().collect());
            }
        }
    }

    /// Minimizes the stage objective around `center` from `(x, s, t)` until
    /// `|∇_{x,s}φ| ≤ tol` and the level component of the Newton step is at
    /// most `tol·eps_opt`. The final check costs a factorization but is not counted
    /// as an iteration since no step is taken.
    pub fn solve_pb(
        &mut self,
        x: &mut [f64],
        s: &mut [f64],
        t: &mut f64,
        center: &ProxCenter,
        tol: f64,
    ) -> Result<NewtonOutcome, NewtonError> {
        let prob = self.prob;
        let (n, m) = (prob.n(), prob.m());
        let sigma = center.sigma;
        self.cur.evaluate(prob, x, s, *t, center);
        let mut iters = 0;
        loop {
            let gnorm = self.cur.grad_norm();
            let gxs = (norm_sq(&self.cur.grad_x) + norm_sq(&self.cur.grad_s)).sqrt();
            if iters >= self.settings.max_inner {
                return Ok(NewtonOutcome { status: NewtonStatus::IterLimit, iters, grad_norm: gnorm, value: self.cur.value });
            }

            self.helem.select(prob, &self.cur.merit, s, Mode::Pb, sigma);
            self.helem.prox_shift = center.xs_weight();
            self.g[..n].copy_from_slice(&self.cur.grad_x);
            self.g[n..].copy_from_slice(&self.cur.grad_s);
            let g_t = self.cur.grad_t;
            // Without the (x, s) proximal term the base block can be singular;
            // regularize it like `Pa`.
            let mu0 = if center.regularize_xs { 0.0 } else { (self.settings.mu_factor * gnorm).min(MU_MAX) };
            let (mu, d_t) = self.factor_and_solve_bordered(g_t, mu0)?;
            // Where `r*` is flat a small gradient can still sit far from the
            // minimizing level, so the level is judged by the Newton
            // correction, to a fraction `eps_opt` of the inner tolerance.
            let level_tol = (tol * self.settings.eps_opt).max(LEVEL_TOL_FLOOR * t.abs().max(1.0));
            let done = gxs <= tol && d_t.abs() <= level_tol;
            if done {
                return Ok(NewtonOutcome { status: NewtonStatus::Converged, iters, grad_norm: gnorm, value: self.cur.value });
            }
            iters += 1;

            let mut slope = dot(&self.g, &self.d) + g_t * d_t;
            let fallback = !(slope < 0.0);
            let d_t = if fallback {
                for (di, gi) in self.d.iter_mut().zip(&self.g) {
                    *di = -gi;
                }
                slope = -(norm_sq(&self.g) + g_t * g_t);
                -g_t
            } else {
                d_t
            };

            let f0 = self.cur.value;
            let t0 = *t;
            let (dx, ds) = self.d.split_at(n);
            let (x_trial, s_trial, trial) = (&mut self.x_trial, &mut self.s_trial, &mut self.trial);
            let ls = backtrack(
                f0,
                slope,
                self.settings.armijo_c,
                self.settings.backtrack_factor,
                self.settings.max_backtracks,
                |rho| {
                    for i in 0..n {
                        x_trial[i] = x[i] + rho * dx[i];
                    }
                    for i in 0..m {
                        s_trial[i] = s[i] + rho * ds[i];
                    }
                    trial.evaluate(prob, x_trial, s_trial, t0 + rho * d_t, center);
                    trial.value
                },
            );
            if let Some(log) = self.steps.as_mut() {
                log.push(StepRecord { mode: "pb", value: f0, grad_norm: gnorm, mu, step: ls.step, fallback });
            }
            if ls.stalled {
                return Ok(NewtonOutcome {
                    status: NewtonStatus::LineSearchStall,
                    iters,
                    grad_norm: gnorm,
                    value: f0,
                });
            }
            x.copy_from_slice(&self.x_trial);
            s.copy_from_slice(&self.s_trial);
            *t = t0 + ls.step * d_t;
            std::mem::swap(&mut self.cur, &mut self.trial);
            if let Some(it) = self.iterates.as_mut() {
                it.push(x.iter().chain(s.iter()).copied().chain(std::iter::once(*t)).collect());
            }
        }
    }

    /// Factors `H + μI` and solves for the `Pa` step into `self.d`, escalating
    /// `μ` on breakdown. Returns the `μ` actually used.
    fn factor_and_solve(&mut self, mu: f64) -> Result<f64, NewtonError> {
        let mut mu = mu;
        let mut escalations = 0;
        loop {
            let res = self.ctx.refactor(&self.helem, mu).and_then(|_| {
                self.ctx.solve_rank1(&self.g, self.helem.rank1_active, self.helem.rank1_xs(), &mut self.d)
            });
            match res {
                Ok(()) => return Ok(mu),
                Err(source) => {
                    if escalations == MAX_MU_ESCALATIONS {
                        return Err(NewtonError::Factorization { escalations, source });
                    }
                    escalations += 1;
                    mu = (10.0 * mu).max(MU_ESCALATION_FLOOR);
                }
            }
        }
    }

    fn factor_and_solve_bordered(&mut self, g_t: f64, mu: f64) -> Result<(f64, f64), NewtonError> {
        let mut mu = mu;
        let mut escalations = 0;
        let dim = self.g.len();
        let u_t = self.helem.rank1_vector[dim];
        loop {
            let shift = self.helem.t_shift;
            let res = self.ctx.refactor(&self.helem, mu).and_then(|_| {
                self.ctx.solve_rank1_bordered(
                    &self.g,
                    g_t,
                    shift,
                    self.helem.rank1_active,
                    &self.helem.rank1_vector[..dim],
                    u_t,
                    &mut self.d,
                )
            });
            match res {
                Ok(d_t) => return Ok((mu, d_t)),
                Err(source) => {
                    if escalations == MAX_MU_ESCALATIONS {
                        return Err(NewtonError::Factorization { escalations, source });
                    }
                    escalations += 1;
                    mu = (10.0 * mu).max(MU_ESCALATION_FLOOR);
                }
            }
        }
    }
}
