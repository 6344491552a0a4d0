//! Outer proximal-point loop on the value function.
//!
//! Each outer iteration `k`
//!
//! 1. minimizes `r(·, ·, t_k)` to tolerance `δ_k` (subproblem `Pa`), giving
//!    the half-step point `(x_{k+½}, s_{k+½})`;
//! 2. stops if `rq ≤ eps_opt` and `δ_k ≤ eps_opt`, classifying the point as
//!    feasible (`r ≤ eps_con`) or as an infeasibility plateau;
//! 3. takes a proximal step on `(x, s, t)` around the half-step point with
//!    weight `σ_k` to tolerance `δ_k` (subproblem `Pb`), which moves `t` up;
//! 4. updates `σ_{k+1} = min(max(1/√δ_k, σ_k), σ_cap)` and `δ_{k+1} = δ_k·shrink`.
//!
//! Started from `t_0 ≤ t*`, the levels `t_k` increase towards `t*`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{ordering, FactorContext, LdlFactor};
use crate::merit::{eval_merit, MeritEval, ProxCenter};
use crate::newton::{NewtonEngine, NewtonError, NewtonOutcome, NewtonStatus, StepRecord};
use crate::problem::ProblemData;
use crate::settings::SolverSettings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    /// A feasible point of cost at most the given level was found, but the
    /// level is not known to be optimal.
    SuboptimalFeasible,
    IterLimit,
    LineSearchFailure,
}

impl SolveStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolveStatus::Optimal => "Optimal",
            SolveStatus::Infeasible => "Infeasible",
            SolveStatus::SuboptimalFeasible => "SuboptimalFeasible",
            SolveStatus::IterLimit => "IterLimit",
            SolveStatus::LineSearchFailure => "LineSearchFailure",
        }
    }
}

/// Termination decision after a `Pa` solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Optimal,
    Infeasible,
    Continue,
}

/// Stopping test at the half-step point: both stationarity tests
/// (`|∇_t r| = rq ≤ eps_opt` and `δ ≤ eps_opt`) must pass; the merit value
/// then decides feasibility.
///
/// A small positive `r` with a nonzero slope is not yet a plateau: `r*` is
/// convex with slope `−rq` at `t`, so its tangent reaches zero after a level
/// increase of `r / rq`. When that distance is below
/// `√eps_opt · max(1, |t|)` the level is more likely just short of `t*` and
/// the loop continues instead of reporting infeasibility.
pub fn classify_termination(me: &MeritEval, delta_beta: f64, settings: &SolverSettings) -> Termination {
    if me.rq > settings.eps_opt || delta_beta > settings.eps_opt {
        Termination::Continue
    } else if me.r_value <= settings.eps_con {
        Termination::Optimal
    } else if me.rq * settings.eps_opt.sqrt() * (me.q_value - me.q_gap).abs().max(1.0) >= me.r_value {
        Termination::Continue
    } else {
        Termination::Infeasible
    }
}

/// Lower bound on the optimal cost from the unconstrained minimum of `q`.
///
/// Returns `None` when `Q` is numerically singular (pivots of `Q + 1e-12·I`
/// not above `1e-10`), e.g. for LPs.
pub fn default_t0(prob: &ProblemData) -> Option<f64> {
    let n = prob.n();
    if n == 0 {
        return Some(0.0);
    }
    let mut entries: Vec<(usize, usize, f64)> = prob.quad.triplets().collect();
    entries.extend((0..n).map(|i| (i, i, 1e-12)));
    let mut adj = vec![Vec::new(); n];
    for &(i, j, _) in &entries {
        if i != j {
            adj[i].push(j);
            adj[j].push(i);
        }
    }
    let perm = ordering::minimum_degree(&adj);
    let iperm = ordering::invert(&perm);
    let mut permuted: Vec<(usize, usize, f64)> = entries
        .into_iter()
        .map(|(i, j, v)| {
            let (a, b) = (iperm[i], iperm[j]);
            (a.min(b), a.max(b), v)
        })
        .collect();
    permuted.sort_by_key(|&(r, c, _)| (c, r));
    let (mut ap, mut ai, mut ax) = (vec![0usize; n + 1], Vec::new(), Vec::<f64>::new());
    let mut last = None;
    for (r, c, v) in permuted {
        if last == Some((r, c)) {
            *ax.last_mut().unwrap() += v;
            continue;
        }
        last = Some((r, c));
        ap[c + 1] += 1;
        ai.push(r);
        ax.push(v);
    }
    for c in 0..n {
        ap[c + 1] += ap[c];
    }
    let mut f = LdlFactor::symbolic(n, &ap, &ai);
    f.factor(&ap, &ai, &ax, 1e-10).ok()?;
    let mut xu = vec![0.0; n];
    for i in 0..n {
        xu[iperm[i]] = -prob.lin[i];
    }
    f.solve_in_place(&mut xu);
    let x: Vec<f64> = (0..n).map(|i| xu[iperm[i]]).collect();
    Some(prob.objective(&x))
}

/// Initial point for [`Solver::solve`]. Missing `s` defaults to `b − Ax`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub s: Option<Vec<f64>>,
    pub t: Option<f64>,
}

impl WarmStart {
    pub fn primal(x: Vec<f64>) -> Self {
        WarmStart { x, s: None, t: None }
    }

    pub fn with_t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }
}

/// One outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OuterRecord {
    pub k: usize,
    pub t: f64,
    /// Merit value at the half-step point.
    pub r: f64,
    pub rq: f64,
    pub sigma: f64,
    pub delta: f64,
    pub pa_iters: usize,
    pub pb_iters: usize,
    pub pa_grad: f64,
    pub pb_grad: f64,
    /// Level after the proximal step (equal to `t` on the final iteration).
    pub t_next: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub status: SolveStatus,
    /// Final level `t`.
    pub t_final: f64,
    /// `q(x_final)`.
    pub objective: f64,
    pub x_final: Vec<f64>,
    pub s_final: Vec<f64>,
    /// `r(x_final, s_final, t_final)`.
    pub r_final: f64,
    pub rq_final: f64,
    /// Plateau value `min r0` when infeasible.
    pub m_estimate: Option<f64>,
    pub outer_iterations: usize,
    pub cumulative_newton: usize,
    pub trace: Vec<OuterRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub steps: Option<Vec<StepRecord>>,
}

impl SolveReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization cannot fail")
    }
}

/// Solver instance bound to one problem.
#[derive(Debug, Clone)]
pub struct Solver<'a> {
    prob: &'a ProblemData,
    settings: SolverSettings,
    engine: NewtonEngine<'a>,
}

impl<'a> Solver<'a> {
    pub fn new(prob: &'a ProblemData, settings: SolverSettings) -> Result<Self> {
        settings.validate()?;
        let violations = prob.validate();
        if !violations.is_empty() {
            return Err(Error::InvalidProblem(violations));
        }
        let engine = NewtonEngine::with_context(prob, settings.clone(), FactorContext::new(prob));
        Ok(Solver { prob, settings, engine })
    }

    pub fn settings(&self) -> &SolverSettings {
        &self.settings
    }

    pub fn factor_context(&self) -> &FactorContext {
        self.engine.context()
    }

    pub fn factor_context_mut(&mut self) -> &mut FactorContext {
        self.engine.context_mut()
    }

    fn start_point(&self, warm: Option<&WarmStart>) -> Result<(Vec<f64>, Vec<f64>)> {
        let (n, m) = (self.prob.n(), self.prob.m());
        let x = match warm {
            Some(w) => {
                if w.x.len() != n {
                    return Err(Error::WarmStartDimension { expected: n, found: w.x.len() });
                }
                w.x.clone()
            }
            None => vec![0.0; n],
        };
        let s = match warm.and_then(|w| w.s.clone()) {
            Some(s) => {
                if s.len() != m {
                    return Err(Error::WarmStartDimension { expected: m, found: s.len() });
                }
                s
            }
            None => {
                let mut s = self.prob.b.clone();
                let mut ax = vec![0.0; m];
                self.prob.a.gemv_add(&x, &mut ax);
                s.iter_mut().zip(&ax).for_each(|(si, ai)| *si -= ai);
                s
            }
        };
        Ok((x, s))
    }

    fn initial_level(&self, warm: Option<&WarmStart>) -> Result<f64> {
        warm.and_then(|w| w.t)
            .or(self.settings.t0)
            .or(self.prob.t0)
            .or_else(|| default_t0(self.prob))
            .ok_or_else(|| {
                Error::Settings("no lower bound t0 available (Q is singular); pass one explicitly".into())
            })
    }

    fn reset_trace(&mut self) {
        self.engine.steps = if self.settings.verbose_trace { Some(Vec::new()) } else { None };
    }

    /// Runs the outer loop from `warm` (or the origin) and `t0`.
    pub fn solve(&mut self, warm: Option<&WarmStart>) -> Result<SolveReport> {
        let (mut x, mut s) = self.start_point(warm)?;
        let mut t = self.initial_level(warm)?;
        self.reset_trace();
        let settings = self.settings.clone();

        let mut sigma = settings.sigma0;
        let mut delta = settings.delta0;
        let mut newton = 0usize;
        let mut trace = Vec::new();
        let mut center = ProxCenter { regularize_xs: settings.regularize_xs, ..ProxCenter::new(x.clone(), s.clone(), t, sigma) };

        for k in 0..settings.max_outer {
            let pa = match self.engine.solve_pa(&mut x, &mut s, t, delta, None) {
                Ok(o) => o,
                Err(e) => return Ok(self.failure(e, x, s, t, k, newton, trace)),
            };
            newton += pa.iters;
            let me = self.engine.last_merit().clone();

            let mut record = OuterRecord {
                k,
                t,
                r: me.r_value,
                rq: me.rq,
                sigma,
                delta,
                pa_iters: pa.iters,
                pb_iters: 0,
                pa_grad: pa.grad_norm,
                pb_grad: 0.0,
                t_next: t,
            };

            // A starting level that already admits a feasible point is not
            // known to be a lower bound on the optimal cost.
            if k == 0 && me.r_value <= settings.eps_con {
                trace.push(record);
                return Ok(self.report(SolveStatus::SuboptimalFeasible, x, s, t, &me, k + 1, newton, trace));
            }

            match classify_termination(&me, delta, &settings) {
                Termination::Continue => {}
                Termination::Optimal => {
                    trace.push(record);
                    return Ok(self.report(SolveStatus::Optimal, x, s, t, &me, k + 1, newton, trace));
                }
                Termination::Infeasible => {
                    // An inexact half-step point below t* can show rq = 0;
                    // confirm the plateau on a polished point first.
                    let extra = self.refine(&mut x, &mut s, t)?;
                    newton += extra.iters;
                    record.pa_iters += extra.iters;
                    let me = eval_merit(self.prob, &x, &s, t);
                    record.r = me.r_value;
                    record.rq = me.rq;
                    let status = match classify_termination(&me, delta, &settings) {
                        Termination::Optimal => Some(SolveStatus::Optimal),
                        Termination::Infeasible => Some(SolveStatus::Infeasible),
                        Termination::Continue => None,
                    };
                    if let Some(status) = status {
                        trace.push(record);
                        return Ok(self.report(status, x, s, t, &me, k + 1, newton, trace));
                    }
                }
            }

            center.x.copy_from_slice(&x);
            center.s.copy_from_slice(&s);
            center.t = t;
            center.sigma = sigma;
            let pb = match self.engine.solve_pb(&mut x, &mut s, &mut t, &center, delta) {
                Ok(o) => o,
                Err(e) => return Ok(self.failure(e, x, s, t, k, newton, trace)),
            };
            newton += pb.iters;
            record.pb_iters = pb.iters;
            record.pb_grad = pb.grad_norm;
            record.t_next = t;
            trace.push(record);

            sigma = (1.0 / delta.sqrt()).max(sigma).min(settings.sigma_cap);
            delta *= settings.delta_shrink;
        }

        let me = eval_merit(self.prob, &x, &s, t);
        let outer = trace.len();
        Ok(self.report(SolveStatus::IterLimit, x, s, t, &me, outer, newton, trace))
    }

    /// Minimizes `r(·, ·, t_fixed)` only, stopping once the point is feasible
    /// (`r ≤ eps_con`) or stationary to `eps_final`.
    pub fn recover_feasible(&mut self, t_fixed: f64, warm: Option<&WarmStart>) -> Result<SolveReport> {
        let (mut x, mut s) = self.start_point(warm)?;
        self.reset_trace();
        let eps_con = self.settings.eps_con;
        let eps_final = self.settings.eps_final;
        let out = match self.engine.solve_pa(&mut x, &mut s, t_fixed, eps_final, Some(eps_con)) {
            Ok(o) => o,
            Err(e) => return Ok(self.failure(e, x, s, t_fixed, 0, 0, Vec::new())),
        };
        let me = eval_merit(self.prob, &x, &s, t_fixed);
        let record = OuterRecord {
            k: 0,
            t: t_fixed,
            r: me.r_value,
            rq: me.rq,
            sigma: 0.0,
            delta: eps_final,
            pa_iters: out.iters,
            pb_iters: 0,
            pa_grad: out.grad_norm,
            pb_grad: 0.0,
            t_next: t_fixed,
        };
        let status = if me.r_value <= eps_con {
            SolveStatus::SuboptimalFeasible
        } else if out.status == NewtonStatus::IterLimit {
            SolveStatus::IterLimit
        } else {
            SolveStatus::Infeasible
        };
        Ok(self.report(status, x, s, t_fixed, &me, 1, out.iters, vec![record]))
    }

    /// Final high-accuracy `Pa` solve at the terminal level.
    fn refine(&mut self, x: &mut [f64], s: &mut [f64], t: f64) -> Result<NewtonOutcome> {
        self.engine
            .solve_pa(x, s, t, self.settings.eps_final, None)
            .map_err(|e| Error::SolverFailure(e.to_string()))
    }

    #[allow(clippy::too_many_arguments)]
    fn report(
        &mut self,
        status: SolveStatus,
        x: Vec<f64>,
        s: Vec<f64>,
        t: f64,
        me: &MeritEval,
        outer: usize,
        newton: usize,
        trace: Vec<OuterRecord>,
    ) -> SolveReport {
        let m_estimate = (status == SolveStatus::Infeasible).then_some(me.r_value);
        SolveReport {
            status,
            t_final: t,
            objective: me.q_value,
            x_final: x,
            s_final: s,
            r_final: me.r_value,
            rq_final: me.rq,
            m_estimate,
            outer_iterations: outer,
            cumulative_newton: newton,
            trace,
            steps: self.engine.steps.take(),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn failure(
        &mut self,
        _err: NewtonError,
        x: Vec<f64>,
        s: Vec<f64>,
        t: f64,
        k: usize,
        newton: usize,
        trace: Vec<OuterRecord>,
    ) -> SolveReport {
        let me = eval_merit(self.prob, &x, &s, t);
        self.report(SolveStatus::LineSearchFailure, x, s, t, &me, k + 1, newton, trace)
    }
}
