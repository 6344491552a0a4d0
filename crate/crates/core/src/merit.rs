//! Residual field, merit function and generalized Hessian elements.
//!
//! For fixed problem data the merit function is
//!
//! ```text
//!   r(x, s, t) = ½ rq² + ½|Ax + s − b|² + ½|s − Π_C(s)|²,   rq = max{q(x) − t, 0}
//! ```
//!
//! and its gradients are
//!
//! ```text
//!   ∇_x r = Aᵀ(Ax + s − b) + rq·v,   v = Qx + p
//!   ∇_s r = (Ax + s − b) + (s − Π_C(s))
//!   ∇_t r = −rq
//! ```
//!
//! The gradient is strongly semismooth. An element of its Clarke Jacobian is
//!
//! ```text
//!   [ AᵀA + rq·Q   Aᵀ    ]  +  ξq · (v, 0)(v, 0)ᵀ
//!   [ A            I + Γ ]
//! ```
//!
//! with `ξq = 1` iff `q(x) ≥ t` and `Γ_ii = 1` iff row `i` is a zero-cone row
//! or `s_i ≤ 0`. Ties resolve to the active branch.

use crate::problem::ProblemData;

/// Merit function pieces at one `(x, s, t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeritEval {
    /// `max{q(x) − t, 0}`.
    pub rq: f64,
    /// `q(x)`.
    pub q_value: f64,
    /// `q(x) − t`, kept to decide the epigraph branch without rounding.
    pub q_gap: f64,
    /// `Ax + s − b`.
    pub eq_residual: Vec<f64>,
    /// `s − Π_C(s)`.
    pub cone_residual: Vec<f64>,
    pub r_value: f64,
    /// `r − ½rq²`, the constraint-violation part.
    pub r0_value: f64,
    pub grad_x: Vec<f64>,
    pub grad_s: Vec<f64>,
    pub grad_t: f64,
    /// `Qx + p`.
    pub v: Vec<f64>,
}

impl MeritEval {
    pub fn zeros(n: usize, m: usize) -> Self {
        MeritEval {
            rq: 0.0,
            q_value: 0.0,
            q_gap: 0.0,
            eq_residual: vec![0.0; m],
            cone_residual: vec![0.0; m],
            r_value: 0.0,
            r0_value: 0.0,
            grad_x: vec![0.0; n],
            grad_s: vec![0.0; m],
            grad_t: 0.0,
            v: vec![0.0; n],
        }
    }

    /// Evaluates in place, reusing this value's buffers.
    pub fn evaluate(&mut self, prob: &ProblemData, x: &[f64], s: &[f64], t: f64) {
        debug_assert_eq!(x.len(), prob.n());
        debug_assert_eq!(s.len(), prob.m());

        self.q_value = prob.objective_and_grad(x, &mut self.v);
        self.q_gap = self.q_value - t;
        self.rq = self.q_gap.max(0.0);

        for i in 0..s.len() {
            self.eq_residual[i] = s[i] - prob.b[i];
        }
        prob.a.gemv_add(x, &mut self.eq_residual);

        let mut eq_sq = 0.0;
        let mut cone_sq = 0.0;
        for i in 0..s.len() {
            let c = prob.cone.residual(i, s[i]);
            self.cone_residual[i] = c;
            self.grad_s[i] = self.eq_residual[i] + c;
            eq_sq += self.eq_residual[i] * self.eq_residual[i];
            cone_sq += c * c;
        }

        for (g, vi) in self.grad_x.iter_mut().zip(&self.v) {
            *g = self.rq * vi;
        }
        prob.a.gemv_t_add(&self.eq_residual, &mut self.grad_x);

        self.r0_value = 0.5 * (eq_sq + cone_sq);
        self.r_value = 0.5 * self.rq * self.rq + self.r0_value;
        self.grad_t = -self.rq;
    }

    /// `|∇_{x,s} r|`.
    pub fn grad_xs_norm(&self) -> f64 {
        (norm_sq(&self.grad_x) + norm_sq(&self.grad_s)).sqrt()
    }

    /// `|∇_{x,s,t} r|`.
    pub fn grad_norm(&self) -> f64 {
        (norm_sq(&self.grad_x) + norm_sq(&self.grad_s) + self.grad_t * self.grad_t).sqrt()
    }

    /// Epigraph branch selector ξq with the tie `q(x) = t` resolved to 1.
    pub fn epigraph_active(&self) -> bool {
        self.q_gap >= 0.0
    }
}

pub fn eval_merit(prob: &ProblemData, x: &[f64], s: &[f64], t: f64) -> MeritEval {
    let mut me = MeritEval::zeros(prob.n(), prob.m());
    me.evaluate(prob, x, s, t);
    me
}

/// Proximal centre and weight of the stage objective
/// `φ(x,s,t) = r(x,s,t) + (1/2σ)(|x − x_c|² + |s − s_c|² + (t − t_c)²)`.
///
/// With `regularize_xs = false` only the level is regularized,
/// `φ = r + (1/2σ)(t − t_c)²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProxCenter {
    pub x: Vec<f64>,
    pub s: Vec<f64>,
    pub t: f64,
    pub sigma: f64,
    pub regularize_xs: bool,
}

impl ProxCenter {
    pub fn new(x: Vec<f64>, s: Vec<f64>, t: f64, sigma: f64) -> Self {
        ProxCenter { x, s, t, sigma, regularize_xs: true }
    }

    /// Weight `1/σ` on the `(x, s)` distance, zero when only `t` is regularized.
    pub fn xs_weight(&self) -> f64 {
        if self.regularize_xs {
            1.0 / self.sigma
        } else {
            0.0
        }
    }
}

/// Stage objective value and gradient, plus the underlying merit evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct StageEval {
    pub merit: MeritEval,
    pub value: f64,
    pub grad_x: Vec<f64>,
    pub grad_s: Vec<f64>,
    pub grad_t: f64,
}

impl StageEval {
    pub fn zeros(n: usize, m: usize) -> Self {
        StageEval { merit: MeritEval::zeros(n, m), value: 0.0, grad_x: vec![0.0; n], grad_s: vec![0.0; m], grad_t: 0.0 }
    }

    pub fn evaluate(&mut self, prob: &ProblemData, x: &[f64], s: &[f64], t: f64, center: &ProxCenter) {
        self.merit.evaluate(prob, x, s, t);
        let w = 1.0 / center.sigma;
        let w_xs = center.xs_weight();
        let mut dist_sq = 0.0;
        for i in 0..x.len() {
            let d = x[i] - center.x[i];
            dist_sq += d * d;
            self.grad_x[i] = self.merit.grad_x[i] + w_xs * d;
        }
        for i in 0..s.len() {
            let d = s[i] - center.s[i];
            dist_sq += d * d;
            self.grad_s[i] = self.merit.grad_s[i] + w_xs * d;
        }
        let dt = t - center.t;
        self.grad_t = self.merit.grad_t + w * dt;
        self.value = self.merit.r_value + 0.5 * w_xs * dist_sq + 0.5 * w * dt * dt;
    }

    pub fn grad_norm(&self) -> f64 {
        (norm_sq(&self.grad_x) + norm_sq(&self.grad_s) + self.grad_t * self.grad_t).sqrt()
    }
}

pub fn eval_prox_stage(prob: &ProblemData, x: &[f64], s: &[f64], t: f64, center: &ProxCenter) -> StageEval {
    let mut se = StageEval::zeros(prob.n(), prob.m());
    se.evaluate(prob, x, s, t, center);
    se
}

/// Which subproblem a Hessian element is built for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Minimize `r(·, ·, t)` over `(x, s)`.
    Pa,
    /// Minimize the stage objective over `(x, s, t)`.
    Pb,
}

/// The two sparsity patterns of the base Hessian block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pattern {
    /// `rq > 0`: the `rq·Q` block is present.
    WithQ,
    WithoutQ,
}

/// A selected element of the generalized Hessian, split into a sparse base
/// part and a dense rank-one correction `ξq·uuᵀ`.
///
/// The base `(x, s)` block is
/// `[[AᵀA + rq_scale·Q + shift·I, Aᵀ], [A, diag(h_diag_s) + shift·I]]`
/// where `shift` is `1/σ` in [`Mode::Pb`] and zero otherwise. In `Pb` mode the
/// `t` coordinate contributes a decoupled `1/σ` diagonal entry.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianElement {
    pub mode: Mode,
    pub base_pattern: Pattern,
    /// `1 + Γ_ii`, each entry 1 or 2.
    pub h_diag_s: Vec<f64>,
    pub rq_scale: f64,
    /// Proximal diagonal shift on the `(x, s)` block: `1/σ` in `Pb` mode
    /// when `(x, s)` is regularized, zero otherwise.
    pub prox_shift: f64,
    /// The `(t, t)` entry `1/σ` in `Pb` mode (zero in `Pa` mode).
    pub t_shift: f64,
    pub rank1_active: bool,
    /// `(v, 0_m)` in `Pa` mode, `(v, 0_m, −1)` in `Pb` mode.
    pub rank1_vector: Vec<f64>,
}

impl HessianElement {
    pub fn new(n: usize, m: usize) -> Self {
        HessianElement {
            mode: Mode::Pa,
            base_pattern: Pattern::WithoutQ,
            h_diag_s: vec![1.0; m],
            rq_scale: 0.0,
            prox_shift: 0.0,
            t_shift: 0.0,
            rank1_active: false,
            rank1_vector: vec![0.0; n + m + 1],
        }
    }

    /// Selects in place. `rank1_vector` keeps length `n + m + 1`; in `Pa` mode
    /// only the first `n + m` entries are meaningful and the last is zero.
    pub fn select(&mut self, prob: &ProblemData, me: &MeritEval, s: &[f64], mode: Mode, sigma: f64) {
        let n = prob.n();
        let m = prob.m();
        self.mode = mode;
        self.rq_scale = me.rq;
        self.base_pattern = if me.rq > 0.0 { Pattern::WithQ } else { Pattern::WithoutQ };
        for i in 0..m {
            let active = prob.cone.is_zero_row(i) || s[i] <= 0.0;
            self.h_diag_s[i] = if active { 2.0 } else { 1.0 };
        }
        self.rank1_active = me.epigraph_active();
        self.rank1_vector[..n].copy_from_slice(&me.v);
        self.rank1_vector[n..n + m].fill(0.0);
        match mode {
            Mode::Pa => {
                self.prox_shift = 0.0;
                self.t_shift = 0.0;
                self.rank1_vector[n + m] = 0.0;
            }
            Mode::Pb => {
                self.prox_shift = 1.0 / sigma;
                self.t_shift = 1.0 / sigma;
                self.rank1_vector[n + m] = -1.0;
            }
        }
    }

    /// The rank-one vector restricted to the `(x, s)` block.
    pub fn rank1_xs(&self) -> &[f64] {
        &self.rank1_vector[..self.rank1_vector.len() - 1]
    }

    /// Dense copy of the full element (including the rank-one term and, in
    /// `Pb` mode, the `t` row/column) plus a diagonal shift `mu` on the
    /// `(x, s)` block. Intended for tests and small-problem diagnostics.
    pub fn to_dense(&self, prob: &ProblemData, mu: f64) -> Vec<Vec<f64>> {
        let n = prob.n();
        let m = prob.m();
        let dim = match self.mode {
            Mode::Pa => n + m,
            Mode::Pb => n + m + 1,
        };
        let mut h = vec![vec![0.0; dim]; dim];
        let a = prob.a.to_dense();
        let q = prob.quad.to_dense();
        for i in 0..n {
            for j in 0..n {
                let ata: f64 = (0..m).map(|k| a[k][i] * a[k][j]).sum();
                h[i][j] = ata + self.rq_scale * q[i][j];
            }
        }
        for k in 0..m {
            for j in 0..n {
                h[n + k][j] = a[k][j];
                h[j][n + k] = a[k][j];
            }
            h[n + k][n + k] = self.h_diag_s[k];
        }
        for (i, row) in h.iter_mut().enumerate().take(n + m) {
            row[i] += mu + self.prox_shift;
        }
        if self.mode == Mode::Pb {
            h[n + m][n + m] = self.t_shift;
        }
        if self.rank1_active {
            for i in 0..dim {
                for j in 0..dim {
                    h[i][j] += self.rank1_vector[i] * self.rank1_vector[j];
                }
            }
        }
        h
    }
}

pub fn select_hessian(
    prob: &ProblemData,
    me: &MeritEval,
    s: &[f64],
    mode: Mode,
    sigma: f64,
) -> HessianElement {
    let mut h = HessianElement::new(prob.n(), prob.m());
    h.select(prob, me, s, mode, sigma);
    h
}

#[inline]
pub(crate) fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{ConeSpec, CscMatrix};

    /// q = ½x², constraint x ≤ 2 written as x + s = 2, s ≥ 0.
    fn half_square_le_two() -> ProblemData {
        ProblemData::new(
            CscMatrix::symmetric_from_triplets(1, &[(0, 0, 1.0)]),
            vec![0.0],
            CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]),
            vec![2.0],
            ConeSpec::new(0, 1),
        )
        .unwrap()
    }

    #[test]
    fn feasible_point_below_level_has_zero_merit() {
        let me = eval_merit(&half_square_le_two(), &[0.0], &[2.0], 0.0);
        assert_eq!(me.r_value, 0.0);
        assert_eq!(me.grad_x, vec![0.0]);
        assert_eq!(me.grad_s, vec![0.0]);
        assert_eq!(me.grad_t, 0.0);
    }

    #[test]
    fn direct_formula_evaluation() {
        let me = eval_merit(&half_square_le_two(), &[3.0], &[-1.0], 0.0);
        assert_eq!(me.rq, 4.5);
        assert_eq!(me.eq_residual, vec![0.0]);
        assert_eq!(me.cone_residual, vec![-1.0]);
        assert_eq!(me.r_value, 10.625);
        assert_eq!(me.grad_t, -4.5);
        assert_eq!(me.r0_value, 0.5);
        // ∇x = Aᵀ·0 + rq·v = 4.5·3
        assert_eq!(me.grad_x, vec![13.5]);
        assert_eq!(me.grad_s, vec![-1.0]);
    }

    #[test]
    fn stage_with_center_at_point_equals_merit() {
        let prob = half_square_le_two();
        let (x, s, t) = ([3.0], [-1.0], 0.25);
        let center = ProxCenter::new(x.to_vec(), s.to_vec(), t, 3.0);
        let se = eval_prox_stage(&prob, &x, &s, t, &center);
        let me = eval_merit(&prob, &x, &s, t);
        assert_eq!(se.value, me.r_value);
        assert_eq!(se.grad_x, me.grad_x);
        assert_eq!(se.grad_s, me.grad_s);
        assert_eq!(se.grad_t, me.grad_t);
    }

    #[test]
    fn stage_tends_to_merit_for_huge_sigma() {
        let prob = half_square_le_two();
        let center = ProxCenter::new(vec![1.0], vec![0.0], 0.0, 1e12);
        // unit offset in every coordinate
        let se = eval_prox_stage(&prob, &[2.0], &[1.0], 1.0, &center);
        let me = eval_merit(&prob, &[2.0], &[1.0], 1.0);
        assert!((se.value - me.r_value).abs() <= 1e-9);
    }

    #[test]
    fn inactive_epigraph_uses_pattern_without_q() {
        let prob = half_square_le_two();
        let me = eval_merit(&prob, &[0.5], &[1.5], 1.0);
        let h = select_hessian(&prob, &me, &[1.5], Mode::Pa, 1.0);
        assert_eq!(h.base_pattern, Pattern::WithoutQ);
        assert!(!h.rank1_active);
    }

    #[test]
    fn slack_sign_selects_gamma() {
        let prob = ProblemData::new(
            CscMatrix::symmetric_from_triplets(1, &[]),
            vec![0.0],
            CscMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]),
            vec![0.0, 0.0],
            ConeSpec::new(0, 2),
        )
        .unwrap();
        let s = [-1.0, 3.0];
        let me = eval_merit(&prob, &[0.0], &s, 0.0);
        let h = select_hessian(&prob, &me, &s, Mode::Pa, 1.0);
        assert_eq!(h.h_diag_s, vec![2.0, 1.0]);
    }

    #[test]
    fn ties_resolve_to_active_branch() {
        let prob = half_square_le_two();
        // q(1) = 0.5 = t, s = 0
        let me = eval_merit(&prob, &[1.0], &[0.0], 0.5);
        assert_eq!(me.rq, 0.0);
        let h = select_hessian(&prob, &me, &[0.0], Mode::Pa, 1.0);
        assert!(h.rank1_active);
        assert_eq!(h.h_diag_s, vec![2.0]);
    }

    #[test]
    fn zero_cone_rows_always_active() {
        let prob = ProblemData::new(
            CscMatrix::symmetric_from_triplets(1, &[]),
            vec![0.0],
            CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]),
            vec![1.0],
            ConeSpec::new(1, 0),
        )
        .unwrap();
        let me = eval_merit(&prob, &[0.0], &[5.0], 0.0);
        assert_eq!(me.cone_residual, vec![5.0]);
        let h = select_hessian(&prob, &me, &[5.0], Mode::Pa, 1.0);
        assert_eq!(h.h_diag_s, vec![2.0]);
    }

    #[test]
    fn pb_rank1_vector_has_minus_one_tail() {
        let prob = half_square_le_two();
        let me = eval_merit(&prob, &[3.0], &[-1.0], 0.0);
        let h = select_hessian(&prob, &me, &[-1.0], Mode::Pb, 4.0);
        assert_eq!(h.rank1_vector, vec![3.0, 0.0, -1.0]);
        assert_eq!(h.prox_shift, 0.25);
        assert_eq!(h.base_pattern, Pattern::WithQ);
    }
}
