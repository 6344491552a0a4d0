//! Sparse symmetric factorization of the base Hessian block.
//!
//! Every Newton step factors
//!
//! ```text
//!   H̄ = [ AᵀA + rq·Q + (μ + 1/σ)·I    Aᵀ                     ]
//!       [ A                          I + Γ + (μ + 1/σ)·I    ]
//! ```
//!
//! whose structure takes one of two shapes depending on whether the `rq·Q`
//! block is present. Both shapes are analysed once in [`FactorContext::new`];
//! [`FactorContext::refactor`] and the solves afterwards reuse preallocated
//! storage. The dense rank-one epigraph term is handled by Sherman–Morrison.

mod ldl;
pub mod ordering;

use std::collections::BTreeMap;

use thiserror::Error;

pub use ldl::{LdlFactor, PivotBreakdown};

use crate::merit::{dot, HessianElement, Pattern};
use crate::problem::ProblemData;

/// Pivots at or below this value are a breakdown.
pub const MIN_PIVOT: f64 = 1e-14;
/// Sherman–Morrison denominators below this magnitude are a breakdown.
pub const MIN_SM_DENOMINATOR: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum LinalgError {
    #[error("pivot breakdown at column {column} (pivot {pivot:e})")]
    PivotBreakdown { column: usize, pivot: f64 },
    #[error("Sherman-Morrison breakdown (denominator {denominator:e})")]
    ShermanMorrisonBreakdown { denominator: f64 },
    #[error("no numeric factorization available")]
    NotFactored,
}

/// Symbolic analysis and numeric storage for one sparsity pattern.
#[derive(Debug, Clone)]
struct SymbolicPattern {
    /// `perm[new] = old`.
    perm: Vec<usize>,
    /// `iperm[old] = new`.
    iperm: Vec<usize>,
    ap: Vec<usize>,
    ai: Vec<usize>,
    ax: Vec<f64>,
    /// Upper-triangle coordinates in the original ordering.
    entries: Vec<(usize, usize)>,
    factor: LdlFactor,
    ata_pos: Vec<usize>,
    q_pos: Vec<usize>,
    a_pos: Vec<usize>,
    diag_pos: Vec<usize>,
}

impl SymbolicPattern {
    fn build(dim: usize, entries: Vec<(usize, usize)>) -> Self {
        let mut adj = vec![Vec::new(); dim];
        for &(i, j) in &entries {
            if i != j {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
        let perm = ordering::minimum_degree(&adj);
        let iperm = ordering::invert(&perm);

        let mut permuted: Vec<(usize, usize)> = entries
            .iter()
            .map(|&(i, j)| {
                let (a, b) = (iperm[i], iperm[j]);
                if a <= b {
                    (a, b)
                } else {
                    (b, a)
                }
            })
            .collect();
        // column-major order: sort by (col, row)
        permuted.sort_by_key(|&(r, c)| (c, r));
        permuted.dedup();

        let mut ap = vec![0usize; dim + 1];
        let mut ai = Vec::with_capacity(permuted.len());
        for &(r, c) in &permuted {
            ap[c + 1] += 1;
            ai.push(r);
        }
        for c in 0..dim {
            ap[c + 1] += ap[c];
        }
        let ax = vec![0.0; ai.len()];
        let factor = LdlFactor::symbolic(dim, &ap, &ai);
        SymbolicPattern {
            perm,
            iperm,
            ap,
            ai,
            ax,
            entries,
            factor,
            ata_pos: Vec::new(),
            q_pos: Vec::new(),
            a_pos: Vec::new(),
            diag_pos: Vec::new(),
        }
    }

    /// Position of original entry `(i, j)` in `ax`.
    fn position(&self, i: usize, j: usize) -> usize {
        let (a, b) = (self.iperm[i], self.iperm[j]);
        let (r, c) = if a <= b { (a, b) } else { (b, a) };
        let col = &self.ai[self.ap[c]..self.ap[c + 1]];
        self.ap[c] + col.binary_search(&r).expect("entry missing from symbolic pattern")
    }

    fn solve_in_place(&self, rhs: &mut [f64], work: &mut [f64]) {
        for (old, &new) in self.iperm.iter().enumerate() {
            work[new] = rhs[old];
        }
        self.factor.solve_in_place(work);
        for (old, &new) in self.iperm.iter().enumerate() {
            rhs[old] = work[new];
        }
    }
}

/// Called with `true` on entry to and `false` on exit from each numeric
/// routine ([`FactorContext::refactor`] and the solves).
pub type SectionProbe = fn(bool);

/// Symbolic and numeric factorization state for the two Hessian patterns.
#[derive(Debug, Clone)]
pub struct FactorContext {
    n: usize,
    m: usize,
    ata: Vec<(usize, usize, f64)>,
    q_vals: Vec<f64>,
    a_vals: Vec<f64>,
    with_q: SymbolicPattern,
    without_q: SymbolicPattern,
    active: Option<Pattern>,
    work: Vec<f64>,
    z: Vec<f64>,
    pub probe: Option<SectionProbe>,
}

impl FactorContext {
    /// Symbolic setup for both patterns of `prob`.
    pub fn new(prob: &ProblemData) -> Self {
        let n = prob.n();
        let m = prob.m();
        let dim = n + m;

        let ata = gram_upper(prob);
        let q_entries: Vec<(usize, usize)> = prob.quad.triplets().map(|(r, c, _)| (r, c)).collect();
        let a_entries: Vec<(usize, usize)> = prob.a.triplets().map(|(k, j, _)| (j, n + k)).collect();

        let mut base: Vec<(usize, usize)> = Vec::new();
        base.extend(ata.iter().map(|&(i, j, _)| (i, j)));
        base.extend(a_entries.iter().copied());
        base.extend((0..dim).map(|i| (i, i)));
        let mut with_q_entries = base.clone();
        with_q_entries.extend(q_entries.iter().copied());
        for list in [&mut base, &mut with_q_entries] {
            list.sort_unstable();
            list.dedup();
        }

        let mut without_q = SymbolicPattern::build(dim, base);
        let mut with_q = SymbolicPattern::build(dim, with_q_entries);
        for pat in [&mut without_q, &mut with_q] {
            pat.ata_pos = ata.iter().map(|&(i, j, _)| pat.position(i, j)).collect();
            pat.a_pos = a_entries.iter().map(|&(i, j)| pat.position(i, j)).collect();
            pat.diag_pos = (0..dim).map(|i| pat.position(i, i)).collect();
        }
        with_q.q_pos = q_entries.iter().map(|&(i, j)| with_q.position(i, j)).collect();

        FactorContext {
            n,
            m,
            ata,
            q_vals: prob.quad.values.clone(),
            a_vals: prob.a.values.clone(),
            with_q,
            without_q,
            active: None,
            work: vec![0.0; dim],
            z: vec![0.0; dim],
            probe: None,
        }
    }

    /// Dimension `n + m` of the factored block.
    pub fn dim(&self) -> usize {
        self.n + self.m
    }

    pub fn active_pattern(&self) -> Option<Pattern> {
        self.active
    }

    fn pattern(&self, p: Pattern) -> &SymbolicPattern {
        match p {
            Pattern::WithQ => &self.with_q,
            Pattern::WithoutQ => &self.without_q,
        }
    }

    /// Stored upper-triangle entries (original ordering) of a pattern.
    pub fn pattern_entries(&self, p: Pattern) -> &[(usize, usize)] {
        &self.pattern(p).entries
    }

    /// Nonzeros of the strictly lower factor for a pattern.
    pub fn nnz_l(&self, p: Pattern) -> usize {
        self.pattern(p).factor.nnz_l()
    }

    /// Nonzeros of the stored upper triangle for a pattern.
    pub fn nnz_k(&self, p: Pattern) -> usize {
        self.pattern(p).ai.len()
    }

    pub fn permutation(&self, p: Pattern) -> &[usize] {
        &self.pattern(p).perm
    }

    /// Numeric factorization of the base block of `helem` plus `mu·I`.
    ///
    /// The rank-one term is not included; see [`FactorContext::solve_rank1`].
    pub fn refactor(&mut self, helem: &HessianElement, mu: f64) -> Result<(), LinalgError> {
        self.enter();
        let res = self.refactor_inner(helem, mu);
        self.leave();
        res
    }

    fn refactor_inner(&mut self, helem: &HessianElement, mu: f64) -> Result<(), LinalgError> {
        let n = self.n;
        let pattern = helem.base_pattern;
        let pat = match pattern {
            Pattern::WithQ => &mut self.with_q,
            Pattern::WithoutQ => &mut self.without_q,
        };
        pat.ax.fill(0.0);
        for (k, &pos) in pat.ata_pos.iter().enumerate() {
            pat.ax[pos] += self.ata[k].2;
        }
        if pattern == Pattern::WithQ {
            for (k, &pos) in pat.q_pos.iter().enumerate() {
                pat.ax[pos] += helem.rq_scale * self.q_vals[k];
            }
        }
        for (k, &pos) in pat.a_pos.iter().enumerate() {
            pat.ax[pos] += self.a_vals[k];
        }
        let shift = mu + helem.prox_shift;
        for (i, &pos) in pat.diag_pos.iter().enumerate() {
            pat.ax[pos] += shift;
            if i >= n {
                pat.ax[pos] += helem.h_diag_s[i - n];
            }
        }
        match pat.factor.factor(&pat.ap, &pat.ai, &pat.ax, MIN_PIVOT) {
            Ok(()) => {
                self.active = Some(pattern);
                Ok(())
            }
            Err(b) => {
                self.active = None;
                Err(LinalgError::PivotBreakdown { column: pat.perm[b.column], pivot: b.pivot })
            }
        }
    }

    /// Solves `H̄ x = rhs` in place with the current factors.
    pub fn solve(&mut self, rhs: &mut [f64]) -> Result<(), LinalgError> {
        self.enter();
        let res = match self.active {
            Some(p) => {
                let pat = match p {
                    Pattern::WithQ => &self.with_q,
                    Pattern::WithoutQ => &self.without_q,
                };
                pat.solve_in_place(rhs, &mut self.work);
                Ok(())
            }
            None => Err(LinalgError::NotFactored),
        };
        self.leave();
        res
    }

    /// Writes `d` solving `(H̄ + ξ·uuᵀ) d = −g`.
    ///
    /// With `y = −H̄⁻¹g` and `z = H̄⁻¹u`,
    /// `d = y − ξ(uᵀy)/(1 + ξ·uᵀz)·z`.
    pub fn solve_rank1(&mut self, g: &[f64], xi: bool, u: &[f64], d: &mut [f64]) -> Result<(), LinalgError> {
        self.enter();
        let res = self.solve_rank1_inner(g, xi, u, d);
        self.leave();
        res
    }

    fn solve_rank1_inner(&mut self, g: &[f64], xi: bool, u: &[f64], d: &mut [f64]) -> Result<(), LinalgError> {
        let pat = match self.active {
            Some(Pattern::WithQ) => &self.with_q,
            Some(Pattern::WithoutQ) => &self.without_q,
            None => return Err(LinalgError::NotFactored),
        };
        for (di, gi) in d.iter_mut().zip(g) {
            *di = -gi;
        }
        pat.solve_in_place(d, &mut self.work);
        if !xi {
            return Ok(());
        }
        self.z.copy_from_slice(u);
        pat.solve_in_place(&mut self.z, &mut self.work);
        let denom = 1.0 + dot(u, &self.z);
        if !(denom.abs() >= MIN_SM_DENOMINATOR) {
            return Err(LinalgError::ShermanMorrisonBreakdown { denominator: denom });
        }
        let coef = dot(u, d) / denom;
        for (di, zi) in d.iter_mut().zip(&self.z) {
            *di -= coef * zi;
        }
        Ok(())
    }

    /// Bordered variant for the stage Hessian
    /// `blockdiag(H̄, shift) + ξ·wwᵀ` with `w = (u_xs, u_t)`.
    ///
    /// The `t` coordinate only couples through the rank-one term, so the base
    /// inverse is `blockdiag(H̄⁻¹, 1/shift)`. Writes the `(x, s)` part of the
    /// step to `d_xs` and returns its `t` component.
    #[allow(clippy::too_many_arguments)]
    pub fn solve_rank1_bordered(
        &mut self,
        g_xs: &[f64],
        g_t: f64,
        shift: f64,
        xi: bool,
        u_xs: &[f64],
        u_t: f64,
        d_xs: &mut [f64],
    ) -> Result<f64, LinalgError> {
        self.enter();
        let res = self.solve_bordered_inner(g_xs, g_t, shift, xi, u_xs, u_t, d_xs);
        self.leave();
        res
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_bordered_inner(
        &mut self,
        g_xs: &[f64],
        g_t: f64,
        shift: f64,
        xi: bool,
        u_xs: &[f64],
        u_t: f64,
        d_xs: &mut [f64],
    ) -> Result<f64, LinalgError> {
        let pat = match self.active {
            Some(Pattern::WithQ) => &self.with_q,
            Some(Pattern::WithoutQ) => &self.without_q,
            None => return Err(LinalgError::NotFactored),
        };
        for (di, gi) in d_xs.iter_mut().zip(g_xs) {
            *di = -gi;
        }
        pat.solve_in_place(d_xs, &mut self.work);
        let y_t = -g_t / shift;
        if !xi {
            return Ok(y_t);
        }
        self.z.copy_from_slice(u_xs);
        pat.solve_in_place(&mut self.z, &mut self.work);
        let z_t = u_t / shift;
        let denom = 1.0 + dot(u_xs, &self.z) + u_t * z_t;
        if !(denom.abs() >= MIN_SM_DENOMINATOR) {
            return Err(LinalgError::ShermanMorrisonBreakdown { denominator: denom });
        }
        let coef = (dot(u_xs, d_xs) + u_t * y_t) / denom;
        for (di, zi) in d_xs.iter_mut().zip(&self.z) {
            *di -= coef * zi;
        }
        Ok(y_t - coef * z_t)
    }

    #[inline]
    fn enter(&self) {
        if let Some(p) = self.probe {
            p(true);
        }
    }

    #[inline]
    fn leave(&self) {
        if let Some(p) = self.probe {
            p(false);
        }
    }
}

/// Upper triangle of `AᵀA` as sorted `(i, j, value)` with `i ≤ j`.
fn gram_upper(prob: &ProblemData) -> Vec<(usize, usize, f64)> {
    let m = prob.m();
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
    for (k, j, v) in prob.a.triplets() {
        rows[k].push((j, v));
    }
    let mut acc: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for row in &rows {
        for (p, &(i, vi)) in row.iter().enumerate() {
            for &(j, vj) in &row[p..] {
                let key = if i <= j { (i, j) } else { (j, i) };
                *acc.entry(key).or_insert(0.0) += vi * vj;
            }
        }
    }
    acc.into_iter().map(|((i, j), v)| (i, j, v)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merit::{eval_merit, select_hessian, Mode};
    use crate::problem::{ConeSpec, CscMatrix};

    fn scalar_problem(q: f64) -> ProblemData {
        ProblemData::new(
            CscMatrix::symmetric_from_triplets(1, &[(0, 0, q)]),
            vec![0.0],
            CscMatrix::from_triplets(1, 1, &[(0, 0, 1.0)]),
            vec![1.0],
            ConeSpec::new(0, 1),
        )
        .unwrap()
    }

    #[test]
    fn two_by_two_identity_dominated() {
        // A = I₁, Q = 0, rq = 0, s < 0 (cone term active): [[1, 1], [1, 2]]
        let prob = scalar_problem(0.0);
        let mut ctx = FactorContext::new(&prob);
        let me = eval_merit(&prob, &[0.0], &[-1.0], 1.0);
        let h = select_hessian(&prob, &me, &[-1.0], Mode::Pa, 1.0);
        assert_eq!(h.base_pattern, Pattern::WithoutQ);
        ctx.refactor(&h, 0.0).unwrap();
        let mut rhs = vec![1.0, 0.0];
        ctx.solve(&mut rhs).unwrap();
        assert!((rhs[0] - 2.0).abs() < 1e-14 && (rhs[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn empty_column_needs_regularization() {
        // second variable appears nowhere: zero row/column before μ
        let prob = ProblemData::new(
            CscMatrix::symmetric_from_triplets(2, &[]),
            vec![0.0, 0.0],
            CscMatrix::from_triplets(1, 2, &[(0, 0, 1.0)]),
            vec![1.0],
            ConeSpec::new(0, 1),
        )
        .unwrap();
        let mut ctx = FactorContext::new(&prob);
        let me = eval_merit(&prob, &[0.0, 0.0], &[1.0], 1.0);
        let h = select_hessian(&prob, &me, &[1.0], Mode::Pa, 1.0);
        assert!(matches!(ctx.refactor(&h, 0.0), Err(LinalgError::PivotBreakdown { .. })));
        ctx.refactor(&h, 1e-8).unwrap();
    }

    #[test]
    fn sherman_morrison_hand_case() {
        // n = m = 1 with A empty; zeroing the s diagonal and taking μ = 1
        // gives H̄ = I₂ exactly
        let prob = ProblemData::new(
            CscMatrix::symmetric_from_triplets(1, &[]),
            vec![0.0],
            CscMatrix::zeros(1, 1),
            vec![0.0],
            ConeSpec::new(0, 1),
        )
        .unwrap();
        let mut ctx = FactorContext::new(&prob);
        let me = eval_merit(&prob, &[0.0], &[1.0], 1.0);
        let mut h = select_hessian(&prob, &me, &[1.0], Mode::Pa, 1.0);
        h.h_diag_s[0] = 0.0;
        ctx.refactor(&h, 1.0).unwrap();

        let mut d = vec![0.0; 2];
        ctx.solve_rank1(&[1.0, 1.0], true, &[1.0, 0.0], &mut d).unwrap();
        assert_eq!(d, vec![-0.5, -1.0]);

        ctx.solve_rank1(&[1.0, 1.0], false, &[1.0, 0.0], &mut d).unwrap();
        assert_eq!(d, vec![-1.0, -1.0]);
    }

    #[test]
    fn without_q_pattern_is_subset() {
        let prob = ProblemData::new(
            CscMatrix::symmetric_from_triplets(3, &[(0, 0, 1.0), (0, 2, 0.5), (2, 2, 1.0)]),
            vec![0.0; 3],
            CscMatrix::from_triplets(2, 3, &[(0, 0, 1.0), (0, 1, 1.0), (1, 1, 2.0)]),
            vec![1.0, 1.0],
            ConeSpec::new(1, 1),
        )
        .unwrap();
        let ctx = FactorContext::new(&prob);
        let with_q = ctx.pattern_entries(Pattern::WithQ);
        for e in ctx.pattern_entries(Pattern::WithoutQ) {
            assert!(with_q.binary_search(e).is_ok(), "{e:?}");
        }
        assert!(with_q.contains(&(0, 2)));
        assert!(!ctx.pattern_entries(Pattern::WithoutQ).contains(&(0, 2)));
    }
}
