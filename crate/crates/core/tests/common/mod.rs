//! Independent oracles and instance generators shared by the integration
//! tests. Nothing here calls into the solver's numerics.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pvm::merit::eval_merit;
use pvm::{ConeSpec, CscMatrix, ProblemData};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Dense random problem with `p` zero rows and `m − p` nonnegative rows.
/// `Q = LLᵀ + shift·I` with `L` of rank `rank`.
pub fn random_problem(rng: &mut impl Rng, n: usize, p: usize, m: usize, rank: usize, shift: f64) -> ProblemData {
    let l: Vec<Vec<f64>> = (0..n).map(|_| (0..rank).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    let mut q = Vec::new();
    for i in 0..n {
        for j in i..n {
            let mut v: f64 = (0..rank).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                v += shift;
            }
            if v != 0.0 {
                q.push((i, j, v));
            }
        }
    }
    let lin: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut a = Vec::new();
    for r in 0..m {
        for c in 0..n {
            a.push((r, c, rng.gen_range(-1.0..1.0)));
        }
    }
    let b: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
    ProblemData::new(
        CscMatrix::symmetric_from_triplets(n, &q),
        lin,
        CscMatrix::from_triplets(m, n, &a),
        b,
        ConeSpec::new(p, m - p),
    )
    .unwrap()
}

/// Random strongly convex QP that is feasible by construction: `b` is set
/// from a random point with positive slack on the inequality rows.
pub fn random_feasible_qp(rng: &mut impl Rng, n: usize, p: usize, m: usize) -> ProblemData {
    let mut prob = random_problem(rng, n, p, m, n, 0.1);
    let x0: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = prob.a.to_dense();
    for r in 0..m {
        let ax: f64 = (0..n).map(|c| a[r][c] * x0[c]).sum();
        prob.b[r] = if r < p { ax } else { ax + rng.gen_range(0.0..1.0) };
    }
    prob
}

pub fn dense_q(prob: &ProblemData) -> DMatrix<f64> {
    let q = prob.quad.to_dense();
    DMatrix::from_fn(prob.n(), prob.n(), |i, j| q[i][j])
}

pub fn dense_a(prob: &ProblemData) -> DMatrix<f64> {
    let a = prob.a.to_dense();
    DMatrix::from_fn(prob.m(), prob.n(), |i, j| a[i][j])
}

pub fn objective(prob: &ProblemData, x: &DVector<f64>) -> f64 {
    let q = dense_q(prob);
    let p = DVector::from_column_slice(&prob.lin);
    0.5 * x.dot(&(&q * x)) + p.dot(x)
}

/// Optimal value and point of a strongly convex QP by enumerating working
/// sets of the inequality rows.
///
/// Each working set gives an equality-constrained QP solved through its
/// KKT system; every primal-feasible candidate is a feasible point, and the
/// optimum is among them, so the smallest candidate objective is optimal.
pub fn active_set_oracle(prob: &ProblemData) -> Option<(f64, DVector<f64>)> {
    let (n, m, p) = (prob.n(), prob.m(), prob.cone.zero);
    let q = dense_q(prob);
    let a = dense_a(prob);
    let lin = DVector::from_column_slice(&prob.lin);
    let b = DVector::from_column_slice(&prob.b);
    let n_ineq = m - p;
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << n_ineq) {
        let rows: Vec<usize> = (0..p).chain((0..n_ineq).filter(|k| mask & (1 << k) != 0).map(|k| p + k)).collect();
        if rows.len() > n {
            continue;
        }
        let w = rows.len();
        let mut kkt = DMatrix::zeros(n + w, n + w);
        kkt.view_mut((0, 0), (n, n)).copy_from(&q);
        let mut rhs = DVector::zeros(n + w);
        rhs.rows_mut(0, n).copy_from(&(-&lin));
        for (k, &r) in rows.iter().enumerate() {
            for c in 0..n {
                kkt[(n + k, c)] = a[(r, c)];
                kkt[(c, n + k)] = a[(r, c)];
            }
            rhs[n + k] = b[r];
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let x = sol.rows(0, n).into_owned();
        let ax = &a * &x;
        let feasible = (0..m).all(|r| if r < p { (ax[r] - b[r]).abs() <= 1e-8 } else { ax[r] <= b[r] + 1e-9 });
        if !feasible {
            continue;
        }
        let f = objective(prob, &x);
        if best.as_ref().map_or(true, |(bf, _)| f < *bf) {
            best = Some((f, x));
        }
    }
    best
}

/// Golden-section minimization of a unimodal function on `[lo, hi]`.
pub fn golden(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, iters: usize) -> (f64, f64) {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - g * (hi - lo);
    let mut d = lo + g * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - g * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + g * (hi - lo);
            fd = f(d);
        }
    }
    let x = 0.5 * (lo + hi);
    (x, f(x))
}

/// Grid search followed by golden-section refinement of a 1-D function.
pub fn grid_refine(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    let h = (hi - lo) / (points - 1) as f64;
    let (mut best_i, mut best_v) = (0, f64::INFINITY);
    for i in 0..points {
        let v = f(lo + h * i as f64);
        if v < best_v {
            best_i = i;
            best_v = v;
        }
    }
    let a = lo + h * best_i.saturating_sub(1) as f64;
    let b = (lo + h * (best_i + 1) as f64).min(hi);
    golden(f, a, b, 200)
}

/// `min_s r(x, s, t)` for a one-variable problem: the rows decouple in `s`,
/// each handled by its own grid + refinement search.
pub fn min_over_s(prob: &ProblemData, x: f64, t: f64) -> f64 {
    let m = prob.m();
    let a = prob.a.to_dense();
    let q = 0.5 * prob.quad.diag(0) * x * x + prob.lin[0] * x;
    let rq = (q - t).max(0.0);
    let mut total = 0.5 * rq * rq;
    for i in 0..m {
        let e0 = a[i][0] * x - prob.b[i];
        let zero_row = prob.cone.is_zero_row(i);
        let row = |s: f64| {
            let dist = if zero_row { s } else { s.min(0.0) };
            0.5 * (e0 + s) * (e0 + s) + 0.5 * dist * dist
        };
        let span = e0.abs() + 1.0;
        total += grid_refine(row, -span, span, 401).1;
    }
    total
}

/// `r*(t)` for a one-variable problem by nested grid searches.
pub fn value_function_1d(prob: &ProblemData, t: f64, x_lo: f64, x_hi: f64) -> f64 {
    grid_refine(|x| min_over_s(prob, x, t), x_lo, x_hi, 401).1
}

/// Central finite-difference gradient of `r` in `(x, s, t)`.
pub fn fd_gradient(prob: &ProblemData, x: &[f64], s: &[f64], t: f64, h: f64) -> Vec<f64> {
    let (n, m) = (prob.n(), prob.m());
    let mut z: Vec<f64> = x.iter().chain(s).copied().chain(std::iter::once(t)).collect();
    let r_at = |z: &[f64]| eval_merit(prob, &z[..n], &z[n..n + m], z[n + m]).r_value;
    let mut g = vec![0.0; n + m + 1];
    for i in 0..n + m + 1 {
        let orig = z[i];
        z[i] = orig + h;
        let fp = r_at(&z);
        z[i] = orig - h;
        let fm = r_at(&z);
        z[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    g
}

/// Central finite-difference Hessian of `r` in `(x, s)` from second
/// differences of function values.
pub fn fd_hessian_xs(prob: &ProblemData, x: &[f64], s: &[f64], t: f64, h: f64) -> Vec<Vec<f64>> {
    let (n, m) = (prob.n(), prob.m());
    let dim = n + m;
    let base: Vec<f64> = x.iter().chain(s).copied().collect();
    let r_at = |z: &[f64]| eval_merit(prob, &z[..n], &z[n..], t).r_value;
    let mut hess = vec![vec![0.0; dim]; dim];
    for i in 0..dim {
        for j in i..dim {
            let mut z = base.clone();
            let mut f = |di: f64, dj: f64| {
                z.copy_from_slice(&base);
                z[i] += di;
                z[j] += dj;
                r_at(&z)
            };
            let v = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// The two one-variable problems with `q = ½x²` and equality `x = 1`:
/// feasible with `x ≤ 2` (optimal cost ½) and infeasible with `x ≤ 0`.
pub fn toy(feasible: bool) -> ProblemData {
    let bound = if feasible { 2.0 } else { 0.0 };
    ProblemData::new(
        CscMatrix::symmetric_from_triplets(1, &[(0, 0, 1.0)]),
        vec![0.0],
        CscMatrix::from_triplets(2, 1, &[(0, 0, 1.0), (1, 0, 1.0)]),
        vec![1.0, bound],
        ConeSpec::new(1, 1),
    )
    .unwrap()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, &b| a.max(b.abs()))
}

/// Random problem and a point away from every kink of the merit function:
/// `|q(x) − t| ≥ 0.2` and `|s_i| ≥ 0.05` on nonnegative rows.
pub fn smooth_instance(rng: &mut impl Rng) -> (ProblemData, Vec<f64>, Vec<f64>, f64) {
    let n = rng.gen_range(1..=10);
    let m = rng.gen_range(1..=15);
    let p = rng.gen_range(0..=m);
    let rank = rng.gen_range(0..=n);
    let prob = random_problem(rng, n, p, m, rank, 0.0);
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let s: Vec<f64> = (0..m)
        .map(|i| loop {
            let v: f64 = rng.gen_range(-1.0..1.0);
            if i < p || v.abs() >= 0.05 {
                break v;
            }
        })
        .collect();
    let gap = rng.gen_range(0.2..1.0);
    let t = if rng.gen_bool(0.5) { prob.objective(&x) - gap } else { prob.objective(&x) + gap };
    (prob, x, s, t)
}

/// Worst relative gradient and Hessian discrepancies against finite
/// differences over `count` smooth instances.
pub fn finite_difference_errors(seed: u64, count: usize) -> (f64, f64) {
    use pvm::merit::{select_hessian, Mode};
    let mut rng = rng(seed);
    let (mut grad_err, mut hess_err) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let (prob, x, s, t) = smooth_instance(&mut rng);
        let (n, m) = (prob.n(), prob.m());
        let me = eval_merit(&prob, &x, &s, t);
        let analytic: Vec<f64> = me.grad_x.iter().chain(&me.grad_s).copied().chain(std::iter::once(me.grad_t)).collect();
        let fd = fd_gradient(&prob, &x, &s, t, 1e-6);
        let diff: Vec<f64> = analytic.iter().zip(&fd).map(|(a, b)| a - b).collect();
        grad_err = grad_err.max(max_abs(&diff) / max_abs(&analytic).max(1.0));

        let h = select_hessian(&prob, &me, &s, Mode::Pa, 1.0).to_dense(&prob, 0.0);
        let fd_h = fd_hessian_xs(&prob, &x, &s, t, 1e-4);
        let scale = h.iter().flatten().fold(1.0f64, |a, &b| a.max(b.abs()));
        for i in 0..n + m {
            for j in 0..n + m {
                hess_err = hess_err.max((h[i][j] - fd_h[i][j]).abs() / scale);
            }
        }
    }
    (grad_err, hess_err)
}

/// Error ratios `|z_{k+1} − z*| / |z_k − z*|` of the plain subproblem on a
/// strongly convex smooth instance: equality rows only and a level below
/// `min q`, so neither the epigraph term nor the cone term has a kink.
pub fn newton_error_ratios(seed: u64) -> Vec<f64> {
    use pvm::newton::NewtonEngine;
    let mut rng = rng(seed);
    let (n, m) = (6, 3);
    let prob = random_problem(&mut rng, n, m, m, n, 0.5);
    let q_min = {
        let q = dense_q(&prob);
        let lin = DVector::from_column_slice(&prob.lin);
        let x = q.clone().lu().solve(&(-&lin)).unwrap();
        objective(&prob, &x)
    };
    let t = q_min - 1.0;
    let mut engine = NewtonEngine::new(&prob, pvm::SolverSettings::default());
    engine.iterates = Some(Vec::new());
    let mut x: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut s = vec![0.5; m];
    engine.solve_pa(&mut x, &mut s, t, 1e-14, None).unwrap();
    let mut iterates = engine.iterates.take().unwrap();
    let last = iterates.pop().unwrap();
    let errors: Vec<f64> = iterates
        .iter()
        .map(|z| z.iter().zip(&last).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt())
        // Below this the distance is rounding noise, not Newton error.
        .filter(|&e| e > 1e-9)
        .collect();
    errors.windows(2).map(|w| w[1] / w[0]).collect()
}
