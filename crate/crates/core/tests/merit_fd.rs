mod common;

use common::*;
use pvm::merit::{eval_prox_stage, ProxCenter};

#[test]
fn gradients_and_hessians_match_finite_differences() {
    let (grad_err, hess_err) = finite_difference_errors(11, 100);
    assert!(grad_err <= 1e-5, "gradient relative error {grad_err:e}");
    assert!(hess_err <= 1e-4, "Hessian relative error {hess_err:e}");
}

#[test]
fn stage_gradient_matches_finite_differences() {
    let mut rng = rng(12);
    for _ in 0..30 {
        let (prob, x, s, t) = smooth_instance(&mut rng);
        let (n, m) = (prob.n(), prob.m());
        let center = ProxCenter::new(vec![0.3; n], vec![-0.2; m], t - 0.5, 2.0);
        let stage = eval_prox_stage(&prob, &x, &s, t, &center);
        let mut z: Vec<f64> = x.iter().chain(&s).copied().chain(std::iter::once(t)).collect();
        let h = 1e-6;
        for i in 0..n + m + 1 {
            let orig = z[i];
            let mut at = |v: f64| {
                z[i] = v;
                eval_prox_stage(&prob, &z[..n], &z[n..n + m], z[n + m], &center).value
            };
            let fd = (at(orig + h) - at(orig - h)) / (2.0 * h);
            z[i] = orig;
            let analytic = if i < n {
                stage.grad_x[i]
            } else if i < n + m {
                stage.grad_s[i - n]
            } else {
                stage.grad_t
            };
            assert!((analytic - fd).abs() <= 1e-5 * analytic.abs().max(1.0), "component {i}: {analytic} vs {fd}");
        }
    }
}
