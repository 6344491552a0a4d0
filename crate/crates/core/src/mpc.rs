//! Linear-quadratic MPC test family.
//!
//! ```text
//! min  Σᵢ zᵢᵀ Q zᵢ + uᵢᵀ R uᵢ
//! s.t. z₁ = A z₀ + B u₁,  zᵢ₊₁ = A zᵢ + B uᵢ₊₁,
//!      |uᵢ|∞ ≤ u_max,  |zᵢ|∞ ≤ z_max,          i = 1..H
//! ```
//!
//! The decision vector is `x = (z₁, …, z_H, u₁, …, u_H)`; `z₀` is data and
//! enters `b`. Dynamics are zero-cone rows, each box bound is a pair of
//! nonnegative-cone rows (`+xⱼ ≤ bound`, `−xⱼ ≤ bound`).

use crate::error::{Error, Result};
use crate::problem::{ConeSpec, CscMatrix, ProblemData};
use crate::settings::SolverSettings;
use crate::solver::{SolveStatus, Solver};

/// Optimal value the default instance is scaled to in the benchmarks.
pub const SCALED_T_STAR: f64 = 0.1819;

#[derive(Debug, Clone, PartialEq)]
pub struct MpcSpec {
    pub horizon: usize,
    pub state_dim: usize,
    pub input_dim: usize,
    pub q_weight: f64,
    pub r_weight: f64,
    pub u_max: f64,
    pub z_max: f64,
    pub z0_hat: Vec<f64>,
    /// Row-major `state_dim × state_dim`.
    pub a_sys: Vec<Vec<f64>>,
    /// Row-major `state_dim × input_dim`.
    pub b_sys: Vec<Vec<f64>>,
    pub objective_scale: f64,
}

impl Default for MpcSpec {
    fn default() -> Self {
        MpcSpec {
            horizon: 20,
            state_dim: 3,
            input_dim: 3,
            q_weight: 100.0,
            r_weight: 0.01,
            u_max: 0.01,
            z_max: 1.0,
            z0_hat: vec![0.5; 3],
            a_sys: vec![vec![1.01, 0.01, 0.0], vec![0.01, 1.01, 0.01], vec![0.0, 0.01, 1.01]],
            b_sys: vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            objective_scale: 1.0,
        }
    }
}

impl MpcSpec {
    pub fn validate(&self) -> Result<()> {
        let (nz, nu) = (self.state_dim, self.input_dim);
        let bad = |msg: &str| Err(Error::Settings(format!("invalid MPC spec: {msg}")));
        if self.horizon == 0 || nz == 0 {
            return bad("horizon and state dimension must be positive");
        }
        if self.z0_hat.len() != nz {
            return bad("z0_hat length differs from state dimension");
        }
        if self.a_sys.len() != nz || self.a_sys.iter().any(|r| r.len() != nz) {
            return bad("A_sys must be state_dim × state_dim");
        }
        if self.b_sys.len() != nz || self.b_sys.iter().any(|r| r.len() != nu) {
            return bad("B_sys must be state_dim × input_dim");
        }
        if !(self.objective_scale > 0.0) || !self.q_weight.is_finite() || !self.r_weight.is_finite() {
            return bad("weights must be finite and the objective scale positive");
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.horizon * (self.state_dim + self.input_dim)
    }

    /// Offset of `z_i` (1-based `i`) in `x`.
    pub fn z_offset(&self, i: usize) -> usize {
        (i - 1) * self.state_dim
    }

    /// Offset of `u_i` (1-based `i`) in `x`.
    pub fn u_offset(&self, i: usize) -> usize {
        self.horizon * self.state_dim + (i - 1) * self.input_dim
    }
}

/// Builds the QP for `spec`.
///
/// # Panics
/// If `spec` is invalid; call [`MpcSpec::validate`] for a recoverable check.
pub fn build_mpc(spec: &MpcSpec) -> ProblemData {
    spec.validate().expect("invalid MPC spec");
    let (h, nz, nu) = (spec.horizon, spec.state_dim, spec.input_dim);
    let n = spec.n();

    let mut q = Vec::with_capacity(n);
    for i in 1..=h {
        for r in 0..nz {
            q.push((spec.z_offset(i) + r, spec.z_offset(i) + r, 2.0 * spec.q_weight * spec.objective_scale));
        }
    }
    for i in 1..=h {
        for r in 0..nu {
            q.push((spec.u_offset(i) + r, spec.u_offset(i) + r, 2.0 * spec.r_weight * spec.objective_scale));
        }
    }

    let zero_rows = h * nz;
    let mut a = Vec::new();
    let mut b = vec![0.0; zero_rows];
    for i in 1..=h {
        for r in 0..nz {
            let row = (i - 1) * nz + r;
            a.push((row, spec.z_offset(i) + r, 1.0));
            if i == 1 {
                b[row] = (0..nz).map(|c| spec.a_sys[r][c] * spec.z0_hat[c]).sum();
            } else {
                for c in 0..nz {
                    if spec.a_sys[r][c] != 0.0 {
                        a.push((row, spec.z_offset(i - 1) + c, -spec.a_sys[r][c]));
                    }
                }
            }
            for c in 0..nu {
                if spec.b_sys[r][c] != 0.0 {
                    a.push((row, spec.u_offset(i) + c, -spec.b_sys[r][c]));
                }
            }
        }
    }
    for j in 0..n {
        let bound = if j < h * nz { spec.z_max } else { spec.u_max };
        let row = zero_rows + 2 * j;
        a.push((row, j, 1.0));
        a.push((row + 1, j, -1.0));
        b.push(bound);
        b.push(bound);
    }
    let m = zero_rows + 2 * n;

    let mut prob = ProblemData::new(
        CscMatrix::symmetric_from_triplets(n, &q),
        vec![0.0; n],
        CscMatrix::from_triplets(m, n, &a),
        b,
        ConeSpec::new(zero_rows, 2 * n),
    )
    .expect("MPC builder produced an invalid problem");
    prob.name = Some(format!("mpc_h{}_umax{}_zmax{}", h, spec.u_max, spec.z_max));
    prob
}

/// `u_max` values of the infeasible family.
pub fn infeasible_u_max_values() -> Vec<f64> {
    (1..=9).map(|k| -0.01 * k as f64).collect()
}

/// `z_max` values of the infeasible family.
pub fn infeasible_z_max_values() -> Vec<f64> {
    (0..8).map(|k| 0.1 + 0.05 * k as f64).collect()
}

/// The 72 infeasible instances: `z₀ = (1, 1, 1)`, negative `u_max` and a
/// grid of `z_max`, with objective weights scaled by `objective_scale`.
pub fn build_infeasible_family(objective_scale: f64) -> Vec<(MpcSpec, ProblemData)> {
    let mut out = Vec::with_capacity(72);
    for u_max in infeasible_u_max_values() {
        for z_max in infeasible_z_max_values() {
            let spec = MpcSpec { u_max, z_max, z0_hat: vec![1.0; 3], objective_scale, ..MpcSpec::default() };
            let prob = build_mpc(&spec);
            out.push((spec, prob));
        }
    }
    out
}

/// Settings for reference solves used to calibrate or compare.
pub fn reference_settings() -> SolverSettings {
    SolverSettings { eps_opt: 1e-8, eps_con: 1e-10, eps_final: 1e-11, max_outer: 100, ..SolverSettings::default() }
}

/// Multiplies `Q` and `p` so the optimal value becomes `target`.
///
/// Returns the scaled problem and the factor applied. The optimal cost is
/// homogeneous in `(Q, p)`, so the factor is `target / t*` from a
/// high-accuracy solve. That solve is run on a pre-normalized copy
/// (`Q` diagonal at most one), whose value function is far better
/// conditioned, and repeated once on the rescaled problem as a check.
pub fn scale_objective(prob: &ProblemData, target: f64) -> Result<(ProblemData, f64)> {
    if !(target > 0.0) {
        return Err(Error::Settings(format!("objective scaling target must be positive, got {target}")));
    }
    let max_diag = (0..prob.n()).map(|i| prob.quad.diag(i).abs()).fold(0.0, f64::max);
    let mut factor = if max_diag > 0.0 { 1.0 / max_diag } else { 1.0 };
    for _ in 0..3 {
        let scaled = scaled_copy(prob, factor);
        let report = Solver::new(&scaled, reference_settings())?.solve(None)?;
        match report.status {
            SolveStatus::Optimal => {}
            SolveStatus::Infeasible => {
                return Err(Error::Infeasible { plateau: report.m_estimate.unwrap_or(report.r_final) })
            }
            other => {
                return Err(Error::SolverFailure(format!("reference solve ended with {}", other.as_str())))
            }
        }
        let t_star = report.objective;
        if !(t_star > 0.0) {
            return Err(Error::Settings(format!("objective scaling needs a positive optimal value, got {t_star}")));
        }
        let ratio = target / t_star;
        factor *= ratio;
        if (ratio - 1.0).abs() <= 1e-9 {
            break;
        }
    }
    Ok((scaled_copy(prob, factor), factor))
}

fn scaled_copy(prob: &ProblemData, factor: f64) -> ProblemData {
    let mut scaled = prob.clone();
    scaled.quad.scale(factor);
    scaled.lin.iter_mut().for_each(|p| *p *= factor);
    scaled
}

/// `spec` with its objective scaled so the optimal value is [`SCALED_T_STAR`].
pub fn scaled(spec: MpcSpec) -> Result<(MpcSpec, ProblemData)> {
    let base = MpcSpec { objective_scale: 1.0, ..spec };
    let (_, factor) = scale_objective(&build_mpc(&base), SCALED_T_STAR)?;
    let spec = MpcSpec { objective_scale: factor, ..base };
    let prob = build_mpc(&spec);
    Ok((spec, prob))
}

/// The default instance scaled to [`SCALED_T_STAR`].
pub fn scaled_default() -> Result<(MpcSpec, ProblemData)> {
    scaled(MpcSpec::default())
}
