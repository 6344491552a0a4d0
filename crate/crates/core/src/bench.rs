//! Benchmark experiments on the MPC family: warm-start grid, feasibility
//! recovery above the optimal cost, and the infeasible family.
//!
//! Every random perturbation comes from a ChaCha stream keyed by
//! `(seed, cell index)`, so results do not depend on execution order.

use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::mpc::{self, MpcSpec, SCALED_T_STAR};
use crate::problem::ProblemData;
use crate::settings::SolverSettings;
use crate::solver::{SolveReport, SolveStatus, Solver, WarmStart};

/// Newton counts reported by interior-point peers on the cold MPC instance
/// (Clarabel, ECOS, Hypatia); context only, the solvers are not run.
pub const PEER_COLD_COUNTS: [(&str, usize); 3] = [("Clarabel", 9), ("ECOS", 14), ("Hypatia", 16)];

pub const DEFAULT_SEED: u64 = 20240917;

/// Axes of a benchmark grid. `None` in `epsilon_values` is a cold start.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentGrid {
    pub t0_values: Vec<f64>,
    pub epsilon_values: Vec<Option<f64>>,
    pub trials_per_cell: usize,
    pub rng_seed: u64,
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            t0_values: vec![0.18, 0.13, 0.09, 0.06, 0.0],
            epsilon_values: vec![Some(1e-6), Some(1e-5), Some(1e-4), Some(1e-3), Some(1e-2), None],
            trials_per_cell: 11,
            rng_seed: DEFAULT_SEED,
        }
    }
}

impl ExperimentGrid {
    /// Grid for the recovery experiment: 20 levels `t*·1.02^k` above the
    /// optimum and perturbations 0.1, 0.01, 0.001 plus a cold start.
    pub fn recovery(t_star: f64) -> Self {
        ExperimentGrid {
            t0_values: (1..=20).map(|k| t_star * 1.02f64.powi(k)).collect(),
            epsilon_values: vec![Some(0.1), Some(0.01), Some(0.001), None],
            trials_per_cell: 11,
            rng_seed: DEFAULT_SEED,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials_per_cell == 0 || self.trials_per_cell % 2 == 0 {
            return Err(crate::Error::Settings("trials_per_cell must be odd".into()));
        }
        Ok(())
    }
}

/// Median of integer samples (upper median for even counts).
pub fn median(values: &[usize]) -> usize {
    let mut v = values.to_vec();
    v.sort_unstable();
    v[v.len() / 2]
}

/// `x* + U[−ε, ε]ⁿ` drawn from `rng`.
pub fn perturb(x_star: &[f64], eps: f64, rng: &mut impl Rng) -> Vec<f64> {
    x_star.iter().map(|&xi| xi + rng.gen_range(-eps..=eps)).collect()
}

/// RNG stream for one cell.
pub fn cell_rng(seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    rng
}

/// Optimal solution of the benchmark instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub spec: MpcSpec,
    pub prob: ProblemData,
    pub x_star: Vec<f64>,
    pub t_star: f64,
}

/// Builds the scaled default MPC instance and its high-accuracy solution.
pub fn baseline() -> Result<Baseline> {
    baseline_for(MpcSpec::default())
}

/// Scaled instance for `spec` and its high-accuracy solution.
pub fn baseline_for(spec: MpcSpec) -> Result<Baseline> {
    let (spec, prob) = mpc::scaled(spec)?;
    let report = Solver::new(&prob, mpc::reference_settings())?.solve(None)?;
    if report.status != SolveStatus::Optimal {
        return Err(crate::Error::SolverFailure(format!(
            "baseline reference solve ended with {}",
            report.status.as_str()
        )));
    }
    Ok(Baseline { spec, prob, x_star: report.x_final, t_star: report.objective })
}

/// Aggregated result of one grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub t0: f64,
    pub epsilon: Option<f64>,
    pub newton: Vec<usize>,
    pub statuses: Vec<SolveStatus>,
    pub wall_seconds: f64,
}

impl CellResult {
    pub fn median_newton(&self) -> usize {
        median(&self.newton)
    }

    /// Trials whose status is not in `accepted`.
    pub fn failures(&self, accepted: &[SolveStatus]) -> usize {
        self.statuses.iter().filter(|s| !accepted.contains(s)).count()
    }
}

fn run_cells(
    prob: &ProblemData,
    x_star: &[f64],
    grid: &ExperimentGrid,
    settings: &SolverSettings,
    mut run: impl FnMut(&mut Solver, f64, Option<&WarmStart>) -> Result<SolveReport>,
) -> Result<Vec<CellResult>> {
    grid.validate()?;
    let mut solver = Solver::new(prob, settings.clone())?;
    let mut out = Vec::new();
    let mut cell = 0;
    for &eps in &grid.epsilon_values {
        for &t0 in &grid.t0_values {
            let mut rng = cell_rng(grid.rng_seed, cell);
            cell += 1;
            let start = Instant::now();
            let trials = if eps.is_some() { grid.trials_per_cell } else { 1 };
            let mut newton = Vec::with_capacity(trials);
            let mut statuses = Vec::with_capacity(trials);
            for _ in 0..trials {
                let warm = eps.map(|e| WarmStart::primal(perturb(x_star, e, &mut rng)));
                let report = run(&mut solver, t0, warm.as_ref())?;
                newton.push(report.cumulative_newton);
                statuses.push(report.status);
            }
            out.push(CellResult { t0, epsilon: eps, newton, statuses, wall_seconds: start.elapsed().as_secs_f64() });
        }
    }
    Ok(out)
}

/// Warm-start grid: for each `(t0, ε)` solve from `x* + U[−ε, ε]` with
/// `s0 = b − A x0`. Cold cells start from the origin and run once (they
/// are deterministic).
pub fn run_warmstart(
    prob: &ProblemData,
    x_star: &[f64],
    grid: &ExperimentGrid,
    settings: &SolverSettings,
) -> Result<Vec<CellResult>> {
    run_cells(prob, x_star, grid, settings, |solver, t0, warm| match warm {
        Some(w) => solver.solve(Some(&w.clone().with_t(t0))),
        None => solver.solve(Some(&WarmStart::primal(vec![0.0; prob.n()]).with_t(t0))),
    })
}

/// Recovery grid: `recover_feasible` at each level `t > t*`.
pub fn run_recover(
    prob: &ProblemData,
    x_star: &[f64],
    grid: &ExperimentGrid,
    settings: &SolverSettings,
) -> Result<Vec<CellResult>> {
    run_cells(prob, x_star, grid, settings, |solver, t, warm| solver.recover_feasible(t, warm))
}

/// One member of the infeasible family.
#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibleRow {
    pub u_max: f64,
    pub z_max: f64,
    pub status: SolveStatus,
    pub newton: usize,
    pub m_estimate: Option<f64>,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InfeasibleSummary {
    pub rows: Vec<InfeasibleRow>,
    pub objective_scale: f64,
}

impl InfeasibleSummary {
    /// `(min, max, median)` cumulative Newton counts.
    pub fn stats(&self) -> (usize, usize, usize) {
        let counts: Vec<usize> = self.rows.iter().map(|r| r.newton).collect();
        (*counts.iter().min().unwrap_or(&0), *counts.iter().max().unwrap_or(&0), median(&counts))
    }

    pub fn misclassified(&self) -> usize {
        self.rows.iter().filter(|r| r.status != SolveStatus::Infeasible).count()
    }
}

/// Cold-starts all 72 infeasible instances, objective scaled like the
/// benchmark baseline.
pub fn run_infeasible(objective_scale: f64, settings: &SolverSettings) -> Result<InfeasibleSummary> {
    let mut rows = Vec::new();
    for (spec, prob) in mpc::build_infeasible_family(objective_scale) {
        let start = Instant::now();
        let report = Solver::new(&prob, settings.clone())?.solve(None)?;
        rows.push(InfeasibleRow {
            u_max: spec.u_max,
            z_max: spec.z_max,
            status: report.status,
            newton: report.cumulative_newton,
            m_estimate: report.m_estimate,
            wall_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(InfeasibleSummary { rows, objective_scale })
}

/// Number in the CSV convention (17 significant digits).
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_eps(e: Option<f64>) -> String {
    e.map(fmt_num).unwrap_or_else(|| "cold".to_string())
}

/// `#`-prefixed provenance lines shared by all bench CSVs.
pub fn csv_header(kind: &str, seed: u64, settings: &SolverSettings, extra: &[(&str, String)]) -> String {
    let mut h = String::new();
    let _ = writeln!(h, "# pvm {} bench {}", crate::VERSION, kind);
    let _ = writeln!(h, "# seed={seed}");
    let _ = writeln!(h, "# settings={}", serde_json::to_string(settings).expect("settings serialize"));
    for (k, v) in extra {
        let _ = writeln!(h, "# {k}={v}");
    }
    h
}

/// CSV for warm-start or recovery cells. The `wall_seconds` column is the
/// only field that varies between runs with the same seed.
pub fn cells_csv(kind: &str, cells: &[CellResult], grid: &ExperimentGrid, settings: &SolverSettings, t_star: f64) -> String {
    let mut out = csv_header(kind, grid.rng_seed, settings, &[("t_star", fmt_num(t_star))]);
    out.push_str("t0,epsilon,median_newton,min_newton,max_newton,trials,not_converged,seed,wall_seconds\n");
    let accepted = [SolveStatus::Optimal, SolveStatus::SuboptimalFeasible];
    for c in cells {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            fmt_num(c.t0),
            fmt_eps(c.epsilon),
            c.median_newton(),
            c.newton.iter().min().unwrap_or(&0),
            c.newton.iter().max().unwrap_or(&0),
            c.newton.len(),
            c.failures(&accepted),
            grid.rng_seed,
            fmt_num(c.wall_seconds)
        );
    }
    out
}

pub fn infeasible_csv(summary: &InfeasibleSummary, settings: &SolverSettings) -> String {
    let mut out =
        csv_header("infeasible", 0, settings, &[("objective_scale", fmt_num(summary.objective_scale))]);
    out.push_str("u_max,z_max,status,newton,m_estimate,wall_seconds\n");
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fmt_num(r.u_max),
            fmt_num(r.z_max),
            r.status.as_str(),
            r.newton,
            r.m_estimate.map(fmt_num).unwrap_or_default(),
            fmt_num(r.wall_seconds)
        );
    }
    out
}

/// Rows of a CSV body with the trailing `wall_seconds` column dropped, for
/// reproducibility comparisons.
pub fn csv_body_without_timing(csv: &str) -> Vec<String> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| match l.rfind(',') {
            Some(i) => l[..i].to_string(),
            None => l.to_string(),
        })
        .collect()
}

/// Text table of cell medians, `t0` across and `ε` down.
pub fn median_table(cells: &[CellResult], grid: &ExperimentGrid) -> String {
    let mut out = String::from("epsilon \\ t0");
    for t in &grid.t0_values {
        let _ = write!(out, "\t{t:.4}");
    }
    out.push('\n');
    for (row, eps) in grid.epsilon_values.iter().enumerate() {
        out.push_str(&eps.map(|e| format!("{e:.0e}")).unwrap_or_else(|| "cold".into()));
        for col in 0..grid.t0_values.len() {
            let _ = write!(out, "\t{}", cells[row * grid.t0_values.len() + col].median_newton());
        }
        out.push('\n');
    }
    out
}

/// Default benchmark target for the scaled instance.
pub fn scaled_t_star() -> f64 {
    SCALED_T_STAR
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_sample() {
        assert_eq!(median(&[5, 1, 3]), 3);
        assert_eq!(median(&[2, 2, 9, 1, 7]), 2);
    }

    #[test]
    fn perturbation_stays_in_box_and_is_reproducible() {
        let x = vec![1.0; 50];
        let a = perturb(&x, 1e-3, &mut cell_rng(7, 3));
        let b = perturb(&x, 1e-3, &mut cell_rng(7, 3));
        let c = perturb(&x, 1e-3, &mut cell_rng(7, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(a.iter().all(|v| (v - 1.0).abs() <= 1e-3));
    }

    #[test]
    fn number_format_has_17_significant_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(2.0), "2.0000000000000000e0");
    }

    #[test]
    fn timing_column_is_dropped() {
        let csv = "# x\na,b,wall_seconds\n1,2,0.5\n";
        assert_eq!(csv_body_without_timing(csv), vec!["a,b".to_string(), "1,2".to_string()]);
    }

    #[test]
    fn even_trial_count_rejected() {
        let g = ExperimentGrid { trials_per_cell: 4, ..ExperimentGrid::default() };
        assert!(g.validate().is_err());
    }
}
