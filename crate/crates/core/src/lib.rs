//! Duality-free convex QP/LP solver.
//!
//! Solves
//!
//! ```text
//!   minimize    ½ xᵀQx + pᵀx
//!   subject to  Ax + s = b,   s ∈ Zero^p × Nonneg^m⁺
//! ```
//!
//! by minimizing the scalar value function
//!
//! ```text
//!   r*(t) = min_{x,s} ½ max{q(x) − t, 0}² + ½|Ax + s − b|² + ½ dist(s, C)²
//! ```
//!
//! with inexact proximal-point steps on `t`. Each proximal step is split into
//! two strongly structured subproblems that are solved by a semismooth Newton
//! method over a sparse LDLᵀ factorization. The smallest `t` at which `r*`
//! flattens is the optimal cost; a positive plateau certifies infeasibility.
//!
//! No dual variables are maintained, so any primal point `(x, s)` together
//! with a lower bound `t0` on the optimal cost is a valid warm start.
//!
//! ```no_run
//! use pvm::{problem::ProblemData, settings::SolverSettings, solver::Solver};
//!
//! let prob = ProblemData::load("toy.json").unwrap();
//! let mut solver = Solver::new(&prob, SolverSettings::default()).unwrap();
//! let report = solver.solve(None).unwrap();
//! println!("{:?} t = {}", report.status, report.t_final);
//! ```

pub mod bench;
pub mod linalg;
pub mod merit;
pub mod mpc;
pub mod newton;
pub mod problem;
pub mod settings;
pub mod solver;

mod error;

pub use error::{Error, Result};
pub use problem::{ConeSpec, CscMatrix, ProblemData};
pub use settings::SolverSettings;
pub use solver::{SolveReport, SolveStatus, Solver};

/// Crate version embedded in reports and benchmark output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
