use pvm::bench::{self, ExperimentGrid};
use pvm::{SolveStatus, SolverSettings};

fn small_grid(seed: u64) -> ExperimentGrid {
    ExperimentGrid {
        t0_values: vec![0.18, 0.09],
        epsilon_values: vec![Some(1e-4), Some(1e-2), None],
        trials_per_cell: 3,
        rng_seed: seed,
    }
}

#[test]
fn warmstart_csv_is_reproducible_for_a_seed() {
    let base = bench::baseline().unwrap();
    let settings = SolverSettings::default();
    let run = |seed| {
        let grid = small_grid(seed);
        let cells = bench::run_warmstart(&base.prob, &base.x_star, &grid, &settings).unwrap();
        for c in &cells {
            assert_eq!(c.failures(&[SolveStatus::Optimal, SolveStatus::SuboptimalFeasible]), 0);
        }
        bench::csv_body_without_timing(&bench::cells_csv("warmstart", &cells, &grid, &settings, base.t_star))
    };
    assert_eq!(run(5), run(5));
}

#[test]
fn recovery_reaches_feasibility_above_the_optimum() {
    let base = bench::baseline().unwrap();
    let mut grid = ExperimentGrid::recovery(base.t_star);
    grid.t0_values.truncate(4);
    grid.trials_per_cell = 3;
    let cells = bench::run_recover(&base.prob, &base.x_star, &grid, &SolverSettings::default()).unwrap();
    for c in &cells {
        assert_eq!(c.failures(&[SolveStatus::SuboptimalFeasible]), 0, "cell {:?}", c.epsilon);
    }
}
