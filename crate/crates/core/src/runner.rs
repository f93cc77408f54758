//! Runs a scenario end to end and writes its result files.
//!
//! Layout under the output directory:
//!
//! ```text
//! gvi/mean.csv cov.csv ellipses.csv samples.csv costs.csv summary.txt
//!     costs_phase1.csv            (two-phase runs only)
//! map/mean.csv costs.csv summary.txt
//! ```

use std::path::{Path, PathBuf};

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::gvi::{optimize, two_phase_replan, GaussianTrajectory, GviResult, SolverConfig, Status};
use crate::map::{gauss_newton_solve, MapResult};
use crate::output::{
    sample_trajectories, state_ellipses, write_costs_csv, write_cov_csv, write_ellipses_csv,
    write_map_costs_csv, write_mean_csv, write_samples_csv, Summary,
};
use crate::scenario::{Mode, Problem, Scenario};
use crate::sparse::ldl_decompose;

/// Command-line overrides of scenario settings.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub mode: Option<Mode>,
    pub samples: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug)]
pub struct GviRun {
    /// Present for two-phase runs.
    pub low: Option<GviResult>,
    pub result: GviResult,
    /// Point-evaluated collision cost `Σ ½‖h(µ_i)‖²/σ` at the final mean.
    pub mean_collision: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutcome {
    pub gvi: Option<GviRun>,
    pub map: Option<MapResult>,
}

impl RunOutcome {
    /// True when any solver stopped without being able to lower its cost.
    pub fn no_progress(&self) -> bool {
        let gvi = self.gvi.as_ref().is_some_and(|g| {
            g.result.status == Status::NoProgress
                || g.low.as_ref().is_some_and(|l| l.status == Status::NoProgress)
        });
        let map = self.map.as_ref().is_some_and(|m| m.status == Status::NoProgress);
        gvi || map
    }
}

/// Runs the variational solver (one or two phases) from the scenario's
/// initialization.
pub fn solve_gvi(scenario: &Scenario, problem: &Problem) -> Result<GviRun> {
    let mean = scenario.initial_mean(&problem.prior)?;
    let init = GaussianTrajectory::isotropic(mean, scenario.state_dim(), scenario.solver.init_precision)?;
    let (low, result) = match scenario.temperature_high {
        None => (None, optimize(&problem.graph, init, &scenario.solver)?),
        Some(t) => {
            let high = SolverConfig {
                temperature: t,
                ..scenario.solver.clone()
            };
            let two = two_phase_replan(
                &problem.graph,
                init,
                &scenario.solver,
                &high,
                scenario.reset_precision,
            )?;
            (Some(two.low), two.high)
        }
    };
    let mean_collision = problem.graph.collision_cost_at(&result.trajectory.mean)?;
    Ok(GviRun {
        low,
        result,
        mean_collision,
    })
}

pub fn solve_map(scenario: &Scenario, problem: &Problem) -> Result<MapResult> {
    let x0 = scenario.initial_mean(&problem.prior)?;
    gauss_newton_solve(&problem.graph, x0, &scenario.map)
}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_gvi_outputs(
    dir: &Path,
    times: &[f64],
    run: &GviRun,
    samples: usize,
    seed: u64,
) -> Result<()> {
    create_dir(dir)?;
    let traj = &run.result.trajectory;
    let sd = traj.state_dim();
    let ldl = ldl_decompose(&traj.precision)?;
    let cov = ldl.partial_inverse();
    write_mean_csv(&dir.join("mean.csv"), times, &traj.mean, sd)?;
    write_cov_csv(&dir.join("cov.csv"), &cov)?;
    write_ellipses_csv(&dir.join("ellipses.csv"), &state_ellipses(&traj.mean, &cov))?;
    let draws = sample_trajectories(&ldl, &traj.mean, samples, seed);
    write_samples_csv(&dir.join("samples.csv"), &draws, sd)?;
    write_costs_csv(&dir.join("costs.csv"), &run.result.history)?;
    if let Some(low) = &run.low {
        write_costs_csv(&dir.join("costs_phase1.csv"), &low.history)?;
    }
    let last = run.result.final_report();
    Summary {
        prior: last.prior,
        collision: last.collision,
        entropy: last.entropy,
    }
    .write(&dir.join("summary.txt"))
}

pub fn write_map_outputs(dir: &Path, times: &[f64], state_dim: usize, result: &MapResult) -> Result<()> {
    create_dir(dir)?;
    write_mean_csv(&dir.join("mean.csv"), times, &result.x, state_dim)?;
    write_map_costs_csv(&dir.join("costs.csv"), &result.history)?;
    let last = result.final_report();
    Summary {
        prior: last.prior,
        collision: last.collision,
        entropy: 0.0,
    }
    .write(&dir.join("summary.txt"))
}

/// Loads inputs, runs the selected solvers (concurrently in `both` mode) and
/// writes `out/gvi` and/or `out/map`.
pub fn run_scenario(scenario: &Scenario, out: &Path, opts: &RunOptions) -> Result<RunOutcome> {
    let mode = opts.mode.unwrap_or(scenario.mode);
    let samples = opts.samples.unwrap_or(scenario.samples);
    let seed = opts.seed.unwrap_or(scenario.seed);
    let problem = scenario.build()?;
    let times = problem.prior.grid.times().to_vec();

    let (gvi, map) = rayon::join(
        || mode.runs_gvi().then(|| solve_gvi(scenario, &problem)).transpose(),
        || mode.runs_map().then(|| solve_map(scenario, &problem)).transpose(),
    );
    let outcome = RunOutcome { gvi: gvi?, map: map? };

    create_dir(out)?;
    if let Some(g) = &outcome.gvi {
        write_gvi_outputs(&out.join("gvi"), &times, g, samples, seed)?;
    }
    if let Some(m) = &outcome.map {
        write_map_outputs(&out.join("map"), &times, scenario.state_dim(), m)?;
    }
    Ok(outcome)
}

/// Output subdirectory for one solver.
pub fn solver_dir(out: &Path, solver: &str) -> PathBuf {
    out.join(solver)
}

/// Convenience for tests and tools: the joint mean from a GVI run.
pub fn gvi_mean(run: &GviRun) -> &DVector<f64> {
    &run.result.trajectory.mean
}
