//! Natural-gradient Gaussian variational inference over trajectories.
//!
//! The variational family is `q = N(µ, Σ)` parameterized by the mean and
//! the block-tridiagonal precision `Σ⁻¹`. The objective is
//!
//! ```text
//! V(q) = ½ log|Σ⁻¹| + Σ_k E_{q_k}[ψ_k] / T
//! ```
//!
//! (additive constants dropped). Each iteration computes marginals from
//! the partial inverse of `Σ⁻¹`, scatters the factor derivatives into a
//! joint gradient and block-tridiagonal Hessian estimate, and takes the
//! natural-gradient step
//!
//! ```text
//! Σ⁻¹ δµ = −∂V/∂µ          δΣ⁻¹ = ∂²V/∂µ∂µᵀ − Σ⁻¹
//! ```
//!
//! scaled by `γ^R` with the smallest `R` that keeps `Σ⁻¹` positive
//! definite and strictly lowers `V`.

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::factors::{marginal, CostClass, FactorDerivatives, FactorGraph};
use crate::quadrature::{hermite_rule, HermiteRule};
use crate::sparse::{ldl_decompose, BlockTridiagonal, LdlFactorization, PartialCovariance};

/// Gaussian distribution over the joint trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianTrajectory {
    pub mean: DVector<f64>,
    pub precision: BlockTridiagonal,
}

impl GaussianTrajectory {
    pub fn new(mean: DVector<f64>, precision: BlockTridiagonal) -> Result<Self> {
        if mean.len() != precision.dim() {
            return Err(Error::Shape {
                context: "trajectory mean",
                expected: precision.dim(),
                got: mean.len(),
            });
        }
        Ok(Self { mean, precision })
    }

    /// Mean with isotropic precision `scale · I`.
    pub fn isotropic(mean: DVector<f64>, state_dim: usize, scale: f64) -> Result<Self> {
        if state_dim == 0 || !mean.len().is_multiple_of(state_dim) || mean.is_empty() {
            return Err(Error::Shape {
                context: "trajectory mean",
                expected: state_dim,
                got: mean.len(),
            });
        }
        if !(scale > 0.0) {
            return Err(Error::Domain(format!("initial precision must be positive, got {scale}")));
        }
        let n = mean.len() / state_dim;
        Ok(Self {
            mean,
            precision: BlockTridiagonal::scaled_identity(n, state_dim, scale),
        })
    }

    pub fn state_dim(&self) -> usize {
        self.precision.block_dim()
    }

    pub fn n_states(&self) -> usize {
        self.precision.n_blocks()
    }

    pub fn mean_state(&self, i: usize) -> DVector<f64> {
        let sd = self.state_dim();
        self.mean.rows(i * sd, sd).into_owned()
    }
}

/// Step-size schedule `γ^R` for `R = min_exponent ..= max_exponent`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Backtracking {
    pub gamma: f64,
    pub min_exponent: u32,
    pub max_exponent: u32,
}

impl Default for Backtracking {
    fn default() -> Self {
        Self {
            gamma: 0.9,
            min_exponent: 1,
            max_exponent: 30,
        }
    }
}

impl Backtracking {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Domain(format!("step base must lie in (0, 1), got {}", self.gamma)));
        }
        if self.min_exponent > self.max_exponent {
            return Err(Error::Domain("backtracking exponent range is empty".into()));
        }
        Ok(())
    }

    pub fn steps(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        (self.min_exponent..=self.max_exponent).map(|r| (r, self.gamma.powi(r as i32)))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub temperature: f64,
    pub backtracking: Backtracking,
    /// Stop once the relative decrease of `V` falls below this.
    pub threshold: f64,
    pub max_iterations: usize,
    pub quadrature_degree: usize,
    /// `Σ⁻¹` is initialized (and reset on replanning) to this times `I`.
    pub init_precision: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            temperature: 1.0,
            backtracking: Backtracking::default(),
            threshold: 1e-5,
            max_iterations: 100,
            quadrature_degree: 6,
            init_precision: 10.0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) {
            return Err(Error::Domain(format!("temperature must be positive, got {}", self.temperature)));
        }
        if !(self.threshold > 0.0) {
            return Err(Error::Domain("convergence threshold must be positive".into()));
        }
        if !(self.init_precision > 0.0) {
            return Err(Error::Domain("initial precision must be positive".into()));
        }
        self.backtracking.validate()?;
        hermite_rule(self.quadrature_degree).map(|_| ())
    }
}

/// Decomposed objective at one iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostReport {
    pub iteration: usize,
    pub prior: f64,
    pub collision: f64,
    /// `½ log|Σ⁻¹|`.
    pub entropy: f64,
    pub total: f64,
    /// Accepted backtracking exponent; `None` for the initial iterate.
    pub exponent: Option<u32>,
}

impl CostReport {
    /// Prior plus collision.
    pub fn motion_planning(&self) -> f64 {
        self.prior + self.collision
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIterations,
    /// No step size in the backtracking range lowered the objective.
    NoProgress,
}

#[derive(Clone, Debug)]
pub struct GviResult {
    pub trajectory: GaussianTrajectory,
    pub history: Vec<CostReport>,
    pub status: Status,
}

impl GviResult {
    pub fn final_report(&self) -> &CostReport {
        self.history.last().expect("history holds the initial report")
    }
}

/// Factorization and costs of one iterate.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub ldl: LdlFactorization,
    pub cov: PartialCovariance,
    pub prior: f64,
    pub collision: f64,
    pub entropy: f64,
}

impl Evaluation {
    pub fn total(&self) -> f64 {
        self.prior + self.collision + self.entropy
    }

    fn report(&self, iteration: usize, exponent: Option<u32>) -> CostReport {
        CostReport {
            iteration,
            prior: self.prior,
            collision: self.collision,
            entropy: self.entropy,
            total: self.total(),
            exponent,
        }
    }
}

fn split_costs(graph: &FactorGraph, costs: &[f64]) -> (f64, f64) {
    let mut prior = 0.0;
    let mut collision = 0.0;
    for (f, c) in graph.factors().iter().zip(costs) {
        match f.class() {
            CostClass::Prior => prior += c,
            CostClass::Collision => collision += c,
        }
    }
    (prior, collision)
}

/// Factorizes `Σ⁻¹` and evaluates every factor cost at `traj`.
pub fn evaluate(
    graph: &FactorGraph,
    traj: &GaussianTrajectory,
    temperature: f64,
    rule: &HermiteRule,
) -> Result<Evaluation> {
    check_shapes(graph, traj)?;
    let ldl = ldl_decompose(&traj.precision)?;
    let cov = ldl.partial_inverse();
    let costs: Vec<f64> = graph
        .factors()
        .par_iter()
        .map(|f| {
            let (m, s) = marginal(&traj.mean, &cov, f)?;
            f.cost(&m, &s, temperature, rule)
        })
        .collect::<Result<_>>()?;
    let (prior, collision) = split_costs(graph, &costs);
    let entropy = 0.5 * ldl.log_det();
    Ok(Evaluation {
        ldl,
        cov,
        prior,
        collision,
        entropy,
    })
}

fn check_shapes(graph: &FactorGraph, traj: &GaussianTrajectory) -> Result<()> {
    if traj.state_dim() != graph.state_dim() || traj.n_states() != graph.n_states() {
        return Err(Error::Shape {
            context: "trajectory vs factor graph",
            expected: graph.joint_dim(),
            got: traj.mean.len(),
        });
    }
    Ok(())
}

/// Joint gradient `Σ_k M_kᵀ g_k` and Hessian `Σ_k M_kᵀ H_k M_k`.
///
/// Per-factor work runs in parallel; the scatter-add is sequential in
/// factor order so results are bit-reproducible.
pub fn joint_derivatives(
    graph: &FactorGraph,
    mean: &DVector<f64>,
    cov: &PartialCovariance,
    temperature: f64,
    rule: &HermiteRule,
) -> Result<(DVector<f64>, BlockTridiagonal)> {
    let per_factor: Vec<FactorDerivatives> = graph
        .factors()
        .par_iter()
        .map(|f| {
            let (m, s) = marginal(mean, cov, f)?;
            f.derivatives(&m, &s, temperature, rule)
        })
        .collect::<Result<_>>()?;
    let sd = graph.state_dim();
    let mut grad = DVector::zeros(graph.joint_dim());
    let mut hess = BlockTridiagonal::zeros(graph.n_states(), sd);
    for (f, d) in graph.factors().iter().zip(&per_factor) {
        let i = f.first_state();
        let mut rows = grad.rows_mut(i * sd, f.dim());
        rows += &d.grad;
        match f.span() {
            1 => *hess.diag_mut(i) += &d.hess,
            _ => hess.add_pair(i, &d.hess),
        }
    }
    Ok((grad, hess))
}

/// Natural-gradient directions using an existing factorization of `Σ⁻¹`.
pub fn ngd_step_with(
    ldl: &LdlFactorization,
    precision: &BlockTridiagonal,
    grad: &DVector<f64>,
    hess: &BlockTridiagonal,
) -> (DVector<f64>, BlockTridiagonal) {
    let dmu = -ldl.solve(grad);
    let dprec = hess.sub(precision);
    (dmu, dprec)
}

/// `δµ = −(Σ⁻¹)⁻¹ g`, `δΣ⁻¹ = H − Σ⁻¹`.
pub fn ngd_step(
    traj: &GaussianTrajectory,
    grad: &DVector<f64>,
    hess: &BlockTridiagonal,
) -> Result<(DVector<f64>, BlockTridiagonal)> {
    let ldl = ldl_decompose(&traj.precision).map_err(|e| match e {
        Error::Factorization { block } => Error::Numerical {
            what: "precision factorization",
            index: block,
        },
        other => other,
    })?;
    Ok(ngd_step_with(&ldl, &traj.precision, grad, hess))
}

#[derive(Debug)]
pub enum BacktrackOutcome {
    Accepted {
        trajectory: GaussianTrajectory,
        exponent: u32,
        evaluation: Evaluation,
    },
    /// No candidate lowered the cost. `best_change` is the smallest
    /// relative cost change seen among feasible candidates (`None` when
    /// every candidate was infeasible).
    NoProgress { best_change: Option<f64> },
}

fn relative_change(new: f64, old: f64) -> f64 {
    (new - old) / old.abs().max(1.0)
}

/// Tries `µ + γ^R δµ`, `Σ⁻¹ + γ^R δΣ⁻¹` for increasing `R`. A candidate is
/// feasible when its precision factorizes as positive definite and all its
/// sigma points stay inside the environment; it is accepted when its total
/// cost is strictly below `current_total`.
pub fn backtrack(
    graph: &FactorGraph,
    traj: &GaussianTrajectory,
    dmu: &DVector<f64>,
    dprec: &BlockTridiagonal,
    current_total: f64,
    config: &SolverConfig,
    rule: &HermiteRule,
) -> Result<BacktrackOutcome> {
    let mut best_change: Option<f64> = None;
    for (exponent, scale) in config.backtracking.steps() {
        let candidate = GaussianTrajectory {
            mean: &traj.mean + dmu * scale,
            precision: traj.precision.add_scaled(dprec, scale),
        };
        let evaluation = match evaluate(graph, &candidate, config.temperature, rule) {
            Ok(e) => e,
            Err(Error::Factorization { .. }) | Err(Error::OutOfBounds { .. }) => continue,
            Err(e) => return Err(e),
        };
        let total = evaluation.total();
        if total < current_total {
            return Ok(BacktrackOutcome::Accepted {
                trajectory: candidate,
                exponent,
                evaluation,
            });
        }
        let change = relative_change(total, current_total);
        best_change = Some(best_change.map_or(change, |b| b.min(change)));
    }
    Ok(BacktrackOutcome::NoProgress { best_change })
}

/// Runs the natural-gradient loop from `init`.
pub fn optimize(
    graph: &FactorGraph,
    init: GaussianTrajectory,
    config: &SolverConfig,
) -> Result<GviResult> {
    optimize_observed(graph, init, config, |_, _| {})
}

/// As [`optimize`], calling `observe` after the initial evaluation and
/// after every accepted step.
pub fn optimize_observed(
    graph: &FactorGraph,
    init: GaussianTrajectory,
    config: &SolverConfig,
    mut observe: impl FnMut(&GaussianTrajectory, &CostReport),
) -> Result<GviResult> {
    config.validate()?;
    let rule = hermite_rule(config.quadrature_degree)?;
    let mut traj = init;
    let mut eval = evaluate(graph, &traj, config.temperature, &rule)?;
    let mut history = vec![eval.report(0, None)];
    observe(&traj, &history[0]);
    let mut status = Status::MaxIterations;

    for iteration in 1..=config.max_iterations {
        let (grad, hess) =
            joint_derivatives(graph, &traj.mean, &eval.cov, config.temperature, &rule)?;
        let (dmu, dprec) = ngd_step_with(&eval.ldl, &traj.precision, &grad, &hess);
        let old_total = eval.total();
        match backtrack(graph, &traj, &dmu, &dprec, old_total, config, &rule)? {
            BacktrackOutcome::Accepted {
                trajectory,
                exponent,
                evaluation,
            } => {
                traj = trajectory;
                eval = evaluation;
                let report = eval.report(iteration, Some(exponent));
                observe(&traj, &report);
                history.push(report);
                if -relative_change(eval.total(), old_total) < config.threshold {
                    status = Status::Converged;
                    break;
                }
            }
            BacktrackOutcome::NoProgress { best_change } => {
                // a stationary iterate cannot move the cost by more than η
                status = match best_change {
                    Some(c) if c.abs() <= config.threshold => Status::Converged,
                    _ => Status::NoProgress,
                };
                break;
            }
        }
    }
    Ok(GviResult {
        trajectory: traj,
        history,
        status,
    })
}

/// Both phases of a low-then-high temperature run.
#[derive(Clone, Debug)]
pub struct TwoPhaseResult {
    pub low: GviResult,
    pub high: GviResult,
}

/// Optimizes at `low.temperature`, then again at `high.temperature` starting
/// from the low-temperature mean. The precision restarts from
/// `high.init_precision · I` when `reset_precision` is set, otherwise it
/// carries over.
pub fn two_phase_replan(
    graph: &FactorGraph,
    init: GaussianTrajectory,
    low: &SolverConfig,
    high: &SolverConfig,
    reset_precision: bool,
) -> Result<TwoPhaseResult> {
    let low_result = optimize(graph, init, low)?;
    let start = if reset_precision {
        GaussianTrajectory::isotropic(
            low_result.trajectory.mean.clone(),
            graph.state_dim(),
            high.init_precision,
        )?
    } else {
        low_result.trajectory.clone()
    };
    let high_result = optimize(graph, start, high)?;
    Ok(TwoPhaseResult {
        low: low_result,
        high: high_result,
    })
}
