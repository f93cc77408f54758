//! Gauss-Newton MAP baseline on the same factor graph.
//!
//! Minimizes `Σ_k ψ_k(M_k x)` with the factors' linearizations
//! `ψ_k ≈ ½ ‖r_k + J_k δ‖²_{W_k}`. The normal equations are
//! block-tridiagonal and are solved with the same LDL factorization the
//! variational solver uses.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::factors::{CostClass, FactorGraph};
use crate::gvi::{Backtracking, Status};
use crate::sparse::{ldl_decompose, BlockTridiagonal};

#[derive(Clone, Debug, PartialEq)]
pub struct MapConfig {
    pub backtracking: Backtracking,
    pub threshold: f64,
    pub max_iterations: usize,
}

impl Default for MapConfig {
    fn default() -> Self {
        Self {
            // hinge-inactive balls add no curvature, so near an obstacle the
            // full step can overshoot by orders of magnitude
            backtracking: Backtracking {
                min_exponent: 0,
                max_exponent: 100,
                ..Backtracking::default()
            },
            threshold: 1e-5,
            max_iterations: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MapCostReport {
    pub iteration: usize,
    pub prior: f64,
    pub collision: f64,
    pub total: f64,
    pub exponent: Option<u32>,
}

#[derive(Clone, Debug)]
pub struct MapResult {
    pub x: DVector<f64>,
    pub history: Vec<MapCostReport>,
    pub status: Status,
}

impl MapResult {
    pub fn final_report(&self) -> &MapCostReport {
        self.history.last().expect("history holds the initial report")
    }
}

/// `(prior, collision)` parts of `Σ_k ψ_k(M_k x)`.
pub fn map_cost(graph: &FactorGraph, x: &DVector<f64>) -> Result<(f64, f64)> {
    check_len(graph, x)?;
    let mut prior = 0.0;
    let mut collision = 0.0;
    for f in graph.factors() {
        let v = f.psi(&f.select(x), 1.0)?;
        match f.class() {
            CostClass::Prior => prior += v,
            CostClass::Collision => collision += v,
        }
    }
    Ok((prior, collision))
}

fn check_len(graph: &FactorGraph, x: &DVector<f64>) -> Result<()> {
    if x.len() != graph.joint_dim() {
        return Err(Error::Shape {
            context: "MAP iterate",
            expected: graph.joint_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Gauss-Newton direction `δ` solving `(Σ JᵀWJ) δ = −Σ JᵀW r`.
pub fn gauss_newton_direction(graph: &FactorGraph, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(graph, x)?;
    let sd = graph.state_dim();
    let mut lhs = BlockTridiagonal::zeros(graph.n_states(), sd);
    let mut rhs = DVector::zeros(graph.joint_dim());
    for f in graph.factors() {
        let (r, j, w) = f.linearize(&f.select(x))?;
        let jtw = j.transpose() * w;
        let h = &jtw * &j;
        let g = &jtw * r;
        let i = f.first_state();
        let mut rows = rhs.rows_mut(i * sd, f.dim());
        rows -= &g;
        match f.span() {
            1 => *lhs.diag_mut(i) += &h,
            _ => lhs.add_pair(i, &h),
        }
    }
    let ldl = ldl_decompose(&lhs).map_err(|e| match e {
        Error::Factorization { block } => Error::Numerical {
            what: "Gauss-Newton normal equations",
            index: block,
        },
        other => other,
    })?;
    Ok(ldl.solve(&rhs))
}

/// Damped Gauss-Newton from `x0`.
pub fn gauss_newton_solve(graph: &FactorGraph, x0: DVector<f64>, config: &MapConfig) -> Result<MapResult> {
    config.backtracking.validate()?;
    let mut x = x0;
    let (p, c) = map_cost(graph, &x)?;
    let mut history = vec![MapCostReport {
        iteration: 0,
        prior: p,
        collision: c,
        total: p + c,
        exponent: None,
    }];
    let mut status = Status::MaxIterations;
    for iteration in 1..=config.max_iterations {
        let current = history.last().expect("non-empty").total;
        let delta = gauss_newton_direction(graph, &x)?;
        let mut accepted = None;
        let mut best_change: Option<f64> = None;
        for (exponent, scale) in config.backtracking.steps() {
            let cand = &x + &delta * scale;
            let (p, c) = match map_cost(graph, &cand) {
                Ok(v) => v,
                Err(Error::OutOfBounds { .. }) => continue,
                Err(e) => return Err(e),
            };
            let total = p + c;
            if total < current {
                accepted = Some((cand, exponent, p, c));
                break;
            }
            let change = (total - current) / current.abs().max(1.0);
            best_change = Some(best_change.map_or(change, |b: f64| b.min(change)));
        }
        match accepted {
            Some((cand, exponent, p, c)) => {
                x = cand;
                let total = p + c;
                history.push(MapCostReport {
                    iteration,
                    prior: p,
                    collision: c,
                    total,
                    exponent: Some(exponent),
                });
                if (current - total) / current.abs().max(1.0) < config.threshold {
                    status = Status::Converged;
                    break;
                }
            }
            None => {
                status = match best_change {
                    Some(c) if c.abs() <= config.threshold => Status::Converged,
                    _ => Status::NoProgress,
                };
                break;
            }
        }
    }
    Ok(MapResult { x, history, status })
}
