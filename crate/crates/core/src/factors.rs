//! Factors of the negative log posterior and their Gaussian expectations.
//!
//! Every factor acts on one support state or on two consecutive ones, so
//! its selection map `M_k` is a contiguous block window of the joint state
//! and its marginal covariance lives on the block-tridiagonal pattern.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::environment::CollisionModel;
use crate::error::{Error, Result};
use crate::gp_prior::PriorSpec;
use crate::quadrature::{cholesky_factor, HermiteRule};
use crate::sparse::PartialCovariance;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FactorKind {
    BoundaryStart,
    BoundaryEnd,
    GpMotion,
    Collision,
    /// Linear-Gaussian observation `½ ‖A x_k − b‖²_W` on one or two states.
    LinearObservation,
}

/// Which bucket a factor's cost is reported under.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CostClass {
    Prior,
    Collision,
}

/// `ψ(x) = ½ ‖A x − b‖²_W`.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
    pub w: DMatrix<f64>,
}

impl Quadratic {
    pub fn new(a: DMatrix<f64>, b: DVector<f64>, w: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != b.len() || w.nrows() != b.len() || w.ncols() != b.len() {
            return Err(Error::Shape {
                context: "quadratic factor",
                expected: a.nrows(),
                got: b.len(),
            });
        }
        Ok(Self { a, b, w })
    }

    /// `½ ‖x − m‖²_P`.
    pub fn centered(m: DVector<f64>, precision: DMatrix<f64>) -> Result<Self> {
        let n = m.len();
        Self::new(DMatrix::identity(n, n), m, precision)
    }

    fn value(&self, x: &DVector<f64>) -> f64 {
        let r = &self.a * x - &self.b;
        0.5 * r.dot(&(&self.w * &r))
    }

    /// `Aᵀ W A`.
    pub fn hessian(&self) -> DMatrix<f64> {
        self.a.transpose() * &self.w * &self.a
    }
}

#[derive(Clone, Debug)]
enum Potential {
    Quadratic(Quadratic),
    Collision(Arc<CollisionModel>),
}

/// Factor-level derivatives of `V_k = E_{q_k}[ψ_k]`.
#[derive(Clone, Debug)]
pub struct FactorDerivatives {
    pub cost: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct Factor {
    kind: FactorKind,
    first: usize,
    span: usize,
    state_dim: usize,
    potential: Potential,
}

impl Factor {
    pub fn quadratic(
        kind: FactorKind,
        first: usize,
        span: usize,
        state_dim: usize,
        q: Quadratic,
    ) -> Result<Self> {
        if kind == FactorKind::Collision {
            return Err(Error::Structural("collision factors need a collision model".into()));
        }
        if !(1..=2).contains(&span) {
            return Err(Error::Structural(format!(
                "factors span one or two consecutive states, got {span}"
            )));
        }
        if q.a.ncols() != span * state_dim {
            return Err(Error::Shape {
                context: "quadratic factor columns",
                expected: span * state_dim,
                got: q.a.ncols(),
            });
        }
        Ok(Self {
            kind,
            first,
            span,
            state_dim,
            potential: Potential::Quadratic(q),
        })
    }

    pub fn collision(index: usize, state_dim: usize, model: Arc<CollisionModel>) -> Result<Self> {
        if model.robot.dof() * 2 != state_dim {
            return Err(Error::Shape {
                context: "collision factor state",
                expected: model.robot.dof() * 2,
                got: state_dim,
            });
        }
        Ok(Self {
            kind: FactorKind::Collision,
            first: index,
            span: 1,
            state_dim,
            potential: Potential::Collision(model),
        })
    }

    pub fn kind(&self) -> FactorKind {
        self.kind
    }

    pub fn class(&self) -> CostClass {
        match self.kind {
            FactorKind::BoundaryStart | FactorKind::BoundaryEnd | FactorKind::GpMotion => {
                CostClass::Prior
            }
            FactorKind::Collision | FactorKind::LinearObservation => CostClass::Collision,
        }
    }

    /// First support-state index covered by the factor.
    pub fn first_state(&self) -> usize {
        self.first
    }

    /// Number of consecutive support states covered (1 or 2).
    pub fn span(&self) -> usize {
        self.span
    }

    pub fn dim(&self) -> usize {
        self.span * self.state_dim
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.potential, Potential::Quadratic(_))
    }

    pub fn as_quadratic(&self) -> Option<&Quadratic> {
        match &self.potential {
            Potential::Quadratic(q) => Some(q),
            Potential::Collision(_) => None,
        }
    }

    pub fn collision_model(&self) -> Option<&CollisionModel> {
        match &self.potential {
            Potential::Collision(m) => Some(m),
            Potential::Quadratic(_) => None,
        }
    }

    /// Dense `M_k` (`dim x joint_dim`), mainly for tests.
    pub fn selector(&self, joint_dim: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim(), joint_dim);
        let off = self.first * self.state_dim;
        for r in 0..self.dim() {
            m[(r, off + r)] = 1.0;
        }
        m
    }

    /// `M_k x`.
    pub fn select(&self, joint: &DVector<f64>) -> DVector<f64> {
        joint.rows(self.first * self.state_dim, self.dim()).into_owned()
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::Shape {
                context: "factor-local vector",
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Untempered potential `ψ_k(x_k)`.
    fn raw_psi(&self, x: &DVector<f64>) -> Result<f64> {
        match &self.potential {
            Potential::Quadratic(q) => Ok(q.value(x)),
            Potential::Collision(m) => m.cost(x),
        }
    }

    /// Tempered potential `ψ_k(x_k) / T`.
    pub fn psi(&self, x: &DVector<f64>, temperature: f64) -> Result<f64> {
        self.check_dim(x)?;
        Ok(self.raw_psi(x)? / temperature)
    }

    /// Residual `r`, Jacobian `J` and weight `W` such that
    /// `ψ_k = ½ rᵀ W r` near `x` (exact for quadratic factors, Gauss-Newton
    /// linearization for collision factors).
    pub fn linearize(&self, x: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>, DMatrix<f64>)> {
        self.check_dim(x)?;
        match &self.potential {
            Potential::Quadratic(q) => Ok((&q.a * x - &q.b, q.a.clone(), q.w.clone())),
            Potential::Collision(m) => {
                let (h, j) = m.collision_vector(x)?;
                let n = h.len();
                Ok((h, j, DMatrix::identity(n, n) / m.spec.sigma_obs))
            }
        }
    }

    /// `V_k = E_{q_k}[ψ_k] / T`.
    pub fn cost(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        temperature: f64,
        rule: &HermiteRule,
    ) -> Result<f64> {
        self.check_dim(mean)?;
        match &self.potential {
            Potential::Quadratic(q) => {
                let r = &q.a * mean - &q.b;
                let tr = (q.hessian() * cov).trace();
                Ok((0.5 * r.dot(&(&q.w * &r)) + 0.5 * tr) / temperature)
            }
            Potential::Collision(_) => {
                let chol = cholesky_factor(cov)?;
                let l = chol.l();
                let mut acc = 0.0;
                let mut err = None;
                rule.for_each_standard_point(mean.len(), |w, xi| {
                    if err.is_some() {
                        return;
                    }
                    match self.raw_psi(&(&l * xi + mean)) {
                        Ok(v) => acc += w * v,
                        Err(e) => err = Some(e),
                    }
                })?;
                match err {
                    Some(e) => Err(e),
                    None => Ok(acc / temperature),
                }
            }
        }
    }

    /// Cost, gradient and Hessian of `V_k` with respect to `µ_k`.
    /// Quadratic factors use closed-form Gaussian moments; collision
    /// factors use the tensor Gauss-Hermite rule.
    pub fn derivatives(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        temperature: f64,
        rule: &HermiteRule,
    ) -> Result<FactorDerivatives> {
        self.check_dim(mean)?;
        match &self.potential {
            Potential::Quadratic(q) => {
                let r = &q.a * mean - &q.b;
                let wr = &q.w * &r;
                let hess = q.hessian();
                let cost = (0.5 * r.dot(&wr) + 0.5 * (&hess * cov).trace()) / temperature;
                Ok(FactorDerivatives {
                    cost,
                    grad: q.a.transpose() * wr / temperature,
                    hess: hess / temperature,
                })
            }
            Potential::Collision(_) => self.derivatives_by_quadrature(mean, cov, temperature, rule),
        }
    }

    /// Quadrature evaluation of
    /// `g = Σ⁻¹ E[(x − µ) ψ]` and `H = Σ⁻¹ E[(x − µ)(x − µ)ᵀ ψ] Σ⁻¹ − Σ⁻¹ E[ψ]`
    /// for any factor. With `x = µ + L ξ` these become
    /// `g = L⁻ᵀ E[ξ ψ]` and `H = L⁻ᵀ (E[ξ ξᵀ ψ] − E[ψ] I) L⁻¹`.
    pub fn derivatives_by_quadrature(
        &self,
        mean: &DVector<f64>,
        cov: &DMatrix<f64>,
        temperature: f64,
        rule: &HermiteRule,
    ) -> Result<FactorDerivatives> {
        self.check_dim(mean)?;
        let n = mean.len();
        let chol = cholesky_factor(cov)?;
        let l = chol.l();
        let mut e0 = 0.0;
        let mut e1 = DVector::zeros(n);
        let mut e2 = DMatrix::zeros(n, n);
        let mut err = None;
        rule.for_each_standard_point(n, |w, xi| {
            if err.is_some() {
                return;
            }
            match self.raw_psi(&(&l * xi + mean)) {
                Ok(v) => {
                    let wv = w * v;
                    if wv != 0.0 {
                        e0 += wv;
                        e1.axpy(wv, xi, 1.0);
                        e2.ger(wv, xi, xi, 1.0);
                    }
                }
                Err(e) => err = Some(e),
            }
        })?;
        if let Some(e) = err {
            return Err(e);
        }
        let lt = l.transpose();
        let grad = lt
            .solve_upper_triangular(&e1)
            .expect("Cholesky diagonal is positive");
        e2 -= DMatrix::identity(n, n) * e0;
        // L⁻ᵀ M L⁻¹ = L⁻ᵀ (L⁻ᵀ Mᵀ)ᵀ
        let left = lt
            .solve_upper_triangular(&e2)
            .expect("Cholesky diagonal is positive");
        let mut hess = lt
            .solve_upper_triangular(&left.transpose())
            .expect("Cholesky diagonal is positive");
        let sym = hess.transpose();
        hess += sym;
        hess *= 0.5;
        Ok(FactorDerivatives {
            cost: e0 / temperature,
            grad: grad / temperature,
            hess: hess / temperature,
        })
    }
}

/// `(µ_k, Σ_k) = (M_k µ, M_k Σ M_kᵀ)` read off the partial covariance.
pub fn marginal(
    joint_mean: &DVector<f64>,
    cov: &PartialCovariance,
    factor: &Factor,
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let sd = cov.block_dim();
    if factor.state_dim != sd {
        return Err(Error::Shape {
            context: "marginal block size",
            expected: sd,
            got: factor.state_dim,
        });
    }
    let i = factor.first;
    if i + factor.span > cov.n_blocks() {
        return Err(Error::Structural(format!(
            "factor on states {i}..{} exceeds trajectory of {} states",
            i + factor.span,
            cov.n_blocks()
        )));
    }
    let mean = factor.select(joint_mean);
    let sigma = match factor.span {
        1 => cov.diag(i).clone(),
        2 => {
            let mut s = DMatrix::zeros(2 * sd, 2 * sd);
            s.view_mut((0, 0), (sd, sd)).copy_from(cov.diag(i));
            s.view_mut((sd, sd), (sd, sd)).copy_from(cov.diag(i + 1));
            s.view_mut((sd, 0), (sd, sd)).copy_from(cov.lower(i));
            s.view_mut((0, sd), (sd, sd))
                .copy_from(&cov.lower(i).transpose());
            s
        }
        s => {
            return Err(Error::Structural(format!(
                "factor spans {s} states; only adjacent pairs lie on the pattern"
            )))
        }
    };
    Ok((mean, sigma))
}

/// Ordered collection of factors over `n_states` support states.
#[derive(Clone, Debug)]
pub struct FactorGraph {
    n_states: usize,
    state_dim: usize,
    factors: Vec<Factor>,
}

impl FactorGraph {
    /// Validates supports (in range, at most two adjacent states) and that
    /// every state is covered by some factor.
    pub fn new(n_states: usize, state_dim: usize, factors: Vec<Factor>) -> Result<Self> {
        let mut covered = vec![false; n_states];
        for (k, f) in factors.iter().enumerate() {
            if f.state_dim != state_dim {
                return Err(Error::Shape {
                    context: "factor state dimension",
                    expected: state_dim,
                    got: f.state_dim,
                });
            }
            if f.first + f.span > n_states {
                return Err(Error::Structural(format!(
                    "factor {k} reaches past the last state"
                )));
            }
            for c in covered.iter_mut().skip(f.first).take(f.span) {
                *c = true;
            }
        }
        if let Some(i) = covered.iter().position(|c| !c) {
            return Err(Error::Structural(format!("state {i} is not covered by any factor")));
        }
        Ok(Self {
            n_states,
            state_dim,
            factors,
        })
    }

    /// Prior factors (start, GP motion chain, goal) plus one collision
    /// factor per support state when a collision model is given.
    pub fn planning(prior: &PriorSpec, collision: Option<Arc<CollisionModel>>) -> Result<Self> {
        prior.validate()?;
        let sd = prior.state_dim();
        let n = prior.n_states();
        let mut factors = Vec::with_capacity(2 * n + 1);
        factors.push(Factor::quadratic(
            FactorKind::BoundaryStart,
            0,
            1,
            sd,
            Quadratic::centered(prior.mean_state(0), prior.k0_inv.clone())?,
        )?);
        for (i, (phi, q_inv)) in prior.interval_terms()?.into_iter().enumerate() {
            let mut a = DMatrix::zeros(sd, 2 * sd);
            a.view_mut((0, 0), (sd, sd)).copy_from(&phi);
            a.view_mut((0, sd), (sd, sd))
                .copy_from(&(-DMatrix::<f64>::identity(sd, sd)));
            let b = &phi * prior.mean_state(i) - prior.mean_state(i + 1);
            factors.push(Factor::quadratic(
                FactorKind::GpMotion,
                i,
                2,
                sd,
                Quadratic::new(a, b, q_inv)?,
            )?);
        }
        factors.push(Factor::quadratic(
            FactorKind::BoundaryEnd,
            n - 1,
            1,
            sd,
            Quadratic::centered(prior.mean_state(n - 1), prior.kn_inv.clone())?,
        )?);
        if let Some(model) = collision {
            for i in 0..n {
                factors.push(Factor::collision(i, sd, model.clone())?);
            }
        }
        Self::new(n, sd, factors)
    }

    /// Same graph with the given factors appended.
    pub fn with_factors(mut self, extra: impl IntoIterator<Item = Factor>) -> Result<Self> {
        self.factors.extend(extra);
        Self::new(self.n_states, self.state_dim, self.factors)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn joint_dim(&self) -> usize {
        self.n_states * self.state_dim
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn count(&self, kind: FactorKind) -> usize {
        self.factors.iter().filter(|f| f.kind == kind).count()
    }

    /// `Σ_k ψ_k(M_k x) / T`.
    pub fn total_psi(&self, x: &DVector<f64>, temperature: f64) -> Result<f64> {
        self.factors
            .iter()
            .map(|f| f.psi(&f.select(x), temperature))
            .sum()
    }

    /// The first collision model in the graph, if any.
    pub fn collision_model(&self) -> Option<&CollisionModel> {
        self.factors.iter().find_map(|f| f.collision_model())
    }

    /// Sum of point-evaluated collision costs `½ ‖h(x)‖²_{Σ_obs⁻¹}`.
    pub fn collision_cost_at(&self, x: &DVector<f64>) -> Result<f64> {
        self.factors
            .iter()
            .filter(|f| f.kind == FactorKind::Collision)
            .map(|f| f.psi(&f.select(x), 1.0))
            .sum()
    }
}
