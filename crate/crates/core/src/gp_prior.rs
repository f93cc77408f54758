//! Constant-velocity Gaussian-process trajectory prior.
//!
//! The state of each support point is `[position; velocity]`, driven by
//! white-noise acceleration with spectral density `Q_c`. The discretized
//! prior `N(µ, K)` has the block-tridiagonal precision `K⁻¹ = Bᵀ Q⁻¹ B`.

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::sparse::BlockTridiagonal;

/// Default boundary precision scale for `K_0⁻¹` and `K_N⁻¹`.
pub const DEFAULT_BOUNDARY_PRECISION: f64 = 1e6;

/// Constant-velocity LTI model `ẋ = A x + F w` with `A = [[0, I], [0, 0]]`,
/// `F = [0; I]`, `E[w wᵀ] = Q_c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LtiModel {
    dof: usize,
    qc: DMatrix<f64>,
}

impl LtiModel {
    pub fn new(qc: DMatrix<f64>) -> Result<Self> {
        let dof = qc.nrows();
        if dof == 0 || qc.ncols() != dof {
            return Err(Error::Shape {
                context: "Q_c",
                expected: dof.max(1),
                got: qc.ncols(),
            });
        }
        if (&qc - qc.transpose()).amax() > 1e-12 * qc.amax().max(1.0) {
            return Err(Error::Domain("Q_c must be symmetric".into()));
        }
        if Cholesky::new(qc.clone()).is_none() {
            return Err(Error::Domain("Q_c must be positive definite".into()));
        }
        Ok(Self { dof, qc })
    }

    /// `Q_c = scale · I_dof`.
    pub fn isotropic(dof: usize, scale: f64) -> Result<Self> {
        Self::new(DMatrix::identity(dof, dof) * scale)
    }

    pub fn dof(&self) -> usize {
        self.dof
    }

    pub fn state_dim(&self) -> usize {
        2 * self.dof
    }

    pub fn qc(&self) -> &DMatrix<f64> {
        &self.qc
    }
}

/// Strictly increasing support times `t_0 < … < t_N`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::Domain("time grid needs at least two points".into()));
        }
        if let Some(i) = times.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::Domain(format!(
                "time grid not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { times })
    }

    /// `n_intervals + 1` points evenly spread over `[0, horizon]`.
    pub fn uniform(n_intervals: usize, horizon: f64) -> Result<Self> {
        if n_intervals == 0 || !(horizon > 0.0) {
            return Err(Error::Domain(
                "uniform grid needs N >= 1 and a positive horizon".into(),
            ));
        }
        let dt = horizon / n_intervals as f64;
        Self::new((0..=n_intervals).map(|i| i as f64 * dt).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Number of intervals `N`.
    pub fn n_intervals(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_states(&self) -> usize {
        self.times.len()
    }
}

/// `Φ(t, s) = [[I, (t - s) I], [0, I]]`.
pub fn transition_matrix(model: &LtiModel, s: f64, t: f64) -> Result<DMatrix<f64>> {
    if t < s {
        return Err(Error::Domain(format!(
            "transition requested backwards in time ({s} -> {t})"
        )));
    }
    let d = model.dof;
    let mut phi = DMatrix::identity(2 * d, 2 * d);
    for k in 0..d {
        phi[(k, d + k)] = t - s;
    }
    Ok(phi)
}

/// Process-noise Grammian over `[t_i, t_{i+1}]`:
/// `[[Δt³/3 Q_c, Δt²/2 Q_c], [Δt²/2 Q_c, Δt Q_c]]`.
pub fn grammian(model: &LtiModel, t_i: f64, t_next: f64) -> Result<DMatrix<f64>> {
    let dt = t_next - t_i;
    if !(dt > 0.0) {
        return Err(Error::Domain(format!(
            "Grammian needs a positive interval, got {dt}"
        )));
    }
    let d = model.dof;
    let mut q = DMatrix::zeros(2 * d, 2 * d);
    let qc = &model.qc;
    q.view_mut((0, 0), (d, d))
        .copy_from(&(qc * (dt.powi(3) / 3.0)));
    q.view_mut((0, d), (d, d))
        .copy_from(&(qc * (dt.powi(2) / 2.0)));
    q.view_mut((d, 0), (d, d))
        .copy_from(&(qc * (dt.powi(2) / 2.0)));
    q.view_mut((d, d), (d, d)).copy_from(&(qc * dt));
    Ok(q)
}

/// Prior over the joint trajectory.
#[derive(Clone, Debug)]
pub struct PriorSpec {
    pub mean: DVector<f64>,
    pub k0_inv: DMatrix<f64>,
    pub kn_inv: DMatrix<f64>,
    pub model: LtiModel,
    pub grid: TimeGrid,
}

impl PriorSpec {
    /// Prior whose mean interpolates linearly (per component, in time)
    /// between the start and goal states, with isotropic boundary
    /// precisions.
    pub fn linear(
        model: LtiModel,
        grid: TimeGrid,
        start: &DVector<f64>,
        goal: &DVector<f64>,
        boundary_precision: f64,
    ) -> Result<Self> {
        let sd = model.state_dim();
        let mean = linear_interpolation(&grid, start, goal)?;
        let eye = DMatrix::identity(sd, sd) * boundary_precision;
        let spec = Self {
            mean,
            k0_inv: eye.clone(),
            kn_inv: eye,
            model,
            grid,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn state_dim(&self) -> usize {
        self.model.state_dim()
    }

    pub fn n_states(&self) -> usize {
        self.grid.n_states()
    }

    pub fn mean_state(&self, i: usize) -> DVector<f64> {
        let sd = self.state_dim();
        self.mean.rows(i * sd, sd).into_owned()
    }

    pub fn validate(&self) -> Result<()> {
        let sd = self.state_dim();
        let n = self.n_states();
        if self.mean.len() != n * sd {
            return Err(Error::Shape {
                context: "prior mean",
                expected: n * sd,
                got: self.mean.len(),
            });
        }
        for (name, m) in [("K_0^-1", &self.k0_inv), ("K_N^-1", &self.kn_inv)] {
            if m.nrows() != sd || m.ncols() != sd {
                return Err(Error::Shape {
                    context: "boundary precision",
                    expected: sd,
                    got: m.nrows(),
                });
            }
            if (m - m.transpose()).amax() > 1e-9 * m.amax().max(1.0)
                || Cholesky::new(m.clone()).is_none()
            {
                return Err(Error::Domain(format!("{name} must be symmetric positive definite")));
            }
        }
        Ok(())
    }

    /// Per-interval transition matrices and inverse Grammians.
    pub fn interval_terms(&self) -> Result<Vec<(DMatrix<f64>, DMatrix<f64>)>> {
        let t = self.grid.times();
        (0..self.grid.n_intervals())
            .map(|i| {
                let phi = transition_matrix(&self.model, t[i], t[i + 1])?;
                let q = grammian(&self.model, t[i], t[i + 1])?;
                let q_inv = Cholesky::new(q)
                    .map(|c| c.inverse())
                    .ok_or(Error::Numerical {
                        what: "Grammian inverse",
                        index: i,
                    })?;
                Ok((phi, q_inv))
            })
            .collect()
    }

    /// `½ ‖x − µ‖²_{K⁻¹}` evaluated factor by factor.
    pub fn neg_log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let sd = self.state_dim();
        let n = self.n_states();
        let dx = x - &self.mean;
        let r0 = dx.rows(0, sd);
        let rn = dx.rows((n - 1) * sd, sd);
        let mut v = 0.5 * r0.dot(&(&self.k0_inv * r0)) + 0.5 * rn.dot(&(&self.kn_inv * rn));
        for (i, (phi, q_inv)) in self.interval_terms()?.iter().enumerate() {
            let r = phi * dx.rows(i * sd, sd) - dx.rows((i + 1) * sd, sd);
            v += 0.5 * r.dot(&(q_inv * &r));
        }
        Ok(v)
    }
}

/// States interpolated linearly in time between `start` and `goal`.
pub fn linear_interpolation(
    grid: &TimeGrid,
    start: &DVector<f64>,
    goal: &DVector<f64>,
) -> Result<DVector<f64>> {
    if start.len() != goal.len() {
        return Err(Error::Shape {
            context: "start/goal states",
            expected: start.len(),
            got: goal.len(),
        });
    }
    let sd = start.len();
    let t = grid.times();
    let (t0, tn) = (t[0], t[t.len() - 1]);
    let mut mean = DVector::zeros(t.len() * sd);
    for (i, ti) in t.iter().enumerate() {
        let a = (ti - t0) / (tn - t0);
        mean.rows_mut(i * sd, sd)
            .copy_from(&(start * (1.0 - a) + goal * a));
    }
    Ok(mean)
}

/// Assembles `K⁻¹ = Bᵀ Q⁻¹ B` directly in block form:
///
/// ```text
/// D_0 = K_0⁻¹ + Φ_0ᵀ Q_0⁻¹ Φ_0
/// D_i = Q_{i-1}⁻¹ + Φ_iᵀ Q_i⁻¹ Φ_i      (0 < i < N)
/// D_N = Q_{N-1}⁻¹ + K_N⁻¹
/// L_i = −Q_i⁻¹ Φ_i                      (block (i+1, i))
/// ```
pub fn build_prior_precision(spec: &PriorSpec) -> Result<BlockTridiagonal> {
    spec.validate()?;
    let n = spec.n_states();
    let sd = spec.state_dim();
    let mut k = BlockTridiagonal::zeros(n, sd);
    *k.diag_mut(0) += &spec.k0_inv;
    *k.diag_mut(n - 1) += &spec.kn_inv;
    for (i, (phi, q_inv)) in spec.interval_terms()?.into_iter().enumerate() {
        let qphi = &q_inv * &phi;
        *k.diag_mut(i) += phi.transpose() * &qphi;
        *k.diag_mut(i + 1) += &q_inv;
        *k.lower_mut(i) -= qphi;
    }
    for i in 0..n {
        let d = k.diag(i).clone();
        *k.diag_mut(i) = (&d + d.transpose()) * 0.5;
    }
    Ok(k)
}
