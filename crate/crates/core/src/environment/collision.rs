use nalgebra::{DMatrix, DVector};

use super::robot::RobotModel;
use super::sdf::SdfGrid;
use crate::error::{Error, Result};

/// Hinge penalty parameters: safety margin `ε` and isotropic
/// `Σ_obs = sigma_obs · I`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollisionSpec {
    pub epsilon: f64,
    pub sigma_obs: f64,
}

impl CollisionSpec {
    pub fn new(epsilon: f64, sigma_obs: f64) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::Domain(format!("epsilon must be >= 0, got {epsilon}")));
        }
        if !(sigma_obs > 0.0) {
            return Err(Error::Domain(format!("sigma_obs must be > 0, got {sigma_obs}")));
        }
        Ok(Self { epsilon, sigma_obs })
    }
}

/// `0` when `y >= ε`, `ε - y` otherwise.
pub fn hinge(y: f64, epsilon: f64) -> f64 {
    if y >= epsilon {
        0.0
    } else {
        epsilon - y
    }
}

/// Everything needed to evaluate `h(x)` for one support state.
#[derive(Clone, Debug)]
pub struct CollisionModel {
    pub sdf: SdfGrid,
    pub robot: RobotModel,
    pub spec: CollisionSpec,
}

impl CollisionModel {
    pub fn new(sdf: SdfGrid, robot: RobotModel, spec: CollisionSpec) -> Self {
        Self { sdf, robot, spec }
    }

    /// Hinge costs, one per ball, of a full `[position; velocity]` state.
    pub fn hinge_vector(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        let q = self.position_of(state)?;
        let centers = self.robot.forward_kinematics(&q)?;
        let r = self.robot.radius();
        let mut h = DVector::zeros(centers.len());
        for (m, c) in centers.iter().enumerate() {
            let (d, _) = self.sdf.query(c)?;
            h[m] = hinge(d - r, self.spec.epsilon);
        }
        Ok(h)
    }

    /// `h(x)` together with `∂h/∂x` (`n_balls x state_dim`). Rows of
    /// inactive hinges (including exactly at the kink) are zero.
    pub fn collision_vector(&self, state: &DVector<f64>) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let q = self.position_of(state)?;
        let kin = self.robot.kinematics(&q)?;
        let r = self.robot.radius();
        let eps = self.spec.epsilon;
        let mut h = DVector::zeros(kin.len());
        let mut jac = DMatrix::zeros(kin.len(), state.len());
        for (m, (c, dc)) in kin.iter().enumerate() {
            let (d, grad) = self.sdf.query(c)?;
            let y = d - r;
            h[m] = hinge(y, eps);
            if y < eps {
                // ∂h/∂q = -∇dᵀ ∂c/∂q; velocity columns stay zero
                let row = -(grad.transpose() * dc);
                jac.view_mut((m, 0), (1, q.len())).copy_from(&row);
            }
        }
        Ok((h, jac))
    }

    /// `½ ‖h(x)‖²_{Σ_obs⁻¹}`.
    pub fn cost(&self, state: &DVector<f64>) -> Result<f64> {
        Ok(0.5 * self.hinge_vector(state)?.norm_squared() / self.spec.sigma_obs)
    }

    fn position_of(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        let dof = self.robot.dof();
        if state.len() != 2 * dof {
            return Err(Error::Shape {
                context: "support state",
                expected: 2 * dof,
                got: state.len(),
            });
        }
        Ok(state.rows(0, dof).into_owned())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::environment::{rasterize_rectangles, CheckPoint, Rect};
    use nalgebra::Vector2;
    use proptest::prelude::*;

    #[test]
    fn hinge_cases() {
        assert_eq!(hinge(0.7, 0.7), 0.0);
        assert_eq!(hinge(1.5, 0.7), 0.0);
        assert!((hinge(0.4, 0.7) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn point_robot_hinge_value() {
        let sdf = SdfGrid::constant(Vector2::new(-5.0, -5.0), 0.5, 21, 21, 1.0).unwrap();
        let model = CollisionModel::new(
            sdf,
            RobotModel::point2d(1.5).unwrap(),
            CollisionSpec::new(0.7, 0.004).unwrap(),
        );
        let (h, jac) = model
            .collision_vector(&DVector::from_vec(vec![0.0, 0.0, 1.0, 1.0]))
            .unwrap();
        assert!((h[0] - 1.2).abs() < 1e-15);
        // constant field: active hinge but zero gradient
        assert_eq!(jac, DMatrix::zeros(1, 4));
    }

    #[test]
    fn free_space_gives_zero() {
        let sdf = SdfGrid::constant(Vector2::new(0.0, 0.0), 1.0, 10, 10, 5.0).unwrap();
        let model = CollisionModel::new(
            sdf,
            RobotModel::point2d(1.0).unwrap(),
            CollisionSpec::new(0.5, 0.01).unwrap(),
        );
        for x in [1.0, 4.5, 8.9] {
            let (h, jac) = model
                .collision_vector(&DVector::from_vec(vec![x, 9.0 - x, 0.0, 0.0]))
                .unwrap();
            assert_eq!(h, DVector::zeros(1));
            assert_eq!(jac, DMatrix::zeros(1, 4));
        }
    }

    #[test]
    fn out_of_bounds_propagates() {
        let sdf = SdfGrid::constant(Vector2::new(0.0, 0.0), 1.0, 3, 3, 5.0).unwrap();
        let model = CollisionModel::new(
            sdf,
            RobotModel::point2d(1.0).unwrap(),
            CollisionSpec::new(0.5, 0.01).unwrap(),
        );
        assert!(matches!(
            model.hinge_vector(&DVector::from_vec(vec![5.0, 0.0, 0.0, 0.0])),
            Err(Error::OutOfBounds { .. })
        ));
    }

    fn arm_scene() -> CollisionModel {
        let sdf = rasterize_rectangles(
            Vector2::new(-3.0, -3.0),
            0.05,
            121,
            121,
            &[Rect::new(0.8, 0.6, 1.6, 1.4).unwrap()],
        )
        .unwrap();
        let robot = RobotModel::two_link_arm(
            [1.0, 1.0],
            Vector2::zeros(),
            vec![
                CheckPoint { link: 0, fraction: 0.5 },
                CheckPoint { link: 0, fraction: 1.0 },
                CheckPoint { link: 1, fraction: 0.5 },
                CheckPoint { link: 1, fraction: 1.0 },
            ],
            0.2,
        )
        .unwrap();
        CollisionModel::new(sdf, robot, CollisionSpec::new(0.3, 0.01).unwrap())
    }

    proptest! {
        #[test]
        fn hinge_continuity(eps in 0.0..2.0f64, delta in 1e-9..1.0f64) {
            prop_assert!((hinge(eps - delta, eps) - hinge(eps + delta, eps)).abs() <= delta + 1e-15);
        }

        #[test]
        fn jacobian_matches_finite_differences(a in -3.1..3.1f64, b in -3.1..3.1f64) {
            let model = arm_scene();
            let x = DVector::from_vec(vec![a, b, 0.3, -0.2]);
            let (h, jac) = model.collision_vector(&x).unwrap();
            // skip configurations near a kink or a cell edge crossing
            let q = DVector::from_vec(vec![a, b]);
            let kin = model.robot.kinematics(&q).unwrap();
            let near_kink = kin.iter().any(|(c, _)| {
                let (d, _) = model.sdf.query(c).unwrap();
                (d - model.robot.radius() - model.spec.epsilon).abs() < 1e-3
            });
            prop_assume!(!near_kink);
            let step = 1e-6;
            for j in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += step;
                xm[j] -= step;
                let fd = (model.hinge_vector(&xp).unwrap() - model.hinge_vector(&xm).unwrap()) / (2.0 * step);
                // bilinear gradients jump across cell edges; a difference
                // straddling an edge averages the two sides
                let straddles = straddles_cell_edge(&model, &x, j, step);
                for m in 0..h.len() {
                    prop_assert!((fd[m] - jac[(m, j)]).abs() < 1e-4 || straddles);
                }
            }
        }
    }

    fn straddles_cell_edge(model: &CollisionModel, x: &DVector<f64>, j: usize, step: f64) -> bool {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += step;
        xm[j] -= step;
        let cell = |s: &DVector<f64>| -> Vec<(i64, i64)> {
            let q = s.rows(0, 2).into_owned();
            model
                .robot
                .forward_kinematics(&q)
                .unwrap()
                .iter()
                .map(|c| {
                    let f = (c - model.sdf.origin()) / model.sdf.cell_size();
                    (f.x.floor() as i64, f.y.floor() as i64)
                })
                .collect()
        };
        cell(&xp) != cell(&xm)
    }
}
