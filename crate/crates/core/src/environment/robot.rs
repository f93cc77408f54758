use nalgebra::{DMatrix, DVector, Vector2};

use crate::error::{Error, Result};

/// A collision-checking ball placed on a link, `fraction` of the way from
/// the link's proximal joint to its tip.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckPoint {
    /// Zero-based link index.
    pub link: usize,
    pub fraction: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RobotKind {
    /// Planar point robot; the configuration is its `(x, y)` position.
    Point2d,
    /// Planar serial arm with two revolute joints. Joint angles are
    /// counterclockwise from `+x`; the second is relative to the first link.
    TwoLinkArm {
        link_lengths: [f64; 2],
        base: Vector2<f64>,
        check_points: Vec<CheckPoint>,
    },
}

/// Robot body approximated by balls of a common radius.
#[derive(Clone, Debug, PartialEq)]
pub struct RobotModel {
    kind: RobotKind,
    radius: f64,
}

impl RobotModel {
    pub fn point2d(radius: f64) -> Result<Self> {
        Self::new(RobotKind::Point2d, radius)
    }

    pub fn two_link_arm(
        link_lengths: [f64; 2],
        base: Vector2<f64>,
        check_points: Vec<CheckPoint>,
        radius: f64,
    ) -> Result<Self> {
        Self::new(
            RobotKind::TwoLinkArm {
                link_lengths,
                base,
                check_points,
            },
            radius,
        )
    }

    pub fn new(kind: RobotKind, radius: f64) -> Result<Self> {
        if !(radius > 0.0) {
            return Err(Error::Domain(format!("ball radius must be positive, got {radius}")));
        }
        if let RobotKind::TwoLinkArm {
            link_lengths,
            check_points,
            ..
        } = &kind
        {
            if link_lengths.iter().any(|l| !(*l > 0.0)) {
                return Err(Error::Domain("link lengths must be positive".into()));
            }
            if check_points.is_empty() {
                return Err(Error::Domain("arm needs at least one check point".into()));
            }
            for cp in check_points {
                if cp.link > 1 || !(0.0..=1.0).contains(&cp.fraction) {
                    return Err(Error::Domain(format!(
                        "check point {cp:?} must be on link 0 or 1 with fraction in [0, 1]"
                    )));
                }
            }
        }
        Ok(Self { kind, radius })
    }

    pub fn kind(&self) -> &RobotKind {
        &self.kind
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    /// Same body with a different ball radius.
    pub fn with_radius(&self, radius: f64) -> Result<Self> {
        Self::new(self.kind.clone(), radius)
    }

    /// Configuration dimension (degrees of freedom).
    pub fn dof(&self) -> usize {
        2
    }

    pub fn n_balls(&self) -> usize {
        match &self.kind {
            RobotKind::Point2d => 1,
            RobotKind::TwoLinkArm { check_points, .. } => check_points.len(),
        }
    }

    fn check_dim(&self, q: &DVector<f64>) -> Result<()> {
        if q.len() != self.dof() {
            return Err(Error::Shape {
                context: "configuration",
                expected: self.dof(),
                got: q.len(),
            });
        }
        Ok(())
    }

    /// Ball centers in the workspace.
    pub fn forward_kinematics(&self, q: &DVector<f64>) -> Result<Vec<Vector2<f64>>> {
        Ok(self
            .kinematics(q)?
            .into_iter()
            .map(|(c, _)| c)
            .collect())
    }

    /// Ball centers and their `2 x dof` Jacobians with respect to `q`.
    pub fn kinematics(&self, q: &DVector<f64>) -> Result<Vec<(Vector2<f64>, DMatrix<f64>)>> {
        self.check_dim(q)?;
        match &self.kind {
            RobotKind::Point2d => Ok(vec![(
                Vector2::new(q[0], q[1]),
                DMatrix::identity(2, 2),
            )]),
            RobotKind::TwoLinkArm {
                link_lengths: [l1, l2],
                base,
                check_points,
            } => {
                let (t1, t12) = (q[0], q[0] + q[1]);
                let dir1 = Vector2::new(t1.cos(), t1.sin());
                let dir12 = Vector2::new(t12.cos(), t12.sin());
                // derivative of a unit direction: rotate by +90°
                let perp = |d: Vector2<f64>| Vector2::new(-d.y, d.x);
                let elbow = base + dir1 * *l1;
                Ok(check_points
                    .iter()
                    .map(|cp| {
                        let mut jac = DMatrix::zeros(2, 2);
                        let center = if cp.link == 0 {
                            let j1 = perp(dir1) * (cp.fraction * l1);
                            jac.set_column(0, &j1);
                            base + dir1 * (cp.fraction * l1)
                        } else {
                            let j2 = perp(dir12) * (cp.fraction * l2);
                            jac.set_column(0, &(perp(dir1) * *l1 + j2));
                            jac.set_column(1, &j2);
                            elbow + dir12 * (cp.fraction * l2)
                        };
                        (center, jac)
                    })
                    .collect())
            }
        }
    }
}
