//! Obstacles, robot geometry and the collision cost `h(x)`.

mod collision;
mod rasterize;
mod robot;
mod sdf;

pub use collision::{hinge, CollisionModel, CollisionSpec};
pub use rasterize::{rasterize_rectangles, Rect, EMPTY_DISTANCE};
pub use robot::{CheckPoint, RobotKind, RobotModel};
pub use sdf::SdfGrid;
