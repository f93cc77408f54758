//! Brute-force signed distance fields for unions of axis-aligned rectangles.

use nalgebra::Vector2;

use super::sdf::SdfGrid;
use crate::error::{Error, Result};

/// Value written at every node when there is no obstacle at all.
pub const EMPTY_DISTANCE: f64 = 1e6;

/// Closed axis-aligned rectangle `[x_min, x_max] x [y_min, y_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rect {
    pub min: Vector2<f64>,
    pub max: Vector2<f64>,
}

impl Rect {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        if !(x_max > x_min && y_max > y_min) {
            return Err(Error::Domain(format!(
                "degenerate rectangle [{x_min}, {x_max}] x [{y_min}, {y_max}]"
            )));
        }
        Ok(Self {
            min: Vector2::new(x_min, y_min),
            max: Vector2::new(x_max, y_max),
        })
    }

    /// Euclidean distance from `p` to the closed rectangle (0 inside).
    pub fn distance(&self, p: &Vector2<f64>) -> f64 {
        let dx = (self.min.x - p.x).max(0.0).max(p.x - self.max.x);
        let dy = (self.min.y - p.y).max(0.0).max(p.y - self.max.y);
        dx.hypot(dy)
    }
}

struct Segment {
    a: Vector2<f64>,
    b: Vector2<f64>,
}

impl Segment {
    fn distance(&self, p: &Vector2<f64>) -> f64 {
        let ab = self.b - self.a;
        let len2 = ab.norm_squared();
        let t = if len2 > 0.0 {
            ((p - self.a).dot(&ab) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        (p - (self.a + ab * t)).norm()
    }
}

/// Pieces of rectangle edges that lie on the boundary of the union: the
/// parts of each edge whose outward side is not covered by another
/// rectangle.
fn union_boundary(rects: &[Rect]) -> Vec<Segment> {
    let mut out = Vec::new();
    for (ai, a) in rects.iter().enumerate() {
        // (axis along the edge, fixed coordinate, outward sign)
        let edges = [
            (0usize, a.min.y, -1.0),
            (0, a.max.y, 1.0),
            (1, a.min.x, -1.0),
            (1, a.max.x, 1.0),
        ];
        for (along, fixed, outward) in edges {
            let across = 1 - along;
            let (lo, hi) = (a.min[along], a.max[along]);
            let mut covered: Vec<(f64, f64)> = rects
                .iter()
                .enumerate()
                .filter(|(bi, _)| *bi != ai)
                .filter_map(|(_, b)| {
                    let reaches_out = if outward > 0.0 {
                        b.min[across] <= fixed && b.max[across] > fixed
                    } else {
                        b.max[across] >= fixed && b.min[across] < fixed
                    };
                    let (s, e) = (b.min[along].max(lo), b.max[along].min(hi));
                    (reaches_out && e > s).then_some((s, e))
                })
                .collect();
            covered.sort_by(|x, y| x.0.total_cmp(&y.0));
            let mut cursor = lo;
            let mut push = |s: f64, e: f64| {
                let mk = |t: f64| {
                    let mut v = Vector2::zeros();
                    v[along] = t;
                    v[across] = fixed;
                    v
                };
                out.push(Segment { a: mk(s), b: mk(e) });
            };
            for (s, e) in covered {
                if s > cursor {
                    push(cursor, s);
                }
                cursor = cursor.max(e);
            }
            if cursor < hi {
                push(cursor, hi);
            }
        }
    }
    out
}

/// Exact signed distance from each grid node to the union of `rects`.
pub fn rasterize_rectangles(
    origin: Vector2<f64>,
    cell_size: f64,
    rows: usize,
    cols: usize,
    rects: &[Rect],
) -> Result<SdfGrid> {
    let mut grid = SdfGrid::constant(origin, cell_size, rows, cols, EMPTY_DISTANCE)?;
    let extent = grid.extent();
    for r in rects {
        if r.min.x < origin.x || r.min.y < origin.y || r.max.x > extent.x || r.max.y > extent.y {
            return Err(Error::Domain(format!(
                "obstacle [{}, {}] x [{}, {}] extends outside the grid [{}, {}] x [{}, {}]",
                r.min.x, r.max.x, r.min.y, r.max.y, origin.x, extent.x, origin.y, extent.y
            )));
        }
    }
    if rects.is_empty() {
        return Ok(grid);
    }
    let boundary = union_boundary(rects);
    let mut values = Vec::with_capacity(rows * cols);
    for row in 0..rows {
        for col in 0..cols {
            let p = grid.node_position(row, col);
            let outside = rects.iter().map(|r| r.distance(&p)).fold(f64::INFINITY, f64::min);
            let v = if outside > 0.0 {
                outside
            } else {
                -boundary
                    .iter()
                    .map(|s| s.distance(&p))
                    .fold(f64::INFINITY, f64::min)
            };
            // avoid writing -0.0 on boundaries
            values.push(if v == 0.0 { 0.0 } else { v });
        }
    }
    grid = SdfGrid::new(origin, cell_size, rows, cols, values)?;
    Ok(grid)
}
