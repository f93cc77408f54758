use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};

/// 2D signed distance field sampled on a regular grid.
///
/// Node `(row, col)` sits at `origin + cell_size * (col, row)`; row 0 is the
/// lowest `y`. Values are positive outside obstacles and negative inside.
#[derive(Clone, Debug, PartialEq)]
pub struct SdfGrid {
    origin: Vector2<f64>,
    cell_size: f64,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl SdfGrid {
    pub fn new(
        origin: Vector2<f64>,
        cell_size: f64,
        rows: usize,
        cols: usize,
        values: Vec<f64>,
    ) -> Result<Self> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(Error::Domain(format!("cell size must be positive, got {cell_size}")));
        }
        if rows == 0 || cols == 0 {
            return Err(Error::Domain("SDF grid must have at least one row and column".into()));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape {
                context: "SDF values",
                expected: rows * cols,
                got: values.len(),
            });
        }
        Ok(Self {
            origin,
            cell_size,
            rows,
            cols,
            values,
        })
    }

    /// Grid with every node set to `value`.
    pub fn constant(
        origin: Vector2<f64>,
        cell_size: f64,
        rows: usize,
        cols: usize,
        value: f64,
    ) -> Result<Self> {
        Self::new(origin, cell_size, rows, cols, vec![value; rows * cols])
    }

    pub fn origin(&self) -> Vector2<f64> {
        self.origin
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn node_position(&self, row: usize, col: usize) -> Vector2<f64> {
        self.origin + Vector2::new(col as f64, row as f64) * self.cell_size
    }

    /// Upper-right corner of the covered region.
    pub fn extent(&self) -> Vector2<f64> {
        self.node_position(self.rows - 1, self.cols - 1)
    }

    /// Bilinearly interpolated distance and its gradient at `p`.
    pub fn query(&self, p: &Vector2<f64>) -> Result<(f64, Vector2<f64>)> {
        let fx = (p.x - self.origin.x) / self.cell_size;
        let fy = (p.y - self.origin.y) / self.cell_size;
        let max_x = (self.cols - 1) as f64;
        let max_y = (self.rows - 1) as f64;
        if !(fx >= 0.0 && fx <= max_x && fy >= 0.0 && fy <= max_y) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        let c0 = (fx.floor() as usize).min(self.cols.saturating_sub(2));
        let r0 = (fy.floor() as usize).min(self.rows.saturating_sub(2));
        let c1 = (c0 + 1).min(self.cols - 1);
        let r1 = (r0 + 1).min(self.rows - 1);
        let tx = fx - c0 as f64;
        let ty = fy - r0 as f64;

        let v00 = self.value(r0, c0);
        let v01 = self.value(r0, c1);
        let v10 = self.value(r1, c0);
        let v11 = self.value(r1, c1);

        let bottom = v00 + tx * (v01 - v00);
        let top = v10 + tx * (v11 - v10);
        let dist = bottom + ty * (top - bottom);

        let ddx = if c1 > c0 {
            ((1.0 - ty) * (v01 - v00) + ty * (v11 - v10)) / self.cell_size
        } else {
            0.0
        };
        let ddy = if r1 > r0 { (top - bottom) / self.cell_size } else { 0.0 };
        Ok((dist, Vector2::new(ddx, ddy)))
    }

    /// Parses the text format: a header line `rows cols origin_x origin_y
    /// cell_size`, then `rows` lines of `cols` values, lowest `y` first.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let perr = |line: usize, message: String| Error::Parse {
            path: source.to_string(),
            line,
            message,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines.next().ok_or_else(|| perr(1, "empty SDF file".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        if fields.len() != 5 {
            return Err(perr(
                hline + 1,
                format!("header needs 5 fields, found {}", fields.len()),
            ));
        }
        let rows: usize = fields[0]
            .parse()
            .map_err(|_| perr(hline + 1, format!("bad row count `{}`", fields[0])))?;
        let cols: usize = fields[1]
            .parse()
            .map_err(|_| perr(hline + 1, format!("bad column count `{}`", fields[1])))?;
        let num = |i: usize| -> Result<f64> {
            fields[i]
                .parse()
                .map_err(|_| perr(hline + 1, format!("bad number `{}`", fields[i])))
        };
        let origin = Vector2::new(num(2)?, num(3)?);
        let cell = num(4)?;

        let mut values = Vec::with_capacity(rows * cols);
        let mut seen_rows = 0;
        for (ln, line) in lines {
            if seen_rows == rows {
                return Err(perr(ln + 1, format!("more than {rows} data rows")));
            }
            let before = values.len();
            for tok in line.split_whitespace() {
                values.push(
                    tok.parse::<f64>()
                        .map_err(|_| perr(ln + 1, format!("bad distance `{tok}`")))?,
                );
            }
            if values.len() - before != cols {
                return Err(perr(
                    ln + 1,
                    format!("expected {cols} values, found {}", values.len() - before),
                ));
            }
            seen_rows += 1;
        }
        if seen_rows != rows {
            return Err(perr(
                text.lines().count(),
                format!("expected {rows} data rows, found {seen_rows}"),
            ));
        }
        Self::new(origin, cell, rows, cols, values)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Serializes in the text format. Values use the shortest decimal that
    /// round-trips, so `parse(to_text(g)) == g` exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            self.rows, self.cols, self.origin.x, self.origin.y, self.cell_size
        );
        for r in 0..self.rows {
            let row = &self.values[r * self.cols..(r + 1) * self.cols];
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&line.join(" "));
            s.push('\n');
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
