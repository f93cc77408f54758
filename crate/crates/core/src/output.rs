//! Result files: CSV traces, marginal covariances, confidence ellipses,
//! seeded trajectory samples and the cost summary.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gvi::CostReport;
use crate::map::MapCostReport;
use crate::sparse::{LdlFactorization, PartialCovariance};

/// χ² quantile with two degrees of freedom at probability 0.997.
pub fn chi2_2dof(probability: f64) -> f64 {
    -2.0 * (1.0 - probability).ln()
}

pub const ELLIPSE_PROBABILITY: f64 = 0.997;

fn write(path: &Path, text: String) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn state_header(state_dim: usize) -> String {
    let dof = state_dim / 2;
    let mut cols: Vec<String> = (0..dof).map(|i| format!("q{i}")).collect();
    cols.extend((0..dof).map(|i| format!("dq{i}")));
    cols.join(",")
}

fn join(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

/// `t,q0,..,dq0,..` with one row per support state.
pub fn write_mean_csv(path: &Path, times: &[f64], mean: &DVector<f64>, state_dim: usize) -> Result<()> {
    let mut s = format!("t,{}\n", state_header(state_dim));
    for (i, t) in times.iter().enumerate() {
        let row = mean.rows(i * state_dim, state_dim);
        let _ = writeln!(s, "{t},{}", join(row.iter().copied()));
    }
    write(path, s)
}

/// Reads a file written by [`write_mean_csv`]; returns times and the joint mean.
pub fn read_mean_csv(path: &Path, state_dim: usize) -> Result<(Vec<f64>, DVector<f64>)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let perr = |line: usize, message: String| Error::Parse {
        path: source.clone(),
        line,
        message,
    };
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<f64> = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|_| perr(i + 1, format!("invalid number `{t}`"))))
            .collect::<Result<_>>()?;
        if fields.len() != state_dim + 1 {
            return Err(perr(
                i + 1,
                format!("expected {} columns, found {}", state_dim + 1, fields.len()),
            ));
        }
        times.push(fields[0]);
        values.extend_from_slice(&fields[1..]);
    }
    if times.is_empty() {
        return Err(perr(1, "no data rows".into()));
    }
    Ok((times, DVector::from_vec(values)))
}

/// `state,c00,c01,..` with each marginal block flattened row-major.
pub fn write_cov_csv(path: &Path, cov: &PartialCovariance) -> Result<()> {
    let d = cov.block_dim();
    let header: Vec<String> = (0..d)
        .flat_map(|r| (0..d).map(move |c| format!("c{r}{c}")))
        .collect();
    let mut s = format!("state,{}\n", header.join(","));
    for i in 0..cov.n_blocks() {
        let b = cov.diag(i);
        let _ = writeln!(s, "{i},{}", join((0..d).flat_map(|r| (0..d).map(move |c| b[(r, c)]))));
    }
    write(path, s)
}

/// Confidence ellipse of a 2-D Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ellipse {
    pub center: [f64; 2],
    pub semi_major: f64,
    pub semi_minor: f64,
    /// Angle of the major axis from `+x`, in radians within `(-π/2, π/2]`.
    pub angle: f64,
}

pub fn confidence_ellipse(center: [f64; 2], cov: &Matrix2<f64>, probability: f64) -> Ellipse {
    let k = chi2_2dof(probability);
    let (a, b, c) = (cov[(0, 0)], cov[(0, 1)], cov[(1, 1)]);
    let mid = 0.5 * (a + c);
    let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = (mid + rad, (mid - rad).max(0.0));
    let mut angle = 0.5 * (2.0 * b).atan2(a - c);
    if angle <= -std::f64::consts::FRAC_PI_2 {
        angle += std::f64::consts::PI;
    }
    Ellipse {
        center,
        semi_major: (k * l1).sqrt(),
        semi_minor: (k * l2).sqrt(),
        angle,
    }
}

/// Ellipses of the configuration (first two components) of each state.
pub fn state_ellipses(mean: &DVector<f64>, cov: &PartialCovariance) -> Vec<Ellipse> {
    let d = cov.block_dim();
    (0..cov.n_blocks())
        .map(|i| {
            let b = cov.diag(i);
            let m = Matrix2::new(b[(0, 0)], b[(0, 1)], b[(1, 0)], b[(1, 1)]);
            confidence_ellipse([mean[i * d], mean[i * d + 1]], &m, ELLIPSE_PROBABILITY)
        })
        .collect()
}

pub fn write_ellipses_csv(path: &Path, ellipses: &[Ellipse]) -> Result<()> {
    let mut s = String::from("state,cx,cy,semi_major,semi_minor,angle\n");
    for (i, e) in ellipses.iter().enumerate() {
        let _ = writeln!(
            s,
            "{i},{},{},{},{},{}",
            e.center[0], e.center[1], e.semi_major, e.semi_minor, e.angle
        );
    }
    write(path, s)
}

/// `count` joint samples from `N(mean, (Σ⁻¹)⁻¹)` through the LDLᵀ factors
/// of the precision, reproducible for a given seed.
pub fn sample_trajectories(
    ldl: &LdlFactorization,
    mean: &DVector<f64>,
    count: usize,
    seed: u64,
) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let z = DVector::from_fn(ldl.dim(), |_, _| StandardNormal.sample(&mut rng));
            ldl.sample_centered(&z) + mean
        })
        .collect()
}

/// `sample,state,q0,..` with one row per sample and support state.
pub fn write_samples_csv(path: &Path, samples: &[DVector<f64>], state_dim: usize) -> Result<()> {
    let mut s = format!("sample,state,{}\n", state_header(state_dim));
    for (k, x) in samples.iter().enumerate() {
        for i in 0..x.len() / state_dim {
            let row = x.rows(i * state_dim, state_dim);
            let _ = writeln!(s, "{k},{i},{}", join(row.iter().copied()));
        }
    }
    write(path, s)
}

/// Empirical covariance of state block `i` across samples.
pub fn empirical_block_cov(samples: &[DVector<f64>], i: usize, state_dim: usize) -> DMatrix<f64> {
    let n = samples.len() as f64;
    let mut mean = DVector::zeros(state_dim);
    for x in samples {
        mean += x.rows(i * state_dim, state_dim);
    }
    mean /= n;
    let mut cov = DMatrix::zeros(state_dim, state_dim);
    for x in samples {
        let d = x.rows(i * state_dim, state_dim) - &mean;
        cov.ger(1.0, &d, &d, 1.0);
    }
    cov / (n - 1.0)
}

const COST_HEADER: &str = "iteration,prior,collision,entropy,total,R\n";

pub fn write_costs_csv(path: &Path, history: &[CostReport]) -> Result<()> {
    let mut s = String::from(COST_HEADER);
    for r in history {
        let exp = r.exponent.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{},{},{exp}", r.iteration, r.prior, r.collision, r.entropy, r.total);
    }
    write(path, s)
}

/// MAP traces use the same columns with a zero entropy.
pub fn write_map_costs_csv(path: &Path, history: &[MapCostReport]) -> Result<()> {
    let mut s = String::from(COST_HEADER);
    for r in history {
        let exp = r.exponent.map(|e| e.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},0,{},{exp}", r.iteration, r.prior, r.collision, r.total);
    }
    write(path, s)
}

/// Parsed `costs.csv` row.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostRow {
    pub iteration: usize,
    pub prior: f64,
    pub collision: f64,
    pub entropy: f64,
    pub total: f64,
    pub exponent: Option<u32>,
}

pub fn read_costs_csv(path: &Path) -> Result<Vec<CostRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let perr = |line: usize, message: String| Error::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(perr(i + 1, format!("expected 6 columns, found {}", f.len())));
        }
        let num = |k: usize| f[k].parse::<f64>().map_err(|_| perr(i + 1, format!("invalid number `{}`", f[k])));
        rows.push(CostRow {
            iteration: f[0].parse().map_err(|_| perr(i + 1, "invalid iteration".into()))?,
            prior: num(1)?,
            collision: num(2)?,
            entropy: num(3)?,
            total: num(4)?,
            exponent: if f[5].is_empty() {
                None
            } else {
                Some(f[5].parse().map_err(|_| perr(i + 1, "invalid exponent".into()))?)
            },
        });
    }
    Ok(rows)
}

/// Final decomposed costs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub prior: f64,
    pub collision: f64,
    pub entropy: f64,
}

impl Summary {
    pub fn motion_planning(&self) -> f64 {
        self.prior + self.collision
    }

    pub fn total(&self) -> f64 {
        self.motion_planning() + self.entropy
    }

    pub fn to_text(&self) -> String {
        format!(
            "Prior: {}\nCollision: {}\nMP: {}\nEntropy: {}\nTotal: {}\n",
            self.prior,
            self.collision,
            self.motion_planning(),
            self.entropy,
            self.total()
        )
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write(path, self.to_text())
    }
}

/// All five labelled values of a `summary.txt`, in file order.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SummaryValues {
    pub prior: f64,
    pub collision: f64,
    pub mp: f64,
    pub entropy: f64,
    pub total: f64,
}

pub fn read_summary(path: &Path) -> Result<SummaryValues> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let get = |label: &str| -> Result<f64> {
        text.lines()
            .find_map(|l| l.strip_prefix(label).and_then(|r| r.strip_prefix(':')))
            .and_then(|v| v.trim().parse().ok())
            .ok_or_else(|| Error::Parse {
                path: path.display().to_string(),
                line: 0,
                message: format!("missing or invalid `{label}`"),
            })
    };
    Ok(SummaryValues {
        prior: get("Prior")?,
        collision: get("Collision")?,
        mp: get("MP")?,
        entropy: get("Entropy")?,
        total: get("Total")?,
    })
}
