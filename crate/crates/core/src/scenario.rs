//! Flat `key = value` scenario and obstacle files.
//!
//! Blank lines and text after `#` are ignored. Vectors are comma
//! separated. Relative paths resolve against the file's directory.
//!
//! Scenario keys (defaults in brackets):
//!
//! | key | meaning |
//! |-----|---------|
//! | `robot` | `point` or `arm` [point] |
//! | `radius` | collision ball radius |
//! | `link_lengths`, `base` | arm geometry |
//! | `check_points` | arm balls as `link:fraction`, zero-based links |
//! | `sdf` | signed distance field file |
//! | `start`, `goal` | full states (positions then velocities) |
//! | `n`, `horizon` | number of intervals and total time |
//! | `qc` | isotropic power spectral density [1] |
//! | `boundary_precision` | start/goal precision scale [1e6] |
//! | `epsilon`, `sigma_obs` | hinge margin and observation variance |
//! | `temperature` [1], `temperature_high` | a second, high-temperature phase when set |
//! | `reset_precision` | restart `Σ⁻¹` for the second phase [true] |
//! | `step_base` [0.9], `min_exponent` [1], `max_backtrack` [30] | backtracking |
//! | `threshold` [1e-5], `max_iterations` [100], `quadrature_degree` [6] | solver |
//! | `init_precision` | initial `Σ⁻¹` scale [10] |
//! | `init` | `linear` or a `mean.csv` path [linear] |
//! | `mode` | `gvi`, `map` or `both` [gvi] |
//! | `seed` [0], `samples` [100] | sampling |

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DVector, Vector2};

use crate::environment::{
    rasterize_rectangles, CheckPoint, CollisionModel, CollisionSpec, Rect, RobotModel, SdfGrid,
};
use crate::error::{Error, Result};
use crate::factors::FactorGraph;
use crate::gp_prior::{LtiModel, PriorSpec, TimeGrid, DEFAULT_BOUNDARY_PRECISION};
use crate::gvi::{Backtracking, SolverConfig};
use crate::map::MapConfig;
use crate::output::read_mean_csv;

/// Parsed `key = value` lines, keeping line numbers for diagnostics.
#[derive(Clone, Debug)]
pub struct KeyValues {
    source: String,
    entries: Vec<(String, String, usize)>,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: source.into(),
                line: i + 1,
                message: format!("expected `key = value`, found `{line}`"),
            })?;
            entries.push((k.trim().to_string(), v.trim().to_string(), i + 1));
        }
        Ok(Self {
            source: source.into(),
            entries,
        })
    }

    fn err(&self, line: usize, message: String) -> Error {
        Error::Parse {
            path: self.source.clone(),
            line,
            message,
        }
    }

    /// Rejects keys outside `allowed` and repeats of non-repeatable keys.
    pub fn check_keys(&self, allowed: &[&str], repeatable: &[&str]) -> Result<()> {
        for (idx, (k, _, line)) in self.entries.iter().enumerate() {
            if !allowed.contains(&k.as_str()) {
                return Err(self.err(*line, format!("unknown key `{k}`")));
            }
            if !repeatable.contains(&k.as_str())
                && self.entries[..idx].iter().any(|(p, _, _)| p == k)
            {
                return Err(self.err(*line, format!("duplicate key `{k}`")));
            }
        }
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<(&str, usize)> {
        self.entries
            .iter()
            .find(|(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = (&'a str, usize)> + 'a {
        self.entries
            .iter()
            .filter(move |(k, _, _)| k == key)
            .map(|(_, v, l)| (v.as_str(), *l))
    }

    fn missing(&self, key: &str) -> Error {
        let last = self.entries.last().map_or(1, |e| e.2);
        self.err(last, format!("missing required key `{key}`"))
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => v
                .parse()
                .map(Some)
                .map_err(|_| self.err(line, format!("invalid value `{v}` for `{key}`"))),
        }
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?.ok_or_else(|| self.missing(key))
    }

    fn vector_at(&self, key: &str, v: &str, line: usize) -> Result<Vec<f64>> {
        v.split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| self.err(line, format!("invalid number `{}` in `{key}`", t.trim())))
            })
            .collect()
    }

    pub fn vector(&self, key: &str, len: Option<usize>) -> Result<Option<Vec<f64>>> {
        let Some((v, line)) = self.raw(key) else {
            return Ok(None);
        };
        let out = self.vector_at(key, v, line)?;
        if let Some(n) = len {
            if out.len() != n {
                return Err(self.err(
                    line,
                    format!("`{key}` needs {n} components, found {}", out.len()),
                ));
            }
        }
        Ok(Some(out))
    }

    pub fn require_vector(&self, key: &str, len: Option<usize>) -> Result<Vec<f64>> {
        self.vector(key, len)?.ok_or_else(|| self.missing(key))
    }

    /// Re-labels a domain error from a constructor with the key's line.
    fn at_key(&self, key: &str, e: Error) -> Error {
        match (e, self.raw(key)) {
            (Error::Domain(m), Some((_, line))) => self.err(line, m),
            (e, _) => e,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Gvi,
    Map,
    Both,
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gvi" => Ok(Mode::Gvi),
            "map" => Ok(Mode::Map),
            "both" => Ok(Mode::Both),
            _ => Err(Error::Domain(format!("unknown mode `{s}`, expected gvi, map or both"))),
        }
    }
}

impl Mode {
    pub fn runs_gvi(self) -> bool {
        matches!(self, Mode::Gvi | Mode::Both)
    }

    pub fn runs_map(self) -> bool {
        matches!(self, Mode::Map | Mode::Both)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Initialization {
    Linear,
    FromFile(PathBuf),
}

/// A planning problem plus solver settings.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub robot: RobotModel,
    pub sdf_path: PathBuf,
    pub start: DVector<f64>,
    pub goal: DVector<f64>,
    pub n_intervals: usize,
    pub horizon: f64,
    pub qc: f64,
    pub boundary_precision: f64,
    pub collision: CollisionSpec,
    pub solver: SolverConfig,
    pub temperature_high: Option<f64>,
    pub reset_precision: bool,
    pub map: MapConfig,
    pub init: Initialization,
    pub mode: Mode,
    pub seed: u64,
    pub samples: usize,
}

const SCENARIO_KEYS: &[&str] = &[
    "robot",
    "radius",
    "link_lengths",
    "base",
    "check_points",
    "sdf",
    "start",
    "goal",
    "n",
    "horizon",
    "qc",
    "boundary_precision",
    "epsilon",
    "sigma_obs",
    "temperature",
    "temperature_high",
    "reset_precision",
    "step_base",
    "min_exponent",
    "max_backtrack",
    "threshold",
    "max_iterations",
    "quadrature_degree",
    "init_precision",
    "init",
    "mode",
    "seed",
    "samples",
];

/// Everything needed to run the solvers, built from a scenario.
#[derive(Clone, Debug)]
pub struct Problem {
    pub prior: PriorSpec,
    pub collision: Arc<CollisionModel>,
    pub graph: FactorGraph,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let dir = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, &path.display().to_string(), dir)
    }

    /// Parses scenario text; relative paths are taken relative to `base_dir`.
    pub fn parse(text: &str, source: &str, base_dir: &Path) -> Result<Self> {
        let kv = KeyValues::parse(text, source)?;
        kv.check_keys(SCENARIO_KEYS, &[])?;

        let radius: f64 = kv.require("radius")?;
        let robot_kind: String = kv.get_or("robot", "point".to_string())?;
        let robot = match robot_kind.as_str() {
            "point" => RobotModel::point2d(radius),
            "arm" => {
                let lengths = kv.require_vector("link_lengths", Some(2))?;
                let base = kv.vector("base", Some(2))?.unwrap_or(vec![0.0, 0.0]);
                let (raw, line) = kv.raw("check_points").ok_or_else(|| kv.missing("check_points"))?;
                let mut cps = Vec::new();
                for tok in raw.split(',') {
                    let bad = || kv.err(line, format!("invalid check point `{}`", tok.trim()));
                    let (l, f) = tok.trim().split_once(':').ok_or_else(bad)?;
                    cps.push(CheckPoint {
                        link: l.trim().parse().map_err(|_| bad())?,
                        fraction: f.trim().parse().map_err(|_| bad())?,
                    });
                }
                RobotModel::two_link_arm(
                    [lengths[0], lengths[1]],
                    Vector2::new(base[0], base[1]),
                    cps,
                    radius,
                )
            }
            other => {
                let line = kv.raw("robot").map_or(1, |r| r.1);
                return Err(kv.err(line, format!("unknown robot `{other}`, expected point or arm")));
            }
        }
        .map_err(|e| kv.at_key("robot", e))?;

        let state_dim = 2 * robot.dof();
        let start = DVector::from_vec(kv.require_vector("start", Some(state_dim))?);
        let goal = DVector::from_vec(kv.require_vector("goal", Some(state_dim))?);
        let sdf: String = kv.require("sdf")?;
        let sdf_path = base_dir.join(sdf);

        let n_intervals: usize = kv.require("n")?;
        let horizon: f64 = kv.require("horizon")?;
        let qc = kv.get_or("qc", 1.0)?;
        let boundary_precision = kv.get_or("boundary_precision", DEFAULT_BOUNDARY_PRECISION)?;
        let collision = CollisionSpec::new(kv.require("epsilon")?, kv.require("sigma_obs")?)
            .map_err(|e| kv.at_key("epsilon", e))?;

        let defaults = SolverConfig::default();
        let backtracking = Backtracking {
            gamma: kv.get_or("step_base", defaults.backtracking.gamma)?,
            min_exponent: kv.get_or("min_exponent", defaults.backtracking.min_exponent)?,
            max_exponent: kv.get_or("max_backtrack", defaults.backtracking.max_exponent)?,
        };
        let solver = SolverConfig {
            temperature: kv.get_or("temperature", defaults.temperature)?,
            backtracking,
            threshold: kv.get_or("threshold", defaults.threshold)?,
            max_iterations: kv.get_or("max_iterations", defaults.max_iterations)?,
            quadrature_degree: kv.get_or("quadrature_degree", defaults.quadrature_degree)?,
            init_precision: kv.get_or("init_precision", defaults.init_precision)?,
        };
        solver.validate().map_err(|e| kv.at_key("temperature", e))?;
        let temperature_high: Option<f64> = kv.get("temperature_high")?;
        if let Some(t) = temperature_high {
            if !(t > 0.0) {
                let line = kv.raw("temperature_high").map_or(1, |r| r.1);
                return Err(kv.err(line, "temperature_high must be positive".into()));
            }
        }
        let map = MapConfig {
            threshold: solver.threshold,
            max_iterations: solver.max_iterations,
            ..MapConfig::default()
        };

        let init = match kv.get::<String>("init")?.as_deref() {
            None | Some("linear") => Initialization::Linear,
            Some(p) => Initialization::FromFile(base_dir.join(p)),
        };
        let mode = match kv.raw("mode") {
            None => Mode::Gvi,
            Some((v, line)) => v.parse().map_err(|e: Error| kv.err(line, e.to_string()))?,
        };

        let scenario = Self {
            robot,
            sdf_path,
            start,
            goal,
            n_intervals,
            horizon,
            qc,
            boundary_precision,
            collision,
            solver,
            temperature_high,
            reset_precision: kv.get_or("reset_precision", true)?,
            map,
            init,
            mode,
            seed: kv.get_or("seed", 0)?,
            samples: kv.get_or("samples", 100)?,
        };
        // catch grid and prior errors at parse time, with the key's line
        scenario.prior().map_err(|e| kv.at_key("n", e))?;
        Ok(scenario)
    }

    pub fn state_dim(&self) -> usize {
        2 * self.robot.dof()
    }

    pub fn prior(&self) -> Result<PriorSpec> {
        let model = LtiModel::isotropic(self.robot.dof(), self.qc)?;
        let grid = TimeGrid::uniform(self.n_intervals, self.horizon)?;
        PriorSpec::linear(model, grid, &self.start, &self.goal, self.boundary_precision)
    }

    /// Loads the SDF and assembles the factor graph.
    pub fn build(&self) -> Result<Problem> {
        let sdf = SdfGrid::load(&self.sdf_path)?;
        let prior = self.prior()?;
        let collision = Arc::new(CollisionModel::new(sdf, self.robot.clone(), self.collision));
        let graph = FactorGraph::planning(&prior, Some(collision.clone()))?;
        Ok(Problem {
            prior,
            collision,
            graph,
        })
    }

    /// Initial mean: the prior's interpolation or a previously written mean.
    pub fn initial_mean(&self, prior: &PriorSpec) -> Result<DVector<f64>> {
        match &self.init {
            Initialization::Linear => Ok(prior.mean.clone()),
            Initialization::FromFile(path) => {
                let (_, mean) = read_mean_csv(path, self.state_dim())?;
                if mean.len() != prior.mean.len() {
                    return Err(Error::Shape {
                        context: "initial mean file",
                        expected: prior.mean.len(),
                        got: mean.len(),
                    });
                }
                Ok(mean)
            }
        }
    }
}

/// Grid and rectangles for the SDF generator.
#[derive(Clone, Debug, PartialEq)]
pub struct ObstacleSpec {
    pub origin: Vector2<f64>,
    pub cell_size: f64,
    pub rows: usize,
    pub cols: usize,
    pub rects: Vec<Rect>,
}

impl ObstacleSpec {
    /// Keys: `rows`, `cols`, `origin = x, y`, `cell_size`, and any number of
    /// `rect = x_min, y_min, x_max, y_max`.
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let kv = KeyValues::parse(text, source)?;
        kv.check_keys(&["rows", "cols", "origin", "cell_size", "rect"], &["rect"])?;
        let origin = kv.vector("origin", Some(2))?.unwrap_or(vec![0.0, 0.0]);
        let mut rects = Vec::new();
        for (v, line) in kv.all("rect") {
            let c = kv.vector_at("rect", v, line)?;
            if c.len() != 4 {
                return Err(kv.err(line, format!("`rect` needs 4 components, found {}", c.len())));
            }
            rects.push(Rect::new(c[0], c[1], c[2], c[3]).map_err(|e| match e {
                Error::Domain(m) => kv.err(line, m),
                e => e,
            })?);
        }
        Ok(Self {
            origin: Vector2::new(origin[0], origin[1]),
            cell_size: kv.require("cell_size")?,
            rows: kv.require("rows")?,
            cols: kv.require("cols")?,
            rects,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn rasterize(&self) -> Result<SdfGrid> {
        rasterize_rectangles(self.origin, self.cell_size, self.rows, self.cols, &self.rects)
    }
}

/// Reads an obstacle spec and writes its SDF.
pub fn make_sdf(spec_path: &Path, out: &Path) -> Result<SdfGrid> {
    let grid = ObstacleSpec::load(spec_path)?.rasterize()?;
    grid.save(out)?;
    Ok(grid)
}
