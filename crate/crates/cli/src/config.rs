//! Experiment configuration: a TOML file with one table per concern.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use stefan_core::analysis::NeumannParams;
use stefan_core::beta::{BetaError, BetaGraph, Branch};
use stefan_core::expr::ParseError;
use stefan_core::field::{expr_field, FnField, SharedField};
use stefan_core::forward::SolverOptions;
use stefan_core::grid::ProblemData;
use stefan_core::objective::OptimizerOptions;
use stefan_core::problem::{DiscretizeOptions, Problem, TargetMode};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("expression for `{field}` does not parse: {source}")]
    Expr {
        field: &'static str,
        #[source]
        source: ParseError,
    },
    #[error("invalid enthalpy graph: {0}")]
    Beta(#[from] BetaError),
    #[error("initial control file {path}: {reason}")]
    ControlFile { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    /// Mollification index; defaults to the number of time steps.
    pub mollifier_n: Option<usize>,
    #[serde(default)]
    pub target: Target,
    pub domain: Domain,
    pub beta: BetaSection,
    pub coefficients: Coefficients,
    pub data: Data,
    pub control: ControlSection,
    pub grid: GridSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub reference: ReferenceSection,
    #[serde(default)]
    pub neumann: NeumannSection,
}

#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    #[default]
    Averaged,
    Nodal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Domain {
    pub ell: f64,
    #[serde(alias = "T")]
    pub t_final: f64,
    /// Lower bound for the diffusion coefficient a.
    pub a0: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSection {
    #[serde(default)]
    pub phase_temps: Vec<f64>,
    #[serde(default)]
    pub jumps: Vec<f64>,
    /// One breakpoint list [[v, beta(v)], ...] per phase.
    pub branches: Vec<Vec<[f64; 2]>>,
    pub slope_lo: f64,
    pub slope_hi: f64,
}

fn zero() -> String {
    "0".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub a: String,
    #[serde(default = "zero")]
    pub b: String,
    #[serde(default = "zero")]
    pub c: String,
    #[serde(default = "zero")]
    pub f: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Data {
    pub phi: String,
    #[serde(default = "zero")]
    pub p: String,
    #[serde(default = "zero")]
    pub omega: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlSection {
    /// Radius R of the admissible ball.
    pub radius: f64,
    /// Expression in t for the starting or fixed control.
    pub initial: Option<String>,
    /// CSV with columns t and g, linearly interpolated.
    pub initial_csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub m: Option<usize>,
    pub n: Option<usize>,
    pub levels: Option<Vec<[usize; 2]>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSection {
    pub fp_tol: Option<f64>,
    pub residual_tol: Option<f64>,
    pub max_sweeps: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub fd_epsilon: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Exact solution v(x, t) for error columns.
    pub exact: Option<String>,
    /// Test function for the weak residual; must vanish at t = T.
    pub psi: Option<String>,
}

/// Similarity-solution benchmark run by `verify`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NeumannSection {
    pub conductivity: f64,
    pub capacity_liquid: f64,
    pub capacity_solid: f64,
    pub latent: f64,
    pub phase_temp: f64,
    pub hot: f64,
    pub cold: f64,
    pub start: f64,
    pub ell: f64,
    pub t_final: f64,
    pub levels: Vec<usize>,
}

impl Default for NeumannSection {
    fn default() -> Self {
        NeumannSection {
            conductivity: 1.0,
            capacity_liquid: 1.5,
            capacity_solid: 1.0,
            latent: 1.0,
            phase_temp: 0.0,
            hot: 1.0,
            cold: -1.0,
            start: 0.05,
            ell: 2.0,
            t_final: 0.5,
            levels: vec![20, 40, 80],
        }
    }
}

impl NeumannSection {
    pub fn params(&self) -> NeumannParams {
        NeumannParams {
            conductivity_liquid: self.conductivity,
            conductivity_solid: self.conductivity,
            capacity_liquid: self.capacity_liquid,
            capacity_solid: self.capacity_solid,
            latent: self.latent,
            phase_temp: self.phase_temp,
            hot: self.hot,
            cold: self.cold,
        }
    }
}

/// A parsed config plus the SHA-256 of its bytes.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: Config,
    pub hash: String,
    pub dir: PathBuf,
}

pub fn load(path: &Path) -> Result<Loaded, ConfigError> {
    let bytes = std::fs::read(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let text = String::from_utf8_lossy(&bytes);
    let config: Config = toml::from_str(&text)?;
    Ok(Loaded {
        config,
        hash: hex::encode(Sha256::digest(&bytes)),
        dir: path.parent().map(Path::to_path_buf).unwrap_or_default(),
    })
}

fn parse(field: &'static str, src: &str) -> Result<SharedField, ConfigError> {
    expr_field(src).map_err(|source| ConfigError::Expr { field, source })
}

/// Everything a subcommand needs, validated.
pub struct Setup {
    pub problem: Problem,
    pub discretize: DiscretizeOptions,
    pub optimizer: OptimizerOptions,
    pub initial: Option<SharedField>,
    pub grid: Option<(usize, usize)>,
    pub levels: Vec<(usize, usize)>,
    pub exact: Option<SharedField>,
    pub psi: Option<SharedField>,
    pub seed: u64,
}

impl Setup {
    /// The single working grid of `solve`, `optimize` and `verify`.
    pub fn working_grid(&self) -> Result<(usize, usize), ConfigError> {
        self.grid
            .ok_or_else(|| ConfigError::Invalid("[grid] needs m and n (or a non-empty levels list)".into()))
    }
}

impl Loaded {
    pub fn setup(&self) -> Result<Setup, ConfigError> {
        let c = &self.config;
        let d = &c.domain;
        for (name, value) in [("domain.ell", d.ell), ("domain.t_final", d.t_final), ("domain.a0", d.a0)] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::Invalid(format!("{name} must be positive and finite, got {value}")));
            }
        }
        if !(c.control.radius > 0.0 && c.control.radius.is_finite()) {
            return Err(ConfigError::Invalid(format!(
                "control.radius must be positive and finite, got {}",
                c.control.radius
            )));
        }
        let branches = c
            .beta
            .branches
            .iter()
            .map(|pts| Branch::new(pts.iter().map(|p| (p[0], p[1])).collect()))
            .collect();
        let beta = BetaGraph::new(
            c.beta.phase_temps.clone(),
            c.beta.jumps.clone(),
            branches,
            c.beta.slope_lo,
            c.beta.slope_hi,
        )?;
        let data = ProblemData {
            a: parse("a", &c.coefficients.a)?,
            b: parse("b", &c.coefficients.b)?,
            c: parse("c", &c.coefficients.c)?,
            f: parse("f", &c.coefficients.f)?,
            phi: parse("phi", &c.data.phi)?,
            p: parse("p", &c.data.p)?,
            omega: parse("omega", &c.data.omega)?,
            a0: d.a0,
            ell: d.ell,
            t_final: d.t_final,
            radius: c.control.radius,
        };
        for w in data.variable_warnings() {
            log::warn!("{w}");
        }

        let initial = match (&c.control.initial, &c.control.initial_csv) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "control.initial and control.initial_csv are mutually exclusive".into(),
                ))
            }
            (Some(src), None) => {
                let g = parse("control.initial", src)?;
                if g.depends_on_x() {
                    log::warn!("`control.initial` is a function of t only, but its expression uses x (x = 0 is used)");
                }
                Some(g)
            }
            (None, Some(path)) => Some(control_from_csv(&self.dir.join(path))?),
            (None, None) => None,
        };

        let levels: Vec<(usize, usize)> = c
            .grid
            .levels
            .as_ref()
            .map(|l| l.iter().map(|p| (p[0], p[1])).collect())
            .unwrap_or_default();
        let grid = match (c.grid.m, c.grid.n) {
            (Some(m), Some(n)) => Some((m, n)),
            (None, None) => levels.last().copied(),
            _ => return Err(ConfigError::Invalid("[grid] needs both m and n".into())),
        };
        let levels = if levels.is_empty() {
            // four doublings of the working grid
            grid.map(|(m, n)| (0..4).map(|j| (m << j, n << j)).collect()).unwrap_or_default()
        } else {
            levels
        };

        let defaults = SolverOptions::default();
        let solver = SolverOptions {
            fp_tol: c.solver.fp_tol.or(defaults.fp_tol),
            residual_tol: c.solver.residual_tol.unwrap_or(defaults.residual_tol),
            max_sweeps: c.solver.max_sweeps.unwrap_or(defaults.max_sweeps),
            ..defaults
        };
        let discretize = DiscretizeOptions {
            mollifier_n: c.mollifier_n,
            target: match c.target {
                Target::Averaged => TargetMode::Averaged,
                Target::Nodal => TargetMode::Nodal,
            },
            solver,
        };
        let base = OptimizerOptions::default();
        let optimizer = OptimizerOptions {
            tol: c.optimizer.tol.unwrap_or(base.tol),
            max_iters: c.optimizer.max_iters.unwrap_or(base.max_iters),
            fd_step: c.optimizer.fd_epsilon.or(base.fd_step),
            ..base
        };
        Ok(Setup {
            problem: Problem::new(data, beta),
            discretize,
            optimizer,
            initial,
            grid,
            levels,
            exact: c.reference.exact.as_deref().map(|s| parse("reference.exact", s)).transpose()?,
            psi: c.reference.psi.as_deref().map(|s| parse("reference.psi", s)).transpose()?,
            seed: c.optimizer.seed.unwrap_or(0),
        })
    }
}

/// Reads (t, g) pairs from a CSV with a header row naming `t` and `g`.
fn control_from_csv(path: &Path) -> Result<SharedField, ConfigError> {
    let fail = |reason: String| ConfigError::ControlFile {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| fail(e.to_string()))?;
    let headers = reader.headers().map_err(|e| fail(e.to_string()))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| fail(format!("missing column `{name}`")))
    };
    let (tc, gc) = (col("t")?, col("g")?);
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| fail(e.to_string()))?;
        let num = |c: usize| -> Result<f64, ConfigError> {
            let s = record.get(c).unwrap_or("");
            s.parse().map_err(|_| fail(format!("`{s}` is not a number")))
        };
        points.push((num(tc)?, num(gc)?));
    }
    if points.is_empty() {
        return Err(fail("no data rows".into()));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(fail("times must be strictly increasing".into()));
    }
    Ok(Arc::new(FnField::of_t("control", move |t| interpolate(&points, t))))
}

/// Piecewise-linear through the points, constant beyond the ends.
fn interpolate(points: &[(f64, f64)], t: f64) -> f64 {
    let j = points.partition_point(|p| p.0 <= t);
    if j == 0 {
        return points[0].1;
    }
    if j == points.len() {
        return points[j - 1].1;
    }
    let ((t0, g0), (t1, g1)) = (points[j - 1], points[j]);
    g0 + (g1 - g0) * (t - t0) / (t1 - t0)
}
