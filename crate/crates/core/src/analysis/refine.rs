//! Grid-refinement studies: the same problem solved (or optimized) on a
//! sequence of grids, with diagnostics per level.

use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::analysis::diagnostics::{energy_norm, energy_ratio, linf_ratio, DataNormSummary};
use crate::analysis::interpolate::{interpolate, l2_distance, l2_error, InterpolantKind};
use crate::analysis::residual::{weak_residual, ResidualMode};
use crate::control::DiscreteControl;
use crate::field::SharedField;
use crate::forward::DiscreteState;
use crate::objective::{optimize, OptimizerOptions};
use crate::problem::{DiscretizeOptions, Problem};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StudyError {
    #[error("a refinement study needs at least one level")]
    NoLevels,
    #[error("levels must be ascending: ({0}, {1}) follows ({2}, {3})")]
    NotAscending(usize, usize, usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StudyMode {
    #[default]
    Forward,
    Optimize,
}

#[derive(Debug, Clone, Default)]
pub struct StudyOptions {
    pub mode: StudyMode,
    pub discretize: DiscretizeOptions,
    /// Control used by forward runs and as the optimizer's starting point,
    /// mapped to each grid by cell averaging; zero when unset.
    pub control: Option<SharedField>,
    pub optimizer: OptimizerOptions,
    /// Reference solution for error columns.
    pub exact: Option<SharedField>,
    /// Test function for the weak-residual column.
    pub psi: Option<SharedField>,
}

#[derive(Debug, Clone, Default)]
pub struct LevelResult {
    pub m: usize,
    pub n: usize,
    /// I_n of the fixed control, or the optimal value in optimize mode.
    pub cost: Option<f64>,
    pub linf_ratio: Option<f64>,
    pub energy_total: Option<f64>,
    pub energy_ratio: Option<f64>,
    pub distance_to_finest: Option<f64>,
    pub distance_to_previous: Option<f64>,
    pub exact_error: Option<f64>,
    pub weak_residual: Option<f64>,
    pub total_sweeps: usize,
    pub wall_time: Duration,
    pub error: Option<String>,
    pub control: Option<DiscreteControl>,
    pub state: Option<DiscreteState>,
}

#[derive(Debug, Clone, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<LevelResult>,
}

impl ConvergenceTable {
    /// log2 ratios of successive values, scaled by the refinement factor in h.
    pub fn orders(&self, column: impl Fn(&LevelResult) -> Option<f64>) -> Vec<Option<f64>> {
        self.rows
            .windows(2)
            .map(|w| {
                let (a, b) = (column(&w[0])?, column(&w[1])?);
                let refine = w[1].m as f64 / w[0].m as f64;
                Some((a / b).ln() / refine.ln())
            })
            .collect()
    }
}

fn run_level(problem: &Problem, m: usize, n: usize, opts: &StudyOptions) -> LevelResult {
    let started = Instant::now();
    let mut row = LevelResult {
        m,
        n,
        ..LevelResult::default()
    };
    let outcome = (|| -> Result<(), String> {
        let dp = problem.discretize(m, n, &opts.discretize).map_err(|e| e.to_string())?;
        let control = match &opts.control {
            Some(g) => dp.control_from(g.as_ref()).map_err(|e| e.to_string())?,
            None => dp.zero_control(),
        };
        let (control, state, cost) = match opts.mode {
            StudyMode::Forward => {
                let (state, report) = dp.solve(&control).map_err(|e| e.to_string())?;
                row.total_sweeps = report.total_sweeps();
                let cost = dp.cost_of(&state);
                (control, state, cost)
            }
            StudyMode::Optimize => {
                let optimizer = OptimizerOptions {
                    initial: Some(control),
                    ..opts.optimizer.clone()
                };
                let result = optimize(&dp, &optimizer).map_err(|e| e.to_string())?;
                (result.control, result.state, result.cost)
            }
        };
        row.cost = Some(cost);
        let norms = DataNormSummary::compute(&problem.data, &control, 4 * m.max(n)).map_err(|e| e.to_string())?;
        let energy = energy_norm(&state);
        row.energy_total = Some(energy.total);
        row.energy_ratio = energy_ratio(&energy, &norms).ok();
        row.linf_ratio = linf_ratio(&state, &norms).ok();
        if let Some(exact) = &opts.exact {
            let hat = interpolate(&state, InterpolantKind::Bilinear);
            row.exact_error = Some(l2_error(&hat, |x, t| exact.eval(x, t).unwrap_or(f64::NAN)));
        }
        if let Some(psi) = &opts.psi {
            row.weak_residual = Some(
                weak_residual(&dp, &problem.data, &state, &control, psi.as_ref(), ResidualMode::Continuous)
                    .map_err(|e| e.to_string())?,
            );
        }
        row.control = Some(control);
        row.state = Some(state);
        Ok(())
    })();
    if let Err(e) = outcome {
        log::warn!("level ({m}, {n}) failed: {e}");
        row.error = Some(e);
    }
    row.wall_time = started.elapsed();
    row
}

/// Runs every level (concurrently), then fills in the distances between
/// successive levels and to the finest level.
pub fn refine_study(problem: &Problem, levels: &[(usize, usize)], opts: &StudyOptions) -> Result<ConvergenceTable, StudyError> {
    if levels.is_empty() {
        return Err(StudyError::NoLevels);
    }
    for w in levels.windows(2) {
        if w[1].0 < w[0].0 || w[1].1 < w[0].1 {
            return Err(StudyError::NotAscending(w[1].0, w[1].1, w[0].0, w[0].1));
        }
    }
    let mut rows: Vec<LevelResult> = levels.par_iter().map(|&(m, n)| run_level(problem, m, n, opts)).collect();
    let finest = rows.last().and_then(|r| r.state.clone());
    for j in 0..rows.len() {
        let Some(state) = rows[j].state.as_ref() else { continue };
        let here = interpolate(state, InterpolantKind::Bilinear);
        let to_finest = finest.as_ref().map(|f| l2_distance(&here, &interpolate(f, InterpolantKind::Bilinear)));
        let to_prev = if j > 0 {
            rows[j - 1]
                .state
                .as_ref()
                .map(|p| l2_distance(&here, &interpolate(p, InterpolantKind::Bilinear)))
        } else {
            None
        };
        rows[j].distance_to_finest = to_finest;
        rows[j].distance_to_previous = to_prev;
    }
    Ok(ConvergenceTable { rows })
}
