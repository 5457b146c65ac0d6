//! A continuous problem and its discretization on one grid.

use thiserror::Error;

use crate::beta::{BetaGraph, SmoothedBeta};
use crate::control::{qn_map, DiscreteControl};
use crate::expr::EvalError;
use crate::field::Field;
use crate::forward::{solve_forward, DiscreteState, SolveError, SolverOptions, SolverReport};
use crate::grid::{average_data, make_grid, nodal_space, steklov_space, AveragedData, Grid, GridError, ProblemData};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("evaluating `{field}`: {source}")]
    Eval {
        field: &'static str,
        #[source]
        source: EvalError,
    },
}

/// How the target ω is sampled on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TargetMode {
    /// Cell averages, with the last entry taken at x = ell (same rule as Φ).
    #[default]
    Averaged,
    Nodal,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DiscretizeOptions {
    /// Mollification index; defaults to the number of time steps.
    pub mollifier_n: Option<usize>,
    pub target: TargetMode,
    pub solver: SolverOptions,
}

#[derive(Debug, Clone)]
pub struct Problem {
    pub data: ProblemData,
    pub beta: BetaGraph,
}

impl Problem {
    pub fn new(data: ProblemData, beta: BetaGraph) -> Self {
        Problem { data, beta }
    }

    pub fn discretize(&self, m: usize, n: usize, opts: &DiscretizeOptions) -> Result<DiscreteProblem, ProblemError> {
        let grid = make_grid(&self.data, self.beta.slope_lo(), m, n)?;
        for w in &grid.warnings {
            log::warn!("{w}");
        }
        let averaged = average_data(&self.data, &grid)?;
        let omega = self.data.omega.as_ref();
        let target = match opts.target {
            TargetMode::Averaged => steklov_space(omega, &grid),
            TargetMode::Nodal => nodal_space(omega, &grid),
        }
        .map_err(|source| ProblemError::Eval { field: "omega", source })?;
        let index = opts.mollifier_n.unwrap_or(n).max(1);
        Ok(DiscreteProblem {
            smoothed: SmoothedBeta::new(self.beta.clone(), index),
            grid,
            averaged,
            target,
            radius: self.data.radius,
            solver: opts.solver.clone(),
        })
    }
}

/// Everything needed to evaluate the discrete cost of a control.
#[derive(Debug, Clone)]
pub struct DiscreteProblem {
    pub grid: Grid,
    pub averaged: AveragedData,
    pub smoothed: SmoothedBeta,
    /// ω_i, i = 0..m (entry 0 does not enter the cost).
    pub target: Vec<f64>,
    pub radius: f64,
    pub solver: SolverOptions,
}

impl DiscreteProblem {
    pub fn control_from(&self, g: &dyn Field) -> Result<DiscreteControl, ProblemError> {
        qn_map(g, &self.grid).map_err(|source| ProblemError::Eval { field: "g", source })
    }

    pub fn zero_control(&self) -> DiscreteControl {
        DiscreteControl::zeros(self.grid.n, self.grid.tau)
    }

    pub fn solve(&self, control: &DiscreteControl) -> Result<(DiscreteState, SolverReport), SolveError> {
        if control.values().len() != self.grid.n + 1 {
            return Err(SolveError::ControlLength {
                expected: self.grid.n + 1,
                found: control.values().len(),
            });
        }
        self.solve_with_flux(&control.step_averages())
    }

    /// Forward solve from flux averages given directly per step.
    pub fn solve_with_flux(&self, flux: &[f64]) -> Result<(DiscreteState, SolverReport), SolveError> {
        solve_forward(flux, &self.averaged, &self.smoothed, &self.grid, &self.solver)
    }

    pub fn cost_of(&self, state: &DiscreteState) -> f64 {
        crate::objective::cost(state, &self.target)
    }

    pub fn cost(&self, control: &DiscreteControl) -> Result<f64, SolveError> {
        let (state, _) = self.solve(control)?;
        Ok(self.cost_of(&state))
    }
}
