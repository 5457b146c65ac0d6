//! Final-time mismatch cost and the projected-gradient search over the
//! control ball.

use rayon::prelude::*;
use thiserror::Error;

use crate::control::{discrete_norm, inner_w21, project, riesz_representer, DiscreteControl};
use crate::forward::{DiscreteState, SolveError};
use crate::problem::DiscreteProblem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimizeError {
    #[error("forward solve for the gradient component {index} ({sign}): {source}")]
    Gradient {
        index: usize,
        sign: char,
        #[source]
        source: SolveError,
    },
    #[error("forward solve failed at iteration {iteration}: {source}")]
    Solve {
        iteration: usize,
        history: Vec<IterationRecord>,
        #[source]
        source: SolveError,
    },
    #[error("ball radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

/// Σ_{i=1..m} h (v_i(n) - ω_i)^2.
pub fn cost(state: &DiscreteState, target: &[f64]) -> f64 {
    let grid = &state.grid;
    let last = state.level(grid.n);
    assert_eq!(target.len(), last.len(), "target must have m + 1 entries");
    (1..=grid.m).map(|i| grid.h * (last[i] - target[i]).powi(2)).sum()
}

pub fn default_fd_step(control: &DiscreteControl) -> f64 {
    let sup = control.values().iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    1e-6 * (1.0 + sup)
}

/// Central-difference gradient of the cost with respect to each g_k. The
/// 2(n+1) perturbed solves run in parallel.
pub fn fd_gradient(problem: &DiscreteProblem, control: &DiscreteControl, step: f64) -> Result<Vec<f64>, OptimizeError> {
    if !(step > 0.0) {
        return Err(OptimizeError::BadStep(step));
    }
    let len = control.values().len();
    (0..2 * len)
        .into_par_iter()
        .map(|j| {
            let index = j / 2;
            let (sign, delta) = if j % 2 == 0 { ('+', step) } else { ('-', -step) };
            let mut e = vec![0.0; len];
            e[index] = delta;
            problem
                .cost(&control.axpy(1.0, &e))
                .map_err(|source| OptimizeError::Gradient { index, sign, source })
        })
        .collect::<Result<Vec<f64>, _>>()
        .map(|costs| costs.chunks(2).map(|c| (c[0] - c[1]) / (2.0 * step)).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerOptions {
    pub initial: Option<DiscreteControl>,
    /// Relative decrease below which an iteration counts as stalled.
    pub tol: f64,
    pub patience: usize,
    pub max_iters: usize,
    pub armijo_c1: f64,
    pub max_halvings: usize,
    /// Finite-difference step; defaults to 1e-6 (1 + |g|_inf).
    pub fd_step: Option<f64>,
    /// Stop as soon as the cost reaches this value.
    pub cost_floor: f64,
}

impl Default for OptimizerOptions {
    fn default() -> Self {
        OptimizerOptions {
            initial: None,
            tol: 1e-8,
            patience: 3,
            max_iters: 200,
            armijo_c1: 1e-4,
            max_halvings: 30,
            fd_step: None,
            cost_floor: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iter: usize,
    pub cost: f64,
    /// Accepted step length (0 for the starting point).
    pub step: f64,
    pub norm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    CostFloor,
    Stalled,
    Stationary,
    LineSearchFailed,
    MaxIterations,
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            StopReason::CostFloor => "cost reached its floor",
            StopReason::Stalled => "relative decrease below tolerance",
            StopReason::Stationary => "projected gradient vanished",
            StopReason::LineSearchFailed => "line search found no decrease",
            StopReason::MaxIterations => "iteration limit reached",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizationResult {
    pub control: DiscreteControl,
    pub state: DiscreteState,
    pub cost: f64,
    pub history: Vec<IterationRecord>,
    pub stop: StopReason,
    /// Last observed cost decrease.
    pub epsilon: f64,
    pub forward_solves: usize,
}

/// Projected gradient descent on the ball ‖[g]_n‖ ≤ R. Search directions
/// are Riesz representers of the finite-difference gradient in the control
/// inner product, step lengths start from a Barzilai–Borwein estimate and
/// are halved until the Armijo condition holds.
pub fn optimize(problem: &DiscreteProblem, opts: &OptimizerOptions) -> Result<OptimizationResult, OptimizeError> {
    let radius = problem.radius;
    if !(radius > 0.0) {
        return Err(OptimizeError::BadRadius(radius));
    }
    let tau = problem.grid.tau;
    let start = opts.initial.clone().unwrap_or_else(|| problem.zero_control());
    let mut control = project(&start, radius);
    let mut solves = 0usize;
    let mut history = Vec::new();
    let (mut state, _) = problem.solve(&control).map_err(|source| OptimizeError::Solve {
        iteration: 0,
        history: history.clone(),
        source,
    })?;
    solves += 1;
    let mut current = problem.cost_of(&state);
    history.push(IterationRecord {
        iter: 0,
        cost: current,
        step: 0.0,
        norm: discrete_norm(&control),
    });

    let mut epsilon = 0.0;
    let mut stalled = 0usize;
    let mut previous: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut step_len = f64::NAN;
    let mut stop = StopReason::MaxIterations;
    for iter in 1..=opts.max_iters {
        if current <= opts.cost_floor {
            stop = StopReason::CostFloor;
            break;
        }
        let fd = opts.fd_step.unwrap_or_else(|| default_fd_step(&control));
        let grad = fd_gradient(problem, &control, fd)?;
        solves += 2 * grad.len();
        let direction = riesz_representer(&grad, tau);
        let dnorm = inner_w21(&direction, &direction, tau).sqrt();
        if !(dnorm > 0.0) {
            stop = StopReason::Stationary;
            break;
        }

        // Barzilai–Borwein length from the last accepted move
        let fallback = radius / dnorm;
        step_len = match &previous {
            Some((ds, dd)) => {
                let sy: f64 = ds.iter().zip(&grad).zip(dd).map(|((s, g), g0)| s * (g - g0)).sum();
                let ss = inner_w21(ds, ds, tau);
                let bb = ss / sy;
                if bb.is_finite() && bb > 0.0 {
                    bb
                } else {
                    2.0 * step_len.max(fallback * 1e-3)
                }
            }
            None => fallback,
        };

        let mut accepted = None;
        let mut alpha = step_len;
        for _ in 0..=opts.max_halvings {
            let trial = project(&control.axpy(-alpha, &direction), radius);
            let moved: Vec<f64> = trial.values().iter().zip(control.values()).map(|(a, b)| a - b).collect();
            let predicted: f64 = grad.iter().zip(&moved).map(|(g, d)| g * d).sum();
            match problem.solve(&trial) {
                Ok((trial_state, _)) => {
                    solves += 1;
                    let value = problem.cost_of(&trial_state);
                    if value <= current + opts.armijo_c1 * predicted && value <= current {
                        accepted = Some((trial, trial_state, value, moved));
                        break;
                    }
                }
                Err(err) => {
                    solves += 1;
                    log::debug!("trial step {alpha:e} rejected: {err}");
                }
            }
            alpha *= 0.5;
        }
        let Some((next, next_state, value, moved)) = accepted else {
            stop = StopReason::LineSearchFailed;
            break;
        };
        step_len = alpha;
        epsilon = current - value;
        let relative = epsilon / current.max(f64::MIN_POSITIVE);
        previous = Some((moved, grad));
        control = next;
        state = next_state;
        current = value;
        history.push(IterationRecord {
            iter,
            cost: current,
            step: alpha,
            norm: discrete_norm(&control),
        });
        log::debug!("iteration {iter}: cost {current:.6e}, step {alpha:.3e}");
        if relative < opts.tol {
            stalled += 1;
            if stalled >= opts.patience {
                stop = StopReason::Stalled;
                break;
            }
        } else {
            stalled = 0;
        }
        if iter == opts.max_iters {
            stop = StopReason::MaxIterations;
        }
    }
    if current <= opts.cost_floor {
        stop = StopReason::CostFloor;
    }
    Ok(OptimizationResult {
        control,
        state,
        cost: current,
        history,
        stop,
        epsilon,
        forward_solves: solves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::BetaGraph;
    use crate::field::{constant_field, expr_field};
    use crate::grid::{Grid, ProblemData};
    use crate::problem::{DiscretizeOptions, Problem};
    use std::sync::Arc;

    fn heat_problem(omega: &str, radius: f64) -> Problem {
        Problem::new(
            ProblemData {
                a: constant_field(1.0),
                b: constant_field(0.0),
                c: constant_field(0.0),
                f: constant_field(0.0),
                phi: expr_field("cos(pi*x)").unwrap(),
                p: constant_field(0.0),
                omega: expr_field(omega).unwrap(),
                a0: 1.0,
                ell: 1.0,
                t_final: 0.2,
                radius,
            },
            BetaGraph::linear(1.0).unwrap(),
        )
    }

    #[test]
    fn cost_examples() {
        let grid = Grid::uniform(2.0, 1.0, 2, 1).unwrap();
        let state = DiscreteState::new(grid.clone(), vec![vec![0.0; 3], vec![9.0, 1.0, 3.0]]);
        assert_eq!(cost(&state, &[0.0, 0.0, 1.0]), 5.0);
        assert_eq!(cost(&state, &[9.0, 1.0, 3.0]), 0.0);
        let doubled = DiscreteState::new(grid, vec![vec![0.0; 3], vec![18.0, 2.0, 6.0]]);
        assert_eq!(cost(&doubled, &[0.0, 0.0, 0.0]), 4.0 * cost(&state, &[0.0, 0.0, 0.0]));
    }

    #[test]
    fn zero_cost_stops_immediately() {
        let problem = heat_problem("0", 1.0);
        let mut dp = problem.discretize(6, 6, &DiscretizeOptions::default()).unwrap();
        let (state, _) = dp.solve(&dp.zero_control()).unwrap();
        dp.target = state.level(dp.grid.n).to_vec();
        let result = optimize(&dp, &OptimizerOptions::default()).unwrap();
        assert_eq!(result.history.len(), 1);
        assert_eq!(result.cost, 0.0);
        assert_eq!(result.stop, StopReason::CostFloor);
        let grad = fd_gradient(&dp, &dp.zero_control(), 1e-6).unwrap();
        assert!(grad.iter().all(|g| g.abs() <= 1e-6));
    }

    #[test]
    fn gradient_matches_linear_sensitivity() {
        // identity β: the map g -> v(n) is affine, so the cost is quadratic and
        // its gradient follows from the columns of the sensitivity matrix
        let problem = heat_problem("x", 1.0);
        let dp = problem.discretize(4, 4, &DiscretizeOptions::default()).unwrap();
        let g = DiscreteControl::new(vec![0.2, -0.1, 0.3, 0.0, 0.5], dp.grid.tau);
        let (base, _) = dp.solve(&g).unwrap();
        let zero_state = dp.solve(&dp.zero_control()).unwrap().0;
        let residual: Vec<f64> = (0..=4).map(|i| base.get(i, 4) - dp.target[i]).collect();
        let grad = fd_gradient(&dp, &g, 1e-6).unwrap();
        for k in 0..=4 {
            let mut e = vec![0.0; 5];
            e[k] = 1.0;
            let (unit, _) = dp.solve(&DiscreteControl::new(e, dp.grid.tau)).unwrap();
            let col: Vec<f64> = (0..=4).map(|i| unit.get(i, 4) - zero_state.get(i, 4)).collect();
            let exact: f64 = (1..=4).map(|i| 2.0 * dp.grid.h * residual[i] * col[i]).sum();
            assert!((grad[k] - exact).abs() < 1e-5, "k {k}: {} vs {exact}", grad[k]);
        }
    }

    #[test]
    fn descent_is_monotone_and_feasible() {
        let problem = heat_problem("0.5*x", 0.8);
        let dp = problem.discretize(8, 8, &DiscretizeOptions::default()).unwrap();
        let opts = OptimizerOptions {
            max_iters: 15,
            ..OptimizerOptions::default()
        };
        let result = optimize(&dp, &opts).unwrap();
        for w in result.history.windows(2) {
            assert!(w[1].cost <= w[0].cost);
        }
        assert!(result.history.iter().all(|r| r.norm <= 0.8 + 1e-10));
        assert!(result.cost < result.history[0].cost);
    }

    #[test]
    fn fd_gradient_is_stable_in_the_step() {
        let mut problem = heat_problem("0.3", 1.0);
        problem.beta = BetaGraph::two_phase(0.2, 0.5, 1.0, 1.5).unwrap();
        problem.data.f = Arc::new(crate::expr::Expr::parse("1").unwrap());
        let dp = problem.discretize(6, 6, &DiscretizeOptions::default()).unwrap();
        let g = DiscreteControl::new(vec![0.1, 0.3, -0.2, 0.0, 0.4, 0.1, -0.3], dp.grid.tau);
        let coarse = fd_gradient(&dp, &g, 1e-4).unwrap();
        let fine = fd_gradient(&dp, &g, 1e-5).unwrap();
        for (a, b) in coarse.iter().zip(&fine) {
            assert!((a - b).abs() < 1e-4 * (1.0 + b.abs()));
        }
    }
}
