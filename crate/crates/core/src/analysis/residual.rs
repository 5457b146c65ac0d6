//! Weak-form residuals of a discrete state against a test function ψ with
//! ψ(·, T) = 0.

use thiserror::Error;

use crate::analysis::interpolate::{interpolate, InterpolantKind};
use crate::control::{pn_map, DiscreteControl};
use crate::expr::EvalError;
use crate::field::Field;
use crate::forward::{summed_identity_residual, DiscreteState};
use crate::grid::ProblemData;
use crate::problem::DiscreteProblem;
use crate::quadrature::{GL5_NODES, GL5_WEIGHTS};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResidualError {
    #[error("test function does not vanish at t = T: psi({x}, T) = {value}")]
    NonzeroAtFinalTime { x: f64, value: f64 },
    #[error("evaluating `{field}`: {source}")]
    Eval {
        field: &'static str,
        #[source]
        source: EvalError,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualMode {
    /// The per-step identities tested with η = τ ψ(x_i, t_k) and summed over
    /// k, with the averaged data the scheme uses. Vanishes for solved states
    /// up to solver tolerance.
    Grid,
    /// The integral identity with the interpolants of the state, the exact
    /// ψ and its derivatives, and the unaveraged data. Measures consistency
    /// and shrinks under refinement.
    Continuous,
}

fn ctx(field: &'static str) -> impl Fn(EvalError) -> ResidualError {
    move |source| ResidualError::Eval { field, source }
}

pub fn weak_residual(
    dp: &DiscreteProblem,
    data: &ProblemData,
    state: &DiscreteState,
    control: &DiscreteControl,
    psi: &dyn Field,
    mode: ResidualMode,
) -> Result<f64, ResidualError> {
    let grid = &state.grid;
    for j in 0..=64 {
        let x = grid.ell * j as f64 / 64.0;
        let value = psi.eval(x, grid.t_final).map_err(ctx("psi"))?;
        if value.abs() > 1e-10 {
            return Err(ResidualError::NonzeroAtFinalTime { x, value });
        }
    }
    match mode {
        ResidualMode::Grid => grid_residual(dp, state, control, psi),
        ResidualMode::Continuous => continuous_residual(dp, data, state, control, psi),
    }
}

fn grid_residual(
    dp: &DiscreteProblem,
    state: &DiscreteState,
    control: &DiscreteControl,
    psi: &dyn Field,
) -> Result<f64, ResidualError> {
    let grid = &state.grid;
    let flux = control.step_averages();
    let mut total = 0.0;
    for k in 1..=grid.n {
        let rows = summed_identity_residual(state, k, &dp.averaged, flux[k], &dp.smoothed);
        for (i, r) in rows.iter().enumerate() {
            total += grid.tau * psi.eval(grid.x(i), grid.t(k)).map_err(ctx("psi"))? * r;
        }
    }
    Ok(total)
}

fn continuous_residual(
    dp: &DiscreteProblem,
    data: &ProblemData,
    state: &DiscreteState,
    control: &DiscreteControl,
    psi: &dyn Field,
) -> Result<f64, ResidualError> {
    let grid = &state.grid;
    let sb = &dp.smoothed;
    let constant = interpolate(state, InterpolantKind::PiecewiseConstant);
    let gn = pn_map(control);
    let dx = 1e-6 * grid.ell;
    let dt = 1e-6 * grid.t_final;
    let psi_x = |x: f64, t: f64| -> Result<f64, EvalError> {
        Ok((psi.eval(x + dx, t)? - psi.eval(x - dx, t)?) / (2.0 * dx))
    };
    let psi_t = |x: f64, t: f64| -> Result<f64, EvalError> {
        Ok((psi.eval(x, t + dt)? - psi.eval(x, t - dt)?) / (2.0 * dt))
    };
    let mut total = 0.0;
    for k in 1..=grid.n {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        for i in 0..grid.m {
            let (x0, x1) = (grid.x(i), grid.x(i + 1));
            let vc = constant.eval_in(i, k, x0, t1);
            let bn = sb.bn_eval(vc);
            let vx = (state.get(i + 1, k) - state.get(i, k)) / grid.h;
            let mut cell = 0.0;
            for (qt, wt) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
                let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * qt;
                for (qx, wx) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
                    let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * qx;
                    let a = data.a.eval(x, t).map_err(ctx("a"))?;
                    let b = data.b.eval(x, t).map_err(ctx("b"))?;
                    let c = data.c.eval(x, t).map_err(ctx("c"))?;
                    let f = data.f.eval(x, t).map_err(ctx("f"))?;
                    let p = psi.eval(x, t).map_err(ctx("psi"))?;
                    let px = psi_x(x, t).map_err(ctx("psi"))?;
                    let pt = psi_t(x, t).map_err(ctx("psi"))?;
                    cell += wt * wx * (-bn * pt + a * vx * px + b * vc * px + c * vc * p - f * p);
                }
            }
            total += cell * 0.25 * (x1 - x0) * (t1 - t0);
        }
    }
    // initial and boundary terms
    for i in 0..grid.m {
        let (x0, x1) = (grid.x(i), grid.x(i + 1));
        let mut part = 0.0;
        for (q, w) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
            let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * q;
            let phi = data.phi.eval(x, 0.0).map_err(ctx("phi"))?;
            part += w * sb.bn_eval(phi) * psi.eval(x, 0.0).map_err(ctx("psi"))?;
        }
        total -= part * 0.5 * (x1 - x0);
    }
    for k in 1..=grid.n {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        let mut part = 0.0;
        for (q, w) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
            let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * q;
            let p = data.p.eval(grid.ell, t).map_err(ctx("p"))?;
            part += w * (gn.eval(t) * psi.eval(0.0, t).map_err(ctx("psi"))? - p * psi.eval(grid.ell, t).map_err(ctx("psi"))?);
        }
        total += part * 0.5 * (t1 - t0);
    }
    Ok(total)
}
