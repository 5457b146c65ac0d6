//! Sup-norm and energy diagnostics of discrete states, normalized by the
//! data norms that bound them.

use thiserror::Error;

use crate::control::{pn_map, w21_norm_of, DiscreteControl};
use crate::forward::DiscreteState;
use crate::grid::{sup_on_lattice, GridError, ProblemData};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticError {
    #[error("all data norms vanish, the ratio is undefined")]
    ZeroData,
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// The three sums of the discrete energy norm (squared).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EnergyBreakdown {
    /// Σ_k τ Σ_i h v_{i t̄}^2(k)
    pub time_differences: f64,
    /// max_k Σ_i h v_{ix}^2(k)
    pub max_gradient: f64,
    /// Σ_k τ^2 Σ_i h v_{ixt̄}^2(k)
    pub mixed_differences: f64,
    pub total: f64,
}

pub fn energy_norm(state: &DiscreteState) -> EnergyBreakdown {
    let grid = &state.grid;
    let (m, h, tau) = (grid.m, grid.h, grid.tau);
    let mut out = EnergyBreakdown::default();
    for k in 1..=grid.n {
        let (now, before) = (state.level(k), state.level(k - 1));
        let mut t_sum = 0.0;
        let mut x_sum = 0.0;
        let mut xt_sum = 0.0;
        for i in 0..m {
            let vt = (now[i] - before[i]) / tau;
            let vx = (now[i + 1] - now[i]) / h;
            let vx_old = (before[i + 1] - before[i]) / h;
            let vxt = (vx - vx_old) / tau;
            t_sum += h * vt * vt;
            x_sum += h * vx * vx;
            xt_sum += h * vxt * vxt;
        }
        out.time_differences += tau * t_sum;
        out.max_gradient = out.max_gradient.max(x_sum);
        out.mixed_differences += tau * tau * xt_sum;
    }
    out.total = out.time_differences + out.max_gradient + out.mixed_differences;
    out
}

/// Data norms on the right of the sup-norm and energy estimates.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DataNormSummary {
    pub f_sup: f64,
    pub p_sup: f64,
    pub g_sup: f64,
    pub phi_sup: f64,
    pub phi_w21: f64,
    pub p_w21: f64,
    pub g_w21: f64,
}

impl DataNormSummary {
    /// Estimates the norms on a lattice of `resolution` points per unit
    /// direction; the control enters through its piecewise-linear
    /// interpolant.
    pub fn compute(data: &ProblemData, control: &DiscreteControl, resolution: usize) -> Result<Self, GridError> {
        let (ell, tf) = (data.ell, data.t_final);
        let (nx, nt) = (resolution.max(8), resolution.max(8));
        let eval_or_zero = |field: &dyn crate::field::Field, x: f64, t: f64| field.eval(x, t).unwrap_or(0.0);
        let pn = pn_map(control);
        Ok(DataNormSummary {
            f_sup: sup_on_lattice(data.f.as_ref(), "f", ell, tf, nx, nt)?,
            p_sup: sup_on_lattice(data.p.as_ref(), "p", ell, tf, 0, nt)?,
            g_sup: pn.sup_norm(),
            phi_sup: sup_on_lattice(data.phi.as_ref(), "phi", ell, tf, nx, 0)?,
            phi_w21: w21_norm_of(|x| eval_or_zero(data.phi.as_ref(), x, 0.0), ell, nx),
            p_w21: w21_norm_of(|t| eval_or_zero(data.p.as_ref(), ell, t), tf, nt),
            g_w21: pn.w21_norm(),
        })
    }

    pub fn sup_sum(&self) -> f64 {
        self.f_sup + self.p_sup + self.g_sup + self.phi_sup
    }

    /// ‖Φ‖²_{W_2^1} + ‖f‖²_∞ + ‖p‖²_{W_2^1} + ‖g^n‖²_{W_2^1}.
    pub fn energy_bound(&self) -> f64 {
        self.phi_w21.powi(2) + self.f_sup.powi(2) + self.p_w21.powi(2) + self.g_w21.powi(2)
    }
}

/// ‖[v]_n‖_∞ divided by the sum of the sup-norms of the data.
pub fn linf_ratio(state: &DiscreteState, norms: &DataNormSummary) -> Result<f64, DiagnosticError> {
    let denom = norms.sup_sum();
    if !(denom > 0.0) {
        return Err(DiagnosticError::ZeroData);
    }
    Ok(state.max_abs() / denom)
}

/// ‖[v]_n‖²_E divided by the energy data bound.
pub fn energy_ratio(energy: &EnergyBreakdown, norms: &DataNormSummary) -> Result<f64, DiagnosticError> {
    let denom = norms.energy_bound();
    if !(denom > 0.0) {
        return Err(DiagnosticError::ZeroData);
    }
    Ok(energy.total / denom)
}
