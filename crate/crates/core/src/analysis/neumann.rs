//! Two-phase similarity solution on the half line: a liquid region held at
//! a hot temperature at x = 0 melts into solid at a cold temperature, with
//! the interface at X(t) = 2 α sqrt(t).

use statrs::function::erf::{erf, erfc};
use thiserror::Error;

use std::sync::Arc;

use crate::beta::BetaGraph;
use crate::expr::EvalError;
use crate::field::{constant_field, FnField};
use crate::forward::DiscreteState;
use crate::grid::{steklov_time_at, Grid, ProblemData};
use crate::problem::Problem;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NeumannError {
    #[error("phase parameters are inconsistent: {0}")]
    Inconsistent(String),
    #[error("no root of the interface balance equation in [{lo:e}, {hi:e}]")]
    NoRoot { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannParams {
    pub conductivity_liquid: f64,
    pub conductivity_solid: f64,
    pub capacity_liquid: f64,
    pub capacity_solid: f64,
    /// Latent heat released at the phase temperature.
    pub latent: f64,
    pub phase_temp: f64,
    /// Temperature imposed at x = 0 (liquid side).
    pub hot: f64,
    /// Far-field temperature (solid side).
    pub cold: f64,
}

impl NeumannParams {
    fn diffusivities(&self) -> (f64, f64) {
        (
            self.conductivity_liquid / self.capacity_liquid,
            self.conductivity_solid / self.capacity_solid,
        )
    }

    fn validate(&self) -> Result<(), NeumannError> {
        let positive = [
            self.conductivity_liquid,
            self.conductivity_solid,
            self.capacity_liquid,
            self.capacity_solid,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(NeumannError::Inconsistent("conductivities and capacities must be positive".into()));
        }
        if !(self.latent >= 0.0) {
            return Err(NeumannError::Inconsistent("latent heat must be nonnegative".into()));
        }
        if !(self.hot > self.phase_temp && self.cold < self.phase_temp) {
            return Err(NeumannError::Inconsistent(format!(
                "need cold < phase temperature < hot, got {} < {} < {}",
                self.cold, self.phase_temp, self.hot
            )));
        }
        Ok(())
    }

    /// Latent-heat balance at the interface; decreasing in α.
    pub fn balance(&self, alpha: f64) -> f64 {
        let (kl, ks) = self.diffusivities();
        let pi = std::f64::consts::PI;
        let liquid = self.conductivity_liquid * (self.hot - self.phase_temp) * (-alpha * alpha / kl).exp()
            / ((pi * kl).sqrt() * erf(alpha / kl.sqrt()));
        let solid = self.conductivity_solid * (self.phase_temp - self.cold) * (-alpha * alpha / ks).exp()
            / ((pi * ks).sqrt() * erfc(alpha / ks.sqrt()));
        liquid - solid - self.latent * alpha
    }
}

/// Exact solution: front position and temperature profile.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NeumannSolution {
    pub params: NeumannParams,
    pub alpha: f64,
}

/// Solves the interface balance for α by bisection to 1e-12.
pub fn neumann_oracle(params: NeumannParams) -> Result<NeumannSolution, NeumannError> {
    params.validate()?;
    let mut lo = 1e-14;
    let mut hi = 1.0;
    if !(params.balance(lo) > 0.0) {
        return Err(NeumannError::NoRoot { lo, hi });
    }
    while params.balance(hi) > 0.0 {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(NeumannError::NoRoot { lo, hi });
        }
    }
    while hi - lo > 1e-12 {
        let mid = 0.5 * (lo + hi);
        let value = params.balance(mid);
        if !value.is_finite() {
            return Err(NeumannError::NoRoot { lo, hi });
        }
        if value > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(NeumannSolution {
        params,
        alpha: 0.5 * (lo + hi),
    })
}

impl NeumannSolution {
    pub fn front(&self, t: f64) -> f64 {
        2.0 * self.alpha * t.sqrt()
    }

    pub fn temperature(&self, x: f64, t: f64) -> f64 {
        let p = &self.params;
        let (kl, ks) = p.diffusivities();
        if t <= 0.0 {
            return if x <= 0.0 { p.hot } else { p.cold };
        }
        let z = x / (2.0 * t.sqrt());
        if x <= self.front(t) {
            p.hot - (p.hot - p.phase_temp) * erf(z / kl.sqrt()) / erf(self.alpha / kl.sqrt())
        } else {
            p.cold + (p.phase_temp - p.cold) * erfc(z / ks.sqrt()) / erfc(self.alpha / ks.sqrt())
        }
    }

    /// Spatial derivative of the temperature.
    pub fn gradient(&self, x: f64, t: f64) -> f64 {
        let p = &self.params;
        let (kl, ks) = p.diffusivities();
        let pi = std::f64::consts::PI;
        let z = x / (2.0 * t.sqrt());
        if x <= self.front(t) {
            -(p.hot - p.phase_temp) / erf(self.alpha / kl.sqrt()) * (-z * z / kl).exp() / (pi * kl * t).sqrt()
        } else {
            -(p.phase_temp - p.cold) / erfc(self.alpha / ks.sqrt()) * (-z * z / ks).exp() / (pi * ks * t).sqrt()
        }
    }

    /// Conductive flux k v_x at (x, t), the boundary datum of the scheme.
    pub fn flux(&self, x: f64, t: f64) -> f64 {
        let k = if x <= self.front(t) {
            self.params.conductivity_liquid
        } else {
            self.params.conductivity_solid
        };
        k * self.gradient(x, t)
    }
}

impl NeumannSolution {
    /// Melting problem on [0, ell] x [0, horizon] started from the similarity
    /// profile at time `start` > 0, with the exact flux at x = ell. The
    /// scheme carries one diffusion coefficient, so both conductivities
    /// must agree.
    pub fn problem(&self, start: f64, ell: f64, horizon: f64, radius: f64) -> Result<Problem, NeumannError> {
        let p = self.params;
        if p.conductivity_liquid != p.conductivity_solid {
            return Err(NeumannError::Inconsistent(format!(
                "conductivities differ ({} vs {})",
                p.conductivity_liquid, p.conductivity_solid
            )));
        }
        if !(start > 0.0 && ell > 0.0 && horizon > 0.0) {
            return Err(NeumannError::Inconsistent("start time, length and horizon must be positive".into()));
        }
        let beta = BetaGraph::two_phase(p.phase_temp, p.latent, p.capacity_solid, p.capacity_liquid)
            .map_err(|e| NeumannError::Inconsistent(e.to_string()))?;
        let sol = *self;
        let data = ProblemData {
            a: constant_field(p.conductivity_liquid),
            b: constant_field(0.0),
            c: constant_field(0.0),
            f: constant_field(0.0),
            phi: Arc::new(FnField::of_x("phi", move |x| sol.temperature(x, start))),
            p: Arc::new(FnField::of_t("p", move |t| sol.flux(ell, start + t))),
            omega: constant_field(0.0),
            a0: p.conductivity_liquid,
            ell,
            t_final: horizon,
            radius,
        };
        Ok(Problem::new(data, beta))
    }

    /// Step averages of the exact flux at x = 0, shifted by `start`.
    pub fn flux_averages(&self, start: f64, grid: &Grid) -> Result<Vec<f64>, EvalError> {
        let sol = *self;
        let g = FnField::of_t("g", move |t| sol.flux(0.0, start + t));
        steklov_time_at(&g, grid, 0.0)
    }
}

/// All x where the final-level-interpolated profile at time t crosses
/// `level`, in increasing order, found by linear inverse interpolation.
pub fn front_crossings(state: &DiscreteState, t: f64, level: f64) -> Vec<f64> {
    let interp = crate::analysis::interpolate::interpolate(state, crate::analysis::interpolate::InterpolantKind::Bilinear);
    let profile = interp.profile_at(t);
    let grid = &state.grid;
    let mut out = Vec::new();
    for i in 0..grid.m {
        let (a, b) = (profile[i] - level, profile[i + 1] - level);
        if a == 0.0 {
            out.push(grid.x(i));
        } else if a * b < 0.0 {
            out.push(grid.x(i) + grid.h * a / (a - b));
        }
    }
    if profile[grid.m] == level {
        out.push(grid.ell);
    }
    out
}

/// First crossing, the reported free boundary.
pub fn free_boundary(state: &DiscreteState, t: f64, level: f64) -> Option<f64> {
    front_crossings(state, t, level).into_iter().next()
}
