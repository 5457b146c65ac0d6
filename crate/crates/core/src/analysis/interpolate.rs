//! Continuous extensions of a discrete state and L2 distances between them.

use thiserror::Error;

use crate::forward::DiscreteState;
use crate::grid::Grid;
use crate::quadrature::{gauss_legendre, GL5_NODES, GL5_WEIGHTS};

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("point (x = {x}, t = {t}) lies outside [0, {ell}] x [0, {t_final}]")]
pub struct OutOfDomain {
    pub x: f64,
    pub t: f64,
    pub ell: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterpolantKind {
    /// ṽ: v_i(k) on each cell.
    PiecewiseConstant,
    /// v^τ: linear in x between nodes of level k, constant in t over a step.
    SpaceLinear,
    /// v̂^τ: linear in t between the space-linear profiles of levels k-1, k.
    Bilinear,
}

#[derive(Debug, Clone, Copy)]
pub struct Interpolant<'a> {
    pub state: &'a DiscreteState,
    pub kind: InterpolantKind,
}

pub fn interpolate(state: &DiscreteState, kind: InterpolantKind) -> Interpolant<'_> {
    Interpolant { state, kind }
}

/// Cell index i with x in [x_i, x_{i+1}), the last cell closed at ell.
pub(crate) fn cell_of(grid: &Grid, x: f64) -> usize {
    ((x / grid.h).floor().max(0.0) as usize).min(grid.m - 1)
}

/// Step index k with t in [t_{k-1}, t_k), the last step closed at T.
pub(crate) fn step_of(grid: &Grid, t: f64) -> usize {
    ((t / grid.tau).floor().max(0.0) as usize + 1).min(grid.n)
}

impl Interpolant<'_> {
    pub fn grid(&self) -> &Grid {
        &self.state.grid
    }

    pub fn eval(&self, x: f64, t: f64) -> Result<f64, OutOfDomain> {
        let grid = self.grid();
        let slack = 1e-12;
        if !(x >= -slack * grid.ell && x <= grid.ell * (1.0 + slack) && t >= -slack * grid.t_final && t <= grid.t_final * (1.0 + slack)) {
            return Err(OutOfDomain {
                x,
                t,
                ell: grid.ell,
                t_final: grid.t_final,
            });
        }
        let i = cell_of(grid, x);
        let k = step_of(grid, t);
        Ok(self.eval_in(i, k, x, t))
    }

    /// Evaluates the polynomial piece of cell (i, k) at (x, t).
    pub fn eval_in(&self, i: usize, k: usize, x: f64, t: f64) -> f64 {
        let grid = self.grid();
        let s = self.state;
        let profile = |level: usize| {
            let v0 = s.get(i, level);
            let slope = (s.get(i + 1, level) - v0) / grid.h;
            v0 + slope * (x - grid.x(i))
        };
        match self.kind {
            InterpolantKind::PiecewiseConstant => s.get(i, k),
            InterpolantKind::SpaceLinear => profile(k),
            InterpolantKind::Bilinear => {
                let before = profile(k - 1);
                let after = profile(k);
                before + (after - before) * (t - grid.t(k - 1)) / grid.tau
            }
        }
    }

    /// Piecewise-linear profile in x of v̂^τ at time t, as nodal values.
    pub fn profile_at(&self, t: f64) -> Vec<f64> {
        let grid = self.grid();
        let k = step_of(grid, t);
        let theta = ((t - grid.t(k - 1)) / grid.tau).clamp(0.0, 1.0);
        let s = self.state;
        (0..=grid.m)
            .map(|i| match self.kind {
                InterpolantKind::Bilinear => s.get(i, k - 1) + theta * (s.get(i, k) - s.get(i, k - 1)),
                _ => s.get(i, k),
            })
            .collect()
    }
}

fn union_cuts(a: f64, steps_a: usize, b: f64, steps_b: usize, end: f64) -> Vec<f64> {
    let mut cuts: Vec<f64> = (0..=steps_a).map(|j| if j == steps_a { end } else { j as f64 * a }).collect();
    cuts.extend((0..=steps_b).map(|j| if j == steps_b { end } else { j as f64 * b }));
    cuts.sort_by(|p, q| p.partial_cmp(q).expect("finite grid points"));
    cuts.dedup_by(|p, q| (*p - *q).abs() <= 1e-13 * end);
    cuts
}

/// L2(D) distance between two interpolants on possibly different grids of
/// the same domain. On every cell of the union grid both are polynomials of
/// degree at most one in each variable, so a 2 x 2 Gauss rule is exact.
pub fn l2_distance(u: &Interpolant, w: &Interpolant) -> f64 {
    let (gu, gw) = (u.grid(), w.grid());
    assert!(
        (gu.ell - gw.ell).abs() <= 1e-12 * gu.ell && (gu.t_final - gw.t_final).abs() <= 1e-12 * gu.t_final,
        "interpolants live on different domains"
    );
    let xs = union_cuts(gu.h, gu.m, gw.h, gw.m, gu.ell);
    let ts = union_cuts(gu.tau, gu.n, gw.tau, gw.n, gu.t_final);
    let (nodes, weights) = gauss_legendre(2);
    let mut sum = 0.0;
    for tw in ts.windows(2) {
        let (t0, t1) = (tw[0], tw[1]);
        let tm = 0.5 * (t0 + t1);
        let (ku, kw) = (step_of(gu, tm), step_of(gw, tm));
        for xw in xs.windows(2) {
            let (x0, x1) = (xw[0], xw[1]);
            let xm = 0.5 * (x0 + x1);
            let (iu, iw) = (cell_of(gu, xm), cell_of(gw, xm));
            let mut cell = 0.0;
            for (qt, wt) in nodes.iter().zip(&weights) {
                let t = tm + 0.5 * (t1 - t0) * qt;
                for (qx, wx) in nodes.iter().zip(&weights) {
                    let x = xm + 0.5 * (x1 - x0) * qx;
                    let d = u.eval_in(iu, ku, x, t) - w.eval_in(iw, kw, x, t);
                    cell += wt * wx * d * d;
                }
            }
            sum += cell * 0.25 * (x1 - x0) * (t1 - t0);
        }
    }
    sum.sqrt()
}

/// L2(D) distance from an interpolant to a smooth function, by 5 x 5 Gauss
/// rules on every grid cell.
pub fn l2_error(u: &Interpolant, exact: impl Fn(f64, f64) -> f64) -> f64 {
    let grid = u.grid();
    let mut sum = 0.0;
    for k in 1..=grid.n {
        let (t0, t1) = (grid.t(k - 1), grid.t(k));
        for i in 0..grid.m {
            let (x0, x1) = (grid.x(i), grid.x(i + 1));
            let mut cell = 0.0;
            for (qt, wt) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
                let t = 0.5 * (t0 + t1) + 0.5 * (t1 - t0) * qt;
                for (qx, wx) in GL5_NODES.iter().zip(&GL5_WEIGHTS) {
                    let x = 0.5 * (x0 + x1) + 0.5 * (x1 - x0) * qx;
                    let d = u.eval_in(i, k, x, t) - exact(x, t);
                    cell += wt * wx * d * d;
                }
            }
            sum += cell * 0.25 * (x1 - x0) * (t1 - t0);
        }
    }
    sum.sqrt()
}

/// L2(0, ell) distance between the final-time profile and a function of x.
pub fn final_profile_error(state: &DiscreteState, exact: impl Fn(f64) -> f64) -> f64 {
    let grid = &state.grid;
    let last = state.level(grid.n);
    let mut sum = 0.0;
    for i in 0..grid.m {
        let (x0, x1) = (grid.x(i), grid.x(i + 1));
        sum += crate::quadrature::gl5(
            |x| {
                let v = last[i] + (last[i + 1] - last[i]) * (x - x0) / (x1 - x0);
                (v - exact(x)).powi(2)
            },
            x0,
            x1,
        );
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::diagnostics::energy_norm;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_state(m: usize, n: usize, seed: u64) -> DiscreteState {
        let grid = Grid::uniform(1.0, 0.5, m, n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let levels = (0..=n).map(|_| (0..=m).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        DiscreteState::new(grid, levels)
    }

    #[test]
    fn constant_state_is_constant_everywhere() {
        let grid = Grid::uniform(2.0, 1.0, 4, 3).unwrap();
        let state = DiscreteState::new(grid, vec![vec![1.25; 5]; 4]);
        for kind in [InterpolantKind::PiecewiseConstant, InterpolantKind::SpaceLinear, InterpolantKind::Bilinear] {
            let u = interpolate(&state, kind);
            for (x, t) in [(0.0, 0.0), (0.3, 0.7), (2.0, 1.0), (1.1, 0.5)] {
                assert_eq!(u.eval(x, t).unwrap(), 1.25);
            }
        }
    }

    #[test]
    fn bilinear_is_nodal_and_continuous() {
        let state = random_state(5, 4, 3);
        let u = interpolate(&state, InterpolantKind::Bilinear);
        let grid = &state.grid;
        for k in 0..=grid.n {
            for i in 0..=grid.m {
                assert!((u.eval(grid.x(i), grid.t(k)).unwrap() - state.get(i, k)).abs() < 1e-12);
            }
        }
        // straddle cell boundaries
        for i in 1..grid.m {
            let x = grid.x(i);
            let left = u.eval_in(i - 1, 2, x, 0.3);
            let right = u.eval_in(i, 2, x, 0.3);
            assert!((left - right).abs() < 1e-12);
        }
        for k in 1..grid.n {
            let t = grid.t(k);
            assert!((u.eval_in(2, k, 0.5, t) - u.eval_in(2, k + 1, 0.5, t)).abs() < 1e-12);
        }
    }

    #[test]
    fn bilinear_cell_center_is_corner_average() {
        let state = random_state(3, 3, 9);
        let u = interpolate(&state, InterpolantKind::Bilinear);
        let g = &state.grid;
        let (i, k) = (1, 2);
        let center = u.eval(0.5 * (g.x(i) + g.x(i + 1)), 0.5 * (g.t(k - 1) + g.t(k))).unwrap();
        let corners = 0.25 * (state.get(i, k - 1) + state.get(i + 1, k - 1) + state.get(i, k) + state.get(i + 1, k));
        assert!((center - corners).abs() < 1e-14);
    }

    #[test]
    fn out_of_domain_is_rejected() {
        let state = random_state(3, 3, 1);
        let u = interpolate(&state, InterpolantKind::SpaceLinear);
        assert!(u.eval(-0.1, 0.2).is_err());
        assert!(u.eval(0.5, 0.6).is_err());
        assert!(u.eval(1.0, 0.5).is_ok());
    }

    #[test]
    fn bilinear_and_space_linear_are_equivalent() {
        for seed in 0..5 {
            let state = random_state(6, 5, seed);
            let hat = interpolate(&state, InterpolantKind::Bilinear);
            let lin = interpolate(&state, InterpolantKind::SpaceLinear);
            let term1 = energy_norm(&state).time_differences;
            let bound = state.grid.tau * term1.sqrt();
            assert!(l2_distance(&hat, &lin) <= bound * (1.0 + 1e-12));
        }
    }

    #[test]
    fn distance_matches_brute_force_quadrature() {
        let a = random_state(4, 3, 11);
        let grid_b = Grid::uniform(1.0, 0.5, 6, 5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let b = DiscreteState::new(grid_b, (0..=5).map(|_| (0..=6).map(|_| rng.random_range(-1.0..1.0)).collect()).collect());
        let (ua, ub) = (interpolate(&a, InterpolantKind::Bilinear), interpolate(&b, InterpolantKind::Bilinear));
        // midpoint rule on a 1200 x 600 lattice as a loose check
        let (nx, nt) = (1200, 600);
        let mut sum = 0.0;
        for j in 0..nt {
            let t = (j as f64 + 0.5) * 0.5 / nt as f64;
            for i in 0..nx {
                let x = (i as f64 + 0.5) / nx as f64;
                let d = ua.eval(x, t).unwrap() - ub.eval(x, t).unwrap();
                sum += d * d;
            }
        }
        let brute = (sum * 0.5 / (nx * nt) as f64).sqrt();
        assert!((l2_distance(&ua, &ub) - brute).abs() < 2e-3 * brute);
        assert!(l2_distance(&ua, &ua) < 1e-15);
    }
}
