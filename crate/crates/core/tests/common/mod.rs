#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use stefan_core::beta::{BetaGraph, SmoothedBeta};
use stefan_core::field::{constant_field, expr_field, FnField, SharedField};
use stefan_core::grid::{AveragedData, Grid, ProblemData};
use stefan_core::problem::Problem;

pub fn field(src: &str) -> SharedField {
    expr_field(src).unwrap()
}

/// Constant state C is an exact solution when the boundary fluxes balance
/// the advective term b C.
pub fn constant_problem(value: f64, b: f64) -> Problem {
    Problem::new(
        ProblemData {
            a: field("1 + 0.5*x*x + 0.2*sin(t)"),
            b: constant_field(b),
            c: constant_field(0.0),
            f: constant_field(0.0),
            phi: constant_field(value),
            p: constant_field(b * value),
            omega: constant_field(value),
            a0: 1.0,
            ell: 1.0,
            t_final: 1.0,
            radius: 10.0,
        },
        BetaGraph::two_phase(0.0, 1.0, 1.0, 2.0).unwrap(),
    )
}

/// Small random instance with smooth coefficients, a >= a0 and |b| small
/// enough for the mesh condition on m <= 3, n <= 2.
pub fn random_small_problem(rng: &mut impl Rng) -> (Problem, String) {
    let r = |rng: &mut dyn rand::RngCore, lo: f64, hi: f64| rng.random_range(lo..hi);
    let a = format!("1 + {:.6}*sin({:.6}*x + t)^2", r(rng, 0.0, 0.5), r(rng, 0.5, 3.0));
    let b = format!("{:.6}*cos(x - {:.6}*t)", r(rng, -0.1, 0.1), r(rng, 0.0, 2.0));
    let c = format!("{:.6} + 0.1*x", r(rng, 0.0, 1.0));
    let f = format!("{:.6}*exp(-x)*cos(t)", r(rng, -2.0, 2.0));
    let phi = format!("{:.6} + {:.6}*x", r(rng, -1.0, 0.0), r(rng, 0.5, 2.0));
    let p = format!("{:.6}*(1 + t)", r(rng, -1.0, 1.0));
    let g = format!("{:.6} + {:.6}*t", r(rng, -1.0, 1.0), r(rng, -1.0, 1.0));
    let temp = r(rng, -0.3, 0.3);
    let nu = r(rng, 0.2, 2.0);
    let problem = Problem::new(
        ProblemData {
            a: field(&a),
            b: field(&b),
            c: field(&c),
            f: field(&f),
            phi: field(&phi),
            p: field(&p),
            omega: constant_field(0.0),
            a0: 1.0,
            ell: 1.0,
            t_final: 0.05,
            radius: 10.0,
        },
        BetaGraph::two_phase(temp, nu, 1.0, r(rng, 1.0, 2.0)).unwrap(),
    );
    (problem, g)
}

/// Two-phase problem whose initial profile is compatible with the
/// boundary fluxes; the front starts at x = 0.5.
pub fn two_phase_problem() -> Problem {
    Problem::new(
        ProblemData {
            a: constant_field(1.0),
            b: constant_field(0.2),
            c: constant_field(0.0),
            f: constant_field(0.0),
            phi: field("0.5 - x"),
            p: constant_field(-1.1),
            omega: constant_field(0.0),
            a0: 1.0,
            ell: 1.0,
            t_final: 0.25,
            radius: 10.0,
        },
        BetaGraph::two_phase(0.0, 1.0, 1.0, 2.0).unwrap(),
    )
}

/// Flux at x = 0 matching the initial profile of [`two_phase_problem`].
pub const TWO_PHASE_FLUX: &str = "-0.9";

/// [`two_phase_problem`] without advection; the conductive flux is -1 at
/// both ends.
pub fn diffusive_two_phase_problem() -> Problem {
    let mut problem = two_phase_problem();
    problem.data.b = constant_field(0.0);
    problem.data.p = constant_field(-1.0);
    problem
}

pub const DIFFUSIVE_TWO_PHASE_FLUX: &str = "-1";

/// Single-phase problem with exact solution e^{-t} sin(πx).
pub fn manufactured_problem() -> (Problem, SharedField) {
    let f = "exp(-t)*((1 + 0.5*x)*pi^2*sin(pi*x) - 0.5*pi*cos(pi*x))";
    let problem = Problem::new(
        ProblemData {
            a: field("1 + 0.5*x"),
            b: constant_field(0.0),
            c: constant_field(1.0),
            f: field(f),
            phi: field("sin(pi*x)"),
            p: field("-1.5*pi*exp(-t)"),
            omega: constant_field(0.0),
            a0: 1.0,
            ell: 1.0,
            t_final: 1.0,
            radius: 100.0,
        },
        BetaGraph::linear(1.0).unwrap(),
    );
    let exact: SharedField = Arc::new(FnField::new("exact", |x, t| (-t).exp() * (PI * x).sin()));
    (problem, exact)
}

pub const MANUFACTURED_FLUX: &str = "pi*exp(-t)";

pub struct NeumannSetup {
    pub problem: Problem,
    pub solution: stefan_core::analysis::NeumannSolution,
    pub start: f64,
}

impl NeumannSetup {
    /// Flux averages at x = 0 over each step.
    pub fn flux(&self, grid: &Grid) -> Vec<f64> {
        self.solution.flux_averages(self.start, grid).unwrap()
    }
}

/// Melting problem started from the similarity profile at t0 so the data
/// are smooth.
pub fn neumann_setup() -> NeumannSetup {
    use stefan_core::analysis::{neumann_oracle, NeumannParams};
    let params = NeumannParams {
        conductivity_liquid: 1.0,
        conductivity_solid: 1.0,
        capacity_liquid: 1.5,
        capacity_solid: 1.0,
        latent: 1.0,
        phase_temp: 0.0,
        hot: 1.0,
        cold: -1.0,
    };
    let solution = neumann_oracle(params).unwrap();
    let start = 0.05;
    NeumannSetup {
        problem: solution.problem(start, 2.0, 0.5, 100.0).unwrap(),
        solution,
        start,
    }
}

/// Independent dense solve of one step's nonlinear system by damped Newton
/// with Gaussian elimination.
pub fn dense_newton_step(
    v_prev: &[f64],
    k: usize,
    data: &AveragedData,
    flux: f64,
    sb: &SmoothedBeta,
    grid: &Grid,
) -> Vec<f64> {
    let m = grid.m;
    let (h, s) = (grid.h, grid.h * grid.h / grid.tau);
    let a = |i: usize| data.a.get(i, k);
    let b = |i: usize| data.b.get(i, k);
    let c = |i: usize| data.c.get(i, k);
    let f = |i: usize| data.f.get(i, k);
    let system = |v: &[f64]| -> (Vec<f64>, Vec<Vec<f64>>) {
        let mut r = vec![0.0; m + 1];
        let mut jac = vec![vec![0.0; m + 1]; m + 1];
        for i in 0..m {
            let (bn, dbn) = sb.eval_with_deriv(v[i]);
            let rhs = s * sb.bn_eval(v_prev[i]) + h * h * f(i) - if i == 0 { h * flux } else { 0.0 };
            let diag = if i == 0 {
                a(0) - h * b(0) + h * h * c(0)
            } else {
                a(i - 1) + a(i) - h * b(i) + h * h * c(i)
            };
            r[i] = diag * v[i] + s * bn - a(i) * v[i + 1] - rhs;
            jac[i][i] = diag + s * dbn;
            jac[i][i + 1] = -a(i);
            if i > 0 {
                let low = -a(i - 1) + h * b(i - 1);
                r[i] += low * v[i - 1];
                jac[i][i - 1] = low;
            }
        }
        let low = -a(m - 1) + h * b(m - 1);
        r[m] = low * v[m - 1] + a(m - 1) * v[m] - h * data.p[k];
        jac[m][m - 1] = low;
        jac[m][m] = a(m - 1);
        (r, jac)
    };
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    let mut v = v_prev.to_vec();
    for _ in 0..200 {
        let (r, jac) = system(&v);
        if norm(&r) < 1e-14 {
            break;
        }
        let step = gauss_solve(jac, r.clone());
        let mut lambda = 1.0;
        loop {
            let trial: Vec<f64> = v.iter().zip(&step).map(|(x, d)| x - lambda * d).collect();
            if norm(&system(&trial).0) < norm(&r) || lambda < 1e-8 {
                v = trial;
                break;
            }
            lambda *= 0.5;
        }
    }
    v
}

fn gauss_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().partial_cmp(&a[j][col].abs()).unwrap())
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for j in col..n {
                a[row][j] -= factor * a[col][j];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|j| a[row][j] * x[j]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}
