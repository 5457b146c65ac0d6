//! Implicit scheme for the smoothed problem and its sweep iteration.
//!
//! Each time step couples the rows through a tridiagonal stencil and the
//! nonlinearity b_n on the diagonal. Rows 0..m-1 are updated from the
//! previous sweep (each one a scalar monotone equation), after which the
//! last row is closed explicitly from the flux condition at x = ell.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::beta::SmoothedBeta;
use crate::grid::{AveragedData, Grid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScalarSolveError {
    #[error("scalar equation is not strictly increasing: alpha + s * b_lo = {0}")]
    NotMonotone(f64),
    #[error("no sign change found after 200 bracket doublings (alpha = {alpha}, s = {s}, rhs = {rhs})")]
    BracketExpansion { alpha: f64, s: f64, rhs: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("sweep iteration stopped contracting at time step {step} (ratio >= 1 on {count} consecutive sweeps)")]
    NonContracting {
        step: usize,
        count: usize,
        report: Box<StepReport>,
    },
    #[error("sweep iteration did not converge within {max} sweeps at time step {step}")]
    MaxSweepsExceeded {
        step: usize,
        max: usize,
        report: Box<StepReport>,
    },
    #[error("row {row} of time step {step}: {source}")]
    Scalar {
        step: usize,
        row: usize,
        #[source]
        source: ScalarSolveError,
    },
    #[error("control has {found} values, expected {expected}")]
    ControlLength { expected: usize, found: usize },
    #[error("state at time step {step} is not finite")]
    NonFinite { step: usize },
}

/// Where each step's sweep iteration starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SweepStart {
    #[default]
    Previous,
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    /// Absolute stopping threshold on max |v^{N+1} - v^N|; when unset,
    /// `fp_rel_tol * (1 + |v_prev|_inf)` is used.
    pub fp_tol: Option<f64>,
    pub fp_rel_tol: f64,
    /// Max-norm bound on the row residual required before stopping.
    pub residual_tol: f64,
    pub max_sweeps: usize,
    /// Consecutive non-decreasing sweeps tolerated before giving up.
    pub noncontracting_limit: usize,
    pub start: SweepStart,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            fp_tol: None,
            fp_rel_tol: 1e-12,
            residual_tol: 1e-11,
            max_sweeps: 10_000,
            noncontracting_limit: 10,
            start: SweepStart::Previous,
        }
    }
}

/// Diagnostics of one time step.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub step: usize,
    pub sweeps: usize,
    /// A_{N+1} / A_N for successive sweeps.
    pub ratios: Vec<f64>,
    pub final_change: f64,
    pub residual: f64,
    pub scalar_iterations: usize,
    pub fp_tol: f64,
}

impl StepReport {
    /// Largest ratio observed above the rounding floor.
    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios.iter().copied().reduce(f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SolverReport {
    pub steps: Vec<StepReport>,
    pub wall_time: Duration,
}

impl SolverReport {
    pub fn total_sweeps(&self) -> usize {
        self.steps.iter().map(|s| s.sweeps).sum()
    }

    pub fn max_sweeps(&self) -> usize {
        self.steps.iter().map(|s| s.sweeps).max().unwrap_or(0)
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.steps.iter().filter_map(StepReport::max_ratio).reduce(f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.steps.iter().map(|s| s.residual).fold(0.0, f64::max)
    }
}

/// Discrete state v_ik, i = 0..m, k = 0..n.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteState {
    pub grid: Grid,
    levels: Vec<Vec<f64>>,
}

impl DiscreteState {
    pub fn new(grid: Grid, levels: Vec<Vec<f64>>) -> Self {
        assert_eq!(levels.len(), grid.n + 1);
        assert!(levels.iter().all(|l| l.len() == grid.m + 1));
        DiscreteState { grid, levels }
    }

    pub fn level(&self, k: usize) -> &[f64] {
        &self.levels[k]
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.levels[k][i]
    }

    pub fn max_abs(&self) -> f64 {
        self.levels
            .iter()
            .flatten()
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Solution of a monotone scalar equation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarRoot {
    pub value: f64,
    pub iterations: usize,
}

/// Solves alpha v + s b_n(v) = rhs by Newton's method safeguarded with
/// bisection. The left side is strictly increasing whenever
/// alpha + s * b_lo > 0, so the root is unique.
pub fn scalar_solve(
    alpha: f64,
    s: f64,
    rhs: f64,
    sb: &SmoothedBeta,
    guess: f64,
) -> Result<ScalarRoot, ScalarSolveError> {
    let mu = alpha + s * sb.slope_lo();
    if !(mu > 0.0) {
        return Err(ScalarSolveError::NotMonotone(mu));
    }
    let psi = |v: f64| {
        let (b, db) = sb.eval_with_deriv(v);
        (alpha * v + s * b - rhs, alpha + s * db)
    };
    let tol = 1e-13 * rhs.abs().max(1.0);
    let mut iterations = 0;
    let mut x = guess;
    let (mut fx, mut dfx) = psi(x);
    if fx.abs() <= tol {
        return Ok(ScalarRoot { value: x, iterations });
    }

    // ψ' ≥ mu, so the root lies within |ψ(x)|/mu of x; widen geometrically
    // from there in case rounding spoils that estimate.
    let mut width = (fx.abs() / mu) * (1.0 + 1e-8) + 1e-300;
    let (mut lo, mut hi) = (x, x);
    let mut found = false;
    for _ in 0..200 {
        let probe = if fx > 0.0 { x - width } else { x + width };
        let (fp, _) = psi(probe);
        iterations += 1;
        if fx > 0.0 {
            if fp <= 0.0 {
                lo = probe;
                found = true;
                break;
            }
            hi = probe;
        } else {
            if fp >= 0.0 {
                hi = probe;
                found = true;
                break;
            }
            lo = probe;
        }
        width *= 2.0;
    }
    if !found {
        return Err(ScalarSolveError::BracketExpansion { alpha, s, rhs });
    }
    if fx > 0.0 {
        hi = hi.min(x);
    } else {
        lo = lo.max(x);
    }

    let mut best = (fx.abs(), x);
    for _ in 0..400 {
        let mut next = x - fx / dfx;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        x = next;
        (fx, dfx) = psi(x);
        iterations += 1;
        if fx.abs() < best.0 {
            best = (fx.abs(), x);
        }
        if fx.abs() <= tol {
            return Ok(ScalarRoot { value: x, iterations });
        }
        if fx > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * lo.abs().max(hi.abs()).max(f64::MIN_POSITIVE) {
            break;
        }
    }
    // bracket collapsed to adjacent floats: the best point is the root
    Ok(ScalarRoot {
        value: best.1,
        iterations,
    })
}

/// Row coefficients of one time step, with off-diagonal couplings moved to
/// the right-hand side.
struct StepSystem {
    s: f64,
    /// Diagonal linear coefficient of rows 0..m-1.
    alpha: Vec<f64>,
    /// Weight of v_{i-1} on the right of row i (row 0 unused).
    lower: Vec<f64>,
    /// Weight of v_{i+1} on the right of row i.
    upper: Vec<f64>,
    /// s b_n(v_prev) + h^2 f, with -h g in row 0.
    base: Vec<f64>,
    /// Row m: a_{m-1} v_m = h p + lower_m v_{m-1}.
    last_diag: f64,
    last_lower: f64,
    last_rhs: f64,
}

impl StepSystem {
    fn new(v_prev: &[f64], k: usize, data: &AveragedData, flux: f64, sb: &SmoothedBeta, grid: &Grid) -> Self {
        let m = grid.m;
        let h = grid.h;
        let s = h * h / grid.tau;
        let (a, b, c, f) = (data.a.row(k), data.b.row(k), data.c.row(k), data.f.row(k));
        let mut alpha = vec![0.0; m];
        let mut lower = vec![0.0; m];
        let upper: Vec<f64> = a.to_vec();
        let mut base = vec![0.0; m];
        for i in 0..m {
            let left = if i == 0 { 0.0 } else { a[i - 1] };
            alpha[i] = left + a[i] - h * b[i] + h * h * c[i];
            if i > 0 {
                lower[i] = a[i - 1] - h * b[i - 1];
            }
            base[i] = s * sb.bn_eval(v_prev[i]) + h * h * f[i];
        }
        base[0] -= h * flux;
        StepSystem {
            s,
            alpha,
            lower,
            upper,
            base,
            last_diag: a[m - 1],
            last_lower: a[m - 1] - h * b[m - 1],
            last_rhs: h * data.p[k],
        }
    }

    fn residual(&self, v: &[f64], sb: &SmoothedBeta) -> Vec<f64> {
        let m = self.alpha.len();
        let mut out = vec![0.0; m + 1];
        for i in 0..m {
            let mut r = self.alpha[i] * v[i] + self.s * sb.bn_eval(v[i]) - self.upper[i] * v[i + 1] - self.base[i];
            if i > 0 {
                r -= self.lower[i] * v[i - 1];
            }
            out[i] = r;
        }
        out[m] = self.last_diag * v[m] - self.last_lower * v[m - 1] - self.last_rhs;
        out
    }
}

fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Residual of the step system (rows 0..m) at a candidate v_k.
pub fn step_residual(
    v_new: &[f64],
    v_prev: &[f64],
    k: usize,
    data: &AveragedData,
    flux: f64,
    sb: &SmoothedBeta,
    grid: &Grid,
) -> Vec<f64> {
    StepSystem::new(v_prev, k, data, flux, sb, grid).residual(v_new, sb)
}

/// Advances one time step from `v_prev` to level k with boundary flux
/// average `flux`.
pub fn solve_step(
    v_prev: &[f64],
    k: usize,
    data: &AveragedData,
    flux: f64,
    sb: &SmoothedBeta,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, StepReport), SolveError> {
    let m = grid.m;
    let sys = StepSystem::new(v_prev, k, data, flux, sb, grid);
    let fp_tol = opts.fp_tol.unwrap_or(opts.fp_rel_tol * (1.0 + max_abs(v_prev)));
    let mut report = StepReport {
        step: k,
        fp_tol,
        ..StepReport::default()
    };
    let mut old = match opts.start {
        SweepStart::Previous => v_prev.to_vec(),
        SweepStart::Zero => vec![0.0; m + 1],
    };
    let mut new = vec![0.0; m + 1];
    let mut prev_change: Option<f64> = None;
    let mut growing = 0usize;
    loop {
        for i in 0..m {
            let mut rhs = sys.base[i] + sys.upper[i] * old[i + 1];
            if i > 0 {
                rhs += sys.lower[i] * old[i - 1];
            }
            let root = scalar_solve(sys.alpha[i], sys.s, rhs, sb, old[i])
                .map_err(|source| SolveError::Scalar { step: k, row: i, source })?;
            report.scalar_iterations += root.iterations;
            new[i] = root.value;
        }
        new[m] = (sys.last_rhs + sys.last_lower * new[m - 1]) / sys.last_diag;
        if !new.iter().all(|v| v.is_finite()) {
            return Err(SolveError::NonFinite { step: k });
        }
        report.sweeps += 1;
        let change = new.iter().zip(&old).fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        let noise = 64.0 * f64::EPSILON * (1.0 + max_abs(&new));
        if let Some(prev) = prev_change {
            if prev > noise && change > noise {
                let ratio = change / prev;
                report.ratios.push(ratio);
                if ratio >= 1.0 {
                    growing += 1;
                } else {
                    growing = 0;
                }
                if growing >= opts.noncontracting_limit {
                    report.final_change = change;
                    return Err(SolveError::NonContracting {
                        step: k,
                        count: growing,
                        report: Box::new(report),
                    });
                }
            }
        }
        prev_change = Some(change);
        std::mem::swap(&mut old, &mut new);
        report.final_change = change;
        if change <= fp_tol {
            let res = max_abs(&sys.residual(&old, sb));
            report.residual = res;
            if res <= opts.residual_tol || change <= noise {
                return Ok((old, report));
            }
        }
        if report.sweeps >= opts.max_sweeps {
            report.residual = max_abs(&sys.residual(&old, sb));
            return Err(SolveError::MaxSweepsExceeded {
                step: k,
                max: opts.max_sweeps,
                report: Box::new(report),
            });
        }
    }
}

/// Marches levels k = 1..n. `flux[k]` is the boundary flux average of step
/// k (entry 0 is ignored).
pub fn solve_forward(
    flux: &[f64],
    data: &AveragedData,
    sb: &SmoothedBeta,
    grid: &Grid,
    opts: &SolverOptions,
) -> Result<(DiscreteState, SolverReport), SolveError> {
    if flux.len() != grid.n + 1 {
        return Err(SolveError::ControlLength {
            expected: grid.n + 1,
            found: flux.len(),
        });
    }
    let started = Instant::now();
    let mut levels = Vec::with_capacity(grid.n + 1);
    levels.push(data.phi.clone());
    let mut report = SolverReport::default();
    for k in 1..=grid.n {
        let (next, step) = solve_step(&levels[k - 1], k, data, flux[k], sb, grid, opts)?;
        log::debug!("step {k}: {} sweeps, change {:.3e}", step.sweeps, step.final_change);
        levels.push(next);
        report.steps.push(step);
    }
    report.wall_time = started.elapsed();
    Ok((DiscreteState::new(grid.clone(), levels), report))
}

/// Divided difference of b_n between two levels, falling back to b_n'
/// when they coincide.
pub fn zeta(sb: &SmoothedBeta, v_new: f64, v_old: f64) -> f64 {
    let dv = v_new - v_old;
    if dv.abs() <= 1e-12 {
        sb.bn_deriv(v_new)
    } else {
        (sb.bn_eval(v_new) - sb.bn_eval(v_old)) / dv
    }
}

/// Residual of the summed identity at level k tested against each unit
/// vector e_j, j = 0..m: for a solved state every entry vanishes.
pub fn summed_identity_residual(
    state: &DiscreteState,
    k: usize,
    data: &AveragedData,
    flux: f64,
    sb: &SmoothedBeta,
) -> Vec<f64> {
    let grid = &state.grid;
    let (m, h, tau) = (grid.m, grid.h, grid.tau);
    let v = state.level(k);
    let v_old = state.level(k - 1);
    let (a, b, c, f) = (data.a.row(k), data.b.row(k), data.c.row(k), data.f.row(k));
    (0..=m)
        .map(|j| {
            let eta = |i: usize| if i == j { 1.0 } else { 0.0 };
            let mut sum = 0.0;
            for i in 0..m {
                let eta_x = (eta(i + 1) - eta(i)) / h;
                let v_x = (v[i + 1] - v[i]) / h;
                let v_t = (v[i] - v_old[i]) / tau;
                let z = zeta(sb, v[i], v_old[i]);
                sum += h * (z * v_t * eta(i) + a[i] * v_x * eta_x + b[i] * v[i] * eta_x + c[i] * v[i] * eta(i)
                    - f[i] * eta(i));
            }
            sum - data.p[k] * eta(m) + flux * eta(0)
        })
        .collect()
}

/// Sweep contraction factor predicted from the coefficients of step k,
/// using b_lo as the lower bound of the divided differences.
pub fn contraction_bound(k: usize, data: &AveragedData, sb: &SmoothedBeta, grid: &Grid) -> f64 {
    let m = grid.m;
    let h = grid.h;
    let s = h * h / grid.tau;
    let zs = s * sb.slope_lo();
    let (a, b, c) = (data.a.row(k), data.b.row(k), data.c.row(k));
    let mut inv = Vec::with_capacity(m + 1);
    inv.push((a[0] / (a[0] - h * b[0] + h * h * c[0] + zs)).abs());
    for i in 1..m {
        let off = a[i - 1] + a[i] - h * b[i];
        inv.push((off / (off + h * h * c[i] + zs)).abs());
    }
    let tail = (1.0 - h * b[m - 1] / a[m - 1]).abs() * inv[m - 1];
    inv.push(tail);
    inv.into_iter().fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta::BetaGraph;
    use crate::grid::CellField;
    use proptest::prelude::*;

    fn constant_data(m: usize, n: usize, a: f64, b: f64, c: f64, f: f64, phi: Vec<f64>, p: f64) -> AveragedData {
        AveragedData {
            a: CellField::from_fn(m, n, |_, _| a),
            b: CellField::from_fn(m, n, |_, _| b),
            c: CellField::from_fn(m, n, |_, _| c),
            f: CellField::from_fn(m, n, |_, _| f),
            phi,
            p: vec![p; n + 1],
        }
    }

    fn two_phase() -> SmoothedBeta {
        SmoothedBeta::new(BetaGraph::two_phase(0.0, 1.0, 1.0, 2.0).unwrap(), 10)
    }

    #[test]
    fn scalar_solve_linear_case() {
        let sb = SmoothedBeta::new(BetaGraph::linear(1.0).unwrap(), 4);
        // 2 v + 3 v = 10
        let root = scalar_solve(2.0, 3.0, 10.0, &sb, -50.0).unwrap();
        assert!((root.value - 2.0).abs() < 1e-13);
    }

    #[test]
    fn scalar_solve_through_a_jump() {
        let sb = two_phase();
        for rhs in [-5.0, -0.3, 0.0, 0.2, 0.7, 1.3, 8.0] {
            for guess in [-100.0, 0.0, 3.0] {
                let root = scalar_solve(0.5, 1.0, rhs, &sb, guess).unwrap();
                let r = 0.5 * root.value + sb.bn_eval(root.value) - rhs;
                assert!(r.abs() < 1e-12, "rhs {rhs} guess {guess} residual {r}");
            }
        }
    }

    #[test]
    fn scalar_solve_rejects_non_monotone() {
        let sb = two_phase();
        assert!(matches!(
            scalar_solve(-3.0, 1.0, 0.0, &sb, 0.0),
            Err(ScalarSolveError::NotMonotone(_))
        ));
    }

    #[test]
    fn constant_steady_state_is_reproduced() {
        // b constant, zero source: v ≡ C with g = p = b C
        let (m, n) = (8, 10);
        let grid = Grid::uniform(1.0, 1.0, m, n).unwrap();
        let (bc, cst) = (0.3, 1.7);
        let data = constant_data(m, n, 1.0, bc, 0.0, 0.0, vec![cst; m + 1], bc * cst);
        let sb = two_phase();
        let flux = vec![bc * cst; n + 1];
        let (state, report) = solve_forward(&flux, &data, &sb, &grid, &SolverOptions::default()).unwrap();
        assert!(state.levels().iter().flatten().all(|v| (v - cst).abs() < 1e-10));
        assert!(report.max_residual() <= 1e-11);
    }

    #[test]
    fn solved_step_satisfies_summed_identity() {
        let (m, n) = (10, 5);
        let grid = Grid::uniform(1.0, 0.5, m, n).unwrap();
        let phi: Vec<f64> = (0..=m).map(|i| (i as f64 / m as f64 - 0.4) * 2.0).collect();
        let data = constant_data(m, n, 1.2, 0.1, 0.5, 0.3, phi, -0.2);
        let sb = two_phase();
        let flux = vec![0.4; n + 1];
        let (state, _) = solve_forward(&flux, &data, &sb, &grid, &SolverOptions::default()).unwrap();
        for k in 1..=n {
            let r = summed_identity_residual(&state, k, &data, flux[k], &sb);
            assert!(max_abs(&r) < 1e-9, "k {k}: {:e}", max_abs(&r));
        }
    }

    #[test]
    fn sweep_start_does_not_change_the_solution() {
        let (m, n) = (6, 4);
        let grid = Grid::uniform(1.0, 0.4, m, n).unwrap();
        let phi: Vec<f64> = (0..=m).map(|i| 1.0 - 2.0 * i as f64 / m as f64).collect();
        let data = constant_data(m, n, 1.0, 0.0, 0.0, 0.0, phi, 0.5);
        let sb = two_phase();
        let flux = vec![-0.3; n + 1];
        let base = SolverOptions::default();
        let zero = SolverOptions {
            start: SweepStart::Zero,
            ..base.clone()
        };
        let (s1, _) = solve_forward(&flux, &data, &sb, &grid, &base).unwrap();
        let (s2, _) = solve_forward(&flux, &data, &sb, &grid, &zero).unwrap();
        for (l1, l2) in s1.levels().iter().zip(s2.levels()) {
            for (x, y) in l1.iter().zip(l2) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn scalar_root_inside_window() {
        let graph = BetaGraph::two_phase(0.0, 1.0, 1.0, 1.0).unwrap();
        let sb = SmoothedBeta::new(graph, 20);
        let root = scalar_solve(1.0, 1.0, 0.6, &sb, 0.0).unwrap();
        // bisection oracle
        let (mut lo, mut hi) = (-1.0, 1.0);
        while hi - lo > 1e-14 {
            let mid = 0.5 * (lo + hi);
            if mid + sb.bn_eval(mid) > 0.6 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        assert!((root.value - lo).abs() < 1e-12);
        assert!(root.value.abs() < sb.window());
        let id = SmoothedBeta::new(BetaGraph::linear(1.0).unwrap(), 3);
        assert!((scalar_solve(1.0, 1.0, 2.0, &id, 0.0).unwrap().value - 1.0).abs() < 1e-13);
        assert!((scalar_solve(0.0, 1.0, -3.0, &id, 0.0).unwrap().value + 3.0).abs() < 1e-13);
    }

    #[test]
    fn unit_source_two_cells() {
        // 2 v0 - v1 = 1, -v0 + 2 v1 - v2 = 1, v2 = v1
        let grid = Grid::uniform(2.0, 1.0, 2, 1).unwrap();
        let data = constant_data(2, 1, 1.0, 0.0, 0.0, 1.0, vec![0.0; 3], 0.0);
        let sb = SmoothedBeta::new(BetaGraph::linear(1.0).unwrap(), 5);
        let (state, _) = solve_forward(&[0.0, 0.0], &data, &sb, &grid, &SolverOptions::default()).unwrap();
        for v in state.level(1) {
            assert!((v - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zeta_examples() {
        let id = SmoothedBeta::new(BetaGraph::linear(1.0).unwrap(), 5);
        assert!((zeta(&id, 0.3, -2.0) - 1.0).abs() < 1e-14);
        let sb = SmoothedBeta::new(BetaGraph::two_phase(0.0, 1.0, 1.0, 1.0).unwrap(), 1000);
        assert!((zeta(&sb, 1.0, -1.0) - 1.5).abs() < 1e-12);
        assert_eq!(zeta(&sb, 0.2, 0.2), sb.bn_deriv(0.2));
    }

    #[test]
    fn perturbation_shows_in_summed_identity() {
        let (m, n) = (8, 2);
        let grid = Grid::uniform(1.0, 0.5, m, n).unwrap();
        let data = constant_data(m, n, 1.0, 0.0, 0.0, 1.0, vec![0.0; m + 1], 0.0);
        let sb = two_phase();
        let flux = vec![0.0; n + 1];
        let (state, _) = solve_forward(&flux, &data, &sb, &grid, &SolverOptions::default()).unwrap();
        let mut levels = state.levels().to_vec();
        levels[2][4] += 1e-3;
        let bumped = DiscreteState::new(grid.clone(), levels);
        let r = summed_identity_residual(&bumped, 2, &data, 0.0, &sb);
        assert!(r[4].abs() > 1e-4 * 1.0 / grid.h);
    }

    #[test]
    fn zeta_is_bounded_below() {
        let sb = two_phase();
        for (x, y) in [(0.5, -0.5), (0.01, 0.0), (3.0, 3.0), (-1.0, 2.0)] {
            assert!(zeta(&sb, x, y) >= sb.slope_lo() - 1e-12);
        }
    }

    #[test]
    fn contraction_bound_below_one() {
        let (m, n) = (8, 8);
        let grid = Grid::uniform(1.0, 1.0, m, n).unwrap();
        let data = constant_data(m, n, 1.0, 0.2, 0.0, 0.0, vec![0.0; m + 1], 0.0);
        let delta = contraction_bound(1, &data, &two_phase(), &grid);
        assert!(delta < 1.0 && delta > 0.9);
    }

    #[test]
    fn mismatched_flux_length_is_rejected() {
        let grid = Grid::uniform(1.0, 1.0, 4, 4).unwrap();
        let data = constant_data(4, 4, 1.0, 0.0, 0.0, 0.0, vec![0.0; 5], 0.0);
        let err = solve_forward(&[0.0; 3], &data, &two_phase(), &grid, &SolverOptions::default()).unwrap_err();
        assert!(matches!(err, SolveError::ControlLength { expected: 5, found: 3 }));
    }

    #[test]
    fn max_sweeps_is_reported() {
        let grid = Grid::uniform(1.0, 1.0, 8, 2).unwrap();
        let phi: Vec<f64> = (0..=8).map(|i| i as f64).collect();
        let data = constant_data(8, 2, 1.0, 0.0, 0.0, 0.0, phi, 1.0);
        let opts = SolverOptions {
            max_sweeps: 2,
            ..SolverOptions::default()
        };
        let err = solve_forward(&[0.0; 3], &data, &two_phase(), &grid, &opts).unwrap_err();
        assert!(matches!(err, SolveError::MaxSweepsExceeded { step: 1, max: 2, .. }));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn scalar_root_is_accurate(alpha in 0.0f64..5.0, s in 0.01f64..10.0, rhs in -20.0f64..20.0, guess in -30.0f64..30.0) {
            let sb = two_phase();
            let root = scalar_solve(alpha, s, rhs, &sb, guess).unwrap();
            let r = alpha * root.value + s * sb.bn_eval(root.value) - rhs;
            prop_assert!(r.abs() <= 1e-12 * rhs.abs().max(1.0) * (1.0 + alpha + s * 30.0));
        }

        #[test]
        fn measured_ratios_respect_the_bound(flux in -1.0f64..1.0, p in -1.0f64..1.0, b in -0.1f64..0.1) {
            let (m, n) = (8, 4);
            let grid = Grid::uniform(1.0, 0.25, m, n).unwrap();
            let phi: Vec<f64> = (0..=m).map(|i| 0.5 - i as f64 / m as f64).collect();
            let data = constant_data(m, n, 1.0, b, 0.0, 0.0, phi, p);
            let sb = two_phase();
            let (_, report) = solve_forward(&vec![flux; n + 1], &data, &sb, &grid, &SolverOptions::default()).unwrap();
            for st in &report.steps {
                let bound = contraction_bound(st.step, &data, &sb, &grid);
                prop_assert!(st.max_ratio().unwrap_or(0.0) <= bound + 0.05);
            }
        }
    }
}
