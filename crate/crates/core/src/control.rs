//! Discrete controls [g]_n, the discrete W_2^1 norm, and the maps between
//! grid vectors and continuous piecewise-linear controls.

use crate::expr::EvalError;
use crate::field::Field;
use crate::grid::{steklov_time, Grid};
use crate::quadrature::gl5;

/// Grid control (g_0, ..., g_n) on a uniform time grid of step tau.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteControl {
    values: Vec<f64>,
    tau: f64,
}

impl DiscreteControl {
    pub fn new(values: Vec<f64>, tau: f64) -> Self {
        assert!(!values.is_empty(), "a control needs at least g_0");
        assert!(tau > 0.0, "time step must be positive");
        DiscreteControl { values, tau }
    }

    pub fn zeros(n: usize, tau: f64) -> Self {
        DiscreteControl::new(vec![0.0; n + 1], tau)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Number of time steps n (the vector has n + 1 entries).
    pub fn steps(&self) -> usize {
        self.values.len() - 1
    }

    pub fn scaled(&self, alpha: f64) -> Self {
        DiscreteControl::new(self.values.iter().map(|g| alpha * g).collect(), self.tau)
    }

    /// Self + alpha · direction.
    pub fn axpy(&self, alpha: f64, direction: &[f64]) -> Self {
        assert_eq!(direction.len(), self.values.len());
        DiscreteControl::new(
            self.values.iter().zip(direction).map(|(g, d)| g + alpha * d).collect(),
            self.tau,
        )
    }

    /// Inner product inducing the discrete W_2^1 norm.
    pub fn inner(&self, other: &DiscreteControl) -> f64 {
        inner_w21(&self.values, &other.values, self.tau)
    }

    pub fn norm(&self) -> f64 {
        discrete_norm(self)
    }

    /// Steklov averages of the interpolant over each step, index 1..n;
    /// entry 0 holds g_0.
    pub fn step_averages(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        out.push(self.values[0]);
        out.extend(self.values.windows(2).map(|w| 0.5 * (w[0] + w[1])));
        out
    }
}

/// Σ τ a_k b_k + Σ τ a_{k t̄} b_{k t̄}, k = 1..n.
pub fn inner_w21(a: &[f64], b: &[f64], tau: f64) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    for k in 1..a.len() {
        let da = (a[k] - a[k - 1]) / tau;
        let db = (b[k] - b[k - 1]) / tau;
        sum += tau * (a[k] * b[k] + da * db);
    }
    sum
}

/// ‖[g]_n‖_{w_2^1}.
pub fn discrete_norm(g: &DiscreteControl) -> f64 {
    inner_w21(&g.values, &g.values, g.tau).sqrt()
}

/// Riesz representer of a Euclidean gradient with respect to the discrete
/// W_2^1 inner product: solves G d = grad with the tridiagonal Gram matrix
/// G = τ diag(0, 1, …, 1) + Dᵀ D / τ.
pub fn riesz_representer(grad: &[f64], tau: f64) -> Vec<f64> {
    let len = grad.len();
    if len == 1 {
        // norm has no dependence on g_0 alone; leave it untouched
        return vec![0.0];
    }
    let off = -1.0 / tau;
    let mut diag = vec![0.0; len];
    for (k, d) in diag.iter_mut().enumerate() {
        *d = if k == 0 {
            1.0 / tau
        } else if k == len - 1 {
            tau + 1.0 / tau
        } else {
            tau + 2.0 / tau
        };
    }
    // Thomas algorithm with constant off-diagonals
    let mut c_prime = vec![0.0; len];
    let mut d_prime = vec![0.0; len];
    c_prime[0] = off / diag[0];
    d_prime[0] = grad[0] / diag[0];
    for k in 1..len {
        let denom = diag[k] - off * c_prime[k - 1];
        c_prime[k] = off / denom;
        d_prime[k] = (grad[k] - off * d_prime[k - 1]) / denom;
    }
    let mut x = vec![0.0; len];
    x[len - 1] = d_prime[len - 1];
    for k in (0..len - 1).rev() {
        x[k] = d_prime[k] - c_prime[k] * x[k + 1];
    }
    x
}

/// Q_n: cell averages with g_0 = g(0) (constant extension to [-τ, 0]).
pub fn qn_map(g: &dyn Field, grid: &Grid) -> Result<DiscreteControl, EvalError> {
    Ok(DiscreteControl::new(steklov_time(g, grid)?, grid.tau))
}

/// Continuous piecewise-linear control g^n(t).
#[derive(Debug, Clone, PartialEq)]
pub struct PiecewiseLinearControl {
    values: Vec<f64>,
    tau: f64,
}

/// P_n: piecewise-linear interpolation of the grid values.
pub fn pn_map(gd: &DiscreteControl) -> PiecewiseLinearControl {
    PiecewiseLinearControl {
        values: gd.values.clone(),
        tau: gd.tau,
    }
}

impl PiecewiseLinearControl {
    pub fn horizon(&self) -> f64 {
        self.tau * (self.values.len() - 1) as f64
    }

    /// Breakpoint times t_k.
    pub fn breakpoints(&self) -> Vec<f64> {
        let n = self.values.len() - 1;
        (0..=n)
            .map(|k| if k == n { self.horizon() } else { k as f64 * self.tau })
            .collect()
    }

    /// g^n(t) = g_{k-1} + g_{k t̄}(t - t_{k-1}) on [t_{k-1}, t_k); the last
    /// interval is closed at T.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.values.len() - 1;
        if n == 0 {
            return self.values[0];
        }
        let k = ((t / self.tau).floor() as isize + 1).clamp(1, n as isize) as usize;
        let t0 = (k - 1) as f64 * self.tau;
        let slope = (self.values[k] - self.values[k - 1]) / self.tau;
        self.values[k - 1] + slope * (t - t0)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Exact ‖g^n‖_{W_2^1(0,T)}.
    pub fn w21_norm(&self) -> f64 {
        let mut sum = 0.0;
        for w in self.values.windows(2) {
            let (a, b) = (w[0], w[1]);
            let slope = (b - a) / self.tau;
            sum += self.tau * (a * a + a * b + b * b) / 3.0 + self.tau * slope * slope;
        }
        sum.sqrt()
    }

    /// Exact L_2(0,T) distance to another piecewise-linear control.
    pub fn l2_distance(&self, other: &PiecewiseLinearControl) -> f64 {
        let mut cuts = self.breakpoints();
        cuts.extend(other.breakpoints());
        cuts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-14 * (1.0 + b.abs()));
        let mut sum = 0.0;
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let tm = 0.5 * (t0 + t1);
            // evaluate at interior points so each side picks the right piece
            let e0 = self.eval_piece(tm, t0) - other.eval_piece(tm, t0);
            let e1 = self.eval_piece(tm, t1) - other.eval_piece(tm, t1);
            let em = self.eval(tm) - other.eval(tm);
            // Simpson is exact for the quadratic (e0 + s (e1 - e0))^2
            sum += (t1 - t0) * (e0 * e0 + 4.0 * em * em + e1 * e1) / 6.0;
        }
        sum.sqrt()
    }

    fn eval_piece(&self, inside: f64, at: f64) -> f64 {
        let n = self.values.len() - 1;
        if n == 0 {
            return self.values[0];
        }
        let k = ((inside / self.tau).floor() as isize + 1).clamp(1, n as isize) as usize;
        let t0 = (k - 1) as f64 * self.tau;
        let slope = (self.values[k] - self.values[k - 1]) / self.tau;
        self.values[k - 1] + slope * (at - t0)
    }

    /// L_2(0,T) distance to a continuous function, by Gauss–Legendre on
    /// each interval.
    pub fn l2_error_to(&self, g: impl Fn(f64) -> f64) -> f64 {
        let cuts = self.breakpoints();
        let mut sum = 0.0;
        for w in cuts.windows(2) {
            let (t0, t1) = (w[0], w[1]);
            let tm = 0.5 * (t0 + t1);
            for half in [(t0, tm), (tm, t1)] {
                sum += gl5(
                    |t| {
                        let e = self.eval_piece(tm, t) - g(t);
                        e * e
                    },
                    half.0,
                    half.1,
                );
            }
        }
        sum.sqrt()
    }
}

/// Radial projection onto the ball ‖[g]_n‖ ≤ R, the metric projection for
/// the inner-product norm.
pub fn project(gd: &DiscreteControl, radius: f64) -> DiscreteControl {
    assert!(radius > 0.0, "ball radius must be positive");
    let norm = discrete_norm(gd);
    if norm <= radius {
        gd.clone()
    } else {
        gd.scaled(radius / norm)
    }
}

/// ‖g‖_{W_2^1(0,T)} of a smooth function, with g' by central differences.
pub fn w21_norm_of(g: impl Fn(f64) -> f64, t_final: f64, intervals: usize) -> f64 {
    let step = t_final / intervals as f64;
    let d = 1e-5 * t_final.max(1.0);
    let mut sum = 0.0;
    for j in 0..intervals {
        let a = j as f64 * step;
        sum += gl5(
            |t| {
                let v = g(t);
                let dv = (g(t + d) - g(t - d)) / (2.0 * d);
                v * v + dv * dv
            },
            a,
            a + step,
        );
    }
    sum.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use proptest::prelude::*;

    fn reference_norm_sq(g: &[f64], tau: f64) -> f64 {
        // index-by-index summation, written independently
        let n = g.len() - 1;
        let mut s1 = 0.0;
        let mut s2 = 0.0;
        let mut k = n;
        while k >= 1 {
            s1 += tau * g[k] * g[k];
            let d = (g[k] - g[k - 1]) / tau;
            s2 += tau * d * d;
            k -= 1;
        }
        s1 + s2
    }

    #[test]
    fn norm_examples() {
        let c = DiscreteControl::new(vec![1.5; 9], 0.25);
        assert!((c.norm().powi(2) - 2.0 * 1.5 * 1.5).abs() < 1e-14);
        let g = DiscreteControl::new(vec![0.0, 1.0], 1.0);
        assert!((g.norm().powi(2) - 2.0).abs() < 1e-15);
        let g = DiscreteControl::new(vec![0.3, -1.2, 0.7, 2.2, -0.4], 0.1);
        assert!((g.norm().powi(2) - reference_norm_sq(g.values(), 0.1)).abs() < 1e-12);
    }

    #[test]
    fn qn_examples() {
        let grid = Grid::uniform(1.0, 1.0, 2, 2).unwrap();
        let c = qn_map(&Expr::parse("4").unwrap(), &grid).unwrap();
        assert_eq!(c.values(), &[4.0, 4.0, 4.0]);
        let g = qn_map(&Expr::parse("t").unwrap(), &grid).unwrap();
        assert!((g.values()[1] - 0.25).abs() < 1e-15 && (g.values()[2] - 0.75).abs() < 1e-15);
        assert_eq!(g.values()[0], 0.0);
    }

    #[test]
    fn qn_norm_is_controlled_by_continuous_norm() {
        let g = |t: f64| (3.0 * t).sin() + 0.5 * t;
        let cont = w21_norm_of(g, 1.0, 64);
        let field = crate::field::FnField::of_t("g", g);
        for n in [8usize, 16, 32, 64] {
            let grid = Grid::uniform(1.0, 1.0, 1, n).unwrap();
            let q = qn_map(&field, &grid).unwrap();
            assert!(q.norm() <= cont + 2.0 / n as f64, "n = {n}");
        }
    }

    #[test]
    fn pn_examples() {
        let c = pn_map(&DiscreteControl::new(vec![2.0; 5], 0.5));
        for t in [0.0, 0.3, 1.1, 2.0] {
            assert_eq!(c.eval(t), 2.0);
        }
        let r = pn_map(&DiscreteControl::new(vec![0.0, 1.0], 1.0));
        for t in [0.0, 0.25, 0.9, 1.0] {
            assert!((r.eval(t) - t).abs() < 1e-15);
        }
        let g = DiscreteControl::new(vec![0.0, 2.0, -1.0], 0.5);
        let p = pn_map(&g);
        assert_eq!(p.eval(0.5), 2.0);
        assert_eq!(p.eval(1.0), -1.0);
        assert!((p.eval(0.75) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn pn_qn_round_trip_converges_first_order() {
        let tf = 1.0;
        let g = move |t: f64| (2.0 * std::f64::consts::PI * t / tf).sin();
        let field = crate::field::FnField::of_t("g", g);
        let mut prev: Option<f64> = None;
        for n in [8usize, 16, 32, 64, 128] {
            let grid = Grid::uniform(1.0, tf, 1, n).unwrap();
            let err = pn_map(&qn_map(&field, &grid).unwrap()).l2_error_to(g);
            if let Some(p) = prev {
                let ratio = err / p;
                assert!(ratio > 0.4 && ratio < 0.7, "ratio {ratio}");
            }
            prev = Some(err);
        }
    }

    #[test]
    fn piecewise_norm_matches_quadrature() {
        let g = DiscreteControl::new(vec![0.3, -1.2, 0.7, 2.2, -0.4], 0.25);
        let p = pn_map(&g);
        let mut sum = 0.0;
        for k in 0..4 {
            let a = k as f64 * 0.25;
            let slope = (g.values()[k + 1] - g.values()[k]) / 0.25;
            sum += gl5(|t| p.eval_piece(a + 0.1, t).powi(2) + slope * slope, a, a + 0.25);
        }
        assert!((p.w21_norm() - sum.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn l2_distance_across_grids() {
        let coarse = pn_map(&DiscreteControl::new(vec![0.0, 1.0, 0.0], 0.5));
        let fine = pn_map(&DiscreteControl::new(vec![0.0; 4], 1.0 / 3.0));
        // ‖hat function‖_2^2 = 2 · ∫_0^{1/2} (2t)^2 dt = 1/3
        assert!((coarse.l2_distance(&fine) - (1.0f64 / 3.0).sqrt()).abs() < 1e-14);
        assert!(coarse.l2_distance(&coarse) < 1e-15);
    }

    #[test]
    fn projection_examples() {
        let g = DiscreteControl::new(vec![0.1, 0.2, -0.1], 0.5);
        assert_eq!(project(&g, 10.0), g);
        let r = g.norm() / 2.0;
        let p = project(&g, r);
        assert!((p.norm() - r).abs() < 1e-14);
        for (a, b) in p.values().iter().zip(g.values()) {
            assert!((a - 0.5 * b).abs() < 1e-15);
        }
    }

    #[test]
    fn riesz_representer_solves_gram_system() {
        let tau = 0.2;
        let grad = vec![0.5, -1.0, 2.0, 0.25, 3.0];
        let d = riesz_representer(&grad, tau);
        // ⟨d, e_j⟩_{w21} must reproduce grad_j
        for j in 0..grad.len() {
            let mut e = vec![0.0; grad.len()];
            e[j] = 1.0;
            assert!((inner_w21(&d, &e, tau) - grad[j]).abs() < 1e-12);
        }
    }

    fn control_strategy() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-5.0f64..5.0, 2..12)
    }

    proptest! {
        #[test]
        fn norm_is_homogeneous(g in control_strategy(), alpha in -4.0f64..4.0) {
            let c = DiscreteControl::new(g, 0.1);
            prop_assert!((c.scaled(alpha).norm() - alpha.abs() * c.norm()).abs() < 1e-10 * (1.0 + c.norm()));
        }

        #[test]
        fn triangle_inequality(pair in control_strategy().prop_flat_map(|a| {
            let len = a.len();
            (Just(a), prop::collection::vec(-5.0f64..5.0, len))
        })) {
            let (a, b) = pair;
            let ca = DiscreteControl::new(a, 0.3);
            let cb = DiscreteControl::new(b, 0.3);
            let sum = ca.axpy(1.0, cb.values());
            prop_assert!(sum.norm() <= ca.norm() + cb.norm() + 1e-10);
        }

        #[test]
        fn projection_is_feasible_and_closest(g in control_strategy(), radius in 0.1f64..5.0) {
            let c = DiscreteControl::new(g, 0.2);
            let p = project(&c, radius);
            prop_assert!(p.norm() <= radius + 1e-12);
            let dist = |x: &DiscreteControl| {
                let diff = x.axpy(-1.0, c.values());
                diff.norm()
            };
            let zero = DiscreteControl::zeros(c.steps(), 0.2);
            prop_assert!(dist(&p) <= dist(&zero) + 1e-12);
            if c.norm() <= radius {
                prop_assert_eq!(p, c);
            }
        }
    }
}
