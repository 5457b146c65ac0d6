//! The enthalpy graph β and its mollified approximations b_n.
//!
//! β is split as a continuous piecewise-linear part plus Heaviside jumps of
//! height ν_j at the phase temperatures. Convolving each piece with the
//! kernel ω_n reduces to two tabulated kernel integrals, the cumulative
//! mass K(s) = ∫_{-1}^{s} ω_1 and first moment M(s) = ∫_{-1}^{s} u ω_1:
//!
//! ```text
//! ramp (y - z)_+   ->  (d K(d) - M(d)) / n,   d = n (v - z)
//! step H(y - v^j)  ->  K(n (v - v^j))
//! ```

use std::sync::OnceLock;

use thiserror::Error;

use crate::quadrature::{adaptive_gk, gauss_legendre};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BetaError {
    #[error("slope bounds must satisfy 0 < slope_lo <= slope_hi, got [{lo}, {hi}]")]
    SlopeBounds { lo: f64, hi: f64 },
    #[error("phase temperatures must be finite and strictly ascending")]
    PhaseTempsNotAscending,
    #[error("expected {expected} latent-heat jumps, found {found}")]
    JumpCount { expected: usize, found: usize },
    #[error("latent-heat jump {index} must be positive, got {value}")]
    NonPositiveJump { index: usize, value: f64 },
    #[error("expected {expected} branches (one more than phase temperatures), found {found}")]
    BranchCount { expected: usize, found: usize },
    #[error("branch {branch} needs at least two breakpoints")]
    BranchTooShort { branch: usize },
    #[error("breakpoints of branch {branch} must be finite and strictly ascending")]
    BreakpointsNotAscending { branch: usize },
    #[error("branch {branch} is not increasing on segment {segment} (slope {slope})")]
    NonMonotone {
        branch: usize,
        segment: usize,
        slope: f64,
    },
    #[error("branch {branch} segment {segment} has slope {slope} outside [{lo}, {hi}]")]
    SlopeOutOfBounds {
        branch: usize,
        segment: usize,
        slope: f64,
        lo: f64,
        hi: f64,
    },
    #[error("branches {left} and {right} disagree at phase temperature {temp}: {left_value} vs {right_value}")]
    Discontinuous {
        left: usize,
        right: usize,
        temp: f64,
        left_value: f64,
        right_value: f64,
    },
}

/// A monotone piecewise-linear branch, extrapolated linearly past its
/// first and last breakpoints.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    points: Vec<(f64, f64)>,
}

impl Branch {
    pub fn new(points: Vec<(f64, f64)>) -> Self {
        Branch { points }
    }

    pub fn identity() -> Self {
        Branch::linear(1.0, 0.0)
    }

    pub fn linear(slope: f64, intercept: f64) -> Self {
        Branch {
            points: vec![(0.0, intercept), (1.0, intercept + slope)],
        }
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    fn segment(&self, v: f64) -> usize {
        let last = self.points.len() - 2;
        match self.points.iter().position(|&(x, _)| x > v) {
            None => last,
            Some(0) => 0,
            Some(p) => (p - 1).min(last),
        }
    }

    fn segment_slope(&self, s: usize) -> f64 {
        let (x0, y0) = self.points[s];
        let (x1, y1) = self.points[s + 1];
        (y1 - y0) / (x1 - x0)
    }

    pub fn eval(&self, v: f64) -> f64 {
        let s = self.segment(v);
        let (x0, y0) = self.points[s];
        y0 + self.segment_slope(s) * (v - x0)
    }

    pub fn slope_at(&self, v: f64) -> f64 {
        self.segment_slope(self.segment(v))
    }
}

/// Value of the (possibly multivalued) graph at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BetaValue {
    Single(f64),
    Interval(f64, f64),
}

/// The maximal monotone enthalpy graph.
#[derive(Debug, Clone, PartialEq)]
pub struct BetaGraph {
    phase_temps: Vec<f64>,
    jumps: Vec<f64>,
    branches: Vec<Branch>,
    slope_lo: f64,
    slope_hi: f64,
    // continuous part: base line through `base` with `base_slope`, plus kinks
    base: (f64, f64),
    base_slope: f64,
    kinks: Vec<(f64, f64)>,
}

const CONTINUITY_TOL: f64 = 1e-12;
const SLOPE_TOL: f64 = 1e-12;

impl BetaGraph {
    pub fn new(
        phase_temps: Vec<f64>,
        jumps: Vec<f64>,
        branches: Vec<Branch>,
        slope_lo: f64,
        slope_hi: f64,
    ) -> Result<Self, BetaError> {
        if !(slope_lo > 0.0 && slope_hi >= slope_lo && slope_hi.is_finite()) {
            return Err(BetaError::SlopeBounds {
                lo: slope_lo,
                hi: slope_hi,
            });
        }
        if phase_temps.iter().any(|v| !v.is_finite()) || phase_temps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(BetaError::PhaseTempsNotAscending);
        }
        if jumps.len() != phase_temps.len() {
            return Err(BetaError::JumpCount {
                expected: phase_temps.len(),
                found: jumps.len(),
            });
        }
        if let Some((index, &value)) = jumps.iter().enumerate().find(|(_, &nu)| !(nu > 0.0 && nu.is_finite())) {
            return Err(BetaError::NonPositiveJump { index, value });
        }
        if branches.len() != phase_temps.len() + 1 {
            return Err(BetaError::BranchCount {
                expected: phase_temps.len() + 1,
                found: branches.len(),
            });
        }
        for (b, branch) in branches.iter().enumerate() {
            let pts = &branch.points;
            if pts.len() < 2 {
                return Err(BetaError::BranchTooShort { branch: b });
            }
            if pts.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) || pts.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(BetaError::BreakpointsNotAscending { branch: b });
            }
            for s in 0..pts.len() - 1 {
                let slope = branch.segment_slope(s);
                if slope <= 0.0 {
                    return Err(BetaError::NonMonotone {
                        branch: b,
                        segment: s,
                        slope,
                    });
                }
                if slope < slope_lo * (1.0 - SLOPE_TOL) || slope > slope_hi * (1.0 + SLOPE_TOL) {
                    return Err(BetaError::SlopeOutOfBounds {
                        branch: b,
                        segment: s,
                        slope,
                        lo: slope_lo,
                        hi: slope_hi,
                    });
                }
            }
        }
        for (j, &temp) in phase_temps.iter().enumerate() {
            let left_value = branches[j].eval(temp);
            let right_value = branches[j + 1].eval(temp);
            if (left_value - right_value).abs() > CONTINUITY_TOL * (1.0 + left_value.abs()) {
                return Err(BetaError::Discontinuous {
                    left: j,
                    right: j + 1,
                    temp,
                    left_value,
                    right_value,
                });
            }
        }

        let mut graph = BetaGraph {
            phase_temps,
            jumps,
            branches,
            slope_lo,
            slope_hi,
            base: (0.0, 0.0),
            base_slope: 0.0,
            kinks: Vec::new(),
        };
        graph.build_continuous_part();
        Ok(graph)
    }

    /// Single-phase linear graph β(v) = slope·v.
    pub fn linear(slope: f64) -> Result<Self, BetaError> {
        BetaGraph::new(vec![], vec![], vec![Branch::linear(slope, 0.0)], slope, slope)
    }

    /// Two-phase graph with linear branches of the given slopes meeting at
    /// `temp` (β(temp) = 0 from the left) and a latent-heat jump `nu`.
    pub fn two_phase(temp: f64, nu: f64, slope_below: f64, slope_above: f64) -> Result<Self, BetaError> {
        let below = Branch::new(vec![(temp - 1.0, -slope_below), (temp, 0.0)]);
        let above = Branch::new(vec![(temp, 0.0), (temp + 1.0, slope_above)]);
        let lo = slope_below.min(slope_above);
        let hi = slope_below.max(slope_above);
        BetaGraph::new(vec![temp], vec![nu], vec![below, above], lo, hi)
    }

    fn build_continuous_part(&mut self) {
        let mut cand: Vec<f64> = self.phase_temps.clone();
        let j_count = self.phase_temps.len();
        for (j, branch) in self.branches.iter().enumerate() {
            let lo = if j == 0 { f64::NEG_INFINITY } else { self.phase_temps[j - 1] };
            let hi = if j == j_count { f64::INFINITY } else { self.phase_temps[j] };
            cand.extend(branch.points.iter().map(|p| p.0).filter(|&x| x > lo && x < hi));
        }
        cand.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        cand.dedup();
        let z0 = cand[0];
        let mut left_slope = self.continuous_slope(z0 - 1.0);
        self.base = (z0, self.beta_continuous(z0));
        self.base_slope = left_slope;
        self.kinks.clear();
        for (i, &z) in cand.iter().enumerate() {
            let probe = match cand.get(i + 1) {
                Some(&next) => 0.5 * (z + next),
                None => z + 1.0,
            };
            let right_slope = self.continuous_slope(probe);
            let ds = right_slope - left_slope;
            if ds.abs() > 1e-15 * right_slope.abs().max(left_slope.abs()) {
                self.kinks.push((z, ds));
            }
            left_slope = right_slope;
        }
    }

    fn phase_index(&self, v: f64) -> usize {
        self.phase_temps.iter().take_while(|&&p| p < v).count()
    }

    fn continuous_slope(&self, v: f64) -> f64 {
        self.branches[self.phase_index(v)].slope_at(v)
    }

    /// Continuous (jump-free) part of β.
    pub fn beta_continuous(&self, v: f64) -> f64 {
        self.branches[self.phase_index(v)].eval(v)
    }

    /// β(v); an interval at phase temperatures.
    pub fn beta_eval(&self, v: f64) -> BetaValue {
        let j = self.phase_index(v);
        let below: f64 = self.jumps[..j].iter().sum();
        let cont = self.beta_continuous(v);
        if j < self.phase_temps.len() && self.phase_temps[j] == v {
            BetaValue::Interval(cont + below, cont + below + self.jumps[j])
        } else {
            BetaValue::Single(cont + below)
        }
    }

    pub fn phase_temps(&self) -> &[f64] {
        &self.phase_temps
    }

    pub fn jumps(&self) -> &[f64] {
        &self.jumps
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn slope_lo(&self) -> f64 {
        self.slope_lo
    }

    pub fn slope_hi(&self) -> f64 {
        self.slope_hi
    }

    /// Breakpoints of the continuous part with their slope changes.
    pub fn kinks(&self) -> &[(f64, f64)] {
        &self.kinks
    }
}

const TABLE_INTERVALS: usize = 4096;

struct KernelTable {
    constant: f64,
    step: f64,
    cdf: Vec<f64>,
    moment: Vec<f64>,
}

fn bump(u: f64) -> f64 {
    if u.abs() < 1.0 {
        (-1.0 / (1.0 - u * u)).exp()
    } else {
        0.0
    }
}

fn kernel_table() -> &'static KernelTable {
    static TABLE: OnceLock<KernelTable> = OnceLock::new();
    TABLE.get_or_init(|| {
        let mass = adaptive_gk(bump, -1.0, 1.0, 1e-17);
        let constant = 1.0 / mass;
        let step = 2.0 / TABLE_INTERVALS as f64;
        let (nodes, weights) = gauss_legendre(10);
        let mut cdf = Vec::with_capacity(TABLE_INTERVALS + 1);
        let mut moment = Vec::with_capacity(TABLE_INTERVALS + 1);
        let (mut acc_k, mut acc_m) = (0.0f64, 0.0f64);
        cdf.push(0.0);
        moment.push(0.0);
        for j in 0..TABLE_INTERVALS {
            let a = -1.0 + j as f64 * step;
            let mid = a + 0.5 * step;
            let (mut sk, mut sm) = (0.0, 0.0);
            for (x, w) in nodes.iter().zip(&weights) {
                let u = mid + 0.5 * step * x;
                let b = bump(u);
                sk += w * b;
                sm += w * u * b;
            }
            acc_k += 0.5 * step * sk;
            acc_m += 0.5 * step * sm;
            cdf.push(constant * acc_k);
            moment.push(constant * acc_m);
        }
        KernelTable {
            constant,
            step,
            cdf,
            moment,
        }
    })
}

/// Normalizing constant 𝓒 making ∫ ω_1 = 1.
pub fn mollifier_constant() -> f64 {
    kernel_table().constant
}

/// The unit-width kernel ω_1(u).
pub fn kernel(u: f64) -> f64 {
    mollifier_constant() * bump(u)
}

/// The scaled kernel ω_n(v) = n ω_1(n v).
pub fn mollifier(n: f64, v: f64) -> f64 {
    n * kernel(n * v)
}

fn hermite(table: &[f64], step: f64, s: f64, deriv: impl Fn(f64) -> f64) -> f64 {
    let pos = (s + 1.0) / step;
    let j = (pos.floor() as usize).min(TABLE_INTERVALS - 1);
    let s0 = -1.0 + j as f64 * step;
    let s1 = s0 + step;
    let u = (s - s0) / step;
    let (f0, f1) = (table[j], table[j + 1]);
    let (d0, d1) = (deriv(s0) * step, deriv(s1) * step);
    let u2 = u * u;
    let u3 = u2 * u;
    (2.0 * u3 - 3.0 * u2 + 1.0) * f0
        + (u3 - 2.0 * u2 + u) * d0
        + (-2.0 * u3 + 3.0 * u2) * f1
        + (u3 - u2) * d1
}

/// K(s) = ∫_{-1}^{s} ω_1(u) du.
pub fn kernel_cdf(s: f64) -> f64 {
    if s <= -1.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let t = kernel_table();
    hermite(&t.cdf, t.step, s, kernel)
}

/// M(s) = ∫_{-1}^{s} u ω_1(u) du.
pub fn kernel_moment(s: f64) -> f64 {
    if s <= -1.0 || s >= 1.0 {
        return 0.0;
    }
    let t = kernel_table();
    hermite(&t.moment, t.step, s, |u| u * kernel(u))
}

/// β convolved with ω_n. Immutable; evaluation is thread-safe.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedBeta {
    graph: BetaGraph,
    n: usize,
}

impl SmoothedBeta {
    pub fn new(graph: BetaGraph, n: usize) -> Self {
        assert!(n >= 1, "mollification index must be positive");
        // force table construction outside hot loops
        let _ = kernel_table();
        SmoothedBeta { graph, n }
    }

    pub fn graph(&self) -> &BetaGraph {
        &self.graph
    }

    pub fn index(&self) -> usize {
        self.n
    }

    /// Half-width 1/n of the mollification window.
    pub fn window(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn slope_lo(&self) -> f64 {
        self.graph.slope_lo
    }

    /// (b_n(v), b_n'(v)).
    pub fn eval_with_deriv(&self, v: f64) -> (f64, f64) {
        let n = self.n as f64;
        let g = &self.graph;
        let mut value = g.base.1 + g.base_slope * (v - g.base.0);
        let mut deriv = g.base_slope;
        for &(z, ds) in &g.kinks {
            let d = n * (v - z);
            if d >= 1.0 {
                value += ds * (v - z);
                deriv += ds;
            } else if d > -1.0 {
                value += ds * (d * kernel_cdf(d) - kernel_moment(d)) / n;
                deriv += ds * kernel_cdf(d);
            }
        }
        for (&temp, &nu) in g.phase_temps.iter().zip(&g.jumps) {
            let d = n * (v - temp);
            if d >= 1.0 {
                value += nu;
            } else if d > -1.0 {
                value += nu * kernel_cdf(d);
                deriv += nu * n * kernel(d);
            }
        }
        (value, deriv)
    }

    pub fn bn_eval(&self, v: f64) -> f64 {
        self.eval_with_deriv(v).0
    }

    pub fn bn_deriv(&self, v: f64) -> f64 {
        self.eval_with_deriv(v).1
    }
}
