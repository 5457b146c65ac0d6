//! Uniform space-time grids and Steklov (cell-average) ingestion of data.

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::EvalError;
use crate::field::{Field, SharedField};
use crate::quadrature::{try_gl5, try_gl5x5};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GridError {
    #[error("grid sizes must be positive (m = {m}, n = {n})")]
    EmptyGrid { m: usize, n: usize },
    #[error("domain length and horizon must be positive and finite (ell = {ell}, T = {t_final})")]
    BadDomain { ell: f64, t_final: f64 },
    #[error("mesh condition h/tau >= 8 |b|/b_lo violated: h/tau = {ratio:.6}, required {required:.6}")]
    MeshConditionViolated { ratio: f64, required: f64 },
    #[error("coefficient a = {value} at (x = {x}, t = {t}) is below a0 = {a0}")]
    CoefficientBelowFloor { x: f64, t: f64, value: f64, a0: f64 },
    #[error("a0 must be positive, got {0}")]
    NonPositiveFloor(f64),
    #[error("evaluating `{field}`: {source}")]
    Eval {
        field: &'static str,
        #[source]
        source: EvalError,
    },
}

fn eval_ctx(field: &'static str) -> impl Fn(EvalError) -> GridError {
    move |source| GridError::Eval { field, source }
}

/// Continuous problem data: coefficients, initial/boundary/target data and
/// domain constants.
#[derive(Debug, Clone)]
pub struct ProblemData {
    pub a: SharedField,
    pub b: SharedField,
    pub c: SharedField,
    pub f: SharedField,
    pub phi: SharedField,
    pub p: SharedField,
    pub omega: SharedField,
    pub a0: f64,
    pub ell: f64,
    pub t_final: f64,
    pub radius: f64,
}

impl ProblemData {
    /// Warnings for fields that reference a variable they should ignore.
    pub fn variable_warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, field) in [("phi", &self.phi), ("omega", &self.omega)] {
            if field.depends_on_t() {
                out.push(format!("`{name}` is a function of x only, but its expression uses t (t = 0 is used)"));
            }
        }
        if self.p.depends_on_x() {
            out.push("`p` is a function of t only, but its expression uses x (x = ell is used)".to_string());
        }
        out
    }
}

/// Sup-norm estimates of the coefficients on a validation lattice.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DataNorms {
    pub a_sup: f64,
    pub b_sup: f64,
    pub c_sup: f64,
    pub f_sup: f64,
}

/// Uniform grid x_i = i h, t_k = k tau.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub ell: f64,
    pub t_final: f64,
    pub m: usize,
    pub n: usize,
    pub h: f64,
    pub tau: f64,
    pub norms: DataNorms,
    pub warnings: Vec<String>,
}

impl Grid {
    /// A grid with no data checks attached.
    pub fn uniform(ell: f64, t_final: f64, m: usize, n: usize) -> Result<Grid, GridError> {
        if m == 0 || n == 0 {
            return Err(GridError::EmptyGrid { m, n });
        }
        if !(ell > 0.0 && ell.is_finite() && t_final > 0.0 && t_final.is_finite()) {
            return Err(GridError::BadDomain { ell, t_final });
        }
        Ok(Grid {
            ell,
            t_final,
            m,
            n,
            h: ell / m as f64,
            tau: t_final / n as f64,
            norms: DataNorms::default(),
            warnings: Vec::new(),
        })
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.m {
            self.ell
        } else {
            i as f64 * self.h
        }
    }

    pub fn t(&self, k: usize) -> f64 {
        if k == self.n {
            self.t_final
        } else {
            k as f64 * self.tau
        }
    }
}

/// Max |q| over a (nx+1) × (nt+1) lattice of [0, ell] × [0, T].
pub fn sup_on_lattice(
    q: &dyn Field,
    name: &'static str,
    ell: f64,
    t_final: f64,
    nx: usize,
    nt: usize,
) -> Result<f64, GridError> {
    let nx = if q.depends_on_x() { nx } else { 0 };
    let nt = if q.depends_on_t() { nt } else { 0 };
    let mut sup = 0.0f64;
    for k in 0..=nt {
        let t = if nt == 0 { 0.0 } else { t_final * k as f64 / nt as f64 };
        for i in 0..=nx {
            let x = if nx == 0 { 0.0 } else { ell * i as f64 / nx as f64 };
            sup = sup.max(q.eval(x, t).map_err(eval_ctx(name))?.abs());
        }
    }
    Ok(sup)
}

/// Builds the grid and checks the mesh condition h/tau >= 8 ‖b‖/b_lo
/// against sup norms estimated on a lattice four times finer than the grid.
pub fn make_grid(data: &ProblemData, slope_lo: f64, m: usize, n: usize) -> Result<Grid, GridError> {
    let mut grid = Grid::uniform(data.ell, data.t_final, m, n)?;
    if !(data.a0 > 0.0) {
        return Err(GridError::NonPositiveFloor(data.a0));
    }
    let (nx, nt) = (4 * m, 4 * n);
    let a_field = data.a.as_ref();
    let mut a_sup = 0.0f64;
    let lx = if a_field.depends_on_x() { nx } else { 0 };
    let lt = if a_field.depends_on_t() { nt } else { 0 };
    for k in 0..=lt {
        let t = if lt == 0 { 0.0 } else { data.t_final * k as f64 / lt as f64 };
        for i in 0..=lx {
            let x = if lx == 0 { 0.0 } else { data.ell * i as f64 / lx as f64 };
            let value = a_field.eval(x, t).map_err(eval_ctx("a"))?;
            if value < data.a0 {
                return Err(GridError::CoefficientBelowFloor { x, t, value, a0: data.a0 });
            }
            a_sup = a_sup.max(value.abs());
        }
    }
    let norms = DataNorms {
        a_sup,
        b_sup: sup_on_lattice(data.b.as_ref(), "b", data.ell, data.t_final, nx, nt)?,
        c_sup: sup_on_lattice(data.c.as_ref(), "c", data.ell, data.t_final, nx, nt)?,
        f_sup: sup_on_lattice(data.f.as_ref(), "f", data.ell, data.t_final, nx, nt)?,
    };
    grid.norms = norms;
    if norms.b_sup > 0.0 {
        let ratio = grid.h / grid.tau;
        let required = 8.0 * norms.b_sup / slope_lo;
        if ratio < required {
            return Err(GridError::MeshConditionViolated { ratio, required });
        }
    }
    let denom = norms.c_sup + norms.b_sup * norms.b_sup / (2.0 * data.a0);
    if denom > 0.0 && grid.tau >= slope_lo / denom {
        grid.warnings.push(format!(
            "tau = {} is not below b_lo / (|c| + |b|^2 / (2 a0)) = {}; uniqueness of the step solve is not guaranteed",
            grid.tau,
            slope_lo / denom
        ));
    }
    grid.warnings.extend(data.variable_warnings());
    Ok(grid)
}

const REFINE_TOL: f64 = 1e-10;

fn average_1d(q: impl Fn(f64) -> Result<f64, EvalError>, a: f64, b: f64) -> Result<f64, EvalError> {
    let coarse = try_gl5(&q, a, b)?;
    let mid = 0.5 * (a + b);
    let fine = try_gl5(&q, a, mid)? + try_gl5(&q, mid, b)?;
    let value = if (coarse - fine).abs() > REFINE_TOL * (b - a) * (1.0 + fine.abs() / (b - a)) {
        let q1 = 0.5 * (a + mid);
        let q3 = 0.5 * (mid + b);
        try_gl5(&q, a, q1)? + try_gl5(&q, q1, mid)? + try_gl5(&q, mid, q3)? + try_gl5(&q, q3, b)?
    } else {
        fine
    };
    Ok(value / (b - a))
}

fn split_integral(
    q: &dyn Field,
    (x0, x1): (f64, f64),
    (t0, t1): (f64, f64),
    parts: usize,
) -> Result<f64, EvalError> {
    let dx = (x1 - x0) / parts as f64;
    let dt = (t1 - t0) / parts as f64;
    let mut total = 0.0;
    for pt in 0..parts {
        let ta = t0 + pt as f64 * dt;
        for px in 0..parts {
            let xa = x0 + px as f64 * dx;
            total += try_gl5x5(|x, t| q.eval(x, t), (xa, xa + dx), (ta, ta + dt))?;
        }
    }
    Ok(total)
}

fn average_2d(q: &dyn Field, xs: (f64, f64), ts: (f64, f64)) -> Result<f64, EvalError> {
    let area = (xs.1 - xs.0) * (ts.1 - ts.0);
    let coarse = split_integral(q, xs, ts, 1)?;
    let fine = split_integral(q, xs, ts, 2)?;
    let value = if (coarse - fine).abs() > REFINE_TOL * area * (1.0 + fine.abs() / area) {
        split_integral(q, xs, ts, 4)?
    } else {
        fine
    };
    Ok(value / area)
}

/// Time averages w_k over [t_{k-1}, t_k] for k = 1..n, with w_0 = w(0).
pub fn steklov_time(w: &dyn Field, grid: &Grid) -> Result<Vec<f64>, EvalError> {
    steklov_time_at(w, grid, 0.0)
}

/// As [`steklov_time`], evaluating `w` at the fixed position `x`.
pub fn steklov_time_at(w: &dyn Field, grid: &Grid, x: f64) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(grid.n + 1);
    out.push(w.eval(x, 0.0)?);
    for k in 1..=grid.n {
        if w.depends_on_t() {
            out.push(average_1d(|t| w.eval(x, t), grid.t(k - 1), grid.t(k))?);
        } else {
            out.push(w.eval(x, 0.0)?);
        }
    }
    Ok(out)
}

/// Space averages Φ_i over [x_i, x_{i+1}] for i < m, with Φ_m = Φ(ell).
pub fn steklov_space(phi: &dyn Field, grid: &Grid) -> Result<Vec<f64>, EvalError> {
    let mut out = Vec::with_capacity(grid.m + 1);
    for i in 0..grid.m {
        if phi.depends_on_x() {
            out.push(average_1d(|x| phi.eval(x, 0.0), grid.x(i), grid.x(i + 1))?);
        } else {
            out.push(phi.eval(0.0, 0.0)?);
        }
    }
    out.push(phi.eval(grid.ell, 0.0)?);
    Ok(out)
}

/// Nodal samples Φ(x_i), i = 0..m.
pub fn nodal_space(phi: &dyn Field, grid: &Grid) -> Result<Vec<f64>, EvalError> {
    (0..=grid.m).map(|i| phi.eval(grid.x(i), 0.0)).collect()
}

/// Cell-indexed values q_ik, i = 0..m-1, k = 1..n.
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    m: usize,
    n: usize,
    values: Vec<f64>,
}

impl CellField {
    pub fn from_fn(m: usize, n: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(m * n);
        for k in 1..=n {
            for i in 0..m {
                values.push(f(i, k));
            }
        }
        CellField { m, n, values }
    }

    /// Value on cell [x_i, x_{i+1}] × [t_{k-1}, t_k].
    pub fn get(&self, i: usize, k: usize) -> f64 {
        debug_assert!(i < self.m && k >= 1 && k <= self.n);
        self.values[(k - 1) * self.m + i]
    }

    /// All cells of time level k.
    pub fn row(&self, k: usize) -> &[f64] {
        &self.values[(k - 1) * self.m..k * self.m]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }
}

/// Cell averages q_ik over [x_i, x_{i+1}] × [t_{k-1}, t_k].
pub fn steklov_cell(q: &dyn Field, grid: &Grid) -> Result<CellField, EvalError> {
    let (m, n) = (grid.m, grid.n);
    match (q.depends_on_x(), q.depends_on_t()) {
        (false, false) => {
            let v = q.eval(0.0, 0.0)?;
            Ok(CellField::from_fn(m, n, |_, _| v))
        }
        (false, true) => {
            let w = steklov_time(q, grid)?;
            Ok(CellField::from_fn(m, n, |_, k| w[k]))
        }
        (true, false) => {
            let s: Vec<f64> = (0..m)
                .map(|i| average_1d(|x| q.eval(x, 0.0), grid.x(i), grid.x(i + 1)))
                .collect::<Result<_, _>>()?;
            Ok(CellField::from_fn(m, n, |i, _| s[i]))
        }
        (true, true) => {
            let rows: Vec<Vec<f64>> = (1..=n)
                .into_par_iter()
                .map(|k| {
                    (0..m)
                        .map(|i| average_2d(q, (grid.x(i), grid.x(i + 1)), (grid.t(k - 1), grid.t(k))))
                        .collect::<Result<Vec<f64>, EvalError>>()
                })
                .collect::<Result<_, _>>()?;
            Ok(CellField {
                m,
                n,
                values: rows.into_iter().flatten().collect(),
            })
        }
    }
}

/// All data of the scheme averaged onto one grid.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedData {
    pub a: CellField,
    pub b: CellField,
    pub c: CellField,
    pub f: CellField,
    pub phi: Vec<f64>,
    pub p: Vec<f64>,
}

pub fn average_data(data: &ProblemData, grid: &Grid) -> Result<AveragedData, GridError> {
    let a = steklov_cell(data.a.as_ref(), grid).map_err(eval_ctx("a"))?;
    let floor = a.min();
    if floor < data.a0 {
        // locate the offending cell for the message
        for k in 1..=grid.n {
            for i in 0..grid.m {
                let value = a.get(i, k);
                if value < data.a0 {
                    return Err(GridError::CoefficientBelowFloor {
                        x: 0.5 * (grid.x(i) + grid.x(i + 1)),
                        t: 0.5 * (grid.t(k - 1) + grid.t(k)),
                        value,
                        a0: data.a0,
                    });
                }
            }
        }
    }
    Ok(AveragedData {
        a,
        b: steklov_cell(data.b.as_ref(), grid).map_err(eval_ctx("b"))?,
        c: steklov_cell(data.c.as_ref(), grid).map_err(eval_ctx("c"))?,
        f: steklov_cell(data.f.as_ref(), grid).map_err(eval_ctx("f"))?,
        phi: steklov_space(data.phi.as_ref(), grid).map_err(eval_ctx("phi"))?,
        p: steklov_time_at(data.p.as_ref(), grid, data.ell).map_err(eval_ctx("p"))?,
    })
}
