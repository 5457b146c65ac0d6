//! The invariant suite behind `verify`: contraction of the sweeps, the
//! per-step identities, estimate stability, control mappings, the weak
//! residual under refinement and the similarity-solution benchmark.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use stefan_core::analysis::{
    energy_norm, energy_ratio, final_profile_error, free_boundary, linf_ratio, neumann_oracle, weak_residual,
    DataNormSummary, ResidualMode,
};
use stefan_core::control::{discrete_norm, pn_map, qn_map, w21_norm_of, DiscreteControl};
use stefan_core::field::{expr_field, FnField, SharedField};
use stefan_core::forward::{summed_identity_residual, SolverReport};
use stefan_core::grid::Grid;
use stefan_core::problem::DiscretizeOptions;

use crate::config::{NeumannSection, Setup};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn list(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// Random controls drawn from the seed, then pulled inside half the ball.
fn random_controls(seed: u64, count: usize, n: usize, tau: f64, radius: f64) -> Vec<DiscreteControl> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let values: Vec<f64> = (0..=n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let g = DiscreteControl::new(values, tau);
            let norm = discrete_norm(&g);
            if norm > 0.5 * radius {
                g.scaled(0.5 * radius / norm)
            } else {
                g
            }
        })
        .collect()
}

fn contraction_violations(label: &str, report: &SolverReport, out: &mut Vec<String>) {
    for step in &report.steps {
        if let Some(r) = step.max_ratio().filter(|r| *r >= 1.0) {
            out.push(format!("{label} step {}: ratio {r:.4}", step.step));
        }
        if step.final_change > step.fp_tol {
            out.push(format!("{label} step {}: final change above tolerance", step.step));
        }
        if step.sweeps > 500 {
            out.push(format!("{label} step {}: {} sweeps", step.step, step.sweeps));
        }
    }
}

fn contraction(setup: &Setup, m: usize, n: usize) -> Outcome {
    let dp = setup.problem.discretize(m, n, &setup.discretize).map_err(|e| e.to_string())?;
    let mut controls = vec![match &setup.initial {
        Some(g) => dp.control_from(g.as_ref()).map_err(|e| e.to_string())?,
        None => dp.zero_control(),
    }];
    controls.extend(random_controls(setup.seed, 3, n, dp.grid.tau, dp.radius));
    let mut violations = Vec::new();
    let mut worst = 0.0f64;
    let mut residual = 0.0f64;
    for (j, g) in controls.iter().enumerate() {
        let (state, report) = dp.solve(g).map_err(|e| format!("control {j}: {e}"))?;
        contraction_violations(&format!("control {j}"), &report, &mut violations);
        worst = worst.max(report.max_ratio().unwrap_or(0.0));
        let flux = g.step_averages();
        for k in 1..=n {
            let rows = summed_identity_residual(&state, k, &dp.averaged, flux[k], &dp.smoothed);
            residual = rows.iter().fold(residual, |acc, r| acc.max(r.abs()));
        }
    }
    if let Some(first) = violations.first() {
        return Err(format!("{} violations, first: {first}", violations.len()));
    }
    let bound = 10.0 * dp.solver.residual_tol;
    ensure(residual <= bound, || {
        format!("per-step identity residual {residual:.3e} above {bound:.1e}")
    })?;
    Ok(format!(
        "{} controls, worst ratio {worst:.4}, identity residual {residual:.2e}",
        controls.len()
    ))
}

fn estimates(setup: &Setup, m: usize, n: usize) -> Outcome {
    let g: Option<SharedField> = setup.initial.clone();
    let rows: Result<Vec<(f64, f64)>, String> = [1usize, 2, 4]
        .par_iter()
        .map(|&r| {
            let dp = setup
                .problem
                .discretize(r * m, r * n, &setup.discretize)
                .map_err(|e| e.to_string())?;
            let control = match &g {
                Some(g) => dp.control_from(g.as_ref()).map_err(|e| e.to_string())?,
                None => dp.zero_control(),
            };
            let (state, _) = dp.solve(&control).map_err(|e| e.to_string())?;
            let norms = DataNormSummary::compute(&setup.problem.data, &control, 256).map_err(|e| e.to_string())?;
            let lr = linf_ratio(&state, &norms).map_err(|e| e.to_string())?;
            let er = energy_ratio(&energy_norm(&state), &norms).map_err(|e| e.to_string())?;
            Ok((lr, er))
        })
        .collect();
    let rows = rows?;
    let spread = |f: fn(&(f64, f64)) -> f64| {
        let v: Vec<f64> = rows.iter().map(f).collect();
        v.iter().cloned().fold(f64::MIN, f64::max) / v.iter().cloned().fold(f64::MAX, f64::min)
    };
    let (sl, se) = (spread(|r| r.0), spread(|r| r.1));
    ensure(sl < 1.5, || format!("sup-norm ratio spread {sl:.3}"))?;
    ensure(se < 1.5, || format!("energy ratio spread {se:.3}"))?;
    Ok(format!("sup-norm spread {sl:.3}, energy spread {se:.3}"))
}

fn mappings(setup: &Setup) -> Outcome {
    let radius = setup.problem.data.radius;
    let t_final = setup.problem.data.t_final;
    let eps = 0.05 * radius;
    let base = move |t: f64| (2.0 * PI * t / t_final).sin();
    let scale = (radius - eps) / w21_norm_of(base, t_final, 256);
    let g = move |t: f64| scale * base(t);
    let field = FnField::of_t("g", g);
    let mut errors = Vec::new();
    for n in [8usize, 16, 32, 64, 128] {
        let grid = Grid::uniform(1.0, t_final, 1, n).map_err(|e| e.to_string())?;
        let q = qn_map(&field, &grid).map_err(|e| e.to_string())?;
        let norm = discrete_norm(&q);
        ensure(norm <= radius, || format!("n = {n}: discrete norm {norm} exceeds R"))?;
        errors.push(pn_map(&q).l2_error_to(g));
    }
    let ratios: Vec<f64> = errors.windows(2).map(|w| w[1] / w[0]).collect();
    ensure(ratios.iter().all(|r| (0.4..=0.7).contains(r)), || {
        format!("error ratios {ratios:.3?}")
    })?;
    Ok(format!("error ratios {ratios:.3?}"))
}

fn residual(setup: &Setup, m: usize, n: usize) -> Outcome {
    let data = &setup.problem.data;
    let psi = match &setup.psi {
        Some(psi) => psi.clone(),
        None => expr_field(&format!("({} - t)*cos(pi*x/{})", data.t_final, data.ell)).map_err(|e| e.to_string())?,
    };
    let levels: Vec<(usize, usize)> = [8usize, 16, 32, 64]
        .iter()
        .map(|&nj| (((nj * m) as f64 / n as f64).round().max(1.0) as usize, nj))
        .collect();
    let values: Result<Vec<f64>, String> = levels
        .par_iter()
        .map(|&(mj, nj)| {
            let dp = setup.problem.discretize(mj, nj, &setup.discretize).map_err(|e| e.to_string())?;
            let control = match &setup.initial {
                Some(g) => dp.control_from(g.as_ref()).map_err(|e| e.to_string())?,
                None => dp.zero_control(),
            };
            let (state, _) = dp.solve(&control).map_err(|e| e.to_string())?;
            let r = weak_residual(&dp, data, &state, &control, psi.as_ref(), ResidualMode::Continuous)
                .map_err(|e| e.to_string())?;
            Ok(r.abs())
        })
        .collect();
    let values = values?;
    ensure(values.windows(2).all(|w| w[1] < w[0]), || {
        format!("residuals not decreasing {}", list(&values))
    })?;
    Ok(format!("|residual| {}", list(&values)))
}

pub fn neumann(cfg: &NeumannSection) -> Outcome {
    let sol = neumann_oracle(cfg.params()).map_err(|e| e.to_string())?;
    let problem = sol
        .problem(cfg.start, cfg.ell, cfg.t_final, 100.0)
        .map_err(|e| e.to_string())?;
    ensure(cfg.levels.len() >= 2, || "the benchmark needs at least two levels".into())?;
    let t_end = cfg.start + cfg.t_final;
    let results: Result<Vec<(f64, f64)>, String> = cfg
        .levels
        .par_iter()
        .map(|&m| {
            let h = cfg.ell / m as f64;
            let n = (cfg.t_final / (2.0 * h * h)).round().max(1.0) as usize;
            let dp = problem
                .discretize(m, n, &DiscretizeOptions::default())
                .map_err(|e| e.to_string())?;
            let flux = sol.flux_averages(cfg.start, &dp.grid).map_err(|e| e.to_string())?;
            let (state, _) = dp.solve_with_flux(&flux).map_err(|e| e.to_string())?;
            let profile = final_profile_error(&state, |x| sol.temperature(x, t_end));
            let front = free_boundary(&state, cfg.t_final, cfg.phase_temp).ok_or("no front found")?;
            let exact = sol.front(t_end);
            Ok((profile, (front - exact).abs() / exact))
        })
        .collect();
    let results = results?;
    let profile: Vec<f64> = results.iter().map(|r| r.0).collect();
    let front_error = results.last().map(|r| r.1).unwrap_or(f64::NAN);
    ensure(front_error <= 0.05, || format!("front relative error {front_error:.4}"))?;
    ensure(profile.windows(2).all(|w| w[1] < w[0]), || {
        format!("profile errors not decreasing {}", list(&profile))
    })?;
    Ok(format!(
        "alpha {:.6}, front error {:.3}%, profile errors {}",
        sol.alpha,
        100.0 * front_error,
        list(&profile)
    ))
}

pub fn run(setup: &Setup, neumann_cfg: &NeumannSection, m: usize, n: usize) -> Vec<Check> {
    let outcomes: Vec<(&'static str, Outcome)> = vec![
        ("contraction", contraction(setup, m, n)),
        ("estimates", estimates(setup, m, n)),
        ("mappings", mappings(setup)),
        ("weak_residual", residual(setup, m, n)),
        ("neumann", neumann(neumann_cfg)),
    ];
    outcomes
        .into_iter()
        .map(|(name, o)| match o {
            Ok(detail) => Check {
                name,
                passed: true,
                detail,
            },
            Err(detail) => Check {
                name,
                passed: false,
                detail,
            },
        })
        .collect()
}
