use std::path::PathBuf;

use stefan_core::analysis::{
    energy_norm, energy_ratio, linf_ratio, refine_study, ConvergenceTable, DataNormSummary, StudyError, StudyMode,
    StudyOptions,
};
use stefan_core::control::discrete_norm;
use stefan_core::forward::{DiscreteState, SolveError, SolverReport};
use stefan_core::objective::{optimize, OptimizeError, OptimizerOptions};
use stefan_core::problem::{DiscreteProblem, ProblemError};
use thiserror::Error;

use crate::config::{ConfigError, Setup};
use crate::output::{num, opt, CsvOut};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Study(#[from] StudyError),
    #[error("forward solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error("optimization failed: {0}")]
    Optimize(#[from] OptimizeError),
    #[error("{failed} of {levels} refinement levels failed")]
    LevelsFailed { failed: usize, levels: usize },
    #[error("{failed} of {total} verification checks failed")]
    VerifyFailed { failed: usize, total: usize },
    #[error("writing {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Problem(_) | CliError::Study(_) | CliError::Io { .. } => 1,
            CliError::Solve(_) | CliError::Optimize(_) | CliError::LevelsFailed { .. } => 2,
            CliError::VerifyFailed { .. } => 3,
        }
    }
}

pub(crate) fn io_err(dir: &std::path::Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: dir.to_path_buf(),
        source,
    }
}

fn discretize(setup: &Setup) -> Result<DiscreteProblem, CliError> {
    let (m, n) = setup.working_grid()?;
    Ok(setup.problem.discretize(m, n, &setup.discretize)?)
}

fn initial_control(setup: &Setup, dp: &DiscreteProblem) -> Result<stefan_core::control::DiscreteControl, CliError> {
    Ok(match &setup.initial {
        Some(g) => dp.control_from(g.as_ref())?,
        None => dp.zero_control(),
    })
}

fn state_diagnostics(
    setup: &Setup,
    dp: &DiscreteProblem,
    control: &stefan_core::control::DiscreteControl,
    state: &DiscreteState,
) -> Vec<(&'static str, String)> {
    let grid = &dp.grid;
    let norms = DataNormSummary::compute(&setup.problem.data, control, 4 * grid.m.max(grid.n)).ok();
    let energy = energy_norm(state);
    vec![
        ("m", grid.m.to_string()),
        ("n", grid.n.to_string()),
        ("h", num(grid.h)),
        ("tau", num(grid.tau)),
        ("mollifier_n", dp.smoothed.index().to_string()),
        ("cost", num(dp.cost_of(state))),
        ("control_norm", num(discrete_norm(control))),
        ("sup_v", num(state.max_abs())),
        ("linf_ratio", opt(norms.as_ref().and_then(|n| linf_ratio(state, n).ok()))),
        ("energy_total", num(energy.total)),
        ("energy_ratio", opt(norms.as_ref().and_then(|n| energy_ratio(&energy, n).ok()))),
    ]
}

fn report_diagnostics(report: &SolverReport) -> Vec<(&'static str, String)> {
    vec![
        ("total_sweeps", report.total_sweeps().to_string()),
        ("max_sweeps_per_step", report.max_sweeps().to_string()),
        ("max_contraction_ratio", opt(report.max_ratio())),
        ("max_step_residual", num(report.max_residual())),
    ]
}

pub fn solve(setup: &Setup, out: &CsvOut) -> Result<(), CliError> {
    let dp = discretize(setup)?;
    let control = initial_control(setup, &dp)?;
    let (state, report) = dp.solve(&control)?;
    let mut diag = state_diagnostics(setup, &dp, &control, &state);
    diag.extend(report_diagnostics(&report));
    let err = io_err(out.dir);
    let paths = [
        out.state(&state).map_err(&err)?,
        out.pairs("diagnostics.csv", &diag).map_err(&err)?,
    ];
    println!(
        "solved (m, n) = ({}, {}): cost {:.6e}, {} sweeps in {:.2?}",
        dp.grid.m,
        dp.grid.n,
        dp.cost_of(&state),
        report.total_sweeps(),
        report.wall_time
    );
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub fn optimize_cmd(setup: &Setup, out: &CsvOut) -> Result<(), CliError> {
    let dp = discretize(setup)?;
    let opts = OptimizerOptions {
        initial: Some(initial_control(setup, &dp)?),
        ..setup.optimizer.clone()
    };
    let result = optimize(&dp, &opts)?;
    let history: Vec<Vec<String>> = result
        .history
        .iter()
        .map(|r| vec![r.iter.to_string(), num(r.cost), num(r.step), num(r.norm)])
        .collect();
    let mut diag = state_diagnostics(setup, &dp, &result.control, &result.state);
    diag.push(("iterations", (result.history.len() - 1).to_string()));
    diag.push(("forward_solves", result.forward_solves.to_string()));
    diag.push(("epsilon", num(result.epsilon)));
    diag.push(("stop", result.stop.to_string()));
    let err = io_err(out.dir);
    let paths = [
        out.control(&result.control).map_err(&err)?,
        out.write("history.csv", &["iter", "cost", "step", "norm"], &history)
            .map_err(&err)?,
        out.state(&result.state).map_err(&err)?,
        out.pairs("diagnostics.csv", &diag).map_err(&err)?,
    ];
    println!(
        "optimized (m, n) = ({}, {}): cost {:.6e} -> {:.6e} in {} iterations ({})",
        dp.grid.m,
        dp.grid.n,
        result.history[0].cost,
        result.cost,
        result.history.len() - 1,
        result.stop
    );
    for p in paths {
        println!("wrote {}", p.display());
    }
    Ok(())
}

pub const TABLE_COLUMNS: [&str; 15] = [
    "m",
    "n",
    "cost",
    "linf_ratio",
    "energy_total",
    "energy_ratio",
    "distance_to_finest",
    "distance_to_previous",
    "exact_error",
    "exact_order",
    "weak_residual",
    "control_norm",
    "total_sweeps",
    "status",
    "error",
];

fn table_rows(table: &ConvergenceTable) -> Vec<Vec<String>> {
    let orders = table.orders(|r| r.exact_error);
    table
        .rows
        .iter()
        .enumerate()
        .map(|(j, r)| {
            let order = if j == 0 { None } else { orders[j - 1] };
            vec![
                r.m.to_string(),
                r.n.to_string(),
                opt(r.cost),
                opt(r.linf_ratio),
                opt(r.energy_total),
                opt(r.energy_ratio),
                opt(r.distance_to_finest),
                opt(r.distance_to_previous),
                opt(r.exact_error),
                opt(order),
                opt(r.weak_residual),
                opt(r.control.as_ref().map(discrete_norm)),
                r.total_sweeps.to_string(),
                if r.error.is_some() { "failed" } else { "ok" }.to_string(),
                r.error.clone().unwrap_or_default(),
            ]
        })
        .collect()
}

pub fn refine(setup: &Setup, mode: StudyMode, out: &CsvOut) -> Result<(), CliError> {
    // validate every level up front so mesh violations are usage errors
    for &(m, n) in &setup.levels {
        setup.problem.discretize(m, n, &setup.discretize)?;
    }
    let opts = StudyOptions {
        mode,
        discretize: setup.discretize.clone(),
        control: setup.initial.clone(),
        optimizer: setup.optimizer.clone(),
        exact: setup.exact.clone(),
        psi: setup.psi.clone(),
    };
    let table = refine_study(&setup.problem, &setup.levels, &opts)?;
    let rows = table_rows(&table);
    let path = out.write("table.csv", &TABLE_COLUMNS, &rows).map_err(io_err(out.dir))?;
    println!("{:>6} {:>6} {:>13} {:>13} {:>8} {:>13}", "m", "n", "cost", "exact_error", "order", "weak_resid");
    for row in &rows {
        println!(
            "{:>6} {:>6} {:>13} {:>13} {:>8} {:>13}",
            row[0],
            row[1],
            short(&row[2]),
            short(&row[8]),
            short_fixed(&row[9]),
            short(&row[10])
        );
    }
    println!("wrote {}", path.display());
    let failed = table.rows.iter().filter(|r| r.error.is_some()).count();
    if failed > 0 {
        for r in table.rows.iter().filter(|r| r.error.is_some()) {
            eprintln!("level ({}, {}): {}", r.m, r.n, r.error.as_deref().unwrap_or(""));
        }
        return Err(CliError::LevelsFailed {
            failed,
            levels: table.rows.len(),
        });
    }
    Ok(())
}

fn short(s: &str) -> String {
    s.parse::<f64>().map(|v| format!("{v:.4e}")).unwrap_or_else(|_| "-".into())
}

fn short_fixed(s: &str) -> String {
    s.parse::<f64>().map(|v| format!("{v:.3}")).unwrap_or_else(|_| "-".into())
}
