use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use stefan_core::analysis::StudyMode;

mod commands;
mod config;
mod output;
mod verify;

use commands::{io_err, CliError};
use output::{CsvOut, Stamp};

#[derive(Parser, Debug)]
#[command(name = "stefan-control", version, about = "Forward solves, flux recovery and refinement studies for multiphase Stefan problems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug)]
struct Common {
    /// Problem configuration (TOML)
    #[arg(long, short)]
    config: PathBuf,
    /// Directory for CSV outputs
    #[arg(long, short, default_value = ".")]
    out: PathBuf,
    /// Cap on worker threads
    #[arg(long)]
    threads: Option<usize>,
    /// Overrides [optimizer] seed
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Mode {
    Forward,
    Optimize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Forward solve with the configured control; writes state.csv and diagnostics.csv
    Solve(Common),
    /// Projected-gradient search for the flux; writes control.csv, history.csv, state.csv, diagnostics.csv
    Optimize(Common),
    /// Convergence study over the configured levels; writes table.csv
    Refine {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "forward")]
        mode: Mode,
    },
    /// Runs the invariant suite; writes verify.csv
    Verify(Common),
}

impl Command {
    fn common(&self) -> &Common {
        match self {
            Command::Solve(c) | Command::Optimize(c) | Command::Verify(c) => c,
            Command::Refine { common, .. } => common,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let common = cli.command.common();
    if let Some(threads) = common.threads {
        // only fails if a pool already exists, which is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build_global();
    }
    let loaded = config::load(&common.config)?;
    let mut setup = loaded.setup()?;
    if let Some(seed) = common.seed {
        setup.seed = seed;
    }
    let stamp = Stamp {
        config_hash: loaded.hash.clone(),
    };
    let out = CsvOut {
        dir: &common.out,
        stamp: &stamp,
    };
    match &cli.command {
        Command::Solve(_) => commands::solve(&setup, &out),
        Command::Optimize(_) => commands::optimize_cmd(&setup, &out),
        Command::Refine { mode, .. } => {
            let mode = match mode {
                Mode::Forward => StudyMode::Forward,
                Mode::Optimize => StudyMode::Optimize,
            };
            commands::refine(&setup, mode, &out)
        }
        Command::Verify(_) => {
            let (m, n) = setup.working_grid()?;
            // surface mesh and coefficient violations as usage errors
            setup.problem.discretize(m, n, &setup.discretize)?;
            let checks = verify::run(&setup, &loaded.config.neumann, m, n);
            let rows: Vec<Vec<String>> = checks
                .iter()
                .map(|c| {
                    vec![
                        c.name.to_string(),
                        if c.passed { "pass" } else { "fail" }.to_string(),
                        c.detail.clone(),
                    ]
                })
                .collect();
            let path = out
                .write("verify.csv", &["check", "status", "detail"], &rows)
                .map_err(io_err(&common.out))?;
            for c in &checks {
                println!("{:<14} {}  {}", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
            }
            println!("wrote {}", path.display());
            let failed = checks.iter().filter(|c| !c.passed).count();
            if failed > 0 {
                return Err(CliError::VerifyFailed {
                    failed,
                    total: checks.len(),
                });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
