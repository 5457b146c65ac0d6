//! Interpolants, estimate diagnostics, weak residuals, refinement studies
//! and the exact two-phase reference solution.

pub mod diagnostics;
pub mod interpolate;
pub mod neumann;
pub mod refine;
pub mod residual;

pub use diagnostics::{energy_norm, energy_ratio, linf_ratio, DataNormSummary, DiagnosticError, EnergyBreakdown};
pub use interpolate::{final_profile_error, interpolate, l2_distance, l2_error, Interpolant, InterpolantKind, OutOfDomain};
pub use neumann::{free_boundary, front_crossings, neumann_oracle, NeumannError, NeumannParams, NeumannSolution};
pub use refine::{refine_study, ConvergenceTable, LevelResult, StudyError, StudyMode, StudyOptions};
pub use residual::{weak_residual, ResidualError, ResidualMode};
