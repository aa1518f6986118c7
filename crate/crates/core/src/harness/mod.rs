//! ε-sweeps comparing the oscillating and homogenized problems, weak
//! Σ-convergence tests and report emission.

mod config;
mod report;
mod runs;
mod scenarios;
mod sigma;
mod study;

pub use config::{GridRule, Norm, SigmaTestFn, StudyConfig, STUDY_SCHEMA};
pub use report::{emit_report, ConvergenceReport, ErrorRow, MacroSummary, ReportFormat, SigmaRow, Verdict, REPORT_SCHEMA};
pub use runs::{
    energy_law_excess, CellRow, DissipationAt, CellRunConfig, CellSummary, MacroRunConfig, MacroRunSummary, MicroRunConfig, MicroSummary,
    CELL_SCHEMA, MACRO_SCHEMA, MICRO_SCHEMA,
};
pub use scenarios::{laminate, ScenarioSpec};
pub use sigma::{sigma_test, trapezoid_weights, weak_pairing, SigmaOutcome};
pub use study::{aligned_step, pressure_weak_error, run_convergence_study, run_micro, space_time_l2_error};
