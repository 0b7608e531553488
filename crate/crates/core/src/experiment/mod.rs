//! Experiment drivers, configuration files and report emission.

mod config;
mod global;
mod report;
mod seeds;
mod single;

pub use seeds::{random_initial_guess, resample_seed, sub_seed};
pub use single::{build_patch_mesh, build_patch_solver, run_patch_case, PatchCase, PatchRun, PatchType, MAX_RESAMPLES};
pub use global::{build_global_hierarchy, build_global_preconditioner, run_global_case, GlobalCase, GlobalCaseRun, CENTER_CELL, COARSE_CELLS};
pub use config::{max_delta, ColumnAxis, ExperimentKind, ExperimentSpec, Series};
pub use report::{
    emit_report, parse_csv_report, realization_seed, render_report, run_experiment, run_global, run_single_patch, CellResult,
    ParsedReport, ParsedRow, ReportFormat, ReportRow, RunReport, NC,
};
