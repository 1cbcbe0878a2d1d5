//! Experiment runner: cross-validated grid search over the learners, report
//! tables, rank statistics and the critical-difference diagram.

pub mod config;
pub mod diagram;
pub mod report;
pub mod runner;

pub use config::{ExperimentConfig, KernelFamily, LearnerKind};
pub use diagram::{drawn_groups, emit_nemenyi_diagram, nemenyi_svg};
pub use report::{emit_tables, read_accuracy_csv, AccuracyTable};
pub use runner::{
    run_experiment, run_on_datasets, sparsity_accounting, LearnerResult, Params, RunReport,
};
