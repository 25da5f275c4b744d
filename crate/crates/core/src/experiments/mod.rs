//! Experiment drivers behind the command line tool.

pub mod comparison;
pub mod config;
pub mod report;
pub mod structure;
pub mod weak_error;

pub use comparison::{run_comparison, ComparisonReport};
pub use config::ExperimentConfig;
pub use report::Manifest;
pub use structure::{run_structure_suite, StructureReport};
pub use weak_error::{run_weak_error, weak_error_row, ErrorReport, WeakErrorRow};
