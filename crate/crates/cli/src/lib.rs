//! Library side of the `spread` binary: run specs, artifact files, execution and reports.

pub mod artifacts;
pub mod failure;
pub mod report;
pub mod run;
pub mod spec;

pub use failure::{CliResult, Failure};
pub use spec::{Mode, RunSpec};
