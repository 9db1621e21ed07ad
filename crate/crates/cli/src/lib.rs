//! Experiment driver: configuration, seeded runs, the convergence study,
//! the acceptance suite and file export.

pub mod accept;
pub mod converge;
pub mod experiments;
pub mod export;
pub mod model;
pub mod spec;

pub use accept::{run_accept, run_accept_with, AcceptReport, Criterion, CriterionResult};
pub use converge::{run_converge, ConvergenceRow, ConvergenceTable};
pub use model::Model;
pub use spec::{ExperimentSpec, Kind};
