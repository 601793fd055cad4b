//! Experiment harness: the planner-in-the-loop training protocol, planner
//! comparison, candidate-count ablation, and deterministic CSV records.

mod ablate;
mod compare;
mod record;
mod run;
pub mod workers;

pub use ablate::{ablate_candidates, AblationReport, AblationRow};
pub use compare::{compare_planners, lqr_planner_return, ComparisonReport, ComparisonRow};
pub use record::{mean_std, median, RunRecord, RunRecordRow, CSV_HEADER};
pub use run::{evaluate_checkpoint, run_training, TrainOutcome};
