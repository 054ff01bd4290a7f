//! Experiment harness: config, the end-to-end workflow, ADA rounds and
//! result files. The `ssada` binary is a thin command line over this crate.

pub mod config;
pub mod report;
pub mod workflow;

pub use config::{default_grid, ExperimentConfig, GridEntry, LabelerMode};
pub use report::{emit_results, load_grid, CurvePoint, ExperimentReport};
pub use workflow::{
    evaluate, load_data, prepare_backbone, run_ada_round, run_workflow, split_target, train_probe,
    AdaRoundState, Dataset, RoundContext, TargetSplit,
};
