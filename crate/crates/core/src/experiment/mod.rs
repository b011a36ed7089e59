//! Experiment schedules: configuration, presets and the runner.

pub mod config;
pub mod presets;
pub mod runner;

pub use config::{DataConfig, EvalSplit, ExperimentConfig, Stage};
pub use presets::{preset, PresetInfo, Scale, PRESETS};
pub use runner::{run_experiment, seed_dir, EvalResult, MeanResult, RunOptions, RunSummary, SeedResults, StageThresholds};
