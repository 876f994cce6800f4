//! Experiment configs, the multi-seed runner and its CSV/text reports.

mod compare;
mod config;
mod runner;
mod sweep;

pub use compare::{compare_strategies, CompareRow, CompareTable, COMPARE_HEADER};
pub use config::{parse_config, parse_config_str, DatasetConfig, ModelConfig, RunConfig, StrategyName, StrategySpec};
pub use runner::{
    build_dataset, mean_std, median_rounds, rounds_cell, run_experiment, run_seed, ExperimentReport, RoundRecord,
    SeedRun, ROUNDS_HEADER,
};
pub use sweep::{sv_sweep, SweepCell, SWEEP_CLASS};
