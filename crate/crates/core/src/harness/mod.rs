//! Metrics, experiment configuration and the sweep runner.

mod config;
mod metrics;
mod runner;

pub use config::{
    controller_seed, ControllerSection, ExperimentConfig, ExperimentSection, Fill, TruckSection,
    DEFAULT_MOMENTUM_ALPHA, DEFAULT_SAMPLE_COUNTS, MAX_SAMPLE_COUNT,
};
pub use metrics::{cumulative_cost, mean_std, quantile_sorted, settled_smoothness, smoothness, summarize, Summary};
pub use runner::{
    build_task, episode_path, pool_for, read_rows, run_episode, run_experiment, run_task_episode,
    sample_initial_state, summarize_dir, summarize_rows, task_dir, write_atomic, EpisodeRecord, ExperimentReport,
    RunFailure, RunKey, RunRow, SummaryRow,
};
