//! Experiment orchestration: configuration, the episode loop, convergence
//! detection, Monte Carlo batches and CSV export.

mod config;
mod convergence;
mod episode;
mod export;
mod montecarlo;

pub use config::{Algorithm, ExperimentConfig, TargetMode};
pub use convergence::{detect_convergence, window_in_band, ConvergenceTracker};
pub use episode::{episode_users, run_episode, run_episode_with_agents, EpisodeRecord, EpisodeRun};
pub use export::{
    read_episode_csv, read_summary_csv, write_episode, write_episode_csv, write_summary,
    write_summary_csv, EpisodeRow,
};
#[cfg(feature = "parallel")]
pub use montecarlo::run_monte_carlo_parallel;
pub use montecarlo::{median, run_monte_carlo, run_monte_carlo_sequential, MonteCarloSummary, RunOutcome};
