//! Experiment driver: configuration, training loop, evaluation, metrics files
//! and their aggregation and plots.

pub mod aggregate;
pub mod config;
pub mod eval;
pub mod metrics;
pub mod plot;
pub mod train;

pub use aggregate::{aggregate_files, aggregate_glob, aggregate_tables, expand_glob};
pub use config::{load_config, parse_config, ExperimentConfig, Schedule};
pub use eval::{episode_returns, evaluate_policy};
pub use metrics::{read_table, write_table, MetricsRecord, MetricsSchema, MetricsTable, MetricsWriter};
pub use plot::{line_chart_svg, plot_metrics};
pub use train::{evaluate_checkpoint, run_experiment, run_training, TrainOutcome};
