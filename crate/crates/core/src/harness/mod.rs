//! Experiment driver: configs, multi-run aggregation, grid search,
//! comparisons, rate fits, lemma verification and kernel training.

pub mod compare;
pub mod config;
pub mod experiment;
pub mod grid;
pub mod kernel_train;
pub mod output;
pub mod rate;
pub mod verify;

pub use compare::{compare_schedules, parse_variants, CompareVariant, Comparison};
pub use config::{ExperimentConfig, NoiseKind, Variant};
pub use experiment::{run_experiment, run_experiment_runs, run_single, AggregateCurve, ExperimentResult, SummaryEntry};
pub use grid::{grid_search, parse_grid, GridResult, Metric};
pub use kernel_train::{kernel_train, load_dataset, KernelTrainOptions, KernelTrainReport};
pub use output::{curve_csv, parse_curve_csv, summary_json, write_results, CURVE_HEADER};
pub use rate::{fit_power_law, fit_rate, horizon_sweep, RateFit};
pub use verify::{run_verify, VerifyLine, VerifySizes};
