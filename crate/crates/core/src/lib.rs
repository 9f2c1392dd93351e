//! Clipped stochastic subgradient method (C-SsGM) for nonsmooth convex problems
//! under heavy-tailed gradient noise.
//!
//! The crate is organised bottom-up:
//!
//! * [`types`]: points, subgradients, projections and the `CLIP` primitive.
//! * [`schedule`]: step-size / clip-level schedules (anytime, constant finite
//!   horizon, epoch-doubling finite horizon) and the epoch partition.
//! * [`solver`]: the iteration loop with running average and trace recording.
//! * [`problems`]: the ℓ1 test objective and calibrated zero-mean Pareto noise.
//! * [`kernel`]: the kernelized method working on expansion coefficients.
//! * [`theory`]: bound constants, rate envelopes and numerical lemma checkers.
//! * [`harness`]: seeded multi-run experiments, baselines, grid search,
//!   aggregation and CSV/JSON output.

pub mod error;
pub mod harness;
pub mod kernel;
pub mod problems;
pub mod schedule;
pub mod solver;
pub mod theory;
pub mod types;

pub use error::{Error, Result};
pub use schedule::{EpochPartition, Schedule, ScheduleMode, ScheduleParams};
pub use solver::{RunOptions, RunTrace, SolverState, StepPolicy, SubgradientOracle, TraceRow};
pub use types::{batch_average, clip, project, NoiseRegime, Point, ProblemSpec, Projection, Subgradient};
