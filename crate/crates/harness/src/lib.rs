//! Experiment harness for the planar-arm viapoint benchmark.
//!
//! Reads flat TOML experiment configs, trains a DMP on a minimum-jerk
//! movement, optimizes it with one of the probability-weighted averaging
//! algorithms and writes one learning-curve CSV per replication.

pub mod config;
pub mod curve;
pub mod preset;
pub mod runner;

pub use config::{AlgorithmKind, ConfigError, CovarianceKind, ExperimentConfig, ExplorationKind};
pub use curve::{aggregate, aggregate_csv, aggregate_dir, AggregateRow, CurveError, CurveRow, LearningCurve};
pub use preset::{preset, PRESET_NAMES};
pub use runner::{run, run_sessions, Experiment, ReplicationFailure, RunError, Session};
