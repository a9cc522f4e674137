//! Experiment orchestration: configuration, metrics, statistics, reports
//! and schedule charts.

pub mod config;
pub mod gantt;
pub mod run;
pub mod stats;
