//! Trace-driven simulator for die-stacked DRAM caches.
//!
//! Three designs share one request interface: a hybrid statically and
//! dynamically mapped cache, a set-associative baseline with tags kept in the
//! data rows, and a direct-mapped cache of tag-and-data units. Every request
//! is labelled with the path it took (cases A, B1, B2, C, D) and timed by a
//! bank and bus level DRAM model.

pub mod config;
pub mod controller;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod policy;
pub mod runner;
pub mod tags;
pub mod timing;
pub mod workload;

pub use config::ExperimentConfig;
pub use controller::{AccessOutcome, Case, Design, Request};
pub use error::{Result, SimError};
pub use metrics::{Format, RunStats};
