pub mod baselines;
pub mod bench;
pub mod config;
pub mod diff;
pub mod discovery;
pub mod error;
pub mod gnn;
pub mod graph;
pub mod ingest;
pub mod rng;
pub mod scm;
pub mod stats;

pub use error::{Error, Result};
