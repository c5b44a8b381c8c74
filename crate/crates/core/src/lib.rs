//! Max-Cut local search driven by a recurrent Q-network.
//!
//! The crate covers the flip environment, an exact solver for small graphs,
//! greedy baselines, the network and its training loop, and dataset tooling.

pub mod agent;
pub mod dataset;
pub mod env;
pub mod error;
pub mod eval;
pub mod generate;
pub mod graph;
pub mod gset;
pub mod heuristics;
pub mod neuro;
pub mod oracle;
pub mod seed;
pub mod training;

pub use agent::{rollout, AgentParams, ArchConfig, Budget, GraphRollout, PolicyConfig};
pub use env::{cut_value, CutState, EnvSnapshot, Observation};
pub use error::{Error, Result};
pub use graph::Graph;
pub use oracle::{brute_force_max_cut, OracleResult};
