//! Decentralized stochastic optimization over multi-agent graphs.
//!
//! The crate simulates synchronous communication rounds between `N` agents
//! connected by an undirected graph. Each agent owns a slice of the data and
//! a private copy of the model; agents only exchange vectors with their
//! graph neighbours through a doubly stochastic mixing matrix.
//!
//! Implemented methods:
//!
//! - local stochastic gradient tracking (LSGT): gradient tracking with `E`
//!   local SGD steps between communication rounds,
//! - variable sum tracking with local updates (MUST) for objectives whose
//!   agents hold only part of each sample's features,
//! - baselines: vanilla stochastic gradient tracking, DSGD, D² and
//!   centralized SGD.
//!
//! Modules follow the data flow of an experiment: [`topology`] builds the
//! graph and mixing matrix, [`problems`] loads and partitions data and
//! provides gradient oracles, [`algorithms`] advances agent states round by
//! round, [`metrics`] measures consensus/stationarity and evaluates the
//! theoretical rate bounds, and [`harness`] ties everything into
//! reproducible, CSV-emitting runs.

pub mod algorithms;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod problems;
pub mod rng;
pub mod topology;
