//! Deterministic federated subgraph-learning simulator.
//!
//! Clients hold induced subgraphs of one global graph, train a shared GCN
//! node classifier under (possibly noisy) local labels, and a central server
//! aggregates their parameters each communication round. Two methods are
//! provided:
//!
//! * `fedavg` — plain cross-entropy training with node-count-weighted
//!   parameter averaging.
//! * `fedrgl` — class-aware dual-consistency noise-node filtering (global
//!   model view intersected with a corrected label-propagation structural
//!   view), graph-contrastive training with high-confidence pseudo-labels
//!   and a Jensen-Shannon consistency term, and predictive-entropy-weighted
//!   server aggregation.
//!
//! Everything is seeded: identical configuration and seeds produce
//! bit-identical metrics regardless of the worker-pool size. See the
//! crate examples for runnable walkthroughs of each subsystem and
//! [`harness::run_experiment`] for the full pipeline behind the CLI.

pub mod contrast;
pub mod error;
pub mod fed;
pub mod filter;
pub mod graph;
pub mod harness;
pub mod model;
pub mod noise;
pub mod numeric;
pub mod partition;
pub mod sbm;
pub mod seeding;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
