//! Federated training: client rounds, server aggregation, the
//! communication loop, and metrics export.

mod client;
mod config;
mod metrics;
mod run;
mod server;

pub use client::{
    client_round, filter_round, predictive_entropy, ClientReport, ClientState, EpochDiagnostics,
    FilterStats, Phase,
};
pub use config::{AblationFlags, AggregationRule, Method, NoiseConfig, RunConfig};
pub use metrics::{csv_document, csv_header, csv_row, write_metrics_csv};
pub use run::{
    evaluate_global, run_federation, setup_clients, ClientRoundStats, FederationOutcome,
    RoundRecord,
};
pub use server::{
    aggregate_entropy, aggregate_fedavg, entropy_weights, fedavg_weights, ENTROPY_EPSILON,
};
