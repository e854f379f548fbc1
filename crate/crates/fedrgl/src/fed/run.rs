//! Federation orchestration: partition, noise injection, the round loop,
//! and global-model evaluation.

use rayon::prelude::*;

use crate::graph::{gcn_normalize, induced_subgraph, GraphBundle};
use crate::model::{forward_logits, init_params, GcnModel};
use crate::noise::{inject, sample_client_rates, NoiseKind};
use crate::partition::{assign_communities, louvain};
use crate::seeding::{self, Purpose};
use crate::{Error, Result};

use super::client::{client_round, ClientState, Phase};
use super::config::{AggregationRule, Method, RunConfig};
use super::server::{aggregate_entropy, aggregate_fedavg, ENTROPY_EPSILON};

/// Per-client slice of one round's metrics record.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientRoundStats {
    pub train_loss: f64,
    pub entropy: f64,
    pub weight: f64,
    pub clean: Option<usize>,
    pub noisy: Option<usize>,
    pub pseudo: Option<usize>,
    pub clean_global: Option<usize>,
    pub clean_structural: Option<usize>,
    pub filter_precision: Option<f64>,
    pub filter_recall: Option<f64>,
}

/// One row of the metrics stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    pub test_accuracy: f64,
    pub clients: Vec<ClientRoundStats>,
}

/// Everything a finished run reports.
#[derive(Debug, Clone)]
pub struct FederationOutcome {
    pub rounds: Vec<RoundRecord>,
    /// accuracy after the last round
    pub final_accuracy: f64,
    /// best accuracy over all rounds
    pub best_accuracy: f64,
    pub client_sizes: Vec<usize>,
    pub client_noise_rates: Vec<f64>,
}

impl FederationOutcome {
    /// Micro-averaged filter precision/recall over all post-warmup rounds
    /// and clients; `None` when no filtering happened or no ground truth
    /// was available.
    pub fn mean_filter_precision(&self) -> Option<f64> {
        mean_of(self.rounds.iter().flat_map(|r| {
            r.clients.iter().filter_map(|c| c.filter_precision)
        }))
    }

    pub fn mean_filter_recall(&self) -> Option<f64> {
        mean_of(self.rounds.iter().flat_map(|r| {
            r.clients.iter().filter_map(|c| c.filter_recall)
        }))
    }
}

fn mean_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    let collected: Vec<f64> = values.collect();
    if collected.is_empty() {
        None
    } else {
        Some(collected.iter().sum::<f64>() / collected.len() as f64)
    }
}

/// Micro-accuracy of a model over the union of the bundles' test nodes.
/// Labels at test nodes are never touched by noise injection, so the
/// stored labels are ground truth there.
pub fn evaluate_global(model: &GcnModel, bundles: &[&GraphBundle]) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    for bundle in bundles {
        let adj = gcn_normalize(bundle).matrix;
        let logits = forward_logits(model, &adj, &bundle.features);
        for v in bundle.nodes_with_split(crate::graph::Split::Test) {
            let row = logits.row(v);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            if best == bundle.labels[v] {
                correct += 1;
            }
            total += 1;
        }
    }
    assert!(total > 0, "contract error: evaluation needs at least one test node");
    correct as f64 / total as f64
}

/// Partition the global bundle, inject per-client noise, and build client
/// states around copies of the initial model.
pub fn setup_clients(config: &RunConfig, global_bundle: &GraphBundle) -> Result<Vec<ClientState>> {
    let communities = louvain(global_bundle, config.seed);
    let partition = assign_communities(&communities, config.clients, config.seed)?;

    let noise_spec = config.noise.resolve(config.seed)?;
    let rates = sample_client_rates(&noise_spec, config.clients);

    let initial_model = init_params(
        global_bundle.feature_dim(),
        config.hidden_dim,
        global_bundle.n_classes,
        config.seed,
    );

    let mut clients = Vec::with_capacity(config.clients);
    for (id, nodes) in partition.client_nodes.iter().enumerate() {
        let mut bundle = induced_subgraph(global_bundle, nodes)?;
        let clean_labels = bundle.labels.clone();
        if noise_spec.kind != NoiseKind::None {
            let (noisy, mask) = inject(
                &bundle.labels,
                &bundle.train_nodes(),
                rates[id],
                noise_spec.kind,
                bundle.n_classes,
                seeding::derive(noise_spec.seed, Purpose::NoiseInject, &[id as u64]),
            );
            bundle.labels = noisy;
            bundle.noise_mask = Some(mask);
        }
        if bundle.unlabeled_nodes().is_empty() {
            return Err(Error::Config(format!(
                "client {id} has no val/test nodes; adjust split ratios or client count"
            )));
        }
        clients.push(ClientState::new(id, bundle, clean_labels, rates[id], initial_model.clone()));
    }
    Ok(clients)
}

/// Run the full federation: T rounds of broadcast, parallel local
/// training, aggregation, and global evaluation. Deterministic for a given
/// config regardless of the worker-pool size.
pub fn run_federation(config: &RunConfig, global_bundle: &GraphBundle) -> Result<FederationOutcome> {
    config.validate()?;
    let mut clients = setup_clients(config, global_bundle)?;
    let client_sizes: Vec<usize> = clients.iter().map(|c| c.bundle.n_nodes).collect();
    let client_noise_rates: Vec<f64> = clients.iter().map(|c| c.noise_rate).collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;

    let mut global = clients[0].model.params.clone();
    let mut eval_model = clients[0].model.clone();
    let mut rounds = Vec::with_capacity(config.rounds);
    let mut best_accuracy = 0.0f64;

    for round in 0..config.rounds {
        let phase = match config.method {
            Method::Fedavg => Phase::Warmup,
            Method::Fedrgl => {
                if round < config.warmup_rounds {
                    Phase::Warmup
                } else {
                    Phase::Main
                }
            }
        };

        let global_ref = &global;
        let reports: Vec<_> = pool.install(|| {
            clients
                .par_iter_mut()
                .map(|state| client_round(state, global_ref, phase, round, config))
                .collect::<Result<Vec<_>>>()
        })?;

        // size-weighted averaging during warm-up and whenever entropy
        // reweighting is switched off
        let use_entropy = phase == Phase::Main
            && config.aggregation == AggregationRule::Entropy
            && !config.ablation.entropy_weighting;
        let (aggregated, weights) = if use_entropy {
            aggregate_entropy(&reports, ENTROPY_EPSILON)
        } else {
            aggregate_fedavg(&reports)
        };
        global = aggregated;

        eval_model.load_params(&global);
        let bundles: Vec<&GraphBundle> = clients.iter().map(|c| &c.bundle).collect();
        let test_accuracy = evaluate_global(&eval_model, &bundles);
        best_accuracy = best_accuracy.max(test_accuracy);

        let client_stats = reports
            .iter()
            .zip(&weights)
            .map(|(report, &weight)| {
                let last = report.epochs.last();
                ClientRoundStats {
                    train_loss: report.train_loss,
                    entropy: report.predictive_entropy,
                    weight,
                    clean: report.filter.as_ref().map(|f| f.clean_count),
                    noisy: report.filter.as_ref().map(|f| f.noisy_count),
                    pseudo: if phase == Phase::Main && !config.ablation.pseudo {
                        last.map(|e| e.pseudo_count)
                    } else {
                        None
                    },
                    clean_global: report.filter.as_ref().map(|f| f.clean_global_count),
                    clean_structural: report.filter.as_ref().map(|f| f.clean_structural_count),
                    filter_precision: report.filter.as_ref().and_then(|f| f.precision),
                    filter_recall: report.filter.as_ref().and_then(|f| f.recall),
                }
            })
            .collect();

        rounds.push(RoundRecord { round, test_accuracy, clients: client_stats });
    }

    let final_accuracy = rounds.last().map_or(0.0, |r| r.test_accuracy);
    Ok(FederationOutcome {
        rounds,
        final_accuracy,
        best_accuracy,
        client_sizes,
        client_noise_rates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;
    use crate::numeric::Tensor;

    #[test]
    fn perfect_and_constant_predictors() {
        // hand-built 4-node case: logits from cls.b only
        let (bundle, _) = GraphBundle::new(
            4,
            2,
            vec![],
            Tensor::from_rows(&[vec![1.0], vec![1.0], vec![1.0], vec![1.0]]),
            vec![0, 0, 1, 1],
            vec![Split::Test; 4],
            None,
        )
        .unwrap();
        let mut model = init_params(1, 1, 2, 0);
        let zero = model.params.unflatten(&vec![0.0; model.params.scalar_count()]);
        model.load_params(&zero);
        // constant predictor (argmax ties → class 0) on a balanced test set
        assert_eq!(evaluate_global(&model, &[&bundle]), 0.5);
    }

    #[test]
    fn three_of_four_correct_is_075() {
        // identity-wired 2-d model: logits equal the features, so argmax
        // follows the dominant feature column
        let (bundle, _) = GraphBundle::new(
            4,
            2,
            vec![],
            Tensor::from_rows(&[
                vec![5.0, 0.0],
                vec![5.0, 0.0],
                vec![0.0, 5.0],
                vec![5.0, 0.0], // label 1 but predicted 0
            ]),
            vec![0, 0, 1, 1],
            vec![Split::Test; 4],
            None,
        )
        .unwrap();
        let mut model = init_params(2, 2, 2, 0);
        let mut flat = vec![0.0; model.params.scalar_count()];
        let mut offset = 0;
        for (name, t) in model.params.iter() {
            if matches!(name, "enc1.w" | "enc2.w" | "cls.w") {
                flat[offset] = 1.0; // [0][0]
                flat[offset + 3] = 1.0; // [1][1]
            }
            offset += t.len();
        }
        let loaded = model.params.unflatten(&flat);
        model.load_params(&loaded);
        assert_eq!(evaluate_global(&model, &[&bundle]), 0.75);
    }

    fn tiny_global_bundle(seed: u64) -> GraphBundle {
        crate::sbm::generate_sbm(
            &crate::sbm::SbmSpec {
                blocks: 2,
                nodes_per_block: 12,
                p_in: 0.5,
                p_out: 0.02,
                feature_dim: 4,
                center_separation: 1.5,
                feature_noise_std: 0.5,
                seed,
            },
            crate::partition::SplitRatios::default(),
        )
        .unwrap()
    }

    #[test]
    fn federation_is_deterministic_across_pool_sizes() {
        let bundle = tiny_global_bundle(5);
        let base = RunConfig {
            clients: 2,
            rounds: 4,
            warmup_rounds: 2,
            local_epochs: 2,
            hidden_dim: 8,
            noise: crate::fed::NoiseConfig {
                kind: NoiseKind::Uniform,
                eta: Some(0.3),
                ..Default::default()
            },
            ..Default::default()
        };
        let one = run_federation(&base, &bundle).unwrap();
        let again = run_federation(&base, &bundle).unwrap();
        let four = run_federation(&RunConfig { workers: 4, ..base.clone() }, &bundle).unwrap();
        assert_eq!(one.rounds, again.rounds);
        assert_eq!(one.rounds, four.rounds);
    }

    #[test]
    fn warmup_rounds_coincide_between_methods() {
        let bundle = tiny_global_bundle(6);
        let fedrgl = RunConfig {
            clients: 2,
            rounds: 3,
            warmup_rounds: 2,
            local_epochs: 1,
            hidden_dim: 8,
            method: Method::Fedrgl,
            noise: crate::fed::NoiseConfig {
                kind: NoiseKind::Uniform,
                eta: Some(0.4),
                ..Default::default()
            },
            ..Default::default()
        };
        let fedavg = RunConfig { method: Method::Fedavg, ..fedrgl.clone() };
        let a = run_federation(&fedrgl, &bundle).unwrap();
        let b = run_federation(&fedavg, &bundle).unwrap();
        for round in 0..2 {
            assert_eq!(a.rounds[round], b.rounds[round], "warmup round {round}");
        }
        assert_ne!(a.rounds[2].clients[0].clean, b.rounds[2].clients[0].clean);
    }

    #[test]
    fn labels_restored_after_every_round() {
        let bundle = tiny_global_bundle(7);
        let config = RunConfig {
            clients: 2,
            rounds: 2,
            warmup_rounds: 1,
            local_epochs: 1,
            hidden_dim: 8,
            ..Default::default()
        };
        let mut clients = setup_clients(&config, &bundle).unwrap();
        let before: Vec<Vec<usize>> = clients.iter().map(|c| c.bundle.labels.clone()).collect();
        let global = clients[0].model.params.clone();
        for state in clients.iter_mut() {
            client_round(state, &global, Phase::Main, 1, &config).unwrap();
        }
        let after: Vec<Vec<usize>> = clients.iter().map(|c| c.bundle.labels.clone()).collect();
        assert_eq!(before, after);
    }
}
