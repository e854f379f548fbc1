//! Client-side local training.
//!
//! Each round a client loads the broadcast global parameters, filters its
//! train nodes once (main phase), then runs the configured number of local
//! epochs. Every epoch draws two fresh augmented views, recomputes
//! pseudo-labels from them, assembles the combined loss
//! L = L_ce + λ_cl·L_contrastive + λ_p·L_pseudo + λ_js·L_js,
//! backpropagates, and applies one SGD step. Pseudo-labels are discarded
//! after the epoch and never overwrite stored labels.

use crate::contrast::{
    augment, contrastive_loss, js_loss, pseudo_labels, pseudo_loss, softmax_ce_mean,
    PseudoLabelSet,
};
use crate::filter::{
    filtered_views, label_propagate, propagation_init, FilterOutcome, ViewToggle,
};
use crate::graph::{gcn_normalize, masked_lp_normalize, GraphBundle};
use crate::model::{classify, encode, forward_logits, project, GcnModel};
use crate::numeric::{sgd_step, ParamSet, Tape, Tensor, LOG_FLOOR};
use crate::seeding::{self, Purpose};
use crate::{Error, Result};

use super::config::RunConfig;

/// Training phase of a round.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// plain cross-entropy on all train nodes, no filtering
    Warmup,
    /// filtering, contrastive views, pseudo-labels, consistency
    Main,
}

/// Everything one client keeps across rounds. The subgraph is immutable;
/// only the model parameters change.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    /// local subgraph with (possibly noisy) train labels
    pub bundle: GraphBundle,
    /// pre-injection labels, for evaluation and diagnostics only
    pub clean_labels: Vec<usize>,
    /// rate this client's labels were corrupted at
    pub noise_rate: f64,
    pub model: GcnModel,
    /// cached GCN operator of the original subgraph
    pub gcn_matrix: Tensor,
    /// cached masked label-propagation operator
    pub lp_matrix: Tensor,
    pub train_nodes: Vec<usize>,
    pub unlabeled_nodes: Vec<usize>,
}

impl ClientState {
    pub fn new(
        id: usize,
        bundle: GraphBundle,
        clean_labels: Vec<usize>,
        noise_rate: f64,
        model: GcnModel,
    ) -> Self {
        let gcn_matrix = gcn_normalize(&bundle).matrix;
        let mut train_mask = vec![false; bundle.n_nodes];
        let train_nodes = bundle.train_nodes();
        for &v in &train_nodes {
            train_mask[v] = true;
        }
        let lp_matrix = masked_lp_normalize(&bundle, &train_mask).matrix;
        let unlabeled_nodes = bundle.unlabeled_nodes();
        ClientState {
            id,
            bundle,
            clean_labels,
            noise_rate,
            model,
            gcn_matrix,
            lp_matrix,
            train_nodes,
            unlabeled_nodes,
        }
    }
}

/// Loss values of one local epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpochDiagnostics {
    pub total_loss: f64,
    pub ce_loss: f64,
    pub contrastive_loss: f64,
    pub pseudo_loss: f64,
    pub js_loss: f64,
    pub pseudo_count: usize,
    pub pseudo_mean_confidence: f64,
    /// fraction of pseudo-labels matching the pre-noise labels, when known
    pub pseudo_accuracy: Option<f64>,
}

/// Filtering result of one round, with ground-truth scores when the noise
/// mask is available.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterStats {
    pub clean_count: usize,
    pub noisy_count: usize,
    pub clean_global_count: usize,
    pub clean_structural_count: usize,
    /// fraction of flagged-noisy nodes that are truly corrupted
    pub precision: Option<f64>,
    /// fraction of truly corrupted nodes that got flagged
    pub recall: Option<f64>,
}

/// What a client uploads after its local round.
#[derive(Debug, Clone)]
pub struct ClientReport {
    pub client_id: usize,
    pub params: ParamSet,
    pub node_count: usize,
    pub predictive_entropy: f64,
    /// total loss of the last local epoch
    pub train_loss: f64,
    pub epochs: Vec<EpochDiagnostics>,
    pub filter: Option<FilterStats>,
}

/// Mean per-node predictive entropy over the unlabeled (val + test) nodes:
/// ℏ(v) = −(1/C)·Σ_c p̂ log p̂, averaged over the pool.
pub fn predictive_entropy(model: &GcnModel, adj: &Tensor, bundle: &GraphBundle) -> f64 {
    let unlabeled = bundle.unlabeled_nodes();
    assert!(
        !unlabeled.is_empty(),
        "contract error: predictive entropy needs a nonempty unlabeled pool"
    );
    let probs = forward_logits(model, adj, &bundle.features).row_softmax();
    let c = bundle.n_classes as f64;
    let mut total = 0.0;
    for &v in &unlabeled {
        let mut h = 0.0;
        for &p in probs.row(v) {
            h -= p * p.max(LOG_FLOOR).ln();
        }
        total += h / c;
    }
    total / unlabeled.len() as f64
}

fn filter_stats(outcome: &FilterOutcome, mask: Option<&Vec<bool>>) -> FilterStats {
    let (precision, recall) = match mask {
        Some(mask) => {
            let truly_noisy_flagged = outcome.noisy.iter().filter(|&&v| mask[v]).count();
            let truly_noisy_total = mask.iter().filter(|&&m| m).count();
            let precision = if outcome.noisy.is_empty() {
                None
            } else {
                Some(truly_noisy_flagged as f64 / outcome.noisy.len() as f64)
            };
            let recall = if truly_noisy_total == 0 {
                None
            } else {
                Some(truly_noisy_flagged as f64 / truly_noisy_total as f64)
            };
            (precision, recall)
        }
        None => (None, None),
    };
    FilterStats {
        clean_count: outcome.clean.len(),
        noisy_count: outcome.noisy.len(),
        clean_global_count: outcome.clean_global.len(),
        clean_structural_count: outcome.clean_structural.len(),
        precision,
        recall,
    }
}

/// Noise-node filtering with the broadcast global parameters, executed
/// once per communication round before the local epochs.
pub fn filter_round(state: &ClientState, config: &RunConfig) -> FilterOutcome {
    let logits = forward_logits(&state.model, &state.gcn_matrix, &state.bundle.features);
    let (init, clamp) = propagation_init(&logits, &state.bundle.labels, &state.train_nodes);
    let soft = label_propagate(
        &state.lp_matrix,
        &init,
        config.lp_alpha,
        config.lp_steps,
        &clamp,
        config.lp_clamp_every_step,
    );
    filtered_views(
        &logits,
        &soft,
        &state.bundle.labels,
        &state.train_nodes,
        config.phi1,
        config.phi2,
        ViewToggle {
            global: !config.ablation.global_view,
            structural: !config.ablation.structural_view,
        },
    )
}

fn pseudo_accuracy(pseudo: &PseudoLabelSet, clean_labels: &[usize], has_mask: bool) -> Option<f64> {
    if !has_mask || pseudo.is_empty() {
        return None;
    }
    let correct = pseudo
        .entries
        .iter()
        .filter(|e| e.label == clean_labels[e.node])
        .count();
    Some(correct as f64 / pseudo.len() as f64)
}

/// One local round: load the global parameters, filter once (main phase),
/// train for the configured epochs, measure predictive entropy, report.
pub fn client_round(
    state: &mut ClientState,
    global_params: &ParamSet,
    phase: Phase,
    round: usize,
    config: &RunConfig,
) -> Result<ClientReport> {
    state.model.load_params(global_params);

    // noise filtering runs once per round, on the global-model view
    let (clean_set, noisy_set, filter) = match phase {
        Phase::Warmup => (state.train_nodes.clone(), Vec::new(), None),
        Phase::Main => {
            let outcome = filter_round(state, config);
            let stats = filter_stats(&outcome, state.bundle.noise_mask.as_ref());
            (outcome.clean, outcome.noisy, Some(stats))
        }
    };

    let use_contrastive = phase == Phase::Main && !config.ablation.contrastive;
    let use_pseudo = phase == Phase::Main && !config.ablation.pseudo;
    let use_js = phase == Phase::Main && !config.ablation.js;
    let needs_views = use_contrastive || use_pseudo || use_js;

    let n_classes = state.bundle.n_classes;
    let mut epochs = Vec::with_capacity(config.local_epochs);

    for epoch in 0..config.local_epochs {
        let mut tape = Tape::new();
        let adj = tape.input(state.gcn_matrix.clone());
        let features = tape.input(state.bundle.features.clone());
        let staged = state.model.stage(&mut tape);

        let embeddings = encode(&mut tape, adj, features, &staged);
        let logits = classify(&mut tape, embeddings, &staged);

        let ce = softmax_ce_mean(&mut tape, logits, &clean_set, &state.bundle.labels, n_classes);

        let mut diag = EpochDiagnostics {
            ce_loss: tape.value(ce).scalar_value(),
            ..Default::default()
        };
        let mut loss = ce;

        if needs_views {
            let coords = |view: u64| [state.id as u64, round as u64, epoch as u64, view];
            let view1 = augment(
                &state.bundle,
                config.edge_drop_prob,
                config.feature_mask_prob,
                seeding::derive(config.seed, Purpose::Augment, &coords(1)),
            );
            let view2 = augment(
                &state.bundle,
                config.edge_drop_prob,
                config.feature_mask_prob,
                seeding::derive(config.seed, Purpose::Augment, &coords(2)),
            );

            let adj1 = tape.input(view1.gcn_operator(state.bundle.n_nodes).matrix);
            let x1 = tape.input(view1.features.clone());
            let h1 = encode(&mut tape, adj1, x1, &staged);
            let logits1 = classify(&mut tape, h1, &staged);

            let adj2 = tape.input(view2.gcn_operator(state.bundle.n_nodes).matrix);
            let x2 = tape.input(view2.features.clone());
            let h2 = encode(&mut tape, adj2, x2, &staged);
            let logits2 = classify(&mut tape, h2, &staged);

            if use_contrastive {
                let z1 = project(&mut tape, h1, &staged);
                let z2 = project(&mut tape, h2, &staged);
                let lcl = contrastive_loss(&mut tape, z1, z2, config.tau);
                diag.contrastive_loss = tape.value(lcl).scalar_value();
                let weighted = tape.scale(lcl, config.lambda_contrast);
                loss = tape.add(loss, weighted);
            }

            if use_pseudo || use_js {
                // label election is constant: no gradient flows through it
                let pseudo = pseudo_labels(
                    tape.value(logits1),
                    tape.value(logits2),
                    &noisy_set,
                    config.gamma,
                );
                diag.pseudo_count = pseudo.len();
                diag.pseudo_mean_confidence = pseudo.mean_confidence();
                diag.pseudo_accuracy = pseudo_accuracy(
                    &pseudo,
                    &state.clean_labels,
                    state.bundle.noise_mask.is_some(),
                );

                if use_pseudo {
                    let lp = pseudo_loss(&mut tape, logits1, logits2, &pseudo);
                    diag.pseudo_loss = tape.value(lp).scalar_value();
                    let weighted = tape.scale(lp, config.lambda_pseudo);
                    loss = tape.add(loss, weighted);
                }
                if use_js {
                    let ljs = js_loss(&mut tape, logits, logits1, logits2, &pseudo);
                    diag.js_loss = tape.value(ljs).scalar_value();
                    let weighted = tape.scale(ljs, config.lambda_js);
                    loss = tape.add(loss, weighted);
                }
            }
        }

        diag.total_loss = tape.value(loss).scalar_value();
        if !diag.total_loss.is_finite() {
            let offender = [
                ("cross-entropy", diag.ce_loss),
                ("contrastive", diag.contrastive_loss),
                ("pseudo-label", diag.pseudo_loss),
                ("js-consistency", diag.js_loss),
            ]
            .iter()
            .find(|(_, v)| !v.is_finite())
            .map(|(name, _)| *name)
            .unwrap_or("combined");
            return Err(Error::NumericAbort(format!(
                "client {} round {round} epoch {epoch}: {offender} loss is not finite",
                state.id
            )));
        }

        let grads = tape.backward(loss);
        let grad_set = staged.gradients(&tape, &grads);
        sgd_step(&mut state.model.params, &grad_set, config.lr, config.weight_decay);
        epochs.push(diag);
    }

    let entropy = predictive_entropy(&state.model, &state.gcn_matrix, &state.bundle);
    let train_loss = epochs.last().map_or(0.0, |e| e.total_loss);

    Ok(ClientReport {
        client_id: state.id,
        params: state.model.params.clone(),
        node_count: state.bundle.n_nodes,
        predictive_entropy: entropy,
        train_loss,
        epochs,
        filter,
    })
}
