//! Graph augmentation, node-wise contrastive loss, high-confidence
//! pseudo-labeling, and the Jensen-Shannon consistency term.
//!
//! Two stochastic views of a client subgraph are built by edge dropping
//! and feature-column masking. Projected embeddings of the views feed a
//! symmetrized InfoNCE objective; classifier logits of the views elect
//! pseudo-labels for filtered-out noisy nodes, which then receive extra
//! cross-entropy supervision and a three-way JS consistency penalty
//! against the original-graph predictions. Pseudo-labels live for one
//! epoch and never overwrite stored labels.

use rand::Rng;

use crate::graph::{gcn_normalize_edges, GraphBundle, NormalizedAdjacency};
use crate::numeric::{NodeId, Tape, Tensor};
use crate::seeding::{self, Purpose};

/// One stochastic view: surviving edges, masked features, and the draw
/// record that produced them.
#[derive(Debug, Clone)]
pub struct AugmentedView {
    pub kept_edges: Vec<(usize, usize)>,
    pub features: Tensor,
    /// edges removed by the draw
    pub dropped_edges: Vec<(usize, usize)>,
    /// feature columns zeroed by the draw
    pub masked_columns: Vec<usize>,
}

impl AugmentedView {
    /// GCN operator of the view's surviving edges.
    pub fn gcn_operator(&self, n_nodes: usize) -> NormalizedAdjacency {
        gcn_normalize_edges(n_nodes, &self.kept_edges)
    }
}

/// Node, elected hard label, and the confidence that elected it.
#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabel {
    pub node: usize,
    pub label: usize,
    pub confidence: f64,
}

/// High-confidence pseudo-labels over a round's noisy set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelSet {
    pub entries: Vec<PseudoLabel>,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn nodes(&self) -> Vec<usize> {
        self.entries.iter().map(|e| e.node).collect()
    }

    pub fn mean_confidence(&self) -> f64 {
        if self.entries.is_empty() {
            return 0.0;
        }
        self.entries.iter().map(|e| e.confidence).sum::<f64>() / self.entries.len() as f64
    }
}

/// Draw one view: each edge dropped independently with `p_edge_drop`, each
/// feature column zeroed (for all nodes) with `p_feat_mask`. Edges are
/// drawn before columns, so the record is reproducible from the seed.
pub fn augment(
    bundle: &GraphBundle,
    p_edge_drop: f64,
    p_feat_mask: f64,
    seed: u64,
) -> AugmentedView {
    assert!(
        (0.0..=1.0).contains(&p_edge_drop) && (0.0..=1.0).contains(&p_feat_mask),
        "contract error: augmentation probabilities must lie in [0, 1]"
    );
    let mut rng = seeding::stream(seed, Purpose::Augment, &[]);
    let mut kept = Vec::with_capacity(bundle.edges.len());
    let mut dropped = Vec::new();
    for &edge in &bundle.edges {
        if rng.gen::<f64>() < p_edge_drop {
            dropped.push(edge);
        } else {
            kept.push(edge);
        }
    }
    let mut features = bundle.features.clone();
    let mut masked_columns = Vec::new();
    for col in 0..features.cols() {
        if rng.gen::<f64>() < p_feat_mask {
            masked_columns.push(col);
            for row in 0..features.rows() {
                features.set(row, col, 0.0);
            }
        }
    }
    AugmentedView { kept_edges: kept, features, dropped_edges: dropped, masked_columns }
}

/// One-hot rows for a list of labels.
pub(crate) fn onehot_rows(labels: &[usize], n_classes: usize) -> Tensor {
    let mut m = Tensor::zeros(labels.len().max(1), n_classes);
    for (r, &l) in labels.iter().enumerate() {
        m.set(r, l, 1.0);
    }
    m
}

/// Mean softmax cross-entropy of selected logit rows against hard labels.
/// Empty selections contribute zero loss.
pub(crate) fn softmax_ce_mean(
    tape: &mut Tape,
    logits: NodeId,
    rows: &[usize],
    labels: &[usize],
    n_classes: usize,
) -> NodeId {
    if rows.is_empty() {
        return tape.constant(0.0);
    }
    let picked = tape.gather_rows(logits, rows.to_vec());
    let probs = tape.row_softmax(picked);
    let logp = tape.log(probs);
    let hot = onehot_rows(&rows.iter().map(|&v| labels[v]).collect::<Vec<_>>(), n_classes);
    let mask = tape.input(hot);
    let picked_logp = tape.mul(logp, mask);
    let total = tape.sum_all(picked_logp);
    tape.scale(total, -1.0 / rows.len() as f64)
}

fn directional_nce_sum(tape: &mut Tape, a: NodeId, b: NodeId, tau: f64, eye: NodeId) -> NodeId {
    let cross = tape.matmul_nt(a, b);
    let cross = tape.scale(cross, 1.0 / tau);
    let cross = tape.exp(cross);
    let intra = tape.matmul_nt(a, a);
    let intra = tape.scale(intra, 1.0 / tau);
    let intra = tape.exp(intra);

    let cross_diag = tape.mul(cross, eye);
    let numerator = tape.row_sum(cross_diag);
    let intra_diag = tape.mul(intra, eye);
    let intra_diag_sum = tape.row_sum(intra_diag);

    let cross_sum = tape.row_sum(cross);
    let intra_sum = tape.row_sum(intra);
    let with_intra = tape.add(cross_sum, intra_sum);
    let denominator = tape.sub(with_intra, intra_diag_sum);

    let log_den = tape.log(denominator);
    let log_num = tape.log(numerator);
    let per_node = tape.sub(log_den, log_num);
    tape.sum_all(per_node)
}

/// Symmetrized node-wise InfoNCE over projected view embeddings.
///
/// Per node i and view order (a, b):
/// ℓ(i) = −log ψ(aᵢ, bᵢ) / (ψ(aᵢ, bᵢ) + Σ_{j≠i} ψ(aᵢ, aⱼ) + Σ_{j≠i} ψ(aᵢ, bⱼ))
/// with ψ(x, y) = exp(cos(x, y)/τ); both orders are summed and divided by
/// 2N. Fewer than two nodes means no negatives exist: the loss is zero.
pub fn contrastive_loss(tape: &mut Tape, z1: NodeId, z2: NodeId, tau: f64) -> NodeId {
    assert!(tau > 0.0, "contract error: contrastive temperature must be positive, got {tau}");
    let n = tape.value(z1).rows();
    assert_eq!(
        tape.value(z1).shape(),
        tape.value(z2).shape(),
        "dimension error: contrastive views {:?} vs {:?}",
        tape.value(z1).shape(),
        tape.value(z2).shape()
    );
    if n < 2 {
        log::warn!("contrastive loss skipped: {n} node(s) leave no negative pairs");
        return tape.constant(0.0);
    }
    let n1 = tape.l2_normalize_rows(z1);
    let n2 = tape.l2_normalize_rows(z2);
    let eye = tape.input(Tensor::eye(n));
    let forward = directional_nce_sum(tape, n1, n2, tau, eye);
    let backward = directional_nce_sum(tape, n2, n1, tau, eye);
    let both = tape.add(forward, backward);
    tape.scale(both, 1.0 / (2.0 * n as f64))
}

/// Average the two views' logits, softmax, and keep noisy nodes whose top
/// probability strictly exceeds `gamma` (argmax ties break low).
pub fn pseudo_labels(
    logits1: &Tensor,
    logits2: &Tensor,
    noisy_set: &[usize],
    gamma: f64,
) -> PseudoLabelSet {
    assert!((0.0..1.0).contains(&gamma), "contract error: gamma {gamma} outside [0, 1)");
    let averaged = logits1.add(logits2).scale(0.5);
    let probs = averaged.row_softmax();
    let mut entries = Vec::new();
    for &v in noisy_set {
        let row = probs.row(v);
        let mut best = 0;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if row[best] > gamma {
            entries.push(PseudoLabel { node: v, label: best, confidence: row[best] });
        }
    }
    PseudoLabelSet { entries }
}

/// Mean over pseudo nodes of ½·[CE(view1) + CE(view2)] against the elected
/// hard labels. The labels are constants: no gradient flows through their
/// construction.
pub fn pseudo_loss(
    tape: &mut Tape,
    logits1: NodeId,
    logits2: NodeId,
    pseudo: &PseudoLabelSet,
) -> NodeId {
    if pseudo.is_empty() {
        return tape.constant(0.0);
    }
    let rows = pseudo.nodes();
    let hard: Vec<usize> = pseudo.entries.iter().map(|e| e.label).collect();
    let n_classes = tape.value(logits1).cols();

    let mut view_ce = |logits: NodeId| {
        let picked = tape.gather_rows(logits, rows.clone());
        let probs = tape.row_softmax(picked);
        let logp = tape.log(probs);
        let mask = tape.input(onehot_rows(&hard, n_classes));
        let picked_logp = tape.mul(logp, mask);
        let total = tape.sum_all(picked_logp);
        tape.scale(total, -1.0 / rows.len() as f64)
    };
    let ce1 = view_ce(logits1);
    let ce2 = view_ce(logits2);
    let sum = tape.add(ce1, ce2);
    tape.scale(sum, 0.5)
}

/// Generalized three-distribution Jensen-Shannon divergence over pseudo
/// nodes: M = (P̂ + P̂¹ + P̂²)/3, JS = ⅓·[KL(P̂‖M) + KL(P̂¹‖M) + KL(P̂²‖M)],
/// averaged over the pseudo set. Inputs are logits of the original graph
/// and the two views.
pub fn js_loss(
    tape: &mut Tape,
    logits_orig: NodeId,
    logits1: NodeId,
    logits2: NodeId,
    pseudo: &PseudoLabelSet,
) -> NodeId {
    if pseudo.is_empty() {
        return tape.constant(0.0);
    }
    let rows = pseudo.nodes();
    let mut to_probs = |logits: NodeId| {
        let picked = tape.gather_rows(logits, rows.clone());
        tape.row_softmax(picked)
    };
    let p0 = to_probs(logits_orig);
    let p1 = to_probs(logits1);
    let p2 = to_probs(logits2);

    let p01 = tape.add(p0, p1);
    let p012 = tape.add(p01, p2);
    let mixture = tape.scale(p012, 1.0 / 3.0);
    let log_mix = tape.log(mixture);

    let mut kl_to_mix = |p: NodeId| {
        let logp = tape.log(p);
        let diff = tape.sub(logp, log_mix);
        let weighted = tape.mul(p, diff);
        tape.row_sum(weighted)
    };
    let kl0 = kl_to_mix(p0);
    let kl1 = kl_to_mix(p1);
    let kl2 = kl_to_mix(p2);
    let kl01 = tape.add(kl0, kl1);
    let kl = tape.add(kl01, kl2);
    let js = tape.scale(kl, 1.0 / 3.0);
    tape.mean_all(js)
}
