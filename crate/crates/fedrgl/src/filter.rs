//! Class-aware dual-consistency noise-node filtering.
//!
//! A train node is deemed clean only if its loss stays below a per-class
//! dynamic threshold (class mean + multiplier × class std, population
//! variance) under *both* views:
//!
//! * global-model view — cross-entropy of the broadcast global model's
//!   predictions against the stored labels;
//! * structural view — cross-entropy of masked label-propagation soft
//!   labels (initialized from global-model predictions, corrected to
//!   one-hot where prediction and label agree) against the stored labels.
//!
//! Classes with at most one train node or (numerically) zero loss variance
//! admit all their nodes as clean in that view, since a strict `<` against
//! mean + spread would otherwise flag entire homogeneous classes.

use crate::numeric::{Tensor, LOG_FLOOR};

/// Variance at or below this counts as zero for the degenerate-class rule.
pub const DEGENERATE_STD: f64 = 1e-12;

/// Per-class dynamic loss threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassThreshold {
    pub class: usize,
    pub mean: f64,
    pub std: f64,
    /// mean + multiplier × std, exactly.
    pub threshold: f64,
    /// one member or zero variance: every node passes
    pub degenerate: bool,
}

/// Threshold set for one view.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassThresholds {
    pub multiplier: f64,
    pub entries: Vec<ClassThreshold>,
}

impl ClassThresholds {
    pub fn for_class(&self, class: usize) -> Option<&ClassThreshold> {
        self.entries.iter().find(|e| e.class == class)
    }
}

/// Which views participate in the intersection. Disabling a view makes it
/// accept every train node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ViewToggle {
    pub global: bool,
    pub structural: bool,
}

impl Default for ViewToggle {
    fn default() -> Self {
        ViewToggle { global: true, structural: true }
    }
}

/// Result of one filtering pass over a client's train nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    /// clean under the global-model view
    pub clean_global: Vec<usize>,
    /// clean under the structural view
    pub clean_structural: Vec<usize>,
    /// intersection of the two views
    pub clean: Vec<usize>,
    /// train nodes not in `clean`
    pub noisy: Vec<usize>,
    pub global_thresholds: ClassThresholds,
    pub structural_thresholds: ClassThresholds,
    /// renormalized soft labels the structural view scored against
    pub lp_soft_labels: Tensor,
}

/// −log softmax(logit_row)[label] for each node in `node_set`, with the
/// engine's log floor.
pub fn per_node_cross_entropy(logits: &Tensor, labels: &[usize], node_set: &[usize]) -> Vec<f64> {
    let probs = logits.row_softmax();
    node_set
        .iter()
        .map(|&v| -(probs.at(v, labels[v]).max(LOG_FLOOR).ln()))
        .collect()
}

/// Population mean/std per class present in `labels`, thresholded at
/// mean + multiplier × std.
///
/// `losses` and `node_labels` are aligned (one entry per filtered node).
pub fn class_thresholds(losses: &[f64], node_labels: &[usize], multiplier: f64) -> ClassThresholds {
    assert_eq!(
        losses.len(),
        node_labels.len(),
        "contract error: {} losses for {} labels",
        losses.len(),
        node_labels.len()
    );
    let mut classes: Vec<usize> = node_labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let entries = classes
        .into_iter()
        .map(|class| {
            let members: Vec<f64> = losses
                .iter()
                .zip(node_labels)
                .filter(|(_, &l)| l == class)
                .map(|(&v, _)| v)
                .collect();
            let n = members.len() as f64;
            let mean = members.iter().sum::<f64>() / n;
            let variance = members.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            let std = variance.sqrt();
            ClassThreshold {
                class,
                mean,
                std,
                threshold: mean + multiplier * std,
                degenerate: members.len() <= 1 || std <= DEGENERATE_STD,
            }
        })
        .collect();
    ClassThresholds { multiplier, entries }
}

/// Nodes whose loss is strictly below their class threshold; degenerate
/// classes pass wholesale.
pub fn select_clean(
    nodes: &[usize],
    losses: &[f64],
    labels: &[usize],
    thresholds: &ClassThresholds,
) -> Vec<usize> {
    nodes
        .iter()
        .zip(losses)
        .filter(|(&v, &loss)| {
            let entry = thresholds
                .for_class(labels[v])
                .unwrap_or_else(|| panic!("contract error: no threshold for class {}", labels[v]));
            entry.degenerate || loss < entry.threshold
        })
        .map(|(&v, _)| v)
        .collect()
}

/// Initial soft-label matrix for label propagation.
///
/// Train nodes whose predicted class matches their stored label (argmax
/// ties broken toward the lowest class) get a one-hot row and form the
/// clamp set; the rest get their softmax row; non-train rows stay zero.
pub fn propagation_init(
    global_logits: &Tensor,
    labels: &[usize],
    train_nodes: &[usize],
) -> (Tensor, Vec<usize>) {
    let probs = global_logits.row_softmax();
    let n_classes = probs.cols();
    let mut init = Tensor::zeros(probs.rows(), n_classes);
    let mut clamp = Vec::new();
    for &v in train_nodes {
        let row = probs.row(v);
        let mut best = 0;
        for c in 1..n_classes {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best == labels[v] {
            init.set(v, labels[v], 1.0);
            clamp.push(v);
        } else {
            init.row_mut(v).copy_from_slice(row);
        }
    }
    (init, clamp)
}

/// k steps of Ŷ ← α·Ŷ + (1−α)·S·Ŷ.
///
/// With `clamp_every_step`, clamp-set rows are reset to their one-hot
/// initialization after each step; otherwise the one-hot rows only seed
/// the recurrence. No renormalization happens here — see
/// [`renormalize_rows`].
pub fn label_propagate(
    operator: &Tensor,
    init: &Tensor,
    alpha: f64,
    steps: usize,
    clamp_set: &[usize],
    clamp_every_step: bool,
) -> Tensor {
    assert!((0.0..=1.0).contains(&alpha), "contract error: alpha {alpha} outside [0, 1]");
    let mut current = init.clone();
    for _ in 0..steps {
        current = current.scale(alpha).add(&operator.matmul(&current).scale(1.0 - alpha));
        if clamp_every_step {
            for &v in clamp_set {
                let src = init.row(v).to_vec();
                current.row_mut(v).copy_from_slice(&src);
            }
        }
    }
    current
}

/// Scale every row with positive mass back onto the simplex; zero rows are
/// left alone (the log floor guards them downstream).
pub fn renormalize_rows(soft: &Tensor) -> Tensor {
    let mut out = soft.clone();
    for r in 0..out.rows() {
        let sum: f64 = out.row(r).iter().sum();
        if sum > LOG_FLOOR {
            for v in out.row_mut(r) {
                *v /= sum;
            }
        }
    }
    out
}

/// Full dual-view filter over `train_nodes`.
pub fn dual_filter(
    global_logits: &Tensor,
    lp_soft_labels: &Tensor,
    labels: &[usize],
    train_nodes: &[usize],
    phi1: f64,
    phi2: f64,
) -> FilterOutcome {
    filtered_views(
        global_logits,
        lp_soft_labels,
        labels,
        train_nodes,
        phi1,
        phi2,
        ViewToggle::default(),
    )
}

/// Dual filter with per-view toggles (for ablations). A disabled view
/// accepts all train nodes, so the enabled view decides alone.
pub fn filtered_views(
    global_logits: &Tensor,
    lp_soft_labels: &Tensor,
    labels: &[usize],
    train_nodes: &[usize],
    phi1: f64,
    phi2: f64,
    toggle: ViewToggle,
) -> FilterOutcome {
    let node_labels: Vec<usize> = train_nodes.iter().map(|&v| labels[v]).collect();
    let soft = renormalize_rows(lp_soft_labels);

    let (clean_global, global_thresholds) = if toggle.global {
        let losses = per_node_cross_entropy(global_logits, labels, train_nodes);
        let thresholds = class_thresholds(&losses, &node_labels, phi1);
        (select_clean(train_nodes, &losses, labels, &thresholds), thresholds)
    } else {
        (train_nodes.to_vec(), ClassThresholds::default())
    };

    let (clean_structural, structural_thresholds) = if toggle.structural {
        let losses: Vec<f64> = train_nodes
            .iter()
            .map(|&v| -(soft.at(v, labels[v]).max(LOG_FLOOR).ln()))
            .collect();
        let thresholds = class_thresholds(&losses, &node_labels, phi2);
        (select_clean(train_nodes, &losses, labels, &thresholds), thresholds)
    } else {
        (train_nodes.to_vec(), ClassThresholds::default())
    };

    let clean: Vec<usize> = train_nodes
        .iter()
        .filter(|v| clean_global.contains(v) && clean_structural.contains(v))
        .copied()
        .collect();
    let noisy: Vec<usize> = train_nodes.iter().filter(|v| !clean.contains(v)).copied().collect();

    FilterOutcome {
        clean_global,
        clean_structural,
        clean,
        noisy,
        global_thresholds,
        structural_thresholds,
        lp_soft_labels: soft,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn ce_of_known_logits() {
        // logits [ln 2, 0], label 0 → −log(2/3)
        let logits = Tensor::from_rows(&[vec![2.0f64.ln(), 0.0]]);
        let losses = per_node_cross_entropy(&logits, &[0], &[0]);
        assert!((losses[0] - 0.405_465_108_108_164_4).abs() < 1e-12);
    }

    #[test]
    fn ce_of_uniform_logits_is_ln2() {
        let logits = Tensor::from_rows(&[vec![1.0, 1.0]]);
        let losses = per_node_cross_entropy(&logits, &[1], &[0]);
        assert!((losses[0] - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn ce_of_confident_correct_prediction_is_near_zero() {
        let logits = Tensor::from_rows(&[vec![30.0, 0.0]]);
        let losses = per_node_cross_entropy(&logits, &[0], &[0]);
        assert!(losses[0] < 1e-10);
    }

    #[test]
    fn thresholds_match_population_statistics() {
        // class losses [0.1, 0.1, 0.9], multiplier 0.5
        let t = class_thresholds(&[0.1, 0.1, 0.9], &[0, 0, 0], 0.5);
        let e = t.for_class(0).unwrap();
        let mean = (0.1 + 0.1 + 0.9) / 3.0;
        let var = ((0.1f64 - mean).powi(2) * 2.0 + (0.9 - mean).powi(2)) / 3.0;
        assert!((e.mean - mean).abs() < 1e-15);
        assert!((e.std - var.sqrt()).abs() < 1e-15);
        assert!((e.threshold - (mean + 0.5 * var.sqrt())).abs() < 1e-15);
        assert!((e.mean - 0.366_666_666_666_666_7).abs() < 1e-12);
        assert!((e.std - 0.377_123_616_632_825_8).abs() < 1e-12);
        assert!((e.threshold - 0.555_228_474_983_079_6).abs() < 1e-12);
        assert!(!e.degenerate);
    }

    #[test]
    fn equal_losses_collapse_to_degenerate_mean() {
        let t = class_thresholds(&[0.25, 0.25, 0.25], &[1, 1, 1], 2.0);
        let e = t.for_class(1).unwrap();
        assert!((e.threshold - 0.25).abs() < 1e-12);
        assert!(e.degenerate);
    }

    #[test]
    fn zero_multiplier_threshold_is_the_mean() {
        let t = class_thresholds(&[0.1, 0.3], &[0, 0], 0.0);
        assert!((t.for_class(0).unwrap().threshold - 0.2).abs() < 1e-15);
    }

    #[test]
    fn select_keeps_low_loss_nodes() {
        let losses = vec![0.1, 0.1, 0.9];
        let labels = vec![0, 0, 0];
        let t = class_thresholds(&losses, &labels, 0.5);
        let clean = select_clean(&[0, 1, 2], &losses, &labels, &t);
        assert_eq!(clean, vec![0, 1]);
    }

    #[test]
    fn degenerate_class_is_rescued() {
        let losses = vec![0.4, 0.4];
        let labels = vec![0, 0];
        let t = class_thresholds(&losses, &labels, 1.0);
        // strict < against threshold 0.4 would reject both
        let clean = select_clean(&[0, 1], &losses, &labels, &t);
        assert_eq!(clean, vec![0, 1]);
    }

    #[test]
    fn absent_class_is_simply_absent() {
        let t = class_thresholds(&[0.5], &[2], 1.0);
        assert!(t.for_class(0).is_none());
        assert_eq!(t.entries.len(), 1);
    }

    #[test]
    fn propagation_init_rows() {
        // node 0 predicted correctly → one-hot; node 1 mismatched → softmax
        let logits = Tensor::from_rows(&[vec![3.0, 0.0], vec![2.0, 1.0]]);
        let labels = vec![0, 1];
        let (init, clamp) = propagation_init(&logits, &labels, &[0, 1]);
        assert_eq!(clamp, vec![0]);
        assert_eq!(init.row(0), &[1.0, 0.0]);
        let row1: f64 = init.row(1).iter().sum();
        assert!((row1 - 1.0).abs() < 1e-12);
        assert!(init.at(1, 0) > init.at(1, 1));
    }

    #[test]
    fn propagation_init_all_correct_leaves_no_soft_rows() {
        let logits = Tensor::from_rows(&[vec![3.0, 0.0], vec![0.0, 3.0]]);
        let (init, clamp) = propagation_init(&logits, &[0, 1], &[0, 1]);
        assert_eq!(clamp, vec![0, 1]);
        assert_eq!(init.row(0), &[1.0, 0.0]);
        assert_eq!(init.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn argmax_ties_break_low() {
        let logits = Tensor::from_rows(&[vec![1.0, 1.0]]);
        let (_, clamp) = propagation_init(&logits, &[0], &[0]);
        assert_eq!(clamp, vec![0]); // tie → class 0 → matches label 0
    }

    #[test]
    fn alpha_one_is_a_fixed_point() {
        let s = Tensor::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let init = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.3, 0.7]]);
        let out = label_propagate(&s, &init, 1.0, 7, &[0], true);
        assert_eq!(out, init);
    }

    #[test]
    fn zero_steps_is_identity() {
        let s = Tensor::from_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]]);
        let init = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.3, 0.7]]);
        assert_eq!(label_propagate(&s, &init, 0.5, 0, &[], true), init);
    }

    #[test]
    fn isolated_row_decays_then_renormalizes_back() {
        // zero operator row: after k steps the row is α^k · init, and
        // renormalization restores the original simplex row
        let s = Tensor::zeros(2, 2);
        let init = Tensor::from_rows(&[vec![0.4, 0.6], vec![0.0, 0.0]]);
        let out = label_propagate(&s, &init, 0.5, 3, &[], true);
        assert!((out.at(0, 0) - 0.4 * 0.125).abs() < 1e-15);
        assert!((out.at(0, 1) - 0.6 * 0.125).abs() < 1e-15);
        let renorm = renormalize_rows(&out);
        assert!((renorm.at(0, 0) - 0.4).abs() < 1e-12);
        assert!((renorm.at(0, 1) - 0.6).abs() < 1e-12);
        assert_eq!(renorm.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn clamped_rows_stay_one_hot_every_step() {
        let s = Tensor::from_rows(&[
            vec![0.0, 0.5, 0.5],
            vec![0.5, 0.0, 0.5],
            vec![0.5, 0.5, 0.0],
        ]);
        let mut init = Tensor::zeros(3, 2);
        init.set(0, 1, 1.0);
        init.set(1, 0, 0.5);
        init.set(1, 1, 0.5);
        init.set(2, 0, 1.0);
        for steps in 1..5 {
            let out = label_propagate(&s, &init, 0.3, steps, &[0, 2], true);
            assert_eq!(out.row(0), &[0.0, 1.0], "steps {steps}");
            assert_eq!(out.row(2), &[1.0, 0.0], "steps {steps}");
        }
    }

    #[test]
    fn identical_views_make_intersection_idempotent() {
        let logits = Tensor::from_rows(&[
            vec![2.0, 0.0],
            vec![1.5, 0.0],
            vec![0.0, 2.5],
            vec![-1.0, 1.0],
        ]);
        let labels = vec![0, 0, 1, 1];
        let train = vec![0, 1, 2, 3];
        // structural soft labels = softmax of the same logits → same losses
        let soft = logits.row_softmax();
        let outcome = dual_filter(&logits, &soft, &labels, &train, 1.0, 1.0);
        assert_eq!(outcome.clean, outcome.clean_global);
        assert_eq!(outcome.clean_global, outcome.clean_structural);
    }

    #[test]
    fn disabled_structural_view_reduces_to_global() {
        let logits = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.1, 0.0], vec![0.0, 2.0]]);
        let labels = vec![0, 0, 1];
        let train = vec![0, 1, 2];
        let soft = Tensor::zeros(3, 2);
        let outcome = filtered_views(
            &logits,
            &soft,
            &labels,
            &train,
            1.0,
            1.0,
            ViewToggle { global: true, structural: false },
        );
        assert_eq!(outcome.clean, outcome.clean_global);
        assert_eq!(outcome.clean_structural, train);
    }

    /// Brute-force recomputation of the dual filter, written independently
    /// of the library path (scalar math only).
    fn brute_force_filter(
        logits: &Tensor,
        soft: &Tensor,
        labels: &[usize],
        train: &[usize],
        phi1: f64,
        phi2: f64,
    ) -> (Vec<usize>, Vec<usize>, Vec<usize>, Vec<usize>) {
        let ce_global: Vec<f64> = train
            .iter()
            .map(|&v| {
                let row = logits.row(v);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = row.iter().map(|&x| (x - max).exp()).sum();
                let p = (row[labels[v]] - max).exp() / denom;
                -(p.max(1e-12).ln())
            })
            .collect();
        let ce_structural: Vec<f64> = train
            .iter()
            .map(|&v| {
                let row = soft.row(v);
                let sum: f64 = row.iter().sum();
                let p = if sum > 1e-12 { row[labels[v]] / sum } else { row[labels[v]] };
                -(p.max(1e-12).ln())
            })
            .collect();

        let pick = |losses: &[f64], phi: f64| -> Vec<usize> {
            let mut clean = Vec::new();
            for (i, &v) in train.iter().enumerate() {
                let class = labels[v];
                let member_losses: Vec<f64> = train
                    .iter()
                    .enumerate()
                    .filter(|(_, &u)| labels[u] == class)
                    .map(|(j, _)| losses[j])
                    .collect();
                let n = member_losses.len() as f64;
                let mean = member_losses.iter().sum::<f64>() / n;
                let var = member_losses.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
                let std = var.sqrt();
                let degenerate = member_losses.len() <= 1 || std <= 1e-12;
                if degenerate || losses[i] < mean + phi * std {
                    clean.push(v);
                }
            }
            clean
        };
        let c1 = pick(&ce_global, phi1);
        let c2 = pick(&ce_structural, phi2);
        let c: Vec<usize> = train
            .iter()
            .filter(|v| c1.contains(v) && c2.contains(v))
            .copied()
            .collect();
        let n: Vec<usize> = train.iter().filter(|v| !c.contains(v)).copied().collect();
        (c1, c2, c, n)
    }

    #[test]
    fn twenty_node_instances_match_brute_force() {
        let mut rng = crate::seeding::stream(31, crate::seeding::Purpose::SbmFeatures, &[]);
        for trial in 0..20 {
            let n = 20;
            let n_classes = 3;
            let logits = Tensor::from_vec(
                n,
                n_classes,
                (0..n * n_classes).map(|_| rng.gen_range(-2.0..2.0)).collect(),
            );
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
            let train: Vec<usize> = (0..n).filter(|_| rng.gen::<f64>() < 0.7).collect();
            if train.is_empty() {
                continue;
            }
            let mut soft = Tensor::zeros(n, n_classes);
            for &v in &train {
                let mut row: Vec<f64> = (0..n_classes).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f64 = row.iter().sum();
                for x in &mut row {
                    *x /= sum;
                }
                soft.row_mut(v).copy_from_slice(&row);
            }
            let outcome = dual_filter(&logits, &soft, &labels, &train, 1.0, 0.5);
            let (c1, c2, c, noisy) = brute_force_filter(&logits, &soft, &labels, &train, 1.0, 0.5);
            assert_eq!(outcome.clean_global, c1, "trial {trial}");
            assert_eq!(outcome.clean_structural, c2, "trial {trial}");
            assert_eq!(outcome.clean, c, "trial {trial}");
            assert_eq!(outcome.noisy, noisy, "trial {trial}");
        }
    }

    proptest! {
        #[test]
        fn outcome_partitions_train_set(seed in 0u64..200) {
            let mut rng = crate::seeding::stream(seed, crate::seeding::Purpose::SbmFeatures, &[7]);
            let n = 12;
            let n_classes = 3;
            let logits = Tensor::from_vec(n, n_classes, (0..n * n_classes).map(|_| rng.gen_range(-2.0..2.0)).collect());
            let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n_classes)).collect();
            let train: Vec<usize> = (0..n).filter(|_| rng.gen::<f64>() < 0.8).collect();
            prop_assume!(!train.is_empty());
            let soft = logits.map(|v| v.abs() + 0.05);
            let outcome = dual_filter(&logits, &soft, &labels, &train, 1.5, 1.5);

            // disjoint, covering, subset relations
            for v in &outcome.clean {
                prop_assert!(!outcome.noisy.contains(v));
                prop_assert!(outcome.clean_global.contains(v));
                prop_assert!(outcome.clean_structural.contains(v));
            }
            let mut union = outcome.clean.clone();
            union.extend(&outcome.noisy);
            union.sort_unstable();
            let mut expect = train.clone();
            expect.sort_unstable();
            prop_assert_eq!(union, expect);
        }
    }
}
