//! The client network: 2-layer GCN encoder, linear classifier head, and a
//! 2-layer MLP projection head used only inside the contrastive loss.

use rand::Rng;

use crate::numeric::{NodeId, ParamSet, Tape, Tensor};
use crate::seeding::{self, Purpose};

/// Parameter names in tape/flatten order.
const PARAM_NAMES: [&str; 10] = [
    "enc1.w", "enc1.b", "enc2.w", "enc2.b", "cls.w", "cls.b", "proj1.w", "proj1.b", "proj2.w",
    "proj2.b",
];

/// GCN encoder + classifier + projector with consistent shapes.
#[derive(Debug, Clone, PartialEq)]
pub struct GcnModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_classes: usize,
    pub params: ParamSet,
}

/// Tape node ids of one staged parameter set.
pub struct StagedParams {
    ids: Vec<(String, NodeId)>,
}

impl StagedParams {
    pub fn id(&self, name: &str) -> NodeId {
        self.ids
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("contract error: no staged parameter named {name}"))
            .1
    }

    /// Gradients for every parameter, aligned with the model's ParamSet.
    pub fn gradients(&self, tape: &Tape, grads: &crate::numeric::Gradients) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, id) in &self.ids {
            let _ = tape; // shapes come from the gradient itself
            out.push(name.clone(), grads.wrt(*id));
        }
        out
    }
}

fn glorot(rows: usize, cols: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    let data = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::from_vec(rows, cols, data)
}

/// Glorot-uniform weights, zero biases, deterministic under `seed`.
pub fn init_params(input_dim: usize, hidden_dim: usize, n_classes: usize, seed: u64) -> GcnModel {
    assert!(
        input_dim >= 1 && hidden_dim >= 1 && n_classes >= 1,
        "contract error: model dims must be at least 1"
    );
    let mut rng = seeding::stream(seed, Purpose::ModelInit, &[]);
    let mut params = ParamSet::new();
    let shapes: [(usize, usize); 10] = [
        (input_dim, hidden_dim),
        (1, hidden_dim),
        (hidden_dim, hidden_dim),
        (1, hidden_dim),
        (hidden_dim, n_classes),
        (1, n_classes),
        (hidden_dim, hidden_dim),
        (1, hidden_dim),
        (hidden_dim, hidden_dim),
        (1, hidden_dim),
    ];
    for (name, (rows, cols)) in PARAM_NAMES.iter().zip(shapes) {
        let tensor = if name.ends_with(".b") {
            Tensor::zeros(rows, cols)
        } else {
            glorot(rows, cols, &mut rng)
        };
        params.push(*name, tensor);
    }
    GcnModel { input_dim, hidden_dim, n_classes, params }
}

impl GcnModel {
    /// Replace the parameters with a copy of `other` (same names/shapes).
    pub fn load_params(&mut self, other: &ParamSet) {
        self.params = self.params.unflatten(&other.flatten());
    }

    /// Register every parameter as a tape leaf.
    pub fn stage(&self, tape: &mut Tape) -> StagedParams {
        let ids = self
            .params
            .iter()
            .map(|(name, tensor)| (name.to_string(), tape.input(tensor.clone())))
            .collect();
        StagedParams { ids }
    }
}

/// H = Â · relu(Â · X · W₁ + b₁) · W₂ + b₂
pub fn encode(tape: &mut Tape, adj: NodeId, features: NodeId, staged: &StagedParams) -> NodeId {
    let xw = tape.matmul(features, staged.id("enc1.w"));
    let ax = tape.matmul(adj, xw);
    let pre = tape.add_bias(ax, staged.id("enc1.b"));
    let hidden = tape.relu(pre);
    let hw = tape.matmul(hidden, staged.id("enc2.w"));
    let ah = tape.matmul(adj, hw);
    tape.add_bias(ah, staged.id("enc2.b"))
}

/// Logits P = H · W_cls + b_cls (no projection head on this path).
pub fn classify(tape: &mut Tape, embeddings: NodeId, staged: &StagedParams) -> NodeId {
    let hw = tape.matmul(embeddings, staged.id("cls.w"));
    tape.add_bias(hw, staged.id("cls.b"))
}

/// Z = relu(H · U₁ + c₁) · U₂ + c₂, used only inside the contrastive loss.
pub fn project(tape: &mut Tape, embeddings: NodeId, staged: &StagedParams) -> NodeId {
    let h1 = tape.matmul(embeddings, staged.id("proj1.w"));
    let pre = tape.add_bias(h1, staged.id("proj1.b"));
    let act = tape.relu(pre);
    let h2 = tape.matmul(act, staged.id("proj2.w"));
    tape.add_bias(h2, staged.id("proj2.b"))
}

/// Plain (non-tape) forward to logits, for inference-only paths.
pub fn forward_logits(model: &GcnModel, adj: &Tensor, features: &Tensor) -> Tensor {
    let p = &model.params;
    let hidden = adj
        .matmul(&features.matmul(p.get("enc1.w")))
        .add_bias(p.get("enc1.b"))
        .relu();
    let embeddings = adj.matmul(&hidden.matmul(p.get("enc2.w"))).add_bias(p.get("enc2.b"));
    embeddings.matmul(p.get("cls.w")).add_bias(p.get("cls.b"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{finite_difference_gradient, sgd_step};
    use rand::Rng;

    fn forward_ce_value(
        model: &GcnModel,
        adj: &Tensor,
        x: &Tensor,
        labels: &[usize],
    ) -> f64 {
        let logits = forward_logits(model, adj, x);
        let probs = logits.row_softmax();
        let mut loss = 0.0;
        for (i, &label) in labels.iter().enumerate() {
            loss -= probs.at(i, label).max(crate::numeric::LOG_FLOOR).ln();
        }
        loss / labels.len() as f64
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let a = init_params(3, 4, 2, 42);
        let b = init_params(3, 4, 2, 42);
        let c = init_params(3, 4, 2, 43);
        assert_eq!(a.params, b.params);
        assert_ne!(a.params.flatten(), c.params.flatten());
    }

    #[test]
    fn glorot_bound_holds() {
        let m = init_params(1, 1, 2, 0);
        let bound = (6.0f64 / 2.0).sqrt();
        for (name, t) in m.params.iter() {
            if name.ends_with(".w") && t.shape() == (1, 1) {
                assert!(t.at(0, 0).abs() <= bound);
            }
        }
    }

    #[test]
    fn biases_start_at_zero() {
        let m = init_params(3, 4, 2, 1);
        for (name, t) in m.params.iter() {
            if name.ends_with(".b") {
                assert!(t.data().iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn zero_weights_encode_broadcasts_second_bias() {
        let mut m = init_params(2, 3, 2, 0);
        let mut zeroed = m.params.unflatten(&vec![0.0; m.params.scalar_count()]);
        // give enc2.b a recognizable value
        let flat_names: Vec<String> = zeroed.iter().map(|(n, _)| n.to_string()).collect();
        let mut flat = zeroed.flatten();
        let mut offset = 0;
        for (name, t) in m.params.iter() {
            if name == "enc2.b" {
                for j in 0..t.len() {
                    flat[offset + j] = 7.5;
                }
            }
            offset += t.len();
        }
        zeroed = zeroed.unflatten(&flat);
        assert_eq!(flat_names[3], "enc2.b");
        m.load_params(&zeroed);

        let mut tape = Tape::new();
        let adj = tape.input(Tensor::eye(2));
        let x = tape.input(Tensor::from_rows(&[vec![1.0, -1.0], vec![2.0, 0.5]]));
        let staged = m.stage(&mut tape);
        let h = encode(&mut tape, adj, x, &staged);
        for r in 0..2 {
            assert_eq!(tape.value(h).row(r), &[7.5, 7.5, 7.5]);
        }
    }

    #[test]
    fn encode_matches_straight_line_recompute() {
        let model = init_params(3, 4, 2, 7);
        let mut rng = crate::seeding::stream(99, Purpose::SbmFeatures, &[]);
        let x = Tensor::from_vec(5, 3, (0..15).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let adj = {
            // symmetric normalized-ish matrix
            let mut a = Tensor::zeros(5, 5);
            for i in 0..5 {
                a.set(i, i, 0.5);
            }
            a.set(0, 1, 0.25);
            a.set(1, 0, 0.25);
            a.set(2, 3, 0.3);
            a.set(3, 2, 0.3);
            a
        };
        let mut tape = Tape::new();
        let adj_id = tape.input(adj.clone());
        let x_id = tape.input(x.clone());
        let staged = model.stage(&mut tape);
        let h = encode(&mut tape, adj_id, x_id, &staged);

        let p = &model.params;
        let expect = adj
            .matmul(&x.matmul(p.get("enc1.w")))
            .add_bias(p.get("enc1.b"))
            .relu();
        let expect = adj.matmul(&expect.matmul(p.get("enc2.w"))).add_bias(p.get("enc2.b"));
        let got = tape.value(h);
        for (a, b) in got.data().iter().zip(expect.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn classify_zero_embeddings_gives_uniform_softmax() {
        let model = init_params(2, 3, 4, 0);
        let mut tape = Tape::new();
        let h = tape.input(Tensor::zeros(2, 3));
        let staged = model.stage(&mut tape);
        let logits = classify(&mut tape, h, &staged);
        let probs = tape.value(logits).row_softmax();
        for r in 0..2 {
            for c in 0..4 {
                assert!((probs.at(r, c) - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn classify_hand_weights() {
        let mut model = init_params(1, 2, 2, 0);
        let mut flat = model.params.flatten();
        // cls.w is entries after enc1.w(2) enc1.b(2) enc2.w(4) enc2.b(2) = offset 10, shape 2x2
        flat[10] = 1.0;
        flat[11] = 0.0;
        flat[12] = 0.0;
        flat[13] = -1.0;
        // cls.b offset 14
        flat[14] = 0.5;
        flat[15] = 0.25;
        let loaded = model.params.unflatten(&flat);
        model.load_params(&loaded);

        let mut tape = Tape::new();
        let h = tape.input(Tensor::from_rows(&[vec![2.0, 3.0]]));
        let staged = model.stage(&mut tape);
        let logits = classify(&mut tape, h, &staged);
        assert_eq!(tape.value(logits).row(0), &[2.0 + 0.5, -3.0 + 0.25]);
    }

    #[test]
    fn project_zero_weights_broadcasts_final_bias() {
        let mut model = init_params(2, 2, 2, 0);
        let zero = model.params.unflatten(&vec![0.0; model.params.scalar_count()]);
        model.load_params(&zero);
        let mut tape = Tape::new();
        let h = tape.input(Tensor::from_rows(&[vec![1.0, 2.0]]));
        let staged = model.stage(&mut tape);
        let z = project(&mut tape, h, &staged);
        assert_eq!(tape.value(z).row(0), &[0.0, 0.0]);
    }

    #[test]
    fn full_pipeline_gradient_check() {
        // CE of classify(encode(...)) on a random 6-node instance
        let model = init_params(4, 5, 3, 21);
        let mut rng = crate::seeding::stream(77, Purpose::SbmFeatures, &[]);
        let x = Tensor::from_vec(6, 4, (0..24).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let mut adj = Tensor::eye(6);
        for (u, v) in [(0usize, 1usize), (1, 2), (3, 4), (4, 5), (2, 3)] {
            adj.set(u, v, 0.4);
            adj.set(v, u, 0.4);
        }
        let labels = vec![0, 1, 2, 0, 1, 2];

        let mut tape = Tape::new();
        let adj_id = tape.input(adj.clone());
        let x_id = tape.input(x.clone());
        let staged = model.stage(&mut tape);
        let h = encode(&mut tape, adj_id, x_id, &staged);
        let logits = classify(&mut tape, h, &staged);
        let probs = tape.row_softmax(logits);
        let logp = tape.log(probs);
        let mut onehot = Tensor::zeros(6, 3);
        for (i, &l) in labels.iter().enumerate() {
            onehot.set(i, l, 1.0);
        }
        let mask = tape.input(onehot);
        let picked = tape.mul(logp, mask);
        let total = tape.sum_all(picked);
        let loss = tape.scale(total, -1.0 / 6.0);
        let grads = tape.backward(loss);
        let analytic = staged.gradients(&tape, &grads);

        let numeric = finite_difference_gradient(
            |p| {
                let mut probe = model.clone();
                probe.load_params(p);
                forward_ce_value(&probe, &adj, &x, &labels)
            },
            &model.params,
            1e-5,
        );

        for ((_, a), (_, n)) in analytic.iter().zip(numeric.iter()) {
            for (&ga, &gn) in a.data().iter().zip(n.data()) {
                let denom = ga.abs().max(gn.abs()).max(1e-6);
                assert!(
                    ((ga - gn) / denom).abs() < 1e-4,
                    "gradient mismatch: analytic {ga}, numeric {gn}"
                );
            }
        }
    }

    #[test]
    fn training_step_reduces_toy_loss() {
        let mut model = init_params(2, 8, 2, 3);
        let adj = Tensor::eye(4);
        let x = Tensor::from_rows(&[
            vec![1.0, 0.0],
            vec![0.9, 0.1],
            vec![0.0, 1.0],
            vec![0.1, 0.9],
        ]);
        let labels = vec![0, 0, 1, 1];
        let mut last = f64::INFINITY;
        for _ in 0..5 {
            let mut tape = Tape::new();
            let adj_id = tape.input(adj.clone());
            let x_id = tape.input(x.clone());
            let staged = model.stage(&mut tape);
            let h = encode(&mut tape, adj_id, x_id, &staged);
            let logits = classify(&mut tape, h, &staged);
            let probs = tape.row_softmax(logits);
            let logp = tape.log(probs);
            let mut onehot = Tensor::zeros(4, 2);
            for (i, &l) in labels.iter().enumerate() {
                onehot.set(i, l, 1.0);
            }
            let mask = tape.input(onehot);
            let picked = tape.mul(logp, mask);
            let total = tape.sum_all(picked);
            let loss = tape.scale(total, -0.25);
            let value = tape.value(loss).scalar_value();
            assert!(value < last, "loss must strictly decrease: {value} vs {last}");
            last = value;
            let grads = tape.backward(loss);
            let g = staged.gradients(&tape, &grads);
            sgd_step(&mut model.params, &g, 0.5, 0.0);
        }
    }
}
