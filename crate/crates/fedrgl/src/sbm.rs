//! Stochastic-block-model generator: a desk-scale stand-in for real
//! citation-style datasets.
//!
//! Each block is one class. Edges appear independently with `p_in` inside
//! a block and `p_out` across blocks; features are a class-specific mean
//! plus isotropic Gaussian noise. Class means are `center_separation`
//! apart along per-class coordinate axes (cycling through the feature
//! dimensions).

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::graph::{GraphBundle, Split};
use crate::numeric::Tensor;
use crate::partition::{split_nodes, SplitRatios};
use crate::seeding::{self, Purpose};
use crate::{Error, Result};

/// Generator parameters. `blocks` doubles as the class count.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SbmSpec {
    pub blocks: usize,
    pub nodes_per_block: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    /// distance of each class mean from the origin along its axis
    pub center_separation: f64,
    pub feature_noise_std: f64,
    pub seed: u64,
}

impl SbmSpec {
    pub fn validate(&self) -> Result<()> {
        if self.blocks == 0 {
            return Err(Error::Config("sbm needs at least one block".into()));
        }
        if self.nodes_per_block < 2 {
            return Err(Error::Config("sbm needs at least 2 nodes per block".into()));
        }
        if !(0.0..=1.0).contains(&self.p_out)
            || !(0.0..=1.0).contains(&self.p_in)
            || self.p_out > self.p_in
        {
            return Err(Error::Config(format!(
                "sbm probabilities need 0 ≤ p_out ≤ p_in ≤ 1, got p_in={} p_out={}",
                self.p_in, self.p_out
            )));
        }
        if self.feature_dim == 0 {
            return Err(Error::Config("sbm needs feature_dim ≥ 1".into()));
        }
        Ok(())
    }
}

/// Box-Muller standard normal draw.
fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Generate a full bundle: SBM edges, Gaussian class features, labels =
/// block ids, and stratified splits.
pub fn generate_sbm(spec: &SbmSpec, ratios: SplitRatios) -> Result<GraphBundle> {
    spec.validate()?;
    let n = spec.blocks * spec.nodes_per_block;
    let block_of = |v: usize| v / spec.nodes_per_block;

    let mut edge_rng = seeding::stream(spec.seed, Purpose::SbmEdges, &[]);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            let p = if block_of(u) == block_of(v) { spec.p_in } else { spec.p_out };
            if p > 0.0 && edge_rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut feature_rng = seeding::stream(spec.seed, Purpose::SbmFeatures, &[]);
    let mut features = Tensor::zeros(n, spec.feature_dim);
    for v in 0..n {
        let class = block_of(v);
        let axis = class % spec.feature_dim;
        for d in 0..spec.feature_dim {
            let mean = if d == axis { spec.center_separation } else { 0.0 };
            features.set(v, d, mean + spec.feature_noise_std * gaussian(&mut feature_rng));
        }
    }

    let labels: Vec<usize> = (0..n).map(block_of).collect();
    let (mut bundle, _) = GraphBundle::new(
        n,
        spec.blocks,
        edges,
        features,
        labels,
        vec![Split::Test; n],
        None,
    )?;
    bundle.split = split_nodes(&bundle, ratios, spec.seed)?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> SbmSpec {
        SbmSpec {
            blocks: 2,
            nodes_per_block: 10,
            p_in: 0.4,
            p_out: 0.05,
            feature_dim: 4,
            center_separation: 1.0,
            feature_noise_std: 0.5,
            seed: 3,
        }
    }

    #[test]
    fn zero_probabilities_give_an_edgeless_graph() {
        let bundle = generate_sbm(
            &SbmSpec { p_in: 0.0, p_out: 0.0, ..spec() },
            SplitRatios::default(),
        )
        .unwrap();
        assert!(bundle.edges.is_empty());
    }

    #[test]
    fn forced_probabilities_give_disjoint_cliques() {
        let bundle = generate_sbm(
            &SbmSpec { p_in: 1.0, p_out: 0.0, nodes_per_block: 4, ..spec() },
            SplitRatios::default(),
        )
        .unwrap();
        // two 4-cliques: 2 · C(4,2) edges, none across
        assert_eq!(bundle.edges.len(), 12);
        for &(u, v) in &bundle.edges {
            assert_eq!(u / 4, v / 4);
        }
    }

    #[test]
    fn intra_block_edge_count_matches_expectation() {
        // 4 blocks × 150 at p_in = 0.05: about 559 intra edges per block
        let bundle = generate_sbm(
            &SbmSpec {
                blocks: 4,
                nodes_per_block: 150,
                p_in: 0.05,
                p_out: 0.002,
                feature_dim: 16,
                center_separation: 1.0,
                feature_noise_std: 1.0,
                seed: 11,
            },
            SplitRatios::default(),
        )
        .unwrap();
        let expected = 0.05 * (150.0 * 149.0 / 2.0);
        for block in 0..4usize {
            let count = bundle
                .edges
                .iter()
                .filter(|&&(u, v)| u / 150 == block && v / 150 == block)
                .count() as f64;
            assert!(
                (count - expected).abs() < 0.1 * expected,
                "block {block}: {count} vs {expected}"
            );
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_sbm(&spec(), SplitRatios::default()).unwrap();
        let b = generate_sbm(&spec(), SplitRatios::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn labels_are_block_ids_and_splits_cover() {
        let bundle = generate_sbm(&spec(), SplitRatios::default()).unwrap();
        for v in 0..bundle.n_nodes {
            assert_eq!(bundle.labels[v], v / 10);
        }
        assert!(!bundle.train_nodes().is_empty());
        assert!(!bundle.unlabeled_nodes().is_empty());
    }
}
