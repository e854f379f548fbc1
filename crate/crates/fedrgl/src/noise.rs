//! Label-noise injection.
//!
//! Clients get individual corruption rates drawn from U(eta_lower,
//! eta_upper); each train node is then independently corrupted with its
//! client's rate. Uniform noise replaces the label with a uniformly random
//! *different* class, so the configured rate equals the realized flip
//! probability. Pair noise maps class c to (c + 1) mod C.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::seeding::{self, Purpose};
use crate::{Error, Result};

/// Kind of label corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    None,
    Uniform,
    Pair,
}

/// Noise regime for a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub eta_lower: f64,
    pub eta_upper: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn none(seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::None, eta_lower: 0.0, eta_upper: 0.0, seed }
    }

    /// Homogeneous rate: eta_lower = eta_upper = eta.
    pub fn homogeneous(kind: NoiseKind, eta: f64, seed: u64) -> Self {
        NoiseSpec { kind, eta_lower: eta, eta_upper: eta, seed }
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |r: f64| (0.0..=1.0).contains(&r);
        if !in_range(self.eta_lower) || !in_range(self.eta_upper) {
            return Err(Error::Config(format!(
                "noise rates must lie in [0, 1], got ({}, {})",
                self.eta_lower, self.eta_upper
            )));
        }
        if self.eta_lower > self.eta_upper {
            return Err(Error::Config(format!(
                "eta_lower {} exceeds eta_upper {}",
                self.eta_lower, self.eta_upper
            )));
        }
        Ok(())
    }
}

/// Draw one corruption rate per client, i.i.d. from U(eta_lower, eta_upper).
pub fn sample_client_rates(spec: &NoiseSpec, m_clients: usize) -> Vec<f64> {
    if spec.kind == NoiseKind::None {
        return vec![0.0; m_clients];
    }
    let mut rng = seeding::stream(spec.seed, Purpose::NoiseRates, &[]);
    (0..m_clients)
        .map(|_| {
            if spec.eta_lower == spec.eta_upper {
                spec.eta_lower
            } else {
                rng.gen_range(spec.eta_lower..spec.eta_upper)
            }
        })
        .collect()
}

/// Corrupt `labels` in place on `train_nodes` at the given rate.
///
/// Returns the noisy labels and a mask marking exactly the changed nodes.
pub fn inject(
    labels: &[usize],
    train_nodes: &[usize],
    rate: f64,
    kind: NoiseKind,
    n_classes: usize,
    seed: u64,
) -> (Vec<usize>, Vec<bool>) {
    assert!((0.0..=1.0).contains(&rate), "contract error: noise rate {rate} outside [0, 1]");
    assert!(n_classes >= 2 || kind == NoiseKind::None, "contract error: noise needs at least 2 classes");
    let mut noisy = labels.to_vec();
    let mut mask = vec![false; labels.len()];
    if kind == NoiseKind::None || rate == 0.0 {
        return (noisy, mask);
    }
    let mut rng = seeding::stream(seed, Purpose::NoiseInject, &[]);
    for &node in train_nodes {
        if rng.gen::<f64>() >= rate {
            continue;
        }
        let original = labels[node];
        let corrupted = match kind {
            NoiseKind::Uniform => {
                // uniform over the other C−1 classes
                let draw = rng.gen_range(0..n_classes - 1);
                if draw >= original {
                    draw + 1
                } else {
                    draw
                }
            }
            NoiseKind::Pair => (original + 1) % n_classes,
            NoiseKind::None => unreachable!(),
        };
        noisy[node] = corrupted;
        mask[node] = true;
    }
    (noisy, mask)
}
