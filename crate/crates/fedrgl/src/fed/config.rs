//! Run configuration.
//!
//! Every hyperparameter of a federation run lives here and is settable
//! from the experiment file; the field names below are the file schema.
//! Unknown keys are rejected so experiment provenance stays trustworthy.

use serde::{Deserialize, Serialize};

use crate::noise::{NoiseKind, NoiseSpec};
use crate::partition::SplitRatios;
use crate::{Error, Result};

/// Training method.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Fedavg,
    Fedrgl,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fedavg" => Ok(Method::Fedavg),
            "fedrgl" => Ok(Method::Fedrgl),
            other => Err(Error::Config(format!("unknown method '{other}' (fedavg|fedrgl)"))),
        }
    }
}

/// Server aggregation rule for the post-warmup phase.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregationRule {
    Fedavg,
    Entropy,
}

/// Component kill-switches for ablation runs. `true` disables the part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationFlags {
    pub global_view: bool,
    pub structural_view: bool,
    pub contrastive: bool,
    pub pseudo: bool,
    pub js: bool,
    pub entropy_weighting: bool,
}

impl AblationFlags {
    /// Parse one `--ablate` component name.
    pub fn enable(&mut self, component: &str) -> Result<()> {
        match component {
            "global-view" => self.global_view = true,
            "structural-view" => self.structural_view = true,
            "contrastive" => self.contrastive = true,
            "pseudo" => self.pseudo = true,
            "js" => self.js = true,
            "entropy-weighting" => self.entropy_weighting = true,
            other => {
                return Err(Error::Config(format!(
                    "unknown ablation component '{other}' (global-view|structural-view|contrastive|pseudo|js|entropy-weighting)"
                )))
            }
        }
        Ok(())
    }
}

/// Noise section of the experiment file. A single `eta` means a
/// homogeneous rate; `eta_lower`/`eta_upper` select per-client rates from
/// U(eta_lower, eta_upper). The seed defaults to a stream derived from the
/// master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    pub kind: NoiseKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_upper: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig { kind: NoiseKind::None, eta: None, eta_lower: None, eta_upper: None, seed: None }
    }
}

impl NoiseConfig {
    pub fn resolve(&self, master_seed: u64) -> Result<NoiseSpec> {
        let seed = self
            .seed
            .unwrap_or_else(|| crate::seeding::derive(master_seed, crate::seeding::Purpose::NoiseRates, &[]));
        if self.kind == NoiseKind::None {
            return Ok(NoiseSpec::none(seed));
        }
        let spec = match (self.eta, self.eta_lower, self.eta_upper) {
            (Some(eta), None, None) => NoiseSpec::homogeneous(self.kind, eta, seed),
            (None, Some(lower), Some(upper)) => {
                NoiseSpec { kind: self.kind, eta_lower: lower, eta_upper: upper, seed }
            }
            (None, None, None) => {
                return Err(Error::Config(
                    "noise kind set but neither eta nor eta_lower/eta_upper given".into(),
                ))
            }
            _ => {
                return Err(Error::Config(
                    "give either a single eta or both eta_lower and eta_upper, not a mixture".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// All knobs of one federation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub method: Method,
    /// master seed; every stream is derived from it
    pub seed: u64,
    /// client worker-pool size (results are schedule-independent)
    pub workers: usize,
    /// number of clients M
    pub clients: usize,
    /// communication rounds T
    pub rounds: usize,
    pub local_epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    /// plain-CE + size-weighted-aggregation rounds before filtering starts
    pub warmup_rounds: usize,
    pub hidden_dim: usize,
    pub aggregation: AggregationRule,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub test_ratio: f64,
    /// threshold spread multiplier, global-model view
    pub phi1: f64,
    /// threshold spread multiplier, structural view
    pub phi2: f64,
    /// pseudo-label confidence threshold
    pub gamma: f64,
    /// label-propagation retention weight
    pub lp_alpha: f64,
    /// label-propagation steps k
    pub lp_steps: usize,
    /// clamp matched-label rows each step (false: one-hot init only)
    pub lp_clamp_every_step: bool,
    /// contrastive temperature
    pub tau: f64,
    pub edge_drop_prob: f64,
    pub feature_mask_prob: f64,
    pub lambda_contrast: f64,
    pub lambda_pseudo: f64,
    pub lambda_js: f64,
    pub noise: NoiseConfig,
    pub ablation: AblationFlags,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Fedrgl,
            seed: 0,
            workers: 1,
            clients: 4,
            rounds: 100,
            local_epochs: 3,
            lr: 1e-2,
            weight_decay: 5e-4,
            warmup_rounds: 10,
            hidden_dim: 64,
            aggregation: AggregationRule::Entropy,
            train_ratio: 0.2,
            val_ratio: 0.4,
            test_ratio: 0.4,
            phi1: 1.0,
            phi2: 1.0,
            gamma: 0.7,
            lp_alpha: 0.5,
            lp_steps: 10,
            lp_clamp_every_step: true,
            tau: 0.5,
            edge_drop_prob: 0.2,
            feature_mask_prob: 0.2,
            lambda_contrast: 1.0,
            lambda_pseudo: 1.0,
            lambda_js: 1.0,
            noise: NoiseConfig::default(),
            ablation: AblationFlags::default(),
        }
    }
}

impl RunConfig {
    pub fn split_ratios(&self) -> SplitRatios {
        SplitRatios { train: self.train_ratio, val: self.val_ratio, test: self.test_ratio }
    }

    pub fn validate(&self) -> Result<()> {
        let check_unit = |name: &str, v: f64| -> Result<()> {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
            Ok(())
        };
        if self.clients == 0 {
            return Err(Error::Config("clients must be at least 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be at least 1".into()));
        }
        if self.local_epochs == 0 {
            return Err(Error::Config("local_epochs must be at least 1".into()));
        }
        if self.method == Method::Fedrgl && self.warmup_rounds >= self.rounds {
            return Err(Error::Config(format!(
                "warmup_rounds {} must be smaller than rounds {}",
                self.warmup_rounds, self.rounds
            )));
        }
        if self.lr <= 0.0 {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be nonnegative".into()));
        }
        if self.hidden_dim == 0 {
            return Err(Error::Config("hidden_dim must be at least 1".into()));
        }
        if self.tau <= 0.0 {
            return Err(Error::Config(format!("tau must be positive, got {}", self.tau)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma = {} outside [0, 1)", self.gamma)));
        }
        check_unit("lp_alpha", self.lp_alpha)?;
        check_unit("edge_drop_prob", self.edge_drop_prob)?;
        check_unit("feature_mask_prob", self.feature_mask_prob)?;
        for (name, v) in [
            ("phi1", self.phi1),
            ("phi2", self.phi2),
            ("lambda_contrast", self.lambda_contrast),
            ("lambda_pseudo", self.lambda_pseudo),
            ("lambda_js", self.lambda_js),
        ] {
            if v < 0.0 {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        self.split_ratios().validate()?;
        self.noise.resolve(self.seed)?;
        Ok(())
    }
}
