//! Experiment harness: config files, the end-to-end experiment entry
//! point, and bundle inspection.
//!
//! An experiment file is TOML with two tables: `[run]` (the federation
//! configuration, field names exactly as in [`RunConfig`]) and `[data]`
//! (either `bundle = "path"` or an inline `[data.sbm]` generator spec).
//! Unknown keys anywhere are rejected. `run_experiment` writes three
//! artifacts into the output directory:
//!
//! * `metrics.csv` — one row per round (see [`crate::fed::csv_header`]);
//! * `config.toml` — the fully resolved configuration; re-running it
//!   reproduces `metrics.csv` byte for byte;
//! * `summary.txt` — the one-line result summary.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::fed::{run_federation, FederationOutcome, Method, RunConfig};
use crate::graph::{load_bundle, GraphBundle, Split};
use crate::partition::SplitRatios;
use crate::sbm::{generate_sbm, SbmSpec};
use crate::{Error, Result};

/// Data source of an experiment: a bundle on disk or an inline generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sbm: Option<SbmSpec>,
}

/// Parsed experiment file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub run: RunConfig,
    pub data: DataConfig,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut config = Self::parse(&text)?;
        // resolve relative bundle paths against the config file location
        if let Some(bundle) = &config.data.bundle {
            if bundle.is_relative() {
                if let Some(dir) = path.parent() {
                    config.data.bundle = Some(dir.join(bundle));
                }
            }
        }
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.run.validate()?;
        match (&self.data.bundle, &self.data.sbm) {
            (Some(_), Some(_)) => Err(Error::Config(
                "data section gives both a bundle path and an sbm spec; pick one".into(),
            )),
            (None, None) => Err(Error::Config(
                "data section needs either bundle = \"path\" or an [data.sbm] table".into(),
            )),
            _ => Ok(()),
        }
    }

    /// Load or generate the global graph.
    pub fn materialize_data(&self) -> Result<GraphBundle> {
        match (&self.data.bundle, &self.data.sbm) {
            (Some(path), None) => {
                let (bundle, report) = load_bundle(path)?;
                if report.symmetrized_edges > 0 || report.dropped_self_loops > 0 {
                    log::warn!(
                        "bundle {}: symmetrized {} duplicate edge(s), dropped {} self-loop(s)",
                        path.display(),
                        report.symmetrized_edges,
                        report.dropped_self_loops
                    );
                }
                Ok(bundle)
            }
            (None, Some(spec)) => generate_sbm(spec, self.run.split_ratios()),
            _ => unreachable!("validated"),
        }
    }
}

/// CLI-level overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub method: Option<Method>,
    pub seed: Option<u64>,
    pub ablate: Vec<String>,
}

impl Overrides {
    fn apply(&self, config: &mut RunConfig) -> Result<()> {
        if let Some(method) = self.method {
            config.method = method;
        }
        if let Some(seed) = self.seed {
            config.seed = seed;
        }
        for component in &self.ablate {
            config.ablation.enable(component)?;
        }
        Ok(())
    }
}

/// Result of a finished experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSummary {
    pub final_accuracy: f64,
    pub best_accuracy: f64,
    pub mean_filter_precision: Option<f64>,
    pub mean_filter_recall: Option<f64>,
    pub rounds: usize,
    pub clients: usize,
    pub metrics_path: PathBuf,
    pub config_path: PathBuf,
}

impl fmt::Display for ExperimentSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "final_accuracy={} best_accuracy={} mean_filter_precision={} mean_filter_recall={} rounds={} clients={}",
            self.final_accuracy,
            self.best_accuracy,
            self.mean_filter_precision.map_or("n/a".into(), |v| v.to_string()),
            self.mean_filter_recall.map_or("n/a".into(), |v| v.to_string()),
            self.rounds,
            self.clients
        )
    }
}

/// Run an experiment config (already loaded and override-applied) and
/// write artifacts into `out_dir`.
pub fn run_resolved(config: &ExperimentConfig, out_dir: &Path) -> Result<(ExperimentSummary, FederationOutcome)> {
    config.validate()?;
    let bundle = config.materialize_data()?;
    let outcome = run_federation(&config.run, &bundle)?;

    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    let metrics_path = out_dir.join("metrics.csv");
    crate::fed::write_metrics_csv(&metrics_path, &outcome.rounds, config.run.clients)?;

    let config_path = out_dir.join("config.toml");
    let snapshot = toml::to_string_pretty(config)
        .map_err(|e| Error::Config(format!("config snapshot serialization: {e}")))?;
    std::fs::write(&config_path, snapshot)
        .map_err(|e| Error::io(config_path.display().to_string(), e))?;

    let summary = ExperimentSummary {
        final_accuracy: outcome.final_accuracy,
        best_accuracy: outcome.best_accuracy,
        mean_filter_precision: outcome.mean_filter_precision(),
        mean_filter_recall: outcome.mean_filter_recall(),
        rounds: config.run.rounds,
        clients: config.run.clients,
        metrics_path,
        config_path,
    };
    let summary_path = out_dir.join("summary.txt");
    std::fs::write(&summary_path, format!("{summary}\n"))
        .map_err(|e| Error::io(summary_path.display().to_string(), e))?;
    Ok((summary, outcome))
}

/// Full experiment entry point behind `run`: load the config file, apply
/// overrides, execute, and write artifacts.
pub fn run_experiment(
    config_path: &Path,
    overrides: &Overrides,
    out_dir: &Path,
) -> Result<ExperimentSummary> {
    let mut config = ExperimentConfig::load(config_path)?;
    overrides.apply(&mut config.run)?;
    // snapshots should rerun from anywhere
    if let Some(bundle) = &config.data.bundle {
        if bundle.is_relative() {
            if let Ok(absolute) = bundle.canonicalize() {
                config.data.bundle = Some(absolute);
            }
        }
    }
    let (summary, _) = run_resolved(&config, out_dir)?;
    Ok(summary)
}

/// Printable statistics of a bundle, for `inspect`.
#[derive(Debug, Clone)]
pub struct BundleStats {
    pub n_nodes: usize,
    pub n_edges: usize,
    pub n_classes: usize,
    pub feature_dim: usize,
    pub class_counts: Vec<usize>,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub noisy_marked: Option<usize>,
    pub mean_degree: f64,
}

impl BundleStats {
    pub fn of(bundle: &GraphBundle) -> Self {
        let mut class_counts = vec![0usize; bundle.n_classes];
        for &l in &bundle.labels {
            class_counts[l] += 1;
        }
        let count = |tag: Split| bundle.split.iter().filter(|&&s| s == tag).count();
        BundleStats {
            n_nodes: bundle.n_nodes,
            n_edges: bundle.edges.len(),
            n_classes: bundle.n_classes,
            feature_dim: bundle.feature_dim(),
            class_counts,
            train: count(Split::Train),
            val: count(Split::Val),
            test: count(Split::Test),
            noisy_marked: bundle
                .noise_mask
                .as_ref()
                .map(|m| m.iter().filter(|&&x| x).count()),
            mean_degree: 2.0 * bundle.edges.len() as f64 / bundle.n_nodes as f64,
        }
    }
}

impl fmt::Display for BundleStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "nodes:        {}", self.n_nodes)?;
        writeln!(f, "edges:        {} (mean degree {:.2})", self.n_edges, self.mean_degree)?;
        writeln!(f, "classes:      {}", self.n_classes)?;
        writeln!(f, "feature dim:  {}", self.feature_dim)?;
        writeln!(
            f,
            "class counts: [{}]",
            self.class_counts.iter().map(ToString::to_string).collect::<Vec<_>>().join(", ")
        )?;
        writeln!(f, "split:        {} train / {} val / {} test", self.train, self.val, self.test)?;
        match self.noisy_marked {
            Some(n) => writeln!(f, "noise mask:   {n} nodes marked corrupted"),
            None => writeln!(f, "noise mask:   absent"),
        }
    }
}

/// Generate an SBM bundle from a spec file and write it out (`gen-sbm`).
pub fn generate_bundle_file(spec_path: &Path, out_path: &Path) -> Result<BundleStats> {
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::io(spec_path.display().to_string(), e))?;
    let spec: SbmSpec = toml::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let bundle = generate_sbm(&spec, SplitRatios::default())?;
    bundle.save(out_path)?;
    Ok(BundleStats::of(&bundle))
}
