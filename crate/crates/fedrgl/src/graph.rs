//! Graph data model, normalized propagation operators, induced subgraphs,
//! and the on-disk bundle format.
//!
//! Bundles are a single JSON document with the exact top-level fields
//! `n_nodes`, `n_classes`, `features`, `labels`, `edges`, `split`, and
//! optional `noise_mask`. Unknown fields are rejected. Graphs are
//! undirected; directed duplicates in the input are symmetrized at load
//! and counted in the [`LoadReport`].

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::numeric::Tensor;
use crate::{Error, Result};

/// Split tag of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => write!(f, "train"),
            Split::Val => write!(f, "val"),
            Split::Test => write!(f, "test"),
        }
    }
}

/// One (sub)graph: structure, features, labels, splits, and an optional
/// ground-truth corruption mask over train nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphBundle {
    pub n_nodes: usize,
    pub n_classes: usize,
    /// Undirected edge list, stored canonically with u < v, no duplicates.
    pub edges: Vec<(usize, usize)>,
    /// n_nodes × d feature matrix.
    pub features: Tensor,
    /// Per-node class in [0, n_classes).
    pub labels: Vec<usize>,
    pub split: Vec<Split>,
    /// true = the label at this node was corrupted (train nodes only).
    pub noise_mask: Option<Vec<bool>>,
}

/// What load-time canonicalization had to fix.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LoadReport {
    /// Directed duplicates merged into one undirected edge.
    pub symmetrized_edges: usize,
    /// Self-loops dropped from the input.
    pub dropped_self_loops: usize,
}

/// Kind of normalized propagation operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjacencyKind {
    /// D̃^{-1/2}(A+I)D̃^{-1/2} with self-loops, for GCN layers.
    Gcn,
    /// D^{-1/2}A'D^{-1/2} over train-train edges only, no self-loops.
    LpMasked,
}

/// Dense matrix of propagation weights plus its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    pub matrix: Tensor,
    pub kind: AdjacencyKind,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBundle {
    n_nodes: usize,
    n_classes: usize,
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    edges: Vec<[usize; 2]>,
    split: Vec<Split>,
    #[serde(default)]
    noise_mask: Option<Vec<bool>>,
}

#[derive(Serialize)]
struct RawBundleOut<'a> {
    n_nodes: usize,
    n_classes: usize,
    features: Vec<&'a [f64]>,
    labels: &'a [usize],
    edges: Vec<[usize; 2]>,
    split: &'a [Split],
    #[serde(skip_serializing_if = "Option::is_none")]
    noise_mask: &'a Option<Vec<bool>>,
}

impl GraphBundle {
    /// Build and validate a bundle from parts. Edges may arrive in any
    /// orientation; they are canonicalized, and the report counts what had
    /// to be fixed.
    pub fn new(
        n_nodes: usize,
        n_classes: usize,
        edges: Vec<(usize, usize)>,
        features: Tensor,
        labels: Vec<usize>,
        split: Vec<Split>,
        noise_mask: Option<Vec<bool>>,
    ) -> Result<(Self, LoadReport)> {
        if n_nodes == 0 {
            return Err(Error::Format("bundle has n_nodes = 0".into()));
        }
        if features.rows() != n_nodes {
            return Err(Error::Format(format!(
                "features has {} rows for {} nodes",
                features.rows(),
                n_nodes
            )));
        }
        if labels.len() != n_nodes {
            return Err(Error::Format(format!(
                "labels has {} entries for {} nodes",
                labels.len(),
                n_nodes
            )));
        }
        if split.len() != n_nodes {
            return Err(Error::Format(format!(
                "split has {} entries for {} nodes",
                split.len(),
                n_nodes
            )));
        }
        for (i, &label) in labels.iter().enumerate() {
            if label >= n_classes {
                return Err(Error::Format(format!(
                    "node {i} has label {label} outside [0, {n_classes})"
                )));
            }
        }
        if let Some(mask) = &noise_mask {
            if mask.len() != n_nodes {
                return Err(Error::Format(format!(
                    "noise_mask has {} entries for {} nodes",
                    mask.len(),
                    n_nodes
                )));
            }
            for (i, &flagged) in mask.iter().enumerate() {
                if flagged && split[i] != Split::Train {
                    return Err(Error::Format(format!(
                        "noise_mask set on non-train node {i}"
                    )));
                }
            }
        }

        let mut report = LoadReport::default();
        let mut canonical = BTreeSet::new();
        for (idx, &(u, v)) in edges.iter().enumerate() {
            if u >= n_nodes || v >= n_nodes {
                return Err(Error::Format(format!(
                    "edge #{idx} ({u}, {v}) has an endpoint outside [0, {n_nodes})"
                )));
            }
            if u == v {
                report.dropped_self_loops += 1;
                continue;
            }
            let key = (u.min(v), u.max(v));
            if !canonical.insert(key) {
                report.symmetrized_edges += 1;
            }
        }

        Ok((
            GraphBundle {
                n_nodes,
                n_classes,
                edges: canonical.into_iter().collect(),
                features,
                labels,
                split,
                noise_mask,
            },
            report,
        ))
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn nodes_with_split(&self, tag: Split) -> Vec<usize> {
        (0..self.n_nodes).filter(|&i| self.split[i] == tag).collect()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        self.nodes_with_split(Split::Train)
    }

    /// Validation plus test nodes: the unlabeled pool of transductive
    /// training.
    pub fn unlabeled_nodes(&self) -> Vec<usize> {
        (0..self.n_nodes)
            .filter(|&i| self.split[i] != Split::Train)
            .collect()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.n_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Serialize to the documented JSON bundle format.
    pub fn save(&self, path: &Path) -> Result<()> {
        let raw = RawBundleOut {
            n_nodes: self.n_nodes,
            n_classes: self.n_classes,
            features: (0..self.n_nodes).map(|r| self.features.row(r)).collect(),
            labels: &self.labels,
            edges: self.edges.iter().map(|&(u, v)| [u, v]).collect(),
            split: &self.split,
            noise_mask: &self.noise_mask,
        };
        let text = serde_json::to_string_pretty(&raw)
            .map_err(|e| Error::Format(format!("bundle serialization failed: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }
}

/// Load and validate a bundle file.
pub fn load_bundle(path: &Path) -> Result<(GraphBundle, LoadReport)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    parse_bundle(&text)
}

/// Parse the documented JSON bundle format from a string.
pub fn parse_bundle(text: &str) -> Result<(GraphBundle, LoadReport)> {
    let raw: RawBundle =
        serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    if raw.features.len() != raw.n_nodes {
        return Err(Error::Format(format!(
            "features has {} rows for {} nodes",
            raw.features.len(),
            raw.n_nodes
        )));
    }
    let dim = raw.features.first().map_or(0, Vec::len);
    for (i, row) in raw.features.iter().enumerate() {
        if row.len() != dim {
            return Err(Error::Format(format!(
                "feature row {i} has length {} but row 0 has {dim}",
                row.len()
            )));
        }
    }
    let features = if raw.n_nodes > 0 && dim > 0 {
        Tensor::from_rows(&raw.features)
    } else {
        Tensor::zeros(raw.n_nodes.max(1), dim.max(1))
    };
    GraphBundle::new(
        raw.n_nodes,
        raw.n_classes,
        raw.edges.iter().map(|&[u, v]| (u, v)).collect(),
        features,
        raw.labels,
        raw.split,
        raw.noise_mask,
    )
}

/// GCN operator Â = D̃^{-1/2}(A+I)D̃^{-1/2}. Self-loops are added here and
/// only here.
pub fn gcn_normalize(bundle: &GraphBundle) -> NormalizedAdjacency {
    gcn_normalize_edges(bundle.n_nodes, &bundle.edges)
}

/// Same operator from a raw edge list (used for augmented views).
pub fn gcn_normalize_edges(n_nodes: usize, edges: &[(usize, usize)]) -> NormalizedAdjacency {
    let mut deg = vec![1.0f64; n_nodes]; // self-loop degree
    for &(u, v) in edges {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|&d| 1.0 / d.sqrt()).collect();
    let mut m = Tensor::zeros(n_nodes, n_nodes);
    for i in 0..n_nodes {
        m.set(i, i, inv_sqrt[i] * inv_sqrt[i]);
    }
    for &(u, v) in edges {
        let w = inv_sqrt[u] * inv_sqrt[v];
        m.set(u, v, w);
        m.set(v, u, w);
    }
    NormalizedAdjacency { matrix: m, kind: AdjacencyKind::Gcn }
}

/// Label-propagation operator D^{-1/2}A'D^{-1/2} where A' keeps only edges
/// with both endpoints in `train_mask`. No self-loops; degrees come from A'
/// itself, so zero-degree train nodes get all-zero rows.
pub fn masked_lp_normalize(bundle: &GraphBundle, train_mask: &[bool]) -> NormalizedAdjacency {
    assert_eq!(
        train_mask.len(),
        bundle.n_nodes,
        "dimension error: train mask covers {} of {} nodes",
        train_mask.len(),
        bundle.n_nodes
    );
    let kept: Vec<(usize, usize)> = bundle
        .edges
        .iter()
        .copied()
        .filter(|&(u, v)| train_mask[u] && train_mask[v])
        .collect();
    let mut deg = vec![0.0f64; bundle.n_nodes];
    for &(u, v) in &kept {
        deg[u] += 1.0;
        deg[v] += 1.0;
    }
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut m = Tensor::zeros(bundle.n_nodes, bundle.n_nodes);
    for &(u, v) in &kept {
        let w = inv_sqrt[u] * inv_sqrt[v];
        m.set(u, v, w);
        m.set(v, u, w);
    }
    NormalizedAdjacency { matrix: m, kind: AdjacencyKind::LpMasked }
}

/// Subgraph induced by `node_set`: nodes are relabeled densely in the
/// order given, edges survive only if both endpoints are inside, and
/// features/labels/splits/noise mask are carried over.
pub fn induced_subgraph(bundle: &GraphBundle, node_set: &[usize]) -> Result<GraphBundle> {
    if node_set.is_empty() {
        return Err(Error::Partition("induced_subgraph needs a nonempty node set".into()));
    }
    let mut new_id = vec![usize::MAX; bundle.n_nodes];
    for (new, &old) in node_set.iter().enumerate() {
        assert!(old < bundle.n_nodes, "dimension error: node {old} outside bundle");
        new_id[old] = new;
    }
    let edges: Vec<(usize, usize)> = bundle
        .edges
        .iter()
        .filter(|&&(u, v)| new_id[u] != usize::MAX && new_id[v] != usize::MAX)
        .map(|&(u, v)| (new_id[u], new_id[v]))
        .collect();
    let features = bundle.features.gather_rows(node_set);
    let labels = node_set.iter().map(|&i| bundle.labels[i]).collect();
    let split = node_set.iter().map(|&i| bundle.split[i]).collect();
    let noise_mask = bundle
        .noise_mask
        .as_ref()
        .map(|m| node_set.iter().map(|&i| m[i]).collect());
    let (sub, _) = GraphBundle::new(
        node_set.len(),
        bundle.n_classes,
        edges,
        features,
        labels,
        split,
        noise_mask,
    )?;
    Ok(sub)
}
