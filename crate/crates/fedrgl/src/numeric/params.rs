//! Named parameter collections and the SGD update.

use super::tensor::Tensor;

/// Ordered, named list of parameter tensors.
///
/// The order is part of the identity: `flatten`/`unflatten` round-trip
/// bit-exactly, which is what server-side aggregation relies on.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    entries: Vec<(String, Tensor)>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet { entries: Vec::new() }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.entries.push((name.into(), t));
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn get(&self, name: &str) -> &Tensor {
        &self
            .entries
            .iter()
            .find(|(n, _)| n == name)
            .unwrap_or_else(|| panic!("contract error: no parameter named {name}"))
            .1
    }

    /// Total number of scalar parameters.
    pub fn scalar_count(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.len()).sum()
    }

    /// All scalars concatenated in entry order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.scalar_count());
        for (_, t) in &self.entries {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Rebuild a set with this set's names/shapes from a flat vector.
    pub fn unflatten(&self, flat: &[f64]) -> ParamSet {
        assert_eq!(
            flat.len(),
            self.scalar_count(),
            "contract error: unflatten expected {} scalars, got {}",
            self.scalar_count(),
            flat.len()
        );
        let mut entries = Vec::with_capacity(self.entries.len());
        let mut offset = 0;
        for (name, t) in &self.entries {
            let next = offset + t.len();
            entries.push((
                name.clone(),
                Tensor::from_vec(t.rows(), t.cols(), flat[offset..next].to_vec()),
            ));
            offset = next;
        }
        ParamSet { entries }
    }

    /// Mutable access for the optimizer.
    pub(crate) fn entries_mut(&mut self) -> &mut [(String, Tensor)] {
        &mut self.entries
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

/// One SGD step with decoupled-free weight decay:
/// p ← p − lr·(g + weight_decay·p) for every scalar.
///
/// `grads` must align with `params` by name and shape.
pub fn sgd_step(params: &mut ParamSet, grads: &ParamSet, lr: f64, weight_decay: f64) {
    assert!(lr > 0.0, "contract error: sgd_step needs lr > 0, got {lr}");
    assert_eq!(
        params.len(),
        grads.len(),
        "contract error: sgd_step got {} grads for {} params",
        grads.len(),
        params.len()
    );
    for ((p_name, p), (g_name, g)) in params.entries_mut().iter_mut().zip(grads.entries.iter()) {
        assert_eq!(p_name, g_name, "contract error: sgd_step grad {g_name} does not align with param {p_name}");
        assert_eq!(
            p.shape(),
            g.shape(),
            "contract error: sgd_step shape mismatch for {p_name}"
        );
        for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * (gv + weight_decay * *pv);
        }
    }
}
