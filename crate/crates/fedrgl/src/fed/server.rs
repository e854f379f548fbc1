//! Server-side parameter aggregation.

use crate::numeric::ParamSet;

use super::client::ClientReport;

/// Small constant keeping the inverse-entropy weights finite.
pub const ENTROPY_EPSILON: f64 = 1e-9;

fn weighted_average(reports: &[ClientReport], weights: &[f64]) -> ParamSet {
    assert!(!reports.is_empty(), "contract error: aggregation needs at least one report");
    let template = &reports[0].params;
    let mut accumulator = vec![0.0f64; template.scalar_count()];
    for (report, &w) in reports.iter().zip(weights) {
        for (slot, &v) in accumulator.iter_mut().zip(&report.params.flatten()) {
            *slot += w * v;
        }
    }
    template.unflatten(&accumulator)
}

/// Node-count weights |V_m| / Σ|V_m|.
pub fn fedavg_weights(reports: &[ClientReport]) -> Vec<f64> {
    let total: usize = reports.iter().map(|r| r.node_count).sum();
    reports.iter().map(|r| r.node_count as f64 / total as f64).collect()
}

/// Inverse-entropy weights H_m / ΣH_m with H_m = 1/(ℋ_m + ε): lower
/// predictive entropy, higher weight.
pub fn entropy_weights(reports: &[ClientReport], epsilon: f64) -> Vec<f64> {
    let inverses: Vec<f64> = reports
        .iter()
        .map(|r| 1.0 / (r.predictive_entropy + epsilon))
        .collect();
    let total: f64 = inverses.iter().sum();
    inverses.into_iter().map(|h| h / total).collect()
}

/// Size-weighted federated average.
pub fn aggregate_fedavg(reports: &[ClientReport]) -> (ParamSet, Vec<f64>) {
    let weights = fedavg_weights(reports);
    (weighted_average(reports, &weights), weights)
}

/// Predictive-entropy-reweighted federated average.
pub fn aggregate_entropy(reports: &[ClientReport], epsilon: f64) -> (ParamSet, Vec<f64>) {
    let weights = entropy_weights(reports, epsilon);
    (weighted_average(reports, &weights), weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Tensor;

    fn report(entropy: f64, nodes: usize, value: f64) -> ClientReport {
        let mut params = ParamSet::new();
        params.push("w", Tensor::from_rows(&[vec![value, 2.0 * value]]));
        ClientReport {
            client_id: 0,
            params,
            node_count: nodes,
            predictive_entropy: entropy,
            train_loss: 0.0,
            epochs: Vec::new(),
            filter: None,
        }
    }

    #[test]
    fn entropy_weights_example() {
        // entropies {0.1, 0.3} → weights {0.75, 0.25} up to ε
        let reports = vec![report(0.1, 10, 1.0), report(0.3, 10, 2.0)];
        let w = entropy_weights(&reports, ENTROPY_EPSILON);
        let expect0 = (1.0 / (0.1 + ENTROPY_EPSILON))
            / (1.0 / (0.1 + ENTROPY_EPSILON) + 1.0 / (0.3 + ENTROPY_EPSILON));
        assert!((w[0] - expect0).abs() < 1e-15);
        assert!((w[0] - 0.75).abs() < 1e-8);
        assert!((w[1] - 0.25).abs() < 1e-8);
        assert!((w[0] + w[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn equal_entropies_give_equal_weights() {
        let reports = vec![report(0.2, 5, 1.0), report(0.2, 50, 2.0)];
        let w = entropy_weights(&reports, ENTROPY_EPSILON);
        assert!((w[0] - 0.5).abs() < 1e-12);
        assert!((w[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_client_passes_through() {
        let reports = vec![report(0.4, 7, 3.0)];
        let (params, w) = aggregate_entropy(&reports, ENTROPY_EPSILON);
        assert_eq!(w, vec![1.0]);
        assert_eq!(params.flatten(), reports[0].params.flatten());
    }

    #[test]
    fn entropy_weighting_is_monotone() {
        let reports = vec![report(0.05, 1, 0.0), report(0.2, 1, 0.0), report(0.7, 1, 0.0)];
        let w = entropy_weights(&reports, ENTROPY_EPSILON);
        assert!(w[0] > w[1] && w[1] > w[2]);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fedavg_weights_are_node_proportions() {
        let reports = vec![report(0.1, 100, 1.0), report(0.1, 300, 5.0)];
        let w = fedavg_weights(&reports);
        assert_eq!(w, vec![0.25, 0.75]);
        let (params, _) = aggregate_fedavg(&reports);
        // 0.25·1 + 0.75·5 = 4.0 in the first slot
        assert!((params.get("w").at(0, 0) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn equal_sizes_give_plain_mean() {
        let reports = vec![report(0.1, 10, 2.0), report(0.1, 10, 4.0)];
        let (params, w) = aggregate_fedavg(&reports);
        assert_eq!(w, vec![0.5, 0.5]);
        assert!((params.get("w").at(0, 0) - 3.0).abs() < 1e-12);
    }

    #[test]
    fn identical_params_are_preserved() {
        let reports = vec![report(0.3, 10, 1.5), report(0.9, 30, 1.5)];
        let (params, _) = aggregate_fedavg(&reports);
        assert!((params.get("w").at(0, 0) - 1.5).abs() < 1e-12);
        let (params, _) = aggregate_entropy(&reports, ENTROPY_EPSILON);
        assert!((params.get("w").at(0, 0) - 1.5).abs() < 1e-12);
    }
}
