use serde::Serialize;

use super::diff::{diff_vector_for_pair, top_two};
use super::group::ClusterGroup;
use super::ranking::{feature_ranking, FeatureRanking};
use crate::consensus::{consensus_classify, ensemble_probs, ConsensusDecision, ConsensusParams};
use crate::error::{Error, Result};
use crate::math::{dot, standardize, Vector};
use crate::nn::DenseNetwork;

/// Per-sample explanation. A ranking exists only for accepted samples; it
/// counts as supported only when it matches a known cluster group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InterpretationReport {
    pub decision: ConsensusDecision,
    pub class_pair: Option<(usize, usize)>,
    /// Mean of the models' diff vectors at the sample.
    pub contributions: Option<Vector>,
    pub ranking: Option<FeatureRanking>,
    /// Id of the best-matching group, present only when supported.
    pub best_group: Option<usize>,
    /// Correlation of `contributions` with the closest group mean; `None`
    /// when rejected or when no group shares the class pair.
    pub support_correlation: Option<f64>,
    pub supported: bool,
}

/// Mean of the per-model diff vectors for `pair` at `x`.
pub fn consensus_contributions(
    models: &[DenseNetwork],
    x: &[f64],
    pair: (usize, usize),
) -> Result<Vector> {
    if models.is_empty() {
        return Err(Error::Invalid("an ensemble needs at least one model".into()));
    }
    let mut sum = vec![0.0; x.len()];
    for m in models {
        let v = diff_vector_for_pair(m, x, pair)?;
        sum.iter_mut().zip(v.values.iter()).for_each(|(s, d)| *s += d);
    }
    let inv = 1.0 / models.len() as f64;
    Ok(Vector::from(sum.into_iter().map(|s| s * inv).collect::<Vec<_>>()))
}

/// Classifies `x` by consensus and, when accepted, ranks features by the
/// averaged diff vector of the two leading consensus classes and matches it
/// against `groups`. Ties between equally correlated groups go to the lower
/// group id.
pub fn interpret_sample(
    models: &[DenseNetwork],
    params: &ConsensusParams,
    groups: &[ClusterGroup],
    x: &[f64],
    match_threshold: f64,
    feature_names: &[String],
) -> Result<InterpretationReport> {
    if !(-1.0..=1.0).contains(&match_threshold) {
        return Err(Error::out_of_range(
            "match_threshold",
            format!("{match_threshold} not in [-1, 1]"),
        ));
    }
    let decision = consensus_classify(&ensemble_probs(models, x)?, params)?;
    if !decision.is_accepted() {
        return Ok(InterpretationReport {
            decision,
            class_pair: None,
            contributions: None,
            ranking: None,
            best_group: None,
            support_correlation: None,
            supported: false,
        });
    }
    let pair = top_two(&decision.p_min);
    let contributions = consensus_contributions(models, x, pair)?;
    let ranking = feature_ranking(&contributions, feature_names)?;

    let standardized = standardize(&contributions);
    let mut best: Option<(usize, f64)> = None;
    for g in groups.iter().filter(|g| g.class_pair == pair) {
        if g.group_mean.len() != contributions.len() {
            return Err(Error::DimensionMismatch {
                op: "interpret_sample",
                left: (contributions.len(), 1),
                right: (g.group_mean.len(), 1),
            });
        }
        let r = match (&standardized, standardize(&g.group_mean)) {
            (Some(a), Some(b)) => dot(a, &b).clamp(-1.0, 1.0),
            _ => 0.0,
        };
        if best.is_none_or(|(_, br)| r > br) {
            best = Some((g.id, r));
        }
    }
    let supported = best.is_some_and(|(_, r)| r >= match_threshold);
    Ok(InterpretationReport {
        decision,
        class_pair: Some(pair),
        contributions: Some(contributions),
        ranking: Some(ranking),
        best_group: best.filter(|_| supported).map(|(id, _)| id),
        support_correlation: best.map(|(_, r)| r),
        supported,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consensus::Verdict;
    use crate::math::Matrix;
    use crate::nn::{Activation, DenseLayer, ModelConfig};

    /// A single linear layer `O = W x` with two inputs and two classes.
    fn linear_net(w: [[f64; 2]; 2]) -> DenseNetwork {
        let layer = DenseLayer {
            weights: Matrix::from_rows(&w).unwrap(),
            biases: Vector::zeros(2),
            activation: Activation::Linear,
        };
        let cfg = ModelConfig {
            layer_count: 1,
            ..ModelConfig::canonical()[0].clone()
        };
        DenseNetwork::from_layers(vec![layer], cfg).unwrap()
    }

    fn group(id: usize, mean: Vec<f64>) -> ClusterGroup {
        ClusterGroup {
            id,
            members: Vec::new(),
            group_mean: Vector::from(mean),
            class_pair: (0, 1),
            mean_correlations: Vec::new(),
        }
    }

    fn names() -> Vec<String> {
        vec!["a".into(), "b".into()]
    }

    #[test]
    fn accepted_sample_is_ranked_and_matched() {
        // Margin gradient J1 − J0 = [2, −2] for the first net, [4, −2] for
        // the second; the mean is [3, −2].
        let models = vec![linear_net([[0.0, 1.0], [2.0, -1.0]]), linear_net([[-1.0, 1.0], [3.0, -1.0]])];
        let params = ConsensusParams::new(2, 2, 0.5).unwrap();
        let x = [2.0, 0.0];
        let groups = vec![group(0, vec![-1.0, 1.0]), group(1, vec![1.0, -1.0]), group(2, vec![5.0, 0.0])];
        let r = interpret_sample(&models, &params, &groups, &x, 0.9, &names()).unwrap();
        assert!(matches!(r.decision.verdict, Verdict::Accepted { class: 1, .. }));
        assert_eq!(r.contributions.as_ref().unwrap().to_vec(), vec![3.0, -2.0]);
        let order: Vec<&str> = r.ranking.as_ref().unwrap().entries.iter().map(|e| e.feature.as_str()).collect();
        assert_eq!(order, vec!["a", "b"]);
        // Two-element vectors correlate at ±1: group 1 wins over the later
        // group 2 with the same correlation.
        assert_eq!(r.best_group, Some(1));
        assert!(r.supported);
        assert!((r.support_correlation.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejected_sample_has_no_ranking() {
        let models = vec![linear_net([[1.0, 0.0], [0.0, 1.0]]), linear_net([[0.0, 1.0], [1.0, 0.0]])];
        let params = ConsensusParams::new(2, 2, 0.5).unwrap();
        let r = interpret_sample(&models, &params, &[group(0, vec![1.0, -1.0])], &[3.0, 0.0], 0.5, &names()).unwrap();
        assert_eq!(r.decision.verdict, Verdict::Rejected);
        assert!(r.ranking.is_none() && r.best_group.is_none() && !r.supported);
    }

    #[test]
    fn unsupported_when_below_threshold_or_no_groups() {
        let models = vec![linear_net([[0.0, 1.0], [2.0, -1.0]])];
        let params = ConsensusParams::new(1, 1, 0.5).unwrap();
        let x = [2.0, 0.0];
        let r = interpret_sample(&models, &params, &[group(0, vec![-1.0, 1.0])], &x, 0.5, &names()).unwrap();
        assert!(r.ranking.is_some());
        assert!((r.support_correlation.unwrap() + 1.0).abs() < 1e-12);
        assert!(!r.supported && r.best_group.is_none());
        let r = interpret_sample(&models, &params, &[], &x, 0.5, &names()).unwrap();
        assert_eq!(r.support_correlation, None);
        assert!(!r.supported);
        assert!(interpret_sample(&models, &params, &[], &x, 1.5, &names()).is_err());
    }
}
