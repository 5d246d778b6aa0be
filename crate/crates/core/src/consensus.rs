//! Deep (n, k) consensus classification with a reject option.
//!
//! For each class the n model probabilities are ranked and the k-th largest
//! is kept (`P_min`, the minimum over the top-k models). A sample is accepted
//! as `argmax P_min` only when `max P_min > p_t` strictly; otherwise it is
//! rejected as ambiguous.

use std::fmt;

use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{argmax, kth_largest, Matrix};
use crate::nn::DenseNetwork;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConsensusParams {
    pub n: usize,
    pub k: usize,
    pub p_t: f64,
}

impl ConsensusParams {
    pub fn new(n: usize, k: usize, p_t: f64) -> Result<Self> {
        if n == 0 || k == 0 || k > n {
            return Err(Error::out_of_range("k", format!("need 1 <= k <= n, got n = {n}, k = {k}")));
        }
        if !(0.0..1.0).contains(&p_t) {
            return Err(Error::out_of_range("p_t", format!("{p_t} not in [0, 1)")));
        }
        Ok(Self { n, k, p_t })
    }
}

impl fmt::Display for ConsensusParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}) p_t={}", self.n, self.k, self.p_t)
    }
}

/// `n × class_count` per-model class probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbMatrix(Matrix);

const ROW_SUM_TOLERANCE: f64 = 1e-6;

impl ProbMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        for (i, row) in m.iter_rows().enumerate() {
            if row.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(Error::InvalidProbabilities {
                    row: i,
                    detail: "entry outside [0, 1]".into(),
                });
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > ROW_SUM_TOLERANCE {
                return Err(Error::InvalidProbabilities {
                    row: i,
                    detail: format!("row sums to {s}"),
                });
            }
        }
        Ok(Self(m))
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn models(&self) -> usize {
        self.0.rows()
    }

    pub fn classes(&self) -> usize {
        self.0.cols()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accepted { class: usize, confidence: f64 },
    Rejected,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConsensusDecision {
    pub verdict: Verdict,
    /// k-th largest probability per class.
    pub p_min: Vec<f64>,
}

impl ConsensusDecision {
    pub fn is_accepted(&self) -> bool {
        matches!(self.verdict, Verdict::Accepted { .. })
    }

    pub fn class(&self) -> Option<usize> {
        match self.verdict {
            Verdict::Accepted { class, .. } => Some(class),
            Verdict::Rejected => None,
        }
    }
}

pub fn consensus_classify(probs: &ProbMatrix, params: &ConsensusParams) -> Result<ConsensusDecision> {
    if probs.models() != params.n {
        return Err(Error::DimensionMismatch {
            op: "consensus_classify",
            left: (params.n, probs.classes()),
            right: probs.matrix().shape(),
        });
    }
    let p_min = (0..probs.classes())
        .map(|c| kth_largest(&probs.matrix().column(c), params.k))
        .collect::<Result<Vec<_>>>()?;
    let class = argmax(&p_min);
    let confidence = p_min[class];
    let verdict = if confidence > params.p_t {
        Verdict::Accepted { class, confidence }
    } else {
        Verdict::Rejected
    };
    Ok(ConsensusDecision { verdict, p_min })
}

fn check_ensemble(models: &[DenseNetwork]) -> Result<(usize, usize)> {
    let first = models
        .first()
        .ok_or_else(|| Error::Invalid("an ensemble needs at least one model".into()))?;
    let dims = (first.input_dim(), first.class_count());
    for (i, m) in models.iter().enumerate() {
        if (m.input_dim(), m.class_count()) != dims {
            return Err(Error::HeterogeneousModels(format!(
                "model {i} is {}→{}, model 0 is {}→{}",
                m.input_dim(),
                m.class_count(),
                dims.0,
                dims.1
            )));
        }
    }
    Ok(dims)
}

pub fn ensemble_probs(models: &[DenseNetwork], x: &[f64]) -> Result<ProbMatrix> {
    let (_, classes) = check_ensemble(models)?;
    let mut data = Vec::with_capacity(models.len() * classes);
    for m in models {
        data.extend(m.predict_proba(x)?);
    }
    Ok(ProbMatrix(Matrix::new(models.len(), classes, data)?))
}

/// Probability matrices for every row of `inputs`, one batched pass per model.
pub fn ensemble_probs_batch(models: &[DenseNetwork], inputs: &Matrix) -> Result<Vec<ProbMatrix>> {
    let (_, classes) = check_ensemble(models)?;
    let per_model = models
        .iter()
        .map(|m| m.predict_proba_batch(inputs))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..inputs.rows())
        .map(|r| {
            let mut data = Vec::with_capacity(models.len() * classes);
            for p in &per_model {
                data.extend_from_slice(p.row(r));
            }
            ProbMatrix(Matrix::from_raw(models.len(), classes, data))
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub p_t: f64,
    pub coverage: f64,
    /// `None` when nothing was accepted.
    pub accuracy: Option<f64>,
    pub accepted: usize,
    pub correct: usize,
}

/// Coverage and accuracy-on-accepted over a threshold grid, from
/// precomputed probability matrices.
pub fn curve_from_probs(
    probs: &[ProbMatrix],
    labels: &[usize],
    k: usize,
    p_t_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    if probs.is_empty() || p_t_grid.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if probs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "coverage_accuracy_curve",
            left: (probs.len(), 1),
            right: (labels.len(), 1),
        });
    }
    let n = probs[0].models();
    p_t_grid
        .iter()
        .map(|&p_t| {
            let params = ConsensusParams::new(n, k, p_t)?;
            let (mut accepted, mut correct) = (0usize, 0usize);
            for (p, &label) in probs.iter().zip(labels) {
                if let Some(class) = consensus_classify(p, &params)?.class() {
                    accepted += 1;
                    correct += usize::from(class == label);
                }
            }
            Ok(CurvePoint {
                p_t,
                coverage: accepted as f64 / probs.len() as f64,
                accuracy: (accepted > 0).then(|| correct as f64 / accepted as f64),
                accepted,
                correct,
            })
        })
        .collect()
}

pub fn coverage_accuracy_curve(
    models: &[DenseNetwork],
    test: &Dataset,
    k: usize,
    p_t_grid: &[f64],
) -> Result<Vec<CurvePoint>> {
    let probs = ensemble_probs_batch(models, &test.features)?;
    curve_from_probs(&probs, &test.labels, k, p_t_grid)
}

/// CSV with header `p_t,coverage,accuracy`; zero-coverage accuracy is written
/// as `undefined`.
pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("p_t,coverage,accuracy\n");
    for p in points {
        let acc = p.accuracy.map_or_else(|| "undefined".to_string(), |a| a.to_string());
        out.push_str(&format!("{},{},{}\n", p.p_t, p.coverage, acc));
    }
    out
}

pub fn ood_rejection_rate(
    models: &[DenseNetwork],
    ood: &Matrix,
    params: &ConsensusParams,
) -> Result<f64> {
    if ood.rows() == 0 {
        return Err(Error::EmptyDataset);
    }
    let probs = ensemble_probs_batch(models, ood)?;
    let mut rejected = 0usize;
    for p in &probs {
        if !consensus_classify(p, params)?.is_accepted() {
            rejected += 1;
        }
    }
    Ok(rejected as f64 / probs.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::Rng;
    use crate::math::Vector;
    use crate::nn::{Activation, DenseLayer, ModelConfig};

    fn params(n: usize, k: usize, p_t: f64) -> ConsensusParams {
        ConsensusParams::new(n, k, p_t).unwrap()
    }

    #[test]
    fn single_model_degenerate() {
        let p = ProbMatrix::from_rows(&[[0.9, 0.1]]).unwrap();
        let d = consensus_classify(&p, &params(1, 1, 0.5)).unwrap();
        assert_eq!(
            d.verdict,
            Verdict::Accepted {
                class: 0,
                confidence: 0.9
            }
        );
    }

    #[test]
    fn threshold_is_strict() {
        let p = ProbMatrix::from_rows(&[[0.5, 0.5]; 5]).unwrap();
        let d = consensus_classify(&p, &params(5, 5, 0.5)).unwrap();
        assert_eq!(d.verdict, Verdict::Rejected);
    }

    #[test]
    fn min_of_top_k_hand_case() {
        let col0 = [0.9, 0.8, 0.7, 0.6, 0.2];
        let rows: Vec<[f64; 2]> = col0.iter().map(|&p| [p, 1.0 - p]).collect();
        let p = ProbMatrix::from_rows(&rows).unwrap();
        let d = consensus_classify(&p, &params(5, 4, 0.5)).unwrap();
        assert!((d.p_min[0] - 0.6).abs() < 1e-15);
        // class-1 column: [0.1, 0.2, 0.3, 0.4, 0.8] -> 4th largest 0.2
        assert!((d.p_min[1] - 0.2).abs() < 1e-15);
        assert_eq!(d.class(), Some(0));
    }

    #[test]
    fn ties_go_to_lowest_class() {
        let p = ProbMatrix::from_rows(&[[0.4, 0.4, 0.2]]).unwrap();
        let d = consensus_classify(&p, &params(1, 1, 0.3)).unwrap();
        assert_eq!(d.class(), Some(0));
    }

    #[test]
    fn unanimous_certainty_accepted() {
        let p = ProbMatrix::from_rows(&[[0.0, 1.0, 0.0]; 4]).unwrap();
        for k in 1..=4 {
            let d = consensus_classify(&p, &params(4, k, 0.999)).unwrap();
            assert_eq!(
                d.verdict,
                Verdict::Accepted {
                    class: 1,
                    confidence: 1.0
                }
            );
        }
    }

    #[test]
    fn validation_errors() {
        assert!(ConsensusParams::new(3, 4, 0.5).is_err());
        assert!(ConsensusParams::new(3, 0, 0.5).is_err());
        assert!(ConsensusParams::new(3, 2, 1.0).is_err());
        assert!(ProbMatrix::from_rows(&[[0.7, 0.7]]).is_err());
        assert!(ProbMatrix::from_rows(&[[1.2, -0.2]]).is_err());
        let p = ProbMatrix::from_rows(&[[0.5, 0.5]; 2]).unwrap();
        assert!(consensus_classify(&p, &params(3, 2, 0.5)).is_err());
    }

    fn random_probs(rng: &mut Rng, n: usize, c: usize) -> ProbMatrix {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let raw: Vec<f64> = (0..c).map(|_| rng.uniform() + 1e-3).collect();
                let s: f64 = raw.iter().sum();
                raw.into_iter().map(|v| v / s).collect()
            })
            .collect();
        ProbMatrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn nesting_in_k_and_p_t() {
        let mut rng = Rng::new(4);
        for _ in 0..2000 {
            let p = random_probs(&mut rng, 5, 3);
            for p_t in [0.0, 0.2, 0.4, 0.6] {
                for k in 1..5 {
                    let loose = consensus_classify(&p, &params(5, k, p_t)).unwrap();
                    let strict = consensus_classify(&p, &params(5, k + 1, p_t)).unwrap();
                    for (a, b) in strict.p_min.iter().zip(&loose.p_min) {
                        assert!(a <= b);
                    }
                    if strict.is_accepted() {
                        assert!(loose.is_accepted());
                    }
                    let higher = consensus_classify(&p, &params(5, k, p_t + 0.1)).unwrap();
                    if higher.is_accepted() {
                        assert!(loose.is_accepted());
                    }
                }
            }
        }
    }

    #[test]
    fn permutation_invariant() {
        let mut rng = Rng::new(8);
        for _ in 0..500 {
            let p = random_probs(&mut rng, 4, 2);
            let mut order = vec![0, 1, 2, 3];
            rng.shuffle(&mut order);
            let permuted = ProbMatrix(p.matrix().select_rows(&order));
            for k in 1..=4 {
                let a = consensus_classify(&p, &params(4, k, 0.5)).unwrap();
                let b = consensus_classify(&permuted, &params(4, k, 0.5)).unwrap();
                assert_eq!(a, b);
            }
        }
    }

    fn linear_model(w: [[f64; 2]; 2]) -> DenseNetwork {
        let layer = DenseLayer {
            weights: Matrix::from_rows(&w).unwrap(),
            biases: Vector::zeros(2),
            activation: Activation::Linear,
        };
        DenseNetwork::from_layers(vec![layer], ModelConfig::canonical()[0].clone()).unwrap()
    }

    #[test]
    fn ensemble_rows_and_ood_degenerate_cases() {
        let m = linear_model([[1.0, -1.0], [-1.0, 1.0]]);
        let models = vec![m.clone(), m.clone(), m];
        let p = ensemble_probs(&models, &[0.3, 0.9]).unwrap();
        assert_eq!(p.matrix().row(0), p.matrix().row(2));
        for row in p.matrix().iter_rows() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }

        let ood = crate::data::gen_ood(200, 2, 1).unwrap();
        let rate = ood_rejection_rate(&models, &ood, &params(3, 3, 0.0)).unwrap();
        assert_eq!(rate, 0.0);
        let rate = ood_rejection_rate(&models, &ood, &params(3, 3, 0.999_999)).unwrap();
        assert_eq!(rate, 1.0);
    }

    #[test]
    fn heterogeneous_models_rejected() {
        let a = linear_model([[1.0, 0.0], [0.0, 1.0]]);
        let layer = DenseLayer {
            weights: Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap(),
            biases: Vector::zeros(2),
            activation: Activation::Linear,
        };
        let b = DenseNetwork::from_layers(vec![layer], ModelConfig::canonical()[0].clone())
            .unwrap();
        assert!(matches!(
            ensemble_probs(&[a, b], &[0.0, 0.0]),
            Err(Error::HeterogeneousModels(_))
        ));
    }

    #[test]
    fn curve_monotone_coverage_and_csv() {
        let mut rng = Rng::new(12);
        let probs: Vec<ProbMatrix> = (0..300).map(|_| random_probs(&mut rng, 5, 2)).collect();
        let labels: Vec<usize> = (0..300).map(|i| i % 2).collect();
        let mut grid: Vec<f64> = (0..10).map(|i| i as f64 / 10.0).collect();
        grid.push(0.999_999);
        let curve = curve_from_probs(&probs, &labels, 3, &grid).unwrap();
        for w in curve.windows(2) {
            assert!(w[1].coverage <= w[0].coverage);
        }
        let csv = curve_to_csv(&curve);
        assert!(csv.starts_with("p_t,coverage,accuracy\n"));
        assert!(csv.lines().last().unwrap().ends_with("undefined"));
        assert_eq!(csv.lines().count(), 12);
    }
}
