//! Linear baselines with intrinsic feature importances: logistic regression
//! and an L2-regularized linear SVM, both fitted by mini-batch (sub)gradient
//! descent.

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::interpret::{feature_ranking, FeatureRanking};
use crate::math::{child_seed, dot, Rng, Vector};
use crate::metrics::{evaluate, MetricsReport};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearKind {
    Logistic,
    LinearSvm,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub weights: Vector,
    pub bias: f64,
    pub kind: LinearKind,
}

impl LinearModel {
    pub fn decision(&self, x: &[f64]) -> f64 {
        dot(&self.weights, x) + self.bias
    }

    /// Positive-class probability for logistic models, the raw margin for SVMs.
    pub fn score(&self, x: &[f64]) -> f64 {
        match self.kind {
            LinearKind::Logistic => sigmoid(self.decision(x)),
            LinearKind::LinearSvm => self.decision(x),
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        usize::from(self.decision(x) >= 0.0)
    }

    pub fn evaluate(&self, data: &Dataset) -> Result<MetricsReport> {
        let rows = data.features.iter_rows();
        let (preds, scores): (Vec<usize>, Vec<f64>) =
            rows.map(|x| (self.predict(x), self.score(x))).unzip();
        evaluate(&preds, &scores, &data.labels)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinearTrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LinearTrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 100,
            batch_size: 32,
            seed: 0,
        }
    }
}

const INIT_STD: f64 = 0.01;

fn check_binary(data: &Dataset) -> Result<()> {
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.class_count != 2 || data.labels.iter().any(|&l| l > 1) {
        return Err(Error::Invalid(format!(
            "linear baselines need binary labels, got {} classes",
            data.class_count
        )));
    }
    Ok(())
}

/// Weights start at `N(0, 0.01²)` drawn from `seed`, bias at 0.
fn fit(
    data: &Dataset,
    cfg: &LinearTrainConfig,
    kind: LinearKind,
    grad: impl Fn(&LinearModel, &[f64], usize) -> (f64, f64),
    weight_decay: f64,
) -> Result<LinearModel> {
    check_binary(data)?;
    if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
        return Err(Error::Invalid("batch_size and learning_rate must be positive".into()));
    }
    let d = data.input_dim();
    let mut init = Rng::new(cfg.seed);
    let mut model = LinearModel {
        weights: Vector::from((0..d).map(|_| init.normal(0.0, INIT_STD)).collect::<Vec<_>>()),
        bias: 0.0,
        kind,
    };
    let mut rng = Rng::new(child_seed(cfg.seed, 1));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut gw = vec![0.0; d];
    for _ in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(cfg.batch_size) {
            gw.fill(0.0);
            let mut gb = 0.0;
            for &i in batch {
                let x = data.sample(i);
                let (coef, bias_coef) = grad(&model, x, data.labels[i]);
                if coef != 0.0 {
                    gw.iter_mut().zip(x).for_each(|(g, xi)| *g += coef * xi);
                }
                gb += bias_coef;
            }
            let inv = 1.0 / batch.len() as f64;
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= cfg.learning_rate * (g * inv + weight_decay * *w);
            }
            model.bias -= cfg.learning_rate * gb * inv;
        }
    }
    if !model.bias.is_finite() || model.weights.iter().any(|w| !w.is_finite()) {
        return Err(Error::Diverged { epoch: cfg.epochs });
    }
    Ok(model)
}

/// Minimizes mean binary cross-entropy.
pub fn train_logistic(data: &Dataset, cfg: &LinearTrainConfig) -> Result<LinearModel> {
    fit(
        data,
        cfg,
        LinearKind::Logistic,
        |m, x, label| {
            let r = sigmoid(m.decision(x)) - label as f64;
            (r, r)
        },
        0.0,
    )
}

/// Minimizes `½‖w‖² + C · mean(max(0, 1 − y(w·x + b)))` with `y ∈ {−1, 1}`.
pub fn train_linear_svm(data: &Dataset, c: f64, cfg: &LinearTrainConfig) -> Result<LinearModel> {
    if !(c >= 0.0 && c.is_finite()) {
        return Err(Error::out_of_range("C", format!("{c} must be finite and >= 0")));
    }
    fit(
        data,
        cfg,
        LinearKind::LinearSvm,
        |m, x, label| {
            let y = if label == 1 { 1.0 } else { -1.0 };
            if y * m.decision(x) < 1.0 {
                (-c * y, -c * y)
            } else {
                (0.0, 0.0)
            }
        },
        1.0,
    )
}

/// Features ranked by signed weight; positive pushes toward class 1.
pub fn linear_feature_ranking(model: &LinearModel, names: &[String]) -> Result<FeatureRanking> {
    feature_ranking(&model.weights, names)
}
