use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};
use crate::nn::DenseNetwork;

/// Gradient of the margin between two penultimate outputs with respect to
/// the input: `values = J[hi] − J[lo]` for `class_pair = (lo, hi)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JacobianDiffVector {
    pub values: Vector,
    pub sample_id: usize,
    pub model_id: usize,
    pub class_pair: (usize, usize),
}

/// The two most probable classes, ordered by index. Ties in probability go
/// to the lower class index.
pub fn top_two(probs: &[f64]) -> (usize, usize) {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    let (a, b) = (order[0], order[1]);
    (a.min(b), a.max(b))
}

fn row_difference(j: &Matrix, (lo, hi): (usize, usize)) -> Vector {
    Vector::from(
        j.row(hi)
            .iter()
            .zip(j.row(lo))
            .map(|(h, l)| h - l)
            .collect::<Vec<_>>(),
    )
}

/// Diff vector for the model's own top two classes. For binary models this
/// is always `J[1] − J[0]`. Ids are left at 0; see [`diff_vectors`].
pub fn diff_vector(model: &DenseNetwork, x: &[f64]) -> Result<JacobianDiffVector> {
    if model.class_count() < 2 {
        return Err(Error::out_of_range("class_count", "diff vectors need at least 2 classes"));
    }
    let trace = model.forward(x)?;
    let pair = top_two(&trace.probabilities);
    let j = model.jacobian_from_trace(&trace);
    Ok(JacobianDiffVector {
        values: row_difference(&j, pair),
        sample_id: 0,
        model_id: 0,
        class_pair: pair,
    })
}

/// Diff vector for a fixed class pair `(lo, hi)` with `lo < hi`.
pub fn diff_vector_for_pair(
    model: &DenseNetwork,
    x: &[f64],
    pair: (usize, usize),
) -> Result<JacobianDiffVector> {
    if pair.0 >= pair.1 || pair.1 >= model.class_count() {
        return Err(Error::out_of_range(
            "class_pair",
            format!("{pair:?} with {} classes", model.class_count()),
        ));
    }
    let j = model.penultimate_jacobian(x)?;
    Ok(JacobianDiffVector {
        values: row_difference(&j, pair),
        sample_id: 0,
        model_id: 0,
        class_pair: pair,
    })
}

/// Diff vectors of one model for the listed rows of `inputs`, tagged with
/// `model_id` and the row index as `sample_id`.
pub fn diff_vectors(
    model: &DenseNetwork,
    model_id: usize,
    inputs: &Matrix,
    rows: &[usize],
) -> Result<Vec<JacobianDiffVector>> {
    rows.iter()
        .map(|&i| {
            if i >= inputs.rows() {
                return Err(Error::out_of_range(
                    "sample_id",
                    format!("{i} with {} rows", inputs.rows()),
                ));
            }
            let mut v = diff_vector(model, inputs.row(i))?;
            v.sample_id = i;
            v.model_id = model_id;
            Ok(v)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{init_network, Activation, DenseLayer, ModelConfig};

    #[test]
    fn top_two_orders_by_index() {
        assert_eq!(top_two(&[0.7, 0.3]), (0, 1));
        assert_eq!(top_two(&[0.1, 0.3, 0.6]), (1, 2));
        assert_eq!(top_two(&[0.5, 0.1, 0.4]), (0, 2));
        assert_eq!(top_two(&[0.2, 0.4, 0.4]), (1, 2));
        assert_eq!(top_two(&[0.25; 4]), (0, 1));
    }

    #[test]
    fn matches_finite_differences_of_margin() {
        let cfg = ModelConfig::canonical()[1].clone();
        let cfg = ModelConfig { hidden_width: 12, ..cfg };
        let net = init_network(&cfg, 6, 2).unwrap();
        let x = [0.1, 0.5, 0.9, 0.3, 0.7, 0.2];
        let margin = |x: &[f64]| {
            let t = net.forward(x).unwrap();
            t.penultimate[1] - t.penultimate[0]
        };
        let v = diff_vector(&net, &x).unwrap();
        assert_eq!(v.class_pair, (0, 1));
        let h = 1e-6;
        for j in 0..6 {
            let (mut up, mut down) = (x, x);
            up[j] += h;
            down[j] -= h;
            let fd = (margin(&up) - margin(&down)) / (2.0 * h);
            assert!((fd - v.values[j]).abs() <= 1e-6 * (1.0 + fd.abs()), "{j}: {fd} vs {}", v.values[j]);
        }
    }

    fn linear_net(w: Vec<Vec<f64>>) -> DenseNetwork {
        let classes = w.len();
        let layer = DenseLayer {
            weights: Matrix::from_rows(&w).unwrap(),
            biases: Vector::zeros(classes),
            activation: Activation::Linear,
        };
        let cfg = ModelConfig {
            layer_count: 1,
            ..ModelConfig::canonical()[0].clone()
        };
        DenseNetwork::from_layers(vec![layer], cfg).unwrap()
    }

    #[test]
    fn linear_network_gives_weight_row_difference() {
        let net = linear_net(vec![vec![0.5, -1.0, 2.0], vec![1.5, 0.25, -3.0]]);
        // Predicted class 0 here; orientation is still row 1 minus row 0.
        let v = diff_vector(&net, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(v.values.to_vec(), vec![1.0, 1.25, -5.0]);
        let same = linear_net(vec![vec![0.3, 0.7], vec![0.3, 0.7]]);
        assert_eq!(diff_vector(&same, &[0.2, 0.9]).unwrap().values.to_vec(), vec![0.0, 0.0]);
        let single = linear_net(vec![vec![1.0, 1.0]]);
        assert!(diff_vector(&single, &[0.2, 0.9]).is_err());
    }

    #[test]
    fn batch_tags_ids() {
        let cfg = ModelConfig {
            hidden_width: 8,
            ..ModelConfig::canonical()[0].clone()
        };
        let net = init_network(&cfg, 3, 2).unwrap();
        let inputs = Matrix::from_rows(&[[0.1, 0.2, 0.3], [0.4, 0.5, 0.6], [0.7, 0.8, 0.9]]).unwrap();
        let vs = diff_vectors(&net, 4, &inputs, &[2, 0]).unwrap();
        assert_eq!((vs[0].sample_id, vs[0].model_id), (2, 4));
        assert_eq!(vs[1].values, diff_vector(&net, inputs.row(0)).unwrap().values);
        assert!(diff_vectors(&net, 0, &inputs, &[3]).is_err());
    }

    #[test]
    fn fixed_pair_validated() {
        let cfg = ModelConfig {
            hidden_width: 8,
            ..ModelConfig::canonical()[0].clone()
        };
        let net = init_network(&cfg, 3, 3).unwrap();
        let x = [0.2, 0.4, 0.6];
        assert!(diff_vector_for_pair(&net, &x, (1, 1)).is_err());
        assert!(diff_vector_for_pair(&net, &x, (0, 3)).is_err());
        let j = net.penultimate_jacobian(&x).unwrap();
        let v = diff_vector_for_pair(&net, &x, (0, 2)).unwrap();
        for c in 0..3 {
            assert_eq!(v.values[c], j.get(2, c) - j.get(0, c));
        }
    }
}
