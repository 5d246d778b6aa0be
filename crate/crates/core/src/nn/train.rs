use super::{cross_entropy, softmax, DenseNetwork, ModelConfig, OptimizerState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math::{argmax, child_seed, gemm_nn, gemm_nt, gemm_tn, Rng};

/// Per-epoch mean training loss and accuracy, measured on the mini-batches
/// as they are visited.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

/// Mini-batch training with softmax cross-entropy. The input network is left
/// untouched; the trained copy is returned. Batches are reshuffled each epoch
/// from a stream derived from `config.seed`.
pub fn train(
    net: &DenseNetwork,
    data: &Dataset,
    config: &ModelConfig,
) -> Result<(DenseNetwork, TrainHistory)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if data.input_dim() != net.input_dim() {
        return Err(Error::DimensionMismatch {
            op: "train",
            left: (1, net.input_dim()),
            right: data.features.shape(),
        });
    }
    if let Some(&label) = data.labels.iter().find(|&&l| l >= net.class_count()) {
        return Err(Error::InvalidLabel {
            label,
            class_count: net.class_count(),
        });
    }

    let mut net = net.clone();
    let mut history = TrainHistory::default();
    let shapes: Vec<usize> = net
        .layers()
        .iter()
        .flat_map(|l| [l.weights.as_slice().len(), l.biases.len()])
        .collect();
    let mut optimizer = OptimizerState::new(config.optimizer, &shapes);
    let mut rng = Rng::new(child_seed(config.seed, 1));
    let mut ws = Workspace::new(&net, config.batch_size);
    let mut order: Vec<usize> = (0..data.len()).collect();

    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut correct = 0usize;
        for batch in order.chunks(config.batch_size) {
            let (loss, hits) = ws.accumulate_gradients(&net, data, batch);
            loss_sum += loss;
            correct += hits;
            let grads: Vec<&[f64]> = ws
                .grad_w
                .iter()
                .zip(&ws.grad_b)
                .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
                .collect();
            let mut params: Vec<&mut [f64]> = net
                .layers_mut()
                .iter_mut()
                .flat_map(|l| {
                    let w: &mut [f64] = l.weights.as_mut_slice();
                    let b: &mut [f64] = &mut l.biases;
                    [w, b]
                })
                .collect();
            optimizer.step(&mut params, &grads, config.learning_rate)?;
        }
        let loss = loss_sum / data.len() as f64;
        let params_finite = net
            .layers()
            .iter()
            .all(|l| l.weights.as_slice().iter().chain(l.biases.iter()).all(|v| v.is_finite()));
        if !loss.is_finite() || !params_finite {
            return Err(Error::Diverged { epoch });
        }
        history.loss.push(loss);
        history.accuracy.push(correct as f64 / data.len() as f64);
    }
    Ok((net, history))
}

/// Reusable buffers for batched forward/backward passes.
struct Workspace {
    input: Vec<f64>,
    z: Vec<Vec<f64>>,
    a: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    grad_w: Vec<Vec<f64>>,
    grad_b: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(net: &DenseNetwork, batch: usize) -> Self {
        let outs: Vec<usize> = net.layers().iter().map(|l| l.out_dim()).collect();
        Self {
            input: Vec::with_capacity(batch * net.input_dim()),
            z: outs.iter().map(|&o| vec![0.0; batch * o]).collect(),
            a: outs.iter().map(|&o| vec![0.0; batch * o]).collect(),
            delta: outs.iter().map(|&o| vec![0.0; batch * o]).collect(),
            grad_w: net
                .layers()
                .iter()
                .map(|l| vec![0.0; l.weights.as_slice().len()])
                .collect(),
            grad_b: outs.iter().map(|&o| vec![0.0; o]).collect(),
        }
    }

    /// Fills `grad_w`/`grad_b` with the mean-loss gradient over `batch`;
    /// returns the summed loss and the number of correct predictions.
    fn accumulate_gradients(
        &mut self,
        net: &DenseNetwork,
        data: &Dataset,
        batch: &[usize],
    ) -> (f64, usize) {
        let rows = batch.len();
        self.input.clear();
        for &i in batch {
            self.input.extend_from_slice(data.sample(i));
        }

        let layers = net.layers();
        for (l, layer) in layers.iter().enumerate() {
            let (out, inp) = (layer.out_dim(), layer.in_dim());
            let (before, after) = self.a.split_at_mut(l);
            let x: &[f64] = if l == 0 { &self.input } else { &before[l - 1] };
            let z = &mut self.z[l][..rows * out];
            gemm_nt(&x[..rows * inp], layer.weights.as_slice(), rows, inp, out, z);
            let a = &mut after[0][..rows * out];
            for r in 0..rows {
                let zr = &mut z[r * out..(r + 1) * out];
                let ar = &mut a[r * out..(r + 1) * out];
                for j in 0..out {
                    zr[j] += layer.biases[j];
                    ar[j] = layer.activation.apply(zr[j]);
                }
            }
        }

        let last = layers.len() - 1;
        let classes = net.class_count();
        let inv = 1.0 / rows as f64;
        let mut loss = 0.0;
        let mut hits = 0;
        for (r, &i) in batch.iter().enumerate() {
            let logits = &self.a[last][r * classes..(r + 1) * classes];
            let label = data.labels[i];
            loss += cross_entropy(logits, label);
            if argmax(logits) == label {
                hits += 1;
            }
            let p = softmax(logits);
            let d = &mut self.delta[last][r * classes..(r + 1) * classes];
            for c in 0..classes {
                d[c] = (p[c] - if c == label { 1.0 } else { 0.0 }) * inv;
            }
        }

        for l in (0..layers.len()).rev() {
            let layer = &layers[l];
            let (out, inp) = (layer.out_dim(), layer.in_dim());
            {
                let d = &mut self.delta[l][..rows * out];
                let z = &self.z[l][..rows * out];
                let a = &self.a[l][..rows * out];
                for k in 0..rows * out {
                    d[k] *= layer.activation.derivative(z[k], a[k]);
                }
            }
            let d = &self.delta[l][..rows * out];
            let x: &[f64] = if l == 0 {
                &self.input[..rows * inp]
            } else {
                &self.a[l - 1][..rows * inp]
            };
            gemm_tn(d, x, rows, out, inp, &mut self.grad_w[l]);
            let gb = &mut self.grad_b[l];
            gb.fill(0.0);
            for r in 0..rows {
                for (g, v) in gb.iter_mut().zip(&d[r * out..(r + 1) * out]) {
                    *g += v;
                }
            }
            if l > 0 {
                let (before, after) = self.delta.split_at_mut(l);
                gemm_nn(
                    &after[0][..rows * out],
                    layer.weights.as_slice(),
                    rows,
                    out,
                    inp,
                    &mut before[l - 1][..rows * inp],
                );
            }
        }
        (loss, hits)
    }
}
