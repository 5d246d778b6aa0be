//! Dense feed-forward classifiers with a softmax head.
//!
//! A network is a chain of dense layers `z = W·x + b`, `a = act(z)`. The
//! activated output of the last dense layer is the *penultimate* output `O`
//! (the input of the softmax), and [`DenseNetwork::penultimate_jacobian`]
//! differentiates `O` with respect to the network input.

mod io;
mod optim;
mod train;

use serde::{Deserialize, Serialize};

pub use io::{load_model, save_model};
pub use optim::{
    OptimizerState, ADADELTA_EPSILON, ADADELTA_RHO, ADAGRAD_EPSILON, ADAMAX_BETA1, ADAMAX_BETA2,
    ADAMAX_EPSILON,
};
pub use train::{train, TrainHistory};

use crate::data::NormalizationParams;
use crate::error::{Error, Result};
use crate::math::{argmax, gemm_nn, gemm_nt, Matrix, Rng, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Linear => z,
        }
    }

    /// Derivative expressed through the pre-activation `z` and activation `a`.
    #[inline]
    pub fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightInit {
    /// `U(−s, s)` with `s = √(6 / (in + out))`.
    RandomUniform,
    /// `N(0, 2 / (in + out))`.
    RandomNormal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BiasInit {
    Zeros,
    Ones,
    Constant,
    /// `N(0, 0.05²)`.
    RandomNormal,
}

pub const DEFAULT_BIAS_CONSTANT: f64 = 0.1;
pub const BIAS_NORMAL_STD: f64 = 0.05;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub weight_init: WeightInit,
    pub bias_init: BiasInit,
    /// Present exactly when `bias_init` is `Constant`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant_value: Option<f64>,
}

impl InitSpec {
    pub fn new(weight_init: WeightInit, bias_init: BiasInit) -> Self {
        let constant_value = (bias_init == BiasInit::Constant).then_some(DEFAULT_BIAS_CONSTANT);
        Self {
            weight_init,
            bias_init,
            constant_value,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.bias_init, self.constant_value) {
            (BiasInit::Constant, Some(c)) if c.is_finite() => Ok(()),
            (BiasInit::Constant, _) => Err(Error::Invalid(
                "bias_init = constant requires a finite constant_value".into(),
            )),
            (_, Some(_)) => Err(Error::Invalid(
                "constant_value is only valid with bias_init = constant".into(),
            )),
            (_, None) => Ok(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    Adamax,
    Adadelta,
    Adagrad,
}

impl OptimizerKind {
    pub fn default_learning_rate(self) -> f64 {
        match self {
            OptimizerKind::Sgd | OptimizerKind::Adagrad => 0.01,
            OptimizerKind::Adamax => 0.002,
            OptimizerKind::Adadelta => 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub hidden_width: usize,
    pub activation: Activation,
    pub optimizer: OptimizerKind,
    pub init: InitSpec,
    /// Total dense layers, including the final class layer.
    pub layer_count: usize,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl ModelConfig {
    pub fn new(
        hidden_width: usize,
        activation: Activation,
        optimizer: OptimizerKind,
        init: InitSpec,
    ) -> Self {
        Self {
            hidden_width,
            activation,
            optimizer,
            init,
            layer_count: 3,
            seed: 0,
            epochs: 100,
            batch_size: 32,
            learning_rate: optimizer.default_learning_rate(),
        }
    }

    /// The five canonical model configurations, in order.
    pub fn canonical() -> [ModelConfig; 5] {
        use Activation::*;
        use BiasInit as B;
        use OptimizerKind::*;
        use WeightInit as W;
        [
            Self::new(200, Relu, Sgd, InitSpec::new(W::RandomUniform, B::Zeros)),
            Self::new(200, Tanh, Adamax, InitSpec::new(W::RandomUniform, B::Ones)),
            Self::new(250, Relu, Adadelta, InitSpec::new(W::RandomNormal, B::Constant)),
            Self::new(250, Tanh, Adamax, InitSpec::new(W::RandomUniform, B::Ones)),
            Self::new(300, Tanh, Adagrad, InitSpec::new(W::RandomNormal, B::RandomNormal)),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        self.init.validate()?;
        if self.hidden_width == 0 {
            return Err(Error::Invalid("hidden_width must be positive".into()));
        }
        if self.layer_count == 0 {
            return Err(Error::Invalid("layer_count must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Invalid("learning_rate must be positive".into()));
        }
        Ok(())
    }

    pub fn layer_specs(&self, input_dim: usize, class_count: usize) -> Vec<LayerSpec> {
        let mut specs = Vec::with_capacity(self.layer_count);
        let mut in_dim = input_dim;
        for _ in 1..self.layer_count {
            specs.push(LayerSpec {
                in_dim,
                out_dim: self.hidden_width,
                activation: self.activation,
            });
            in_dim = self.hidden_width;
        }
        specs.push(LayerSpec {
            in_dim,
            out_dim: class_count,
            activation: Activation::Linear,
        });
        specs
    }
}

/// Weights are stored `out_dim × in_dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub biases: Vector,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    fn forward_into(&self, x: &[f64], z: &mut Vec<f64>, a: &mut Vec<f64>) {
        z.clear();
        z.extend(
            self.weights
                .iter_rows()
                .zip(self.biases.iter())
                .map(|(w, b)| crate::math::dot(w, x) + b),
        );
        a.clear();
        a.extend(z.iter().map(|&v| self.activation.apply(v)));
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseNetwork {
    layers: Vec<DenseLayer>,
    input_dim: usize,
    class_count: usize,
    pub config: ModelConfig,
    /// Min-max parameters the network was trained under, if any.
    pub normalization: Option<NormalizationParams>,
}

/// Per-layer intermediate values of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub pre_activations: Vec<Vec<f64>>,
    pub activations: Vec<Vec<f64>>,
    pub penultimate: Vec<f64>,
    pub probabilities: Vec<f64>,
}

impl ForwardTrace {
    pub fn predicted_class(&self) -> usize {
        argmax(&self.probabilities)
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `log Σ exp(o) − o[label]`.
pub fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - logits[label]
}

pub fn init_network(
    config: &ModelConfig,
    input_dim: usize,
    class_count: usize,
) -> Result<DenseNetwork> {
    if input_dim == 0 || class_count == 0 {
        return Err(Error::out_of_range(
            "network dims",
            format!("input_dim = {input_dim}, class_count = {class_count}"),
        ));
    }
    config.validate()?;
    let mut rng = Rng::new(config.seed);
    let layers = config
        .layer_specs(input_dim, class_count)
        .into_iter()
        .map(|spec| init_layer(&spec, &config.init, &mut rng))
        .collect();
    DenseNetwork::from_layers(layers, config.clone())
}

fn init_layer(spec: &LayerSpec, init: &InitSpec, rng: &mut Rng) -> DenseLayer {
    let fan = (spec.in_dim + spec.out_dim) as f64;
    let n = spec.in_dim * spec.out_dim;
    let weights: Vec<f64> = match init.weight_init {
        WeightInit::RandomUniform => {
            let s = (6.0 / fan).sqrt();
            (0..n).map(|_| rng.uniform_range(-s, s)).collect()
        }
        WeightInit::RandomNormal => {
            let std = (2.0 / fan).sqrt();
            (0..n).map(|_| rng.normal(0.0, std)).collect()
        }
    };
    let biases: Vec<f64> = match init.bias_init {
        BiasInit::Zeros => vec![0.0; spec.out_dim],
        BiasInit::Ones => vec![1.0; spec.out_dim],
        BiasInit::Constant => vec![init.constant_value.unwrap_or(DEFAULT_BIAS_CONSTANT); spec.out_dim],
        BiasInit::RandomNormal => (0..spec.out_dim)
            .map(|_| rng.normal(0.0, BIAS_NORMAL_STD))
            .collect(),
    };
    DenseLayer {
        weights: Matrix::from_raw(spec.out_dim, spec.in_dim, weights),
        biases: Vector::from(biases),
        activation: spec.activation,
    }
}

impl DenseNetwork {
    /// Assembles a network from explicit layers; dims must chain.
    pub fn from_layers(layers: Vec<DenseLayer>, config: ModelConfig) -> Result<Self> {
        let first = layers
            .first()
            .ok_or_else(|| Error::Invalid("a network needs at least one layer".into()))?;
        let input_dim = first.in_dim();
        let mut prev = input_dim;
        for layer in &layers {
            if layer.in_dim() != prev || layer.biases.len() != layer.out_dim() {
                return Err(Error::DimensionMismatch {
                    op: "DenseNetwork::from_layers",
                    left: (prev, prev),
                    right: layer.weights.shape(),
                });
            }
            if layer.out_dim() == 0 {
                return Err(Error::Invalid("layer with zero outputs".into()));
            }
            prev = layer.out_dim();
        }
        Ok(Self {
            layers,
            input_dim,
            class_count: prev,
            config,
            normalization: None,
        })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::DimensionMismatch {
                op: "forward",
                left: (1, self.input_dim),
                right: (1, x.len()),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        self.check_input(x)?;
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        let mut activations: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = activations.last().map_or(x, |a| a.as_slice());
            let (mut z, mut a) = (Vec::new(), Vec::new());
            layer.forward_into(input, &mut z, &mut a);
            pre_activations.push(z);
            activations.push(a);
        }
        let penultimate = activations.last().cloned().unwrap_or_default();
        let probabilities = softmax(&penultimate);
        Ok(ForwardTrace {
            pre_activations,
            activations,
            penultimate,
            probabilities,
        })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x)?.probabilities)
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }

    /// Penultimate outputs for every row of `inputs` (`rows × class_count`).
    pub fn penultimate_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        if inputs.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                op: "penultimate_batch",
                left: (inputs.rows(), self.input_dim),
                right: inputs.shape(),
            });
        }
        let rows = inputs.rows();
        let mut current = inputs.as_slice().to_vec();
        for layer in &self.layers {
            let (out, inp) = (layer.out_dim(), layer.in_dim());
            let mut z = vec![0.0; rows * out];
            gemm_nt(&current, layer.weights.as_slice(), rows, inp, out, &mut z);
            for r in 0..rows {
                for (zj, b) in z[r * out..(r + 1) * out].iter_mut().zip(layer.biases.iter()) {
                    *zj = layer.activation.apply(*zj + b);
                }
            }
            current = z;
        }
        Ok(Matrix::from_raw(rows, self.class_count, current))
    }

    /// Class probabilities for every row of `inputs`.
    pub fn predict_proba_batch(&self, inputs: &Matrix) -> Result<Matrix> {
        let mut out = self.penultimate_batch(inputs)?;
        for r in 0..out.rows() {
            let p = softmax(out.row(r));
            out.row_mut(r).copy_from_slice(&p);
        }
        Ok(out)
    }

    pub fn predict_batch(&self, inputs: &Matrix) -> Result<Vec<usize>> {
        let p = self.penultimate_batch(inputs)?;
        Ok(p.iter_rows().map(argmax).collect())
    }

    /// Cross-entropy loss of one sample.
    pub fn loss(&self, x: &[f64], label: usize) -> Result<f64> {
        self.check_label(label)?;
        Ok(cross_entropy(&self.forward(x)?.penultimate, label))
    }

    fn check_label(&self, label: usize) -> Result<()> {
        if label >= self.class_count {
            return Err(Error::InvalidLabel {
                label,
                class_count: self.class_count,
            });
        }
        Ok(())
    }

    /// Gradient of the cross-entropy loss with respect to the input `x`.
    pub fn loss_grad_input(&self, x: &[f64], label: usize) -> Result<Vec<f64>> {
        self.check_label(label)?;
        let trace = self.forward(x)?;
        let mut delta = trace.probabilities.clone();
        delta[label] -= 1.0;
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let z = &trace.pre_activations[l];
            let a = &trace.activations[l];
            for (j, d) in delta.iter_mut().enumerate() {
                *d *= layer.activation.derivative(z[j], a[j]);
            }
            let mut prev = vec![0.0; layer.in_dim()];
            gemm_nn(
                &delta,
                layer.weights.as_slice(),
                1,
                layer.out_dim(),
                layer.in_dim(),
                &mut prev,
            );
            delta = prev;
        }
        Ok(delta)
    }

    /// `J[i][j] = ∂O_i / ∂x_j` for the penultimate (pre-softmax) output `O`.
    /// Each output row is one backward pass; all rows are propagated together.
    pub fn penultimate_jacobian(&self, x: &[f64]) -> Result<Matrix> {
        let trace = self.forward(x)?;
        Ok(self.jacobian_from_trace(&trace))
    }

    pub(crate) fn jacobian_from_trace(&self, trace: &ForwardTrace) -> Matrix {
        let c = self.class_count;
        let mut g = Matrix::identity(c).into_vec();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let (out, inp) = (layer.out_dim(), layer.in_dim());
            let z = &trace.pre_activations[l];
            let a = &trace.activations[l];
            let deriv: Vec<f64> = (0..out)
                .map(|j| layer.activation.derivative(z[j], a[j]))
                .collect();
            for row in g.chunks_exact_mut(out) {
                row.iter_mut().zip(&deriv).for_each(|(v, d)| *v *= d);
            }
            let mut next = vec![0.0; c * inp];
            gemm_nn(&g, layer.weights.as_slice(), c, out, inp, &mut next);
            g = next;
        }
        Matrix::from_raw(c, self.input_dim, g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_layer(rows: &[&[f64]], bias: &[f64], activation: Activation) -> DenseLayer {
        DenseLayer {
            weights: Matrix::from_rows(rows).unwrap(),
            biases: Vector::from(bias.to_vec()),
            activation,
        }
    }

    fn cfg() -> ModelConfig {
        ModelConfig::canonical()[0].clone()
    }

    #[test]
    fn canonical_model_one_shapes() {
        let net = init_network(&ModelConfig::canonical()[0], 7, 2).unwrap();
        let shapes: Vec<_> = net.layers().iter().map(|l| l.weights.shape()).collect();
        assert_eq!(shapes, vec![(200, 7), (200, 200), (2, 200)]);
        assert!(net.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.0)));
        assert_eq!(net.layers()[0].activation, Activation::Relu);
        assert_eq!(net.layers()[2].activation, Activation::Linear);
    }

    #[test]
    fn canonical_table() {
        let c = ModelConfig::canonical();
        let widths: Vec<_> = c.iter().map(|m| m.hidden_width).collect();
        assert_eq!(widths, vec![200, 200, 250, 250, 300]);
        assert_eq!(c[2].init.bias_init, BiasInit::Constant);
        assert_eq!(c[2].init.constant_value, Some(0.1));
        assert_eq!(c[4].optimizer, OptimizerKind::Adagrad);
        assert_eq!(c[1].learning_rate, 0.002);
        assert_eq!(c[2].learning_rate, 1.0);
    }

    #[test]
    fn init_is_deterministic_and_seed_sensitive() {
        let mut c = cfg();
        c.seed = 17;
        let a = init_network(&c, 5, 2).unwrap();
        let b = init_network(&c, 5, 2).unwrap();
        assert_eq!(a, b);
        c.seed = 18;
        assert_ne!(a, init_network(&c, 5, 2).unwrap());
    }

    #[test]
    fn bias_initializers() {
        let mut c = ModelConfig::canonical()[1].clone();
        let net = init_network(&c, 4, 3).unwrap();
        assert!(net.layers().iter().all(|l| l.biases.iter().all(|&b| b == 1.0)));
        c.init = InitSpec::new(WeightInit::RandomUniform, BiasInit::Constant);
        let net = init_network(&c, 4, 3).unwrap();
        assert!(net.layers().iter().all(|l| l.biases.iter().all(|&b| b == 0.1)));
        c.init.constant_value = None;
        assert!(init_network(&c, 4, 3).is_err());
    }

    #[test]
    fn uniform_init_within_bound() {
        let net = init_network(&cfg(), 50, 2).unwrap();
        let s = (6.0f64 / 250.0).sqrt();
        assert!(net.layers()[0]
            .weights
            .as_slice()
            .iter()
            .all(|w| w.abs() <= s));
    }

    #[test]
    fn identity_network_passes_input() {
        let layer = linear_layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0], Activation::Linear);
        let net = DenseNetwork::from_layers(vec![layer], cfg()).unwrap();
        let t = net.forward(&[0.2, 0.8]).unwrap();
        assert_eq!(t.penultimate, vec![0.2, 0.8]);
        let s: f64 = t.probabilities.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_relu_forward() {
        // hidden: z = [[1,-1],[2,1]]·x + [0, -1], relu; out: [[1,2],[-1,1]]·h + [0.5, 0]
        let hidden = linear_layer(&[&[1.0, -1.0], &[2.0, 1.0]], &[0.0, -1.0], Activation::Relu);
        let out = linear_layer(&[&[1.0, 2.0], &[-1.0, 1.0]], &[0.5, 0.0], Activation::Linear);
        let net = DenseNetwork::from_layers(vec![hidden, out], cfg()).unwrap();
        // x = [0.5, 1.0]: z1 = [-0.5, 1.0] -> h = [0, 1]; o = [2.5, 1.0]
        let t = net.forward(&[0.5, 1.0]).unwrap();
        assert_eq!(t.pre_activations[0], vec![-0.5, 1.0]);
        assert_eq!(t.activations[0], vec![0.0, 1.0]);
        assert_eq!(t.penultimate, vec![2.5, 1.0]);
        // p0 = 1 / (1 + e^{-1.5})
        let p0 = 1.0 / (1.0 + (-1.5f64).exp());
        assert!((t.probabilities[0] - p0).abs() < 1e-15);
    }

    #[test]
    fn softmax_shift_invariance() {
        let o = [1.0, -2.0, 0.5];
        let shifted: Vec<f64> = o.iter().map(|v| v + 123.0).collect();
        let a = softmax(&o);
        let b = softmax(&shifted);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-9);
            assert!(*x >= 0.0);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(softmax(&[1000.0, -1000.0]).iter().all(|p| p.is_finite()));
    }

    #[test]
    fn dimension_and_label_errors() {
        let net = init_network(&cfg(), 3, 2).unwrap();
        assert!(matches!(
            net.forward(&[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            net.loss_grad_input(&[0.1, 0.2, 0.3], 2),
            Err(Error::InvalidLabel { .. })
        ));
    }

    #[test]
    fn linear_model_input_gradient_closed_form() {
        let w = [[0.3, -0.7, 1.1], [-0.2, 0.5, 0.4]];
        let layer = linear_layer(&[&w[0], &w[1]], &[0.1, -0.3], Activation::Linear);
        let net = DenseNetwork::from_layers(vec![layer], cfg()).unwrap();
        let x = [0.4, 0.1, 0.9];
        let p = net.predict_proba(&x).unwrap();
        let g = net.loss_grad_input(&x, 1).unwrap();
        for j in 0..3 {
            let expect = p[0] * w[0][j] + (p[1] - 1.0) * w[1][j];
            assert!((g[j] - expect).abs() < 1e-14);
        }
    }

    #[test]
    fn batch_forward_matches_single() {
        let mut c = ModelConfig::canonical()[3].clone();
        c.hidden_width = 9;
        let net = init_network(&c, 4, 3).unwrap();
        let mut rng = Rng::new(2);
        let xs = Matrix::new(5, 4, (0..20).map(|_| rng.uniform()).collect()).unwrap();
        let batch = net.predict_proba_batch(&xs).unwrap();
        for i in 0..5 {
            let single = net.predict_proba(xs.row(i)).unwrap();
            for (a, b) in single.iter().zip(batch.row(i)) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn linear_jacobian_is_weight_product() {
        let l1 = linear_layer(&[&[1.0, 2.0, 0.0], &[0.5, -1.0, 3.0]], &[1.0, 1.0], Activation::Linear);
        let l2 = linear_layer(&[&[2.0, -1.0], &[0.0, 4.0]], &[0.0, 0.0], Activation::Linear);
        let w_product = l2.weights.matmul(&l1.weights).unwrap();
        let net = DenseNetwork::from_layers(vec![l1, l2], cfg()).unwrap();
        let j = net.penultimate_jacobian(&[0.3, 0.2, 0.1]).unwrap();
        assert!(j.max_abs_diff(&w_product) < 1e-10);
    }
}
