//! JSON model documents. Every tensor entry is written as a decimal with 17
//! significant digits, which parses back to the identical `f64`.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{Activation, DenseLayer, DenseNetwork, ModelConfig};
use crate::data::NormalizationParams;
use crate::error::{Error, Result};
use crate::math::{Matrix, Vector};

const FORMAT: &str = "nkconsensus.dense-network";
const VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq)]
struct Real(f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let text = format!("{:.16e}", self.0);
        let number: serde_json::Number = text.parse().map_err(serde::ser::Error::custom)?;
        number.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let number = serde_json::Number::deserialize(d)?;
        number
            .to_string()
            .parse::<f64>()
            .map(Real)
            .map_err(serde::de::Error::custom)
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

fn unreal(v: Vec<Real>) -> Vec<f64> {
    v.into_iter().map(|r| r.0).collect()
}

#[derive(Serialize, Deserialize)]
struct LayerDoc {
    in_dim: usize,
    out_dim: usize,
    activation: Activation,
    weights: Vec<Real>,
    biases: Vec<Real>,
}

#[derive(Serialize, Deserialize)]
struct NormalizationDoc {
    min: Vec<Real>,
    max: Vec<Real>,
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    format: String,
    version: u32,
    input_dim: usize,
    class_count: usize,
    config: ModelConfig,
    normalization: Option<NormalizationDoc>,
    layers: Vec<LayerDoc>,
}

impl DenseNetwork {
    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDoc {
            format: FORMAT.to_string(),
            version: VERSION,
            input_dim: self.input_dim,
            class_count: self.class_count,
            config: self.config.clone(),
            normalization: self.normalization.as_ref().map(|n| NormalizationDoc {
                min: reals(&n.min),
                max: reals(&n.max),
            }),
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    in_dim: l.in_dim(),
                    out_dim: l.out_dim(),
                    activation: l.activation,
                    weights: reals(l.weights.as_slice()),
                    biases: reals(&l.biases),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.format != FORMAT || doc.version != VERSION {
            return Err(Error::Invalid(format!(
                "unsupported model document {} v{}",
                doc.format, doc.version
            )));
        }
        let layers = doc
            .layers
            .into_iter()
            .map(|l| {
                Ok(DenseLayer {
                    weights: Matrix::new(l.out_dim, l.in_dim, unreal(l.weights))?,
                    biases: Vector::new(unreal(l.biases))?,
                    activation: l.activation,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut net = DenseNetwork::from_layers(layers, doc.config)?;
        if net.input_dim != doc.input_dim || net.class_count != doc.class_count {
            return Err(Error::Invalid("model header disagrees with its layers".into()));
        }
        net.normalization = doc.normalization.map(|n| NormalizationParams {
            min: unreal(n.min),
            max: unreal(n.max),
        });
        Ok(net)
    }
}

pub fn save_model(net: &DenseNetwork, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, net.to_json()?).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<DenseNetwork> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    DenseNetwork::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::init_network;
    use proptest::prelude::*;

    #[test]
    fn seventeen_significant_digits() {
        let json = serde_json::to_string(&Real(0.1)).unwrap();
        assert_eq!(json, "1.0000000000000001e-1");
        let back: Real = serde_json::from_str(&json).unwrap();
        assert_eq!(back.0.to_bits(), 0.1f64.to_bits());
    }

    #[test]
    fn network_round_trip_is_bit_exact() {
        let mut c = ModelConfig::canonical()[4].clone();
        c.hidden_width = 7;
        c.seed = 99;
        let mut net = init_network(&c, 4, 3).unwrap();
        net.normalization = Some(NormalizationParams {
            min: vec![0.0, -1.5, 1e-300, 3.0],
            max: vec![1.0, 2.0 / 3.0, 1e300, 3.0],
        });
        let text = net.to_json().unwrap();
        let back = DenseNetwork::from_json(&text).unwrap();
        assert_eq!(back, net);
        assert_eq!(back.to_json().unwrap(), text);
    }

    #[test]
    fn rejects_foreign_documents() {
        assert!(DenseNetwork::from_json("{}").is_err());
        let net = init_network(&ModelConfig::canonical()[0], 2, 2).unwrap();
        let text = net.to_json().unwrap().replace(FORMAT, "something-else");
        assert!(DenseNetwork::from_json(&text).is_err());
    }

    proptest! {
        #[test]
        fn any_finite_real_round_trips(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let json = serde_json::to_string(&Real(v)).unwrap();
            let back: Real = serde_json::from_str(&json).unwrap();
            prop_assert_eq!(back.0.to_bits(), v.to_bits());
        }
    }
}
