//! Single-step fast-gradient-sign (FGSM) attacks and how an ensemble
//! treats the perturbed samples.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::consensus::{consensus_classify, ensemble_probs, ConsensusParams, Verdict};
use crate::data::format_real;
use crate::error::{Error, Result};
use crate::math::Matrix;
use crate::nn::DenseNetwork;

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::out_of_range("epsilon", format!("{epsilon} must be finite and >= 0")));
    }
    Ok(())
}

/// `clip(x + ε · sign(∇ₓ loss), 0, 1)` with `sign(0) = 0`.
pub fn fgsm(model: &DenseNetwork, x: &[f64], label: usize, epsilon: f64) -> Result<Vec<f64>> {
    check_epsilon(epsilon)?;
    let grad = model.loss_grad_input(x, label)?;
    Ok(x.iter()
        .zip(&grad)
        .map(|(xi, g)| (xi + epsilon * sign(*g)).clamp(0.0, 1.0))
        .collect())
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdversarialBatch {
    pub originals: Matrix,
    pub perturbed: Matrix,
    pub labels: Vec<usize>,
    pub epsilon: f64,
    pub source_model_id: usize,
}

/// Sidecar written next to a batch CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchMetadata {
    pub epsilon: f64,
    pub source_model_id: usize,
    pub seed: u64,
    pub samples: usize,
    pub input_dim: usize,
}

pub fn fgsm_batch(
    model: &DenseNetwork,
    source_model_id: usize,
    originals: &Matrix,
    labels: &[usize],
    epsilon: f64,
) -> Result<AdversarialBatch> {
    if originals.rows() != labels.len() {
        return Err(Error::DimensionMismatch {
            op: "fgsm_batch",
            left: originals.shape(),
            right: (labels.len(), 1),
        });
    }
    check_epsilon(epsilon)?;
    let mut data = Vec::with_capacity(originals.rows() * originals.cols());
    for (x, &l) in originals.iter_rows().zip(labels) {
        data.extend(fgsm(model, x, l, epsilon)?);
    }
    Ok(AdversarialBatch {
        originals: originals.clone(),
        perturbed: Matrix::new(originals.rows(), originals.cols(), data)?,
        labels: labels.to_vec(),
        epsilon,
        source_model_id,
    })
}

fn accuracy(model: &DenseNetwork, inputs: &Matrix, labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = model.predict_batch(inputs)?;
    let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Source-model accuracy at each ε of `grid`, and the smallest ε whose
/// accuracy falls below `target` (if any).
pub fn calibrate_epsilon(
    model: &DenseNetwork,
    originals: &Matrix,
    labels: &[usize],
    grid: &[f64],
    target: f64,
) -> Result<(Vec<(f64, f64)>, Option<f64>)> {
    let mut sweep = Vec::with_capacity(grid.len());
    for &eps in grid {
        let batch = fgsm_batch(model, 0, originals, labels, eps)?;
        sweep.push((eps, accuracy(model, &batch.perturbed, labels)?));
    }
    let chosen = sweep
        .iter()
        .filter(|(_, acc)| *acc < target)
        .map(|(eps, _)| *eps)
        .reduce(f64::min);
    Ok((sweep, chosen))
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsensusOutcomes {
    pub accepted_correct: usize,
    pub accepted_wrong: usize,
    pub rejected: usize,
}

impl ConsensusOutcomes {
    pub fn total(&self) -> usize {
        self.accepted_correct + self.accepted_wrong + self.rejected
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub epsilon: f64,
    pub source_model_id: usize,
    /// Source accuracy on the originals minus on the perturbed samples.
    pub source_accuracy_drop: f64,
    /// Accuracy of every model on the perturbed samples.
    pub per_model_accuracy: Vec<f64>,
    pub consensus_outcomes: ConsensusOutcomes,
}

pub fn transfer_eval(
    models: &[DenseNetwork],
    batch: &AdversarialBatch,
    params: &ConsensusParams,
) -> Result<TransferReport> {
    let source = models.get(batch.source_model_id).ok_or_else(|| {
        Error::out_of_range(
            "source_model_id",
            format!("{} with {} models", batch.source_model_id, models.len()),
        )
    })?;
    let clean = accuracy(source, &batch.originals, &batch.labels)?;
    let per_model_accuracy = models
        .iter()
        .map(|m| accuracy(m, &batch.perturbed, &batch.labels))
        .collect::<Result<Vec<_>>>()?;
    let mut outcomes = ConsensusOutcomes::default();
    for (x, &label) in batch.perturbed.iter_rows().zip(&batch.labels) {
        match consensus_classify(&ensemble_probs(models, x)?, params)?.verdict {
            Verdict::Accepted { class, .. } if class == label => outcomes.accepted_correct += 1,
            Verdict::Accepted { .. } => outcomes.accepted_wrong += 1,
            Verdict::Rejected => outcomes.rejected += 1,
        }
    }
    Ok(TransferReport {
        epsilon: batch.epsilon,
        source_model_id: batch.source_model_id,
        source_accuracy_drop: clean - per_model_accuracy[batch.source_model_id],
        per_model_accuracy,
        consensus_outcomes: outcomes,
    })
}

/// Writes `<stem>.csv` with columns `label,orig_0..,adv_0..` and
/// `<stem>.json` with the metadata.
pub fn save_batch(batch: &AdversarialBatch, seed: u64, dir: &Path, stem: &str) -> Result<()> {
    let d = batch.originals.cols();
    let mut header = vec!["label".to_string()];
    header.extend((0..d).map(|j| format!("orig_{j}")));
    header.extend((0..d).map(|j| format!("adv_{j}")));
    let mut out = header.join(",");
    out.push('\n');
    for i in 0..batch.labels.len() {
        let mut cells = vec![batch.labels[i].to_string()];
        cells.extend(batch.originals.row(i).iter().map(|&v| format_real(v)));
        cells.extend(batch.perturbed.row(i).iter().map(|&v| format_real(v)));
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let csv_path = dir.join(format!("{stem}.csv"));
    fs::write(&csv_path, out).map_err(|e| Error::io(&csv_path, e))?;
    let meta = BatchMetadata {
        epsilon: batch.epsilon,
        source_model_id: batch.source_model_id,
        seed,
        samples: batch.labels.len(),
        input_dim: d,
    };
    let json_path = dir.join(format!("{stem}.json"));
    let mut text = serde_json::to_string_pretty(&meta)?;
    text.push('\n');
    fs::write(&json_path, text).map_err(|e| Error::io(&json_path, e))?;
    Ok(())
}

pub fn load_batch(dir: &Path, stem: &str) -> Result<(AdversarialBatch, BatchMetadata)> {
    let json_path = dir.join(format!("{stem}.json"));
    let text = fs::read_to_string(&json_path).map_err(|e| Error::io(&json_path, e))?;
    let meta: BatchMetadata = serde_json::from_str(&text)?;
    let csv_path = dir.join(format!("{stem}.csv"));
    let mut reader = csv::Reader::from_path(&csv_path)?;
    let d = meta.input_dim;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let (mut labels, mut orig, mut adv) = (Vec::new(), Vec::new(), Vec::new());
    for (row, rec) in reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != 1 + 2 * d {
            return Err(Error::Invalid(format!(
                "{}: row {} has {} fields, expected {}",
                csv_path.display(),
                row + 1,
                rec.len(),
                1 + 2 * d
            )));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j].parse().map_err(|_| Error::NonNumericCell {
                row: row + 1,
                column: header[j].clone(),
                value: rec[j].to_string(),
            })
        };
        labels.push(rec[0].parse().map_err(|_| Error::NonNumericCell {
            row: row + 1,
            column: "label".into(),
            value: rec[0].to_string(),
        })?);
        for j in 0..d {
            orig.push(num(1 + j)?);
            adv.push(num(1 + d + j)?);
        }
    }
    let n = labels.len();
    Ok((
        AdversarialBatch {
            originals: Matrix::new(n, d, orig)?,
            perturbed: Matrix::new(n, d, adv)?,
            labels,
            epsilon: meta.epsilon,
            source_model_id: meta.source_model_id,
        },
        meta,
    ))
}
