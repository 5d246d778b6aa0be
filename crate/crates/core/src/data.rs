//! Tabular datasets: CSV ingestion, min-max normalization, seeded splits and
//! the synthetic in-distribution / out-of-distribution generators.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{dot, Matrix, Rng, Vector};

/// Numeric features with integer class labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub feature_names: Vec<String>,
    pub class_count: usize,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<usize>,
        feature_names: Vec<String>,
        class_count: usize,
    ) -> Result<Self> {
        if labels.len() != features.rows() {
            return Err(Error::DimensionMismatch {
                op: "Dataset::new (labels)",
                left: features.shape(),
                right: (labels.len(), 1),
            });
        }
        if feature_names.len() != features.cols() {
            return Err(Error::DimensionMismatch {
                op: "Dataset::new (feature names)",
                left: features.shape(),
                right: (1, feature_names.len()),
            });
        }
        if let Some(&label) = labels.iter().find(|&&l| l >= class_count) {
            return Err(Error::InvalidLabel { label, class_count });
        }
        Ok(Self {
            features,
            labels,
            feature_names,
            class_count,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn sample(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            feature_names: self.feature_names.clone(),
            class_count: self.class_count,
        }
    }
}

/// Reads a headed CSV; every column except `label_column` becomes a feature.
/// Labels must be non-negative integers; `class_count` is `max label + 1`.
/// Rows in error messages are 1-based data rows (the header is not counted).
pub fn load_csv(path: impl AsRef<Path>, label_column: &str) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let label_idx = headers
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| Error::UnknownColumn(label_column.to_string()))?;
    let feature_names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != label_idx)
        .map(|(_, h)| h.clone())
        .collect();

    let mut data = Vec::new();
    let mut labels = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record?;
        let row = r + 1;
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            let value: f64 = cell
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| Error::NonNumericCell {
                    row,
                    column: headers[c].clone(),
                    value: cell.to_string(),
                })?;
            if c == label_idx {
                if value < 0.0 || value.fract() != 0.0 {
                    return Err(Error::NonNumericCell {
                        row,
                        column: headers[c].clone(),
                        value: cell.to_string(),
                    });
                }
                labels.push(value as usize);
            } else {
                data.push(value);
            }
        }
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let class_count = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let features = Matrix::new(labels.len(), feature_names.len(), data)?;
    Dataset::new(features, labels, feature_names, class_count)
}

/// Writes a dataset as CSV with the label in a trailing `label` column.
pub fn write_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = data.feature_names.clone();
    header.push("label".to_string());
    w.write_record(&header)?;
    for (i, &label) in data.labels.iter().enumerate() {
        let mut rec: Vec<String> = data.sample(i).iter().map(|v| format_real(*v)).collect();
        rec.push(label.to_string());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Shortest representation that parses back to the same `f64`.
pub fn format_real(v: f64) -> String {
    format!("{v}")
}

/// Per-feature minimum and maximum of a training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormalizationParams {
    pub fn dim(&self) -> usize {
        self.min.len()
    }

    /// `(x − min) / (max − min)`; constant features map to 0. Values outside
    /// the fitted range are not clipped.
    pub fn apply_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                op: "normalize",
                left: (1, self.dim()),
                right: (1, x.len()),
            });
        }
        Ok(x.iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(v, (lo, hi))| {
                let range = hi - lo;
                if range > 0.0 {
                    (v - lo) / range
                } else {
                    0.0
                }
            })
            .collect())
    }

    pub fn apply_matrix(&self, m: &Matrix) -> Result<Matrix> {
        let mut data = Vec::with_capacity(m.rows() * m.cols());
        for row in m.iter_rows() {
            data.extend(self.apply_row(row)?);
        }
        Ok(Matrix::from_raw(m.rows(), self.dim(), data))
    }
}

pub fn fit_normalize(train: &Dataset) -> Result<NormalizationParams> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = train.input_dim();
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in train.features.iter_rows() {
        for (j, &v) in row.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(NormalizationParams { min, max })
}

pub fn apply_normalize(params: &NormalizationParams, data: &Dataset) -> Result<Dataset> {
    Ok(Dataset {
        features: params.apply_matrix(&data.features)?,
        labels: data.labels.clone(),
        feature_names: data.feature_names.clone(),
        class_count: data.class_count,
    })
}

/// Seeded shuffle, then the first `round(fraction · n)` samples form the
/// training split.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if data.len() < 2 {
        return Err(Error::out_of_range("dataset size", "split needs at least 2 samples"));
    }
    if !(0.0..=1.0).contains(&train_fraction) || train_fraction == 0.0 {
        return Err(Error::out_of_range(
            "train_fraction",
            format!("{train_fraction} not in (0, 1]"),
        ));
    }
    let (train_idx, test_idx) = split_indices(data.len(), train_fraction, seed);
    if test_idx.is_empty() {
        log::warn!("train fraction {train_fraction} leaves an empty test split");
    }
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    Rng::new(seed).shuffle(&mut idx);
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n);
    let test = idx.split_off(n_train);
    (idx, test)
}

/// Parameters of the two-Gaussian (or multi-class, means on a line) synthetic
/// generator.
///
/// Each sample is `x = (c − (C−1)/2)·separation·w + noise·(g₀·w + Σᵢ gᵢ·uᵢ) +
/// ambient_noise·η`, where `w` is a seeded random unit vector, the `uᵢ` are
/// `latent_rank − 1` further orthonormal directions, and `g`, `η` are standard
/// normal. The data therefore lives close to a `latent_rank`-dimensional
/// subspace containing `w`. Features are finally min-max scaled into `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub samples: usize,
    pub input_dim: usize,
    pub class_count: usize,
    pub separation: f64,
    pub noise: f64,
    pub latent_rank: usize,
    pub ambient_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            samples: 1000,
            input_dim: 10,
            class_count: 2,
            separation: 6.0,
            noise: 1.0,
            latent_rank: 5,
            ambient_noise: 0.1,
            seed: 0,
        }
    }
}

pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<(Dataset, Vector)> {
    let d = spec.input_dim;
    if spec.samples < 2 || d < 2 {
        return Err(Error::out_of_range(
            "synthetic spec",
            "need samples >= 2 and input_dim >= 2",
        ));
    }
    if spec.class_count < 2 {
        return Err(Error::out_of_range("class_count", "need at least 2 classes"));
    }
    let rank = spec.latent_rank.clamp(1, d);
    let mut rng = Rng::new(spec.seed);

    // Orthonormal basis: first vector is the discriminative direction.
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rank);
    while basis.len() < rank {
        let mut v: Vec<f64> = (0..d).map(|_| rng.standard_normal()).collect();
        for b in &basis {
            let p = dot(&v, b);
            v.iter_mut().zip(b).for_each(|(vi, bi)| *vi -= p * bi);
        }
        let n = dot(&v, &v).sqrt();
        if n < 1e-8 {
            continue;
        }
        v.iter_mut().for_each(|vi| *vi /= n);
        basis.push(v);
    }
    let direction = basis[0].clone();

    let center = (spec.class_count as f64 - 1.0) / 2.0;
    let mut raw = Vec::with_capacity(spec.samples * d);
    let mut labels = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let class = i % spec.class_count;
        let shift = (class as f64 - center) * spec.separation;
        let mut x: Vec<f64> = direction.iter().map(|w| shift * w).collect();
        for b in &basis {
            let g = spec.noise * rng.standard_normal();
            x.iter_mut().zip(b).for_each(|(xi, bi)| *xi += g * bi);
        }
        for xi in x.iter_mut() {
            *xi += spec.ambient_noise * rng.standard_normal();
        }
        raw.extend(x);
        labels.push(class);
    }
    // Shuffle sample order so classes are not interleaved by construction.
    let mut order: Vec<usize> = (0..spec.samples).collect();
    rng.shuffle(&mut order);
    let raw = Matrix::from_raw(spec.samples, d, raw).select_rows(&order);
    let labels: Vec<usize> = order.iter().map(|&i| labels[i]).collect();

    let names = (0..d).map(|j| format!("f{j}")).collect();
    let unscaled = Dataset::new(raw, labels, names, spec.class_count)?;
    let params = fit_normalize(&unscaled)?;
    let scaled = apply_normalize(&params, &unscaled)?;
    Ok((scaled, Vector::from(direction)))
}

/// `count` points uniform on `[0, 1]^input_dim`.
pub fn gen_ood(count: usize, input_dim: usize, seed: u64) -> Result<Matrix> {
    if count == 0 {
        return Err(Error::out_of_range("count", "need at least one sample"));
    }
    let mut rng = Rng::new(seed);
    let data = (0..count * input_dim).map(|_| rng.uniform()).collect();
    Ok(Matrix::from_raw(count, input_dim, data))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn loads_small_csv() {
        let f = write_tmp("a,b,y\n1,2,0\n3,4,1\n5,6,1\n");
        let ds = load_csv(f.path(), "y").unwrap();
        assert_eq!(ds.input_dim(), 2);
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.class_count, 2);
        assert_eq!(ds.feature_names, vec!["a", "b"]);
        assert_eq!(ds.sample(2), &[5.0, 6.0]);
    }

    #[test]
    fn label_column_anywhere() {
        let f = write_tmp("y,a\n1,0.5\n0,0.25\n");
        let ds = load_csv(f.path(), "y").unwrap();
        assert_eq!(ds.labels, vec![1, 0]);
        assert_eq!(ds.feature_names, vec!["a"]);
    }

    #[test]
    fn non_numeric_cell_reports_position() {
        let f = write_tmp("a,b,y\n1,2,0\n3,abc,1\n5,6,1\n");
        let err = load_csv(f.path(), "y").unwrap_err();
        match &err {
            Error::NonNumericCell { row, column, .. } => {
                assert_eq!(*row, 2);
                assert_eq!(column, "b");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(err.to_string().contains("row 2, column b"));
    }

    #[test]
    fn unknown_label_and_missing_file() {
        let f = write_tmp("a,b\n1,2\n");
        assert!(matches!(load_csv(f.path(), "y"), Err(Error::UnknownColumn(_))));
        assert!(matches!(
            load_csv("/nonexistent/file.csv", "y"),
            Err(Error::Io { .. })
        ));
    }

    fn tiny(rows: &[[f64; 2]]) -> Dataset {
        let m = Matrix::from_rows(rows).unwrap();
        let n = m.rows();
        Dataset::new(m, vec![0; n], vec!["a".into(), "b".into()], 2).unwrap()
    }

    #[test]
    fn normalization_examples() {
        let train = tiny(&[[0.0, 3.0], [10.0, 3.0], [5.0, 3.0]]);
        let p = fit_normalize(&train).unwrap();
        let out = apply_normalize(&p, &train).unwrap();
        assert_eq!(out.sample(2), &[0.5, 0.0]);
        assert_eq!(out.features.column(1), vec![0.0; 3]);
        // out-of-range test values are kept, not clipped
        assert_eq!(p.apply_row(&[20.0, 3.0]).unwrap(), vec![2.0, 0.0]);
        assert_eq!(p.apply_row(&[-5.0, 9.0]).unwrap(), vec![-0.5, 0.0]);
    }

    #[test]
    fn normalized_train_in_unit_box() {
        let (ds, _) = gen_synthetic(&SyntheticSpec {
            samples: 300,
            input_dim: 6,
            seed: 11,
            ..Default::default()
        })
        .unwrap();
        let (train, _) = split(&ds, 0.9, 1).unwrap();
        let p = fit_normalize(&train).unwrap();
        let n = apply_normalize(&p, &train).unwrap();
        for j in 0..n.input_dim() {
            let col = n.features.column(j);
            let lo = col.iter().cloned().fold(f64::MAX, f64::min);
            let hi = col.iter().cloned().fold(f64::MIN, f64::max);
            assert_eq!(lo, 0.0);
            assert_eq!(hi, 1.0);
        }
    }

    #[test]
    fn split_sizes_and_determinism() {
        let m = Matrix::new(100, 1, (0..100).map(f64::from).collect()).unwrap();
        let ds = Dataset::new(m, vec![0; 100], vec!["x".into()], 2).unwrap();
        let (tr, te) = split(&ds, 0.9, 5).unwrap();
        assert_eq!((tr.len(), te.len()), (90, 10));
        let (tr2, _) = split(&ds, 0.9, 5).unwrap();
        assert_eq!(tr, tr2);
        // Seeds 5 and 6 were checked once to give different partitions.
        let (tr3, _) = split(&ds, 0.9, 6).unwrap();
        assert_ne!(tr, tr3);

        let (all, none) = split(&ds, 1.0, 5).unwrap();
        assert_eq!((all.len(), none.len()), (100, 0));
    }

    #[test]
    fn split_partitions_indices() {
        for seed in 0..20 {
            let (mut a, b) = split_indices(37, 0.7, seed);
            a.extend(b);
            a.sort_unstable();
            assert_eq!(a, (0..37).collect::<Vec<_>>());
        }
    }

    #[test]
    fn synthetic_direction_unit_and_range() {
        let (ds, w) = gen_synthetic(&SyntheticSpec {
            samples: 200,
            input_dim: 8,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        assert!((w.norm() - 1.0).abs() < 1e-12);
        assert!(ds.features.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 100);
        let (again, w2) = gen_synthetic(&SyntheticSpec {
            samples: 200,
            input_dim: 8,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(ds, again);
        assert_eq!(w, w2);
    }

    #[test]
    fn ood_uniform_properties() {
        let m = gen_ood(10_000, 5, 8).unwrap();
        assert!(m.as_slice().iter().all(|v| (0.0..=1.0).contains(v)));
        let mean = crate::math::mean(m.as_slice());
        assert!((0.49..=0.51).contains(&mean), "{mean}");
        assert_eq!(m, gen_ood(10_000, 5, 8).unwrap());
        assert!(gen_ood(0, 5, 8).is_err());
    }
}
