use serde::Serialize;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedFeature {
    pub feature: String,
    pub contribution: f64,
}

/// Features sorted by signed contribution, most positive first. Positive
/// contributions push toward the positive class.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
}

impl FeatureRanking {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `m` highest-ranked features.
    pub fn top_positive(&self, m: usize) -> &[RankedFeature] {
        &self.entries[..m.min(self.entries.len())]
    }

    /// The `m` lowest-ranked features, most negative first.
    pub fn top_negative(&self, m: usize) -> Vec<&RankedFeature> {
        self.entries.iter().rev().take(m).collect()
    }

    /// `rank,feature,contribution`, ranks starting at 1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,feature,contribution\n");
        for (i, e) in self.entries.iter().enumerate() {
            out.push_str(&format!("{},{},{}\n", i + 1, e.feature, e.contribution));
        }
        out
    }

    /// Like [`to_csv`](Self::to_csv) with per-feature summary statistics of
    /// `data` appended (std, mean, median, min, max).
    pub fn to_csv_with_stats(&self, data: &Dataset) -> Result<String> {
        let mut out = String::from("rank,feature,contribution,std,mean,median,min,max\n");
        for (i, e) in self.entries.iter().enumerate() {
            let j = data
                .feature_names
                .iter()
                .position(|n| *n == e.feature)
                .ok_or_else(|| Error::UnknownColumn(e.feature.clone()))?;
            let s = summary(&data.features.column(j));
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                i + 1,
                e.feature,
                e.contribution,
                s[0],
                s[1],
                s[2],
                s[3],
                s[4]
            ));
        }
        Ok(out)
    }
}

/// `[std, mean, median, min, max]`; std is the population deviation.
fn summary(col: &[f64]) -> [f64; 5] {
    if col.is_empty() {
        return [0.0; 5];
    }
    let n = col.len() as f64;
    let mean = col.iter().sum::<f64>() / n;
    let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let mut sorted = col.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 0 {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    };
    [var.sqrt(), mean, median, sorted[0], sorted[sorted.len() - 1]]
}

/// Sorts features by signed value, descending; equal values keep input order.
pub fn feature_ranking(values: &[f64], names: &[String]) -> Result<FeatureRanking> {
    if values.len() != names.len() {
        return Err(Error::DimensionMismatch {
            op: "feature_ranking",
            left: (values.len(), 1),
            right: (names.len(), 1),
        });
    }
    let mut entries: Vec<RankedFeature> = values
        .iter()
        .zip(names)
        .map(|(&contribution, feature)| RankedFeature {
            feature: feature.clone(),
            contribution,
        })
        .collect();
    entries.sort_by(|a, b| b.contribution.total_cmp(&a.contribution));
    Ok(FeatureRanking { entries })
}

/// Overlap of the top `n/2` positive and top `n/2` negative features of two
/// rankings, divided by `n`. Order inside each slice is ignored.
pub fn topn_agreement(a: &FeatureRanking, b: &FeatureRanking, n: usize) -> Result<f64> {
    let len = a.len().min(b.len());
    if n == 0 || n % 2 != 0 || n > len {
        return Err(Error::out_of_range(
            "n",
            format!("need an even n in [2, {len}], got {n}"),
        ));
    }
    let half = n / 2;
    let overlap = |xs: Vec<&RankedFeature>, ys: Vec<&RankedFeature>| {
        xs.iter().filter(|x| ys.iter().any(|y| y.feature == x.feature)).count()
    };
    let pos = overlap(
        a.top_positive(half).iter().collect(),
        b.top_positive(half).iter().collect(),
    );
    let neg = overlap(a.top_negative(half), b.top_negative(half));
    Ok((pos + neg) as f64 / n as f64)
}
