use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::diff::JacobianDiffVector;
use crate::error::{Error, Result};
use crate::math::{dot, standardize, Vector};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub corr_threshold: f64,
    pub min_size: usize,
    pub max_clusters: usize,
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if !(-1.0..=1.0).contains(&self.corr_threshold) {
            return Err(Error::out_of_range(
                "corr_threshold",
                format!("{} not in [-1, 1]", self.corr_threshold),
            ));
        }
        if self.min_size < 2 {
            return Err(Error::out_of_range("min_size", "must be at least 2"));
        }
        Ok(())
    }
}

/// A set of diff vectors of one model whose pairwise correlations all reach
/// the threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub model_id: usize,
    /// Sample ids in admission order; the first two formed the seed pair.
    pub member_ids: Vec<usize>,
    /// For each member, its minimum correlation to the members admitted
    /// before it (the seed pair both carry their mutual correlation).
    pub admission_correlations: Vec<f64>,
    pub mean: Vector,
    pub corr_threshold_used: f64,
    /// 0-based position among the model's kept clusters.
    pub formation_order: usize,
    pub class_pair: (usize, usize),
}

impl Cluster {
    pub fn size(&self) -> usize {
        self.member_ids.len()
    }
}

/// Pairwise correlations of standardized vectors. Rows of degenerate
/// vectors are left invalid.
pub(crate) struct CorrelationTable {
    n: usize,
    valid: Vec<bool>,
    values: Vec<f64>,
}

impl CorrelationTable {
    pub(crate) fn new(vectors: &[&[f64]]) -> Self {
        let n = vectors.len();
        let std: Vec<Option<Vec<f64>>> = vectors.iter().map(|v| standardize(v)).collect();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            let Some(a) = &std[i] else { continue };
            values[i * n + i] = 1.0;
            for j in i + 1..n {
                if let Some(b) = &std[j] {
                    let r = dot(a, b).clamp(-1.0, 1.0);
                    values[i * n + j] = r;
                    values[j * n + i] = r;
                }
            }
        }
        Self {
            n,
            valid: std.iter().map(Option::is_some).collect(),
            values,
        }
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }
}

/// One greedily grown set: member positions and admission correlations.
pub(crate) struct GreedySet {
    pub members: Vec<usize>,
    pub admissions: Vec<f64>,
}

/// Greedy correlation clustering over a precomputed table.
///
/// Seeds are taken from the remaining pairs in descending correlation
/// (ties by position). A set grows by admitting the candidate whose minimum
/// correlation to the current members is largest (ties to the lowest
/// position) while that minimum reaches `threshold`. Sets smaller than
/// `min_size` are dropped and their members leave the pool. At most
/// `max_sets` sets are kept.
pub(crate) fn greedy_sets(
    table: &CorrelationTable,
    threshold: f64,
    min_size: usize,
    max_sets: usize,
) -> Vec<GreedySet> {
    let n = table.n;
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for i in 0..n {
        if !table.valid[i] {
            continue;
        }
        for j in i + 1..n {
            if table.valid[j] && table.get(i, j) >= threshold {
                pairs.push((table.get(i, j), i, j));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut in_pool = table.valid.clone();
    let mut kept = Vec::new();
    let mut next_pair = 0;
    while kept.len() < max_sets {
        while next_pair < pairs.len() && !(in_pool[pairs[next_pair].1] && in_pool[pairs[next_pair].2]) {
            next_pair += 1;
        }
        let Some(&(r, a, b)) = pairs.get(next_pair) else { break };
        in_pool[a] = false;
        in_pool[b] = false;
        let mut set = GreedySet {
            members: vec![a, b],
            admissions: vec![r, r],
        };
        // Minimum correlation of every candidate to the current members.
        let mut candidates: Vec<(usize, f64)> = (0..n)
            .filter(|&c| in_pool[c])
            .map(|c| (c, table.get(c, a).min(table.get(c, b))))
            .collect();
        loop {
            let mut best: Option<(usize, f64)> = None;
            for (pos, &(_, m)) in candidates.iter().enumerate() {
                if m >= threshold && best.is_none_or(|(_, bm)| m > bm) {
                    best = Some((pos, m));
                }
            }
            let Some((pos, m)) = best else { break };
            let (c, _) = candidates.remove(pos);
            in_pool[c] = false;
            set.members.push(c);
            set.admissions.push(m);
            for (other, om) in candidates.iter_mut() {
                *om = om.min(table.get(*other, c));
            }
        }
        if set.members.len() >= min_size {
            kept.push(set);
        }
    }
    kept
}

pub(crate) fn mean_of(vectors: &[&[f64]]) -> Vector {
    let d = vectors.first().map_or(0, |v| v.len());
    let mut out = vec![0.0; d];
    for v in vectors {
        out.iter_mut().zip(*v).for_each(|(o, x)| *o += x);
    }
    let inv = 1.0 / vectors.len() as f64;
    out.iter_mut().for_each(|o| *o *= inv);
    Vector::from(out)
}

/// Greedy correlation clustering of one model's diff vectors.
///
/// Vectors are bucketed by class pair (in ascending pair order) and
/// clustered within each bucket; `max_clusters` bounds the total. Degenerate
/// (constant) vectors never join a cluster. Positions in `vectors` break
/// ties, so pass them sorted by sample id.
pub fn greedy_cluster(vectors: &[JacobianDiffVector], params: &ClusterParams) -> Result<Vec<Cluster>> {
    params.validate()?;
    let Some(first) = vectors.first() else {
        return Ok(Vec::new());
    };
    let model_id = first.model_id;
    let dim = first.values.len();
    if let Some(v) = vectors.iter().find(|v| v.model_id != model_id) {
        return Err(Error::Invalid(format!(
            "greedy_cluster expects one model, got ids {model_id} and {}",
            v.model_id
        )));
    }
    if let Some(v) = vectors.iter().find(|v| v.values.len() != dim) {
        return Err(Error::DimensionMismatch {
            op: "greedy_cluster",
            left: (dim, 1),
            right: (v.values.len(), 1),
        });
    }

    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, v) in vectors.iter().enumerate() {
        buckets.entry(v.class_pair).or_default().push(i);
    }
    let mut clusters = Vec::new();
    for (pair, positions) in buckets {
        let budget = params.max_clusters - clusters.len();
        if budget == 0 {
            break;
        }
        let slices: Vec<&[f64]> = positions.iter().map(|&p| &vectors[p].values[..]).collect();
        let table = CorrelationTable::new(&slices);
        for set in greedy_sets(&table, params.corr_threshold, params.min_size, budget) {
            let members: Vec<&[f64]> = set.members.iter().map(|&m| slices[m]).collect();
            clusters.push(Cluster {
                model_id,
                member_ids: set.members.iter().map(|&m| vectors[positions[m]].sample_id).collect(),
                admission_correlations: set.admissions,
                mean: mean_of(&members),
                corr_threshold_used: params.corr_threshold,
                formation_order: clusters.len(),
                class_pair: pair,
            });
        }
    }
    Ok(clusters)
}
