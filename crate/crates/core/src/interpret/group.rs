use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cluster::{greedy_sets, mean_of, Cluster, CorrelationTable};
use crate::error::{Error, Result};
use crate::math::Vector;

/// Identifies a cluster by its model and formation order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ClusterRef {
    pub model_id: usize,
    pub formation_order: usize,
}

/// Clusters, usually from different models, whose means all correlate
/// pairwise at or above the group threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterGroup {
    pub id: usize,
    pub members: Vec<ClusterRef>,
    /// Unweighted mean of the member cluster means.
    pub group_mean: Vector,
    pub class_pair: (usize, usize),
    /// Pairwise correlations of member means, row-major, in member order.
    pub mean_correlations: Vec<Vec<f64>>,
}

impl ClusterGroup {
    /// Number of distinct models contributing a cluster.
    pub fn model_count(&self) -> usize {
        let mut ids: Vec<usize> = self.members.iter().map(|m| m.model_id).collect();
        ids.sort_unstable();
        ids.dedup();
        ids.len()
    }
}

/// Groups cluster means with the same greedy procedure used for clustering
/// (minimum group size 2, no cap). Clusters left over become singleton
/// groups. Only clusters with the same class pair are compared.
pub fn group_clusters(clusters: &[Cluster], group_threshold: f64) -> Result<Vec<ClusterGroup>> {
    if !(-1.0..=1.0).contains(&group_threshold) {
        return Err(Error::out_of_range(
            "group_threshold",
            format!("{group_threshold} not in [-1, 1]"),
        ));
    }
    if let Some(first) = clusters.first() {
        let d = first.mean.len();
        if let Some(c) = clusters.iter().find(|c| c.mean.len() != d) {
            return Err(Error::DimensionMismatch {
                op: "group_clusters",
                left: (d, 1),
                right: (c.mean.len(), 1),
            });
        }
    }
    let mut buckets: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (i, c) in clusters.iter().enumerate() {
        buckets.entry(c.class_pair).or_default().push(i);
    }
    let mut groups = Vec::new();
    for (pair, positions) in buckets {
        let means: Vec<&[f64]> = positions.iter().map(|&p| &clusters[p].mean[..]).collect();
        let table = CorrelationTable::new(&means);
        let sets = greedy_sets(&table, group_threshold, 2, usize::MAX);
        let mut used = vec![false; positions.len()];
        let mut member_lists: Vec<Vec<usize>> = Vec::new();
        for set in sets {
            set.members.iter().for_each(|&m| used[m] = true);
            member_lists.push(set.members);
        }
        member_lists.extend((0..positions.len()).filter(|&i| !used[i]).map(|i| vec![i]));
        for list in member_lists {
            let member_means: Vec<&[f64]> = list.iter().map(|&m| means[m]).collect();
            groups.push(ClusterGroup {
                id: groups.len(),
                members: list
                    .iter()
                    .map(|&m| {
                        let c = &clusters[positions[m]];
                        ClusterRef {
                            model_id: c.model_id,
                            formation_order: c.formation_order,
                        }
                    })
                    .collect(),
                group_mean: mean_of(&member_means),
                class_pair: pair,
                mean_correlations: list
                    .iter()
                    .map(|&a| list.iter().map(|&b| table.get(a, b)).collect())
                    .collect(),
            });
        }
    }
    Ok(groups)
}
