//! Consensus-based interpretability.
//!
//! A diff vector is the input gradient of the margin between two
//! penultimate outputs. Diff vectors of one model are clustered greedily by
//! Pearson correlation, clusters from different models are grouped by the
//! correlation of their means, and a sample's explanation is trusted only
//! when the ensemble accepts it and its averaged diff vector matches a group.

mod cluster;
mod diff;
mod group;
mod ranking;
mod report;
mod walk;

pub use cluster::{greedy_cluster, Cluster, ClusterParams};
pub use diff::{diff_vector, diff_vector_for_pair, diff_vectors, top_two, JacobianDiffVector};
pub use group::{group_clusters, ClusterGroup, ClusterRef};
pub use ranking::{feature_ranking, topn_agreement, FeatureRanking, RankedFeature};
pub use report::{consensus_contributions, interpret_sample, InterpretationReport};
pub use walk::{walk_path, walk_to_csv, WalkPoint};
