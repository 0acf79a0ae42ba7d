//! Aggregate trees over deduplicated event sequences, with progressive
//! alignment, information-score simplification, and silhouette-based level
//! recommendations.

pub mod aggtree;
pub mod alignment;
pub mod analytics;
pub mod cache;
pub mod config;
pub mod distance;
pub mod ingest;
pub mod pipeline;
pub mod quality;
pub mod representation;
pub mod synth;

pub use aggtree::{AggregateTree, ClusterOrder, Frontier, MergeStep, NodeId, TreeError, TreeNode};
pub use alignment::{pairwise_align, AlignError, AlignParams, AlignmentMatrix, Symbol};
pub use distance::{distance_matrix, qgram_distance, DistanceError, DistanceMatrix, SequenceMetric};
pub use ingest::{
    deduplicate, parse_event_log, Alphabet, EventId, EventLog, IngestError, UniqueSequence,
    UniqueSequenceSet,
};
pub use quality::{recommend_k, QualityError, SilhouetteCurve, Weighting};
pub use representation::{
    build_cluster_view, information_scores, simplify, ClusterView, InfoScoreVector,
    SimplifiedMatrix,
};
pub use config::Config;
pub use pipeline::{Overview, PipelineError, Snapshot};
