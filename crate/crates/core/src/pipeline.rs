//! Immutable dataset snapshots and the overview query.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggtree::{AggregateTree, BuildTimings, ClusterOrder, Frontier, NodeId, TreeError};
use crate::analytics::{apply_filters, filter_signature, AnalyticsError, Filter};
use crate::cache::{self, CacheError, CachedTree};
use crate::config::Config;
use crate::distance::{distance_matrix, DistanceError, DistanceMatrix};
use crate::ingest::{deduplicate, EventLog, UniqueSequenceSet};
use crate::quality::{QualityError, SilhouetteCurve};
use crate::representation::{build_cluster_view, simplify, ClusterView, RepresentationError, SimplifiedMatrix};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Analytics(#[from] AnalyticsError),
    #[error("the filters leave no records")]
    EmptyResult,
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Quality(#[from] QualityError),
    #[error(transparent)]
    Representation(#[from] RepresentationError),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error("information threshold {0} outside [0, 1]")]
    BadThreshold(f64),
    #[error("cached tree does not match the event log: {0}")]
    StaleCache(String),
}

/// One filtered view of a dataset with its tree and silhouette curve.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub log: EventLog,
    pub sequences: UniqueSequenceSet,
    pub distances: DistanceMatrix,
    pub tree: AggregateTree,
    pub curve: SilhouetteCurve,
    pub filters: Vec<Filter>,
    pub filter_signature: String,
    pub content_hash: String,
    pub timings: BuildTimings,
}

impl Snapshot {
    /// Filters `log`, deduplicates, and builds the tree and curve.
    pub fn build(
        log: &EventLog,
        filters: &[Filter],
        dataset_digest: &str,
        config: &Config,
    ) -> Result<Snapshot, PipelineError> {
        let filtered = apply_filters(log, filters)?;
        if filtered.is_empty() {
            return Err(PipelineError::EmptyResult);
        }
        let sequences = deduplicate(&filtered);
        let metric = config.metric();
        let params = config.align_params();
        let (tree, distances, mut timings) =
            AggregateTree::build_timed(&sequences, metric, &params, None)?;
        let started = std::time::Instant::now();
        let curve = SilhouetteCurve::compute(
            &tree,
            &distances,
            None,
            config.silhouette_weighting,
            config.max_recommendations,
        )?;
        timings.tree += started.elapsed();
        let filter_signature = filter_signature(filters);
        let content_hash = cache::content_hash(dataset_digest, &filter_signature, &metric, &params);
        Ok(Snapshot {
            log: filtered,
            sequences,
            distances,
            tree,
            curve,
            filters: filters.to_vec(),
            filter_signature,
            content_hash,
            timings,
        })
    }

    /// Reopens a cached tree over the same filtered log. Distances and the
    /// silhouette curve are recomputed; alignments are taken from the cache.
    pub fn from_cache(
        log: &EventLog,
        filters: &[Filter],
        cached: CachedTree,
        config: &Config,
    ) -> Result<Snapshot, PipelineError> {
        let filtered = apply_filters(log, filters)?;
        if filtered.is_empty() {
            return Err(PipelineError::EmptyResult);
        }
        if cached.alphabet != filtered.alphabet {
            return Err(PipelineError::StaleCache("alphabet differs".into()));
        }
        if deduplicate(&filtered) != cached.sequences {
            return Err(PipelineError::StaleCache("unique sequences differ".into()));
        }
        let distances = distance_matrix(&cached.sequences, cached.tree.metric)?;
        let curve = SilhouetteCurve::compute(
            &cached.tree,
            &distances,
            None,
            config.silhouette_weighting,
            config.max_recommendations,
        )?;
        Ok(Snapshot {
            log: filtered,
            sequences: cached.sequences,
            distances,
            tree: cached.tree,
            curve,
            filters: filters.to_vec(),
            filter_signature: filter_signature(filters),
            content_hash: cached.content_hash,
            timings: BuildTimings::default(),
        })
    }

    pub fn to_cache_json(&self) -> String {
        cache::to_json(&self.content_hash, &self.log.alphabet, &self.sequences, &self.tree)
    }

    pub fn n_sequences(&self) -> usize {
        self.sequences.len()
    }

    pub fn total_records(&self) -> u64 {
        self.sequences.total_records()
    }

    pub fn build_time(&self) -> Duration {
        self.timings.total()
    }

    /// Simplified alignment of one node at `itau`.
    pub fn simplified(&self, node: NodeId, itau: f64) -> Result<SimplifiedMatrix, PipelineError> {
        check_threshold(itau)?;
        let n = self.tree.node(node)?;
        Ok(simplify(&n.alignment, n.scores(), itau)?)
    }

    /// View payload for one node from an already simplified alignment.
    pub fn cluster_view_from(
        &self,
        node: NodeId,
        simplified: &SimplifiedMatrix,
        config: &Config,
    ) -> Result<ClusterView, PipelineError> {
        let n = self.tree.node(node)?;
        Ok(build_cluster_view(
            node,
            &n.alignment,
            n.scores(),
            simplified,
            self.total_records(),
            config.small_cluster_threshold,
        ))
    }

    pub fn cluster_view(&self, node: NodeId, itau: f64, config: &Config) -> Result<ClusterView, PipelineError> {
        let simplified = self.simplified(node, itau)?;
        self.cluster_view_from(node, &simplified, config)
    }

    /// Overview at a frontier. `simplified` supplies each node's simplified
    /// alignment, so callers can memoize it.
    pub fn overview_with<F>(
        &self,
        frontier: &Frontier,
        itau: f64,
        order: ClusterOrder,
        config: &Config,
        mut simplified: F,
    ) -> Result<Overview, PipelineError>
    where
        F: FnMut(NodeId, f64) -> Result<SimplifiedMatrix, PipelineError>,
    {
        check_threshold(itau)?;
        self.tree.validate_frontier(frontier)?;
        let clusters = self
            .tree
            .ordered(frontier, order)
            .into_iter()
            .map(|node| {
                let s = simplified(node, itau)?;
                self.cluster_view_from(node, &s, config)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let k = frontier.len();
        Ok(Overview {
            n_sequences: self.n_sequences(),
            total_records: self.total_records(),
            k,
            itau,
            order,
            event_types: self.log.alphabet.names().to_vec(),
            clusters,
            recommendations: self.curve.recommendations.clone(),
            silhouette: self.curve.get(k),
            recommended: self.curve.recommendations.contains(&k),
            filter_signature: self.filter_signature.clone(),
            content_hash: self.content_hash.clone(),
        })
    }

    pub fn overview(
        &self,
        frontier: &Frontier,
        itau: f64,
        order: ClusterOrder,
        config: &Config,
    ) -> Result<Overview, PipelineError> {
        self.overview_with(frontier, itau, order, config, |node, t| self.simplified(node, t))
    }

    pub fn overview_at_k(
        &self,
        k: usize,
        itau: f64,
        order: ClusterOrder,
        config: &Config,
    ) -> Result<Overview, PipelineError> {
        let frontier = self.tree.cut_at_k(k)?;
        self.overview(&frontier, itau, order, config)
    }
}

pub fn check_threshold(itau: f64) -> Result<(), PipelineError> {
    if (0.0..=1.0).contains(&itau) {
        Ok(())
    } else {
        Err(PipelineError::BadThreshold(itau))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overview {
    pub n_sequences: usize,
    pub total_records: u64,
    pub k: usize,
    pub itau: f64,
    pub order: ClusterOrder,
    pub event_types: Vec<String>,
    pub clusters: Vec<ClusterView>,
    pub recommendations: Vec<usize>,
    /// Average silhouette width at `k`, when defined (`2 <= k < N`).
    pub silhouette: Option<f64>,
    pub recommended: bool,
    pub filter_signature: String,
    pub content_hash: String,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_event_log;

    const EVENTS: &str = "record_id,event_type,timestamp\n\
        a,X,2020-01-01\na,Y,2020-01-02\n\
        b,X,2020-01-01\nb,Y,2020-01-03\n\
        c,Y,2020-01-01\nc,X,2020-01-02\nc,X,2020-01-03\n\
        d,Z,2020-02-01\nd,W,2020-02-02\n\
        e,Z,2020-02-01\ne,Z,2020-02-02\ne,W,2020-02-03\n";

    fn log() -> EventLog {
        parse_event_log(EVENTS.as_bytes(), None::<&[u8]>).unwrap()
    }

    #[test]
    fn build_and_query() {
        let config = Config::default();
        let snap = Snapshot::build(&log(), &[], "d", &config).unwrap();
        assert_eq!(snap.n_sequences(), 4);
        assert_eq!(snap.total_records(), 5);
        let o = snap.overview_at_k(2, 0.6, ClusterOrder::Similarity, &config).unwrap();
        assert_eq!(o.clusters.len(), 2);
        let share: f64 = o.clusters.iter().map(|c| c.record_share).sum();
        assert!((share - 1.0).abs() < 1e-9);
        assert_eq!(o.silhouette, snap.curve.get(2));
        assert!(matches!(
            snap.overview_at_k(2, 1.5, ClusterOrder::Similarity, &config),
            Err(PipelineError::BadThreshold(_))
        ));
        assert!(matches!(
            snap.overview_at_k(0, 0.5, ClusterOrder::Similarity, &config),
            Err(PipelineError::Tree(TreeError::KOutOfRange { .. }))
        ));
    }

    #[test]
    fn filters_and_empty_result() {
        let config = Config::default();
        let snap = Snapshot::build(&log(), &[Filter::event_occurs("X")], "d", &config).unwrap();
        assert_eq!(snap.total_records(), 3);
        let none = Filter {
            kind: crate::analytics::FilterKind::Year,
            attribute: None,
            op: crate::analytics::Operator::Eq,
            value: crate::analytics::FilterValue::Number(1999.0),
        };
        assert!(matches!(
            Snapshot::build(&log(), &[none], "d", &config),
            Err(PipelineError::EmptyResult)
        ));
    }

    #[test]
    fn cache_round_trip_reproduces_overview() {
        let config = Config::default();
        let snap = Snapshot::build(&log(), &[], "d", &config).unwrap();
        let cached = cache::from_json(&snap.to_cache_json()).unwrap();
        let again = Snapshot::from_cache(&log(), &[], cached, &config).unwrap();
        for k in 1..=4 {
            let a = snap.overview_at_k(k, 0.5, ClusterOrder::Frequency, &config).unwrap();
            let b = again.overview_at_k(k, 0.5, ClusterOrder::Frequency, &config).unwrap();
            assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        }
        let cached = cache::from_json(&snap.to_cache_json()).unwrap();
        assert!(matches!(
            Snapshot::from_cache(&log(), &[Filter::event_occurs("X")], cached, &config),
            Err(PipelineError::StaleCache(_))
        ));
    }
}
