//! The slice of the HTTP API the client consumes. Implementations decide
//! how requests travel; tests use an in-process mock.

use seqlod_core::aggtree::{ClusterOrder, NodeId};
use seqlod_core::analytics::{ChartType, RecordPayload, SequenceSort, StackedBarData, UniqueSequencePayload};
use seqlod_core::Overview;
use thiserror::Error;

/// An error payload returned by the server.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{status} {code}: {message}")]
pub struct ApiFailure {
    pub status: u16,
    pub code: String,
    pub message: String,
}

/// Vertical level of detail: a cluster count or an explicit frontier.
#[derive(Debug, Clone, PartialEq)]
pub enum Level {
    Default,
    K(usize),
    Frontier(Vec<NodeId>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverviewRequest {
    pub level: Level,
    pub itau: Option<f64>,
    pub order: ClusterOrder,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitResult {
    pub k: usize,
    pub frontier: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequenceList {
    pub node_id: NodeId,
    pub record_count: u64,
    pub sequences: Vec<UniqueSequencePayload>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordList {
    pub unique: UniqueSequencePayload,
    pub records: Vec<RecordPayload>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRequest {
    pub chart: ChartType,
    pub attribute: String,
    /// `S<n>` labels or node ids, depending on the chart.
    pub scope: Vec<String>,
    pub level: Level,
}

pub trait Api {
    fn overview(&mut self, req: &OverviewRequest) -> Result<Overview, ApiFailure>;
    fn split(&mut self, frontier: &[NodeId], node: NodeId) -> Result<SplitResult, ApiFailure>;
    fn unique_sequences(
        &mut self,
        node: NodeId,
        sort: SequenceSort,
        anchors: &[String],
    ) -> Result<SequenceList, ApiFailure>;
    fn records(&mut self, label: &str, attrs: &[String]) -> Result<RecordList, ApiFailure>;
    fn aggregate(&mut self, req: &AggregateRequest) -> Result<StackedBarData, ApiFailure>;
}
