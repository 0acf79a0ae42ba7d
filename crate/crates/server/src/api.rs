//! JSON-over-HTTP API. Every payload carries `api_version`.

use std::collections::HashSet;
use std::sync::Arc;

use axum::extract::{Multipart, Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use seqlod_core::aggtree::{ClusterOrder, Frontier, NodeId, TreeError};
use seqlod_core::analytics::{
    align_by_event, attribute_aggregate, individual_records, unique_sequences, AnalyticsError,
    ChartScope, ChartType, Filter, RecordPayload, SequenceSort, StackedBarData,
    UniqueSequencePayload,
};
use seqlod_core::ingest::UniqueSequenceSet;
use seqlod_core::{Overview, PipelineError, Snapshot};

use crate::engine::{BuildStatus, Dataset, Engine, EngineError, FilterStatus};

pub const API_VERSION: &str = "1.0";

#[derive(Serialize)]
struct Envelope<T: Serialize> {
    api_version: &'static str,
    #[serde(flatten)]
    body: T,
}

/// JSON encoding of `body` with the `api_version` field added.
pub fn payload_bytes<T: Serialize>(body: T) -> Vec<u8> {
    serde_json::to_vec(&Envelope {
        api_version: API_VERSION,
        body,
    })
    .expect("payload serializes")
}

fn ok<T: Serialize>(status: StatusCode, body: T) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], payload_bytes(body)).into_response()
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    fn bad(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: &'a str,
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        #[derive(Serialize)]
        struct Wrapper<'a> {
            error: ErrorBody<'a>,
        }
        ok(
            self.status,
            Wrapper {
                error: ErrorBody {
                    code: self.code,
                    message: &self.message,
                },
            },
        )
    }
}

impl From<TreeError> for ApiError {
    fn from(e: TreeError) -> Self {
        let msg = e.to_string();
        match e {
            TreeError::KOutOfRange { .. } => ApiError::bad("KOutOfRange", msg),
            TreeError::LeafNotSplittable(_) => ApiError::bad("LeafNotSplittable", msg),
            TreeError::NodeNotInFrontier(_) => ApiError::bad("NodeNotInFrontier", msg),
            TreeError::InvalidFrontier(_) => ApiError::bad("InvalidFrontier", msg),
            TreeError::UnknownNode(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownNode", msg),
            TreeError::SingleSequence | TreeError::NoSequences => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "TooFewSequences", msg)
            }
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", msg),
        }
    }
}

impl From<AnalyticsError> for ApiError {
    fn from(e: AnalyticsError) -> Self {
        let msg = e.to_string();
        match e {
            AnalyticsError::UnknownAttribute(_) => ApiError::bad("UnknownAttribute", msg),
            AnalyticsError::UnknownEventType(_) => ApiError::bad("UnknownEventType", msg),
            AnalyticsError::TypeMismatch(_) => ApiError::bad("TypeMismatch", msg),
            AnalyticsError::InvalidAnchors(_) => ApiError::bad("InvalidAnchors", msg),
            AnalyticsError::EventLevelAttribute(_) => ApiError::bad("EventLevelAttribute", msg),
            AnalyticsError::UnknownId(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownId", msg),
        }
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::Tree(t) => t.into(),
            PipelineError::Analytics(a) => a.into(),
            PipelineError::BadThreshold(_) => ApiError::bad("BadThreshold", e.to_string()),
            PipelineError::EmptyResult => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "EmptyResult", e.to_string())
            }
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", other.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::UnknownDataset(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownDataset", msg),
            EngineError::UnknownFilters(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownFilters", msg),
            EngineError::Building => ApiError::new(StatusCode::CONFLICT, "Building", msg),
            EngineError::BuildFailed(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "BuildFailed", msg),
            EngineError::Ingest(_) => ApiError::bad("MalformedInput", msg),
            EngineError::Pipeline(p) => p.into(),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "Internal", msg),
        }
    }
}

type ApiResult = Result<Response, ApiError>;

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new()
        .route("/datasets", post(create_dataset).get(list_datasets))
        .route("/datasets/{id}/status", get(status))
        .route("/datasets/{id}/overview", get(overview))
        .route("/datasets/{id}/recommendations", get(recommendations))
        .route("/datasets/{id}/filters", post(post_filters))
        .route("/datasets/{id}/frontier/split", post(split))
        .route("/datasets/{id}/clusters/{node}/unique-sequences", get(cluster_sequences))
        .route("/datasets/{id}/unique/{uid}/records", get(records))
        .route("/datasets/{id}/aggregate", get(aggregate))
        .route("/datasets/{id}/silhouette.csv", get(silhouette_csv))
        .with_state(engine)
}

/// Starts a background build of `filters` unless one is known already.
pub fn spawn_build(engine: &Arc<Engine>, ds: &Arc<Dataset>, filters: Vec<Filter>) -> String {
    let (sig, fresh) = ds.begin(&filters);
    if fresh {
        let (engine, ds) = (engine.clone(), ds.clone());
        tokio::task::spawn_blocking(move || {
            if let Err(e) = ds.run_build(&filters, &engine.config) {
                tracing::warn!(dataset = %ds.id, error = %e, "build failed");
            }
        });
    }
    sig
}

#[derive(Serialize)]
struct DatasetCreated {
    dataset_id: String,
    job_id: String,
    status: BuildStatus,
}

async fn create_dataset(State(engine): State<Arc<Engine>>, mut form: Multipart) -> ApiResult {
    let mut events = None;
    let mut attributes = None;
    while let Some(field) = form
        .next_field()
        .await
        .map_err(|e| ApiError::bad("BadMultipart", e.to_string()))?
    {
        let name = field.name().unwrap_or_default().to_owned();
        let bytes = field
            .bytes()
            .await
            .map_err(|e| ApiError::bad("BadMultipart", e.to_string()))?
            .to_vec();
        match name.as_str() {
            "events" => events = Some(bytes),
            "attributes" | "attrs" => attributes = Some(bytes),
            other => return Err(ApiError::bad("BadMultipart", format!("unexpected field `{other}`"))),
        }
    }
    let events = events.ok_or_else(|| ApiError::bad("BadMultipart", "missing `events` file"))?;
    let (ds, _) = engine.register(events, attributes)?;
    spawn_build(&engine, &ds, Vec::new());
    let (status, _) = ds.status();
    Ok(ok(
        StatusCode::ACCEPTED,
        DatasetCreated {
            dataset_id: ds.id.clone(),
            job_id: ds.id.clone(),
            status,
        },
    ))
}

async fn list_datasets(State(engine): State<Arc<Engine>>) -> ApiResult {
    #[derive(Serialize)]
    struct List {
        datasets: Vec<String>,
    }
    Ok(ok(StatusCode::OK, List { datasets: engine.dataset_ids() }))
}

#[derive(Serialize)]
struct StatusBody {
    dataset_id: String,
    status: BuildStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_records: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_sequences: Option<usize>,
    filters: Vec<FilterStatus>,
}

async fn status(State(engine): State<Arc<Engine>>, Path(id): Path<String>) -> ApiResult {
    let ds = engine.dataset(&id)?;
    let (status, error) = ds.status();
    let snap = ds.snapshot(&Dataset::base_signature()).ok();
    Ok(ok(
        StatusCode::OK,
        StatusBody {
            dataset_id: ds.id.clone(),
            status,
            error,
            n_records: snap.as_ref().map(|s| s.total_records()),
            n_sequences: snap.as_ref().map(|s| s.n_sequences()),
            filters: ds.filter_statuses(),
        },
    ))
}

fn snapshot_for(engine: &Engine, id: &str, sig: Option<&str>) -> Result<(Arc<Dataset>, Arc<Snapshot>), ApiError> {
    let ds = engine.dataset(id)?;
    let sig = sig.map(str::to_owned).unwrap_or_else(Dataset::base_signature);
    let snap = ds.snapshot(&sig)?;
    Ok((ds, snap))
}

fn parse_order(raw: Option<&str>) -> Result<ClusterOrder, ApiError> {
    match raw {
        None | Some("similarity") => Ok(ClusterOrder::Similarity),
        Some("frequency") => Ok(ClusterOrder::Frequency),
        Some(other) => Err(ApiError::bad("BadOrder", format!("unknown order `{other}`"))),
    }
}

fn parse_ids(raw: &str) -> Result<Vec<NodeId>, ApiError> {
    raw.split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| ApiError::bad("BadFrontier", format!("`{s}` is not a node id")))
        })
        .collect()
}

fn resolve_frontier(
    snap: &Snapshot,
    k: Option<usize>,
    frontier: Option<&str>,
) -> Result<Frontier, ApiError> {
    if let Some(raw) = frontier {
        let f = Frontier { nodes: parse_ids(raw)? };
        snap.tree.validate_frontier(&f)?;
        return Ok(f);
    }
    let k = k.unwrap_or_else(|| snap.curve.recommendations.first().copied().unwrap_or(1));
    Ok(snap.tree.cut_at_k(k)?)
}

#[derive(Debug, Deserialize)]
pub struct OverviewQuery {
    k: Option<usize>,
    frontier: Option<String>,
    itau: Option<f64>,
    order: Option<String>,
    filters_sig: Option<String>,
}

async fn overview(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<OverviewQuery>,
) -> ApiResult {
    let (ds, snap) = snapshot_for(&engine, &id, q.filters_sig.as_deref())?;
    let frontier = resolve_frontier(&snap, q.k, q.frontier.as_deref())?;
    let itau = q.itau.unwrap_or(engine.config.default_itau);
    let order = parse_order(q.order.as_deref())?;
    let body: Overview = snap.overview_with(&frontier, itau, order, &engine.config, |node, t| {
        ds.simplified(&snap, node, t).map(|s| (*s).clone())
    })?;
    Ok(ok(StatusCode::OK, body))
}

#[derive(Debug, Deserialize)]
pub struct SigQuery {
    filters_sig: Option<String>,
}

async fn recommendations(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<SigQuery>,
) -> ApiResult {
    #[derive(Serialize)]
    struct Rec {
        k: usize,
        silhouette: f64,
    }
    #[derive(Serialize)]
    struct Body {
        n_sequences: usize,
        total_records: u64,
        recommendations: Vec<Rec>,
    }
    let (_, snap) = snapshot_for(&engine, &id, q.filters_sig.as_deref())?;
    let recommendations = snap
        .curve
        .recommendations
        .iter()
        .map(|&k| Rec {
            k,
            silhouette: snap.curve.get(k).unwrap_or(0.0),
        })
        .collect();
    Ok(ok(
        StatusCode::OK,
        Body {
            n_sequences: snap.n_sequences(),
            total_records: snap.total_records(),
            recommendations,
        },
    ))
}

#[derive(Debug, Deserialize)]
pub struct FiltersBody {
    #[serde(default)]
    filters: Vec<Filter>,
}

async fn post_filters(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Json(body): Json<FiltersBody>,
) -> ApiResult {
    #[derive(Serialize)]
    struct Created {
        filter_signature: String,
        status: BuildStatus,
    }
    let ds = engine.dataset(&id)?;
    let log = ds.log()?;
    // reject ill-typed filters up front instead of failing the build
    seqlod_core::analytics::apply_filters(&log, &body.filters)?;
    let sig = spawn_build(&engine, &ds, body.filters);
    let status = ds
        .filter_statuses()
        .into_iter()
        .find(|f| f.filter_signature == sig)
        .map_or(BuildStatus::Building, |f| f.status);
    let code = if status == BuildStatus::Building {
        StatusCode::ACCEPTED
    } else {
        StatusCode::OK
    };
    Ok(ok(
        code,
        Created {
            filter_signature: sig,
            status,
        },
    ))
}

#[derive(Debug, Deserialize)]
pub struct SplitBody {
    #[serde(default)]
    k: Option<usize>,
    #[serde(default)]
    frontier: Option<Vec<NodeId>>,
    node: NodeId,
    #[serde(default)]
    filters_sig: Option<String>,
}

async fn split(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Json(body): Json<SplitBody>,
) -> ApiResult {
    #[derive(Serialize)]
    struct Body {
        k: usize,
        frontier: Vec<NodeId>,
    }
    let (_, snap) = snapshot_for(&engine, &id, body.filters_sig.as_deref())?;
    let current = match (body.frontier, body.k) {
        (Some(nodes), _) => {
            let f = Frontier { nodes };
            snap.tree.validate_frontier(&f)?;
            f
        }
        (None, Some(k)) => snap.tree.cut_at_k(k)?,
        (None, None) => return Err(ApiError::bad("BadFrontier", "give `k` or `frontier`")),
    };
    let next = snap.tree.split_node(&current, body.node)?;
    let ordered = snap.tree.ordered(&next, ClusterOrder::Similarity);
    Ok(ok(
        StatusCode::OK,
        Body {
            k: ordered.len(),
            frontier: ordered,
        },
    ))
}

#[derive(Debug, Deserialize)]
pub struct SequencesQuery {
    sort: Option<String>,
    anchors: Option<String>,
    filters_sig: Option<String>,
}

async fn cluster_sequences(
    State(engine): State<Arc<Engine>>,
    Path((id, node)): Path<(String, NodeId)>,
    Query(q): Query<SequencesQuery>,
) -> ApiResult {
    #[derive(Serialize)]
    struct Body {
        node_id: NodeId,
        sort: SequenceSort,
        record_count: u64,
        sequences: Vec<UniqueSequencePayload>,
    }
    let (_, snap) = snapshot_for(&engine, &id, q.filters_sig.as_deref())?;
    let n = snap.tree.node(node)?;
    let sort = match q.sort.as_deref() {
        None | Some("similarity") => SequenceSort::Similarity,
        Some("frequency") => SequenceSort::Frequency,
        Some(other) => return Err(ApiError::bad("BadSort", format!("unknown sort `{other}`"))),
    };
    let mut sequences = unique_sequences(&snap.sequences, n.alignment.row_sequence_ids(), sort)?;
    if let Some(raw) = q.anchors.as_deref() {
        let anchors = raw
            .split(',')
            .filter(|s| !s.is_empty())
            .map(|name| {
                snap.log
                    .alphabet
                    .id(name)
                    .ok_or_else(|| AnalyticsError::UnknownEventType(name.to_owned()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let events: Vec<_> = sequences.iter().map(|s| s.events.clone()).collect();
        for (s, a) in sequences.iter_mut().zip(align_by_event(&events, &anchors)?) {
            s.anchor = Some(a);
        }
    }
    Ok(ok(
        StatusCode::OK,
        Body {
            node_id: node,
            sort,
            record_count: n.record_count,
            sequences,
        },
    ))
}

fn parse_unique(token: &str, set: &UniqueSequenceSet) -> Result<usize, ApiError> {
    let digits = token.strip_prefix('S');
    let index = match digits {
        Some(d) => d.parse::<usize>().ok().and_then(|n| n.checked_sub(1)),
        None => token.parse::<usize>().ok(),
    };
    index
        .filter(|&i| i < set.len())
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "UnknownId", format!("unknown unique sequence `{token}`")))
}

#[derive(Debug, Deserialize)]
pub struct RecordsQuery {
    attrs: Option<String>,
    filters_sig: Option<String>,
}

async fn records(
    State(engine): State<Arc<Engine>>,
    Path((id, uid)): Path<(String, String)>,
    Query(q): Query<RecordsQuery>,
) -> ApiResult {
    #[derive(Serialize)]
    struct Body {
        unique: UniqueSequencePayload,
        records: Vec<RecordPayload>,
    }
    let (_, snap) = snapshot_for(&engine, &id, q.filters_sig.as_deref())?;
    let index = parse_unique(&uid, &snap.sequences)?;
    let attrs: Vec<String> = q
        .attrs
        .as_deref()
        .map(|a| a.split(',').filter(|s| !s.is_empty()).map(str::to_owned).collect())
        .unwrap_or_default();
    let records = individual_records(&snap.log, &snap.sequences, index, &attrs)?;
    let unique = unique_sequences(&snap.sequences, &[index], SequenceSort::Similarity)?
        .pop()
        .expect("one sequence");
    Ok(ok(StatusCode::OK, Body { unique, records }))
}

#[derive(Debug, Deserialize)]
pub struct AggregateQuery {
    chart: String,
    attribute: String,
    scope: Option<String>,
    k: Option<usize>,
    frontier: Option<String>,
    filters_sig: Option<String>,
}

/// Scope tokens: `S<n>` names a unique sequence, a bare number a tree node.
fn scope_sequences(snap: &Snapshot, token: &str) -> Result<Vec<usize>, ApiError> {
    if token.starts_with('S') {
        return Ok(vec![parse_unique(token, &snap.sequences)?]);
    }
    let node: NodeId = token
        .parse()
        .map_err(|_| ApiError::bad("BadScope", format!("bad scope token `{token}`")))?;
    Ok(snap.tree.node(node)?.members.clone())
}

async fn aggregate(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<AggregateQuery>,
) -> ApiResult {
    let (_, snap) = snapshot_for(&engine, &id, q.filters_sig.as_deref())?;
    let tokens: Vec<&str> = q
        .scope
        .as_deref()
        .map(|s| s.split(',').map(str::trim).filter(|t| !t.is_empty()).collect())
        .unwrap_or_default();
    let chart: ChartType = serde_json::from_value(serde_json::Value::String(q.chart.clone()))
        .map_err(|_| ApiError::bad("BadChart", format!("unknown chart `{}`", q.chart)))?;
    let scope = match chart {
        ChartType::SelectedData => {
            let mut selected = HashSet::new();
            for t in &tokens {
                for i in scope_sequences(&snap, t)? {
                    selected.extend(snap.sequences.sequences[i].member_record_ids.iter().cloned());
                }
            }
            ChartScope::selected_data(&snap.log, &selected)
        }
        ChartType::Sequence => {
            let mut indices = Vec::new();
            if tokens.is_empty() {
                indices.extend(0..snap.sequences.len());
            }
            for t in &tokens {
                for i in scope_sequences(&snap, t)? {
                    if !indices.contains(&i) {
                        indices.push(i);
                    }
                }
            }
            ChartScope::sequences(&snap.sequences, &indices)?
        }
        ChartType::Cluster => {
            let nodes: Vec<NodeId> = if tokens.is_empty() {
                let f = resolve_frontier(&snap, q.k, q.frontier.as_deref())?;
                snap.tree.ordered(&f, ClusterOrder::Similarity)
            } else {
                parse_ids(&tokens.join(","))?
            };
            let clusters = nodes
                .iter()
                .map(|&n| Ok((n.to_string(), snap.tree.node(n)?.members.clone())))
                .collect::<Result<Vec<_>, ApiError>>()?;
            ChartScope::clusters(&snap.sequences, &clusters)?
        }
    };
    let body: StackedBarData =
        attribute_aggregate(&snap.log, &scope, &q.attribute, engine.config.bin_rule(&q.attribute))?;
    Ok(ok(StatusCode::OK, body))
}

async fn silhouette_csv(
    State(engine): State<Arc<Engine>>,
    Path(id): Path<String>,
    Query(q): Query<SigQuery>,
) -> ApiResult {
    let (_, snap) = snapshot_for(&engine, &id, q.filters_sig.as_deref())?;
    Ok((
        StatusCode::OK,
        [(header::CONTENT_TYPE, "text/csv")],
        snap.curve.to_csv(),
    )
        .into_response())
}
