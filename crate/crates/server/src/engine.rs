//! Dataset registry shared by the HTTP API and the CLI.
//!
//! A dataset directory holds the uploaded CSVs, a manifest, and one tree
//! cache file per filter signature:
//!
//! ```text
//! <root>/<dataset id>/manifest.json
//! <root>/<dataset id>/events.csv
//! <root>/<dataset id>/attributes.csv   (optional)
//! <root>/<dataset id>/trees/<content hash>.json
//! ```

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use lru::LruCache;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use seqlod_core::aggtree::NodeId;
use seqlod_core::analytics::{filter_signature, Filter};
use seqlod_core::cache::{self, dataset_digest};
use seqlod_core::ingest::{parse_event_log, EventLog, IngestError};
use seqlod_core::representation::SimplifiedMatrix;
use seqlod_core::{Config, PipelineError, Snapshot};

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),
    #[error("unknown filter signature `{0}`")]
    UnknownFilters(String),
    #[error("dataset is still building")]
    Building,
    #[error("build failed: {0}")]
    BuildFailed(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuildStatus {
    Building,
    Ready,
    Failed,
}

#[derive(Debug, Clone)]
enum SnapshotState {
    Building,
    Ready(Arc<Snapshot>),
    Failed(String),
}

impl SnapshotState {
    fn status(&self) -> BuildStatus {
        match self {
            SnapshotState::Building => BuildStatus::Building,
            SnapshotState::Ready(_) => BuildStatus::Ready,
            SnapshotState::Failed(_) => BuildStatus::Failed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub dataset_id: String,
    pub digest: String,
    pub has_attributes: bool,
}

type MemoKey = (String, NodeId, u64);

pub struct Dataset {
    pub id: String,
    pub digest: String,
    events: Vec<u8>,
    attributes: Option<Vec<u8>>,
    log: OnceLock<Result<Arc<EventLog>, String>>,
    snapshots: RwLock<HashMap<String, SnapshotState>>,
    filters: RwLock<BTreeMap<String, Vec<Filter>>>,
    memo: Mutex<LruCache<MemoKey, Arc<SimplifiedMatrix>>>,
    dir: Option<PathBuf>,
}

impl std::fmt::Debug for Dataset {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Dataset").field("id", &self.id).finish_non_exhaustive()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FilterStatus {
    pub filter_signature: String,
    pub status: BuildStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Dataset {
    pub fn base_signature() -> String {
        filter_signature(&[])
    }

    pub fn log(&self) -> Result<Arc<EventLog>, EngineError> {
        self.log
            .get_or_init(|| {
                parse_event_log(self.events.as_slice(), self.attributes.as_deref())
                    .map(Arc::new)
                    .map_err(|e| e.to_string())
            })
            .clone()
            .map_err(EngineError::BuildFailed)
    }

    pub fn status(&self) -> (BuildStatus, Option<String>) {
        match self.snapshots.read().unwrap().get(&Self::base_signature()) {
            Some(SnapshotState::Failed(e)) => (BuildStatus::Failed, Some(e.clone())),
            Some(s) => (s.status(), None),
            None => (BuildStatus::Building, None),
        }
    }

    pub fn filter_statuses(&self) -> Vec<FilterStatus> {
        let snaps = self.snapshots.read().unwrap();
        let mut out: Vec<FilterStatus> = snaps
            .iter()
            .map(|(sig, s)| FilterStatus {
                filter_signature: sig.clone(),
                status: s.status(),
                error: match s {
                    SnapshotState::Failed(e) => Some(e.clone()),
                    _ => None,
                },
            })
            .collect();
        out.sort_by(|a, b| a.filter_signature.cmp(&b.filter_signature));
        out
    }

    /// Every filter list seen so far, including ones read from disk.
    pub fn known_filters(&self) -> Vec<Vec<Filter>> {
        self.filters.read().unwrap().values().cloned().collect()
    }

    pub fn filters(&self, signature: &str) -> Option<Vec<Filter>> {
        self.filters.read().unwrap().get(signature).cloned()
    }

    /// The ready snapshot for a filter signature.
    pub fn snapshot(&self, signature: &str) -> Result<Arc<Snapshot>, EngineError> {
        match self.snapshots.read().unwrap().get(signature) {
            Some(SnapshotState::Ready(s)) => Ok(s.clone()),
            Some(SnapshotState::Building) => Err(EngineError::Building),
            Some(SnapshotState::Failed(e)) => Err(EngineError::BuildFailed(e.clone())),
            None if signature == Self::base_signature() => Err(EngineError::Building),
            None if self.filters.read().unwrap().contains_key(signature) => Err(EngineError::Building),
            None => Err(EngineError::UnknownFilters(signature.to_owned())),
        }
    }

    /// Marks a filter set as building. Returns `false` when it is already
    /// known (building, ready, or failed).
    pub fn begin(&self, filters: &[Filter]) -> (String, bool) {
        let sig = filter_signature(filters);
        let mut snaps = self.snapshots.write().unwrap();
        if snaps.contains_key(&sig) {
            return (sig, false);
        }
        snaps.insert(sig.clone(), SnapshotState::Building);
        self.filters.write().unwrap().insert(sig.clone(), filters.to_vec());
        (sig, true)
    }

    /// Builds (or loads from the cache directory) the snapshot for
    /// `filters`. Blocking.
    pub fn run_build(&self, filters: &[Filter], config: &Config) -> Result<Arc<Snapshot>, EngineError> {
        let sig = filter_signature(filters);
        let result = self.build_inner(filters, &sig, config);
        let state = match &result {
            Ok(s) => SnapshotState::Ready(s.clone()),
            Err(e) => SnapshotState::Failed(e.to_string()),
        };
        self.snapshots.write().unwrap().insert(sig.clone(), state);
        self.filters.write().unwrap().insert(sig, filters.to_vec());
        result
    }

    fn build_inner(&self, filters: &[Filter], sig: &str, config: &Config) -> Result<Arc<Snapshot>, EngineError> {
        let log = self.log()?;
        let hash = cache::content_hash(&self.digest, sig, &config.metric(), &config.align_params());
        let path = self.dir.as_ref().map(|d| d.join("trees").join(format!("{hash}.json")));
        if let Some(path) = path.as_ref().filter(|p| p.exists()) {
            match cache::read(path, Some(&hash)) {
                Ok(cached) => {
                    if let Ok(snap) = Snapshot::from_cache(&log, filters, cached, config) {
                        return Ok(Arc::new(snap));
                    }
                    tracing::warn!(path = %path.display(), "stale tree cache, rebuilding");
                }
                Err(e) => tracing::warn!(path = %path.display(), error = %e, "unreadable tree cache, rebuilding"),
            }
        }
        let snap = Snapshot::build(&log, filters, &self.digest, config)?;
        if let (Some(dir), false) = (&self.dir, filters.is_empty()) {
            let filter_dir = dir.join("filters");
            fs::create_dir_all(&filter_dir)?;
            fs::write(filter_dir.join(format!("{sig}.json")), serde_json::to_vec(filters)?)?;
        }
        if let Some(path) = path {
            cache::write(&path, &hash, &snap.log.alphabet, &snap.sequences, &snap.tree)
                .map_err(|e| EngineError::BuildFailed(e.to_string()))?;
        }
        tracing::info!(dataset = %self.id, filters = %sig, n = snap.n_sequences(), "snapshot ready");
        Ok(Arc::new(snap))
    }

    /// Memoized simplification of one node.
    pub fn simplified(
        &self,
        snapshot: &Snapshot,
        node: NodeId,
        itau: f64,
    ) -> Result<Arc<SimplifiedMatrix>, PipelineError> {
        let key = (snapshot.filter_signature.clone(), node, itau.to_bits());
        if let Some(hit) = self.memo.lock().unwrap().get(&key) {
            return Ok(hit.clone());
        }
        let fresh = Arc::new(snapshot.simplified(node, itau)?);
        self.memo.lock().unwrap().put(key, fresh.clone());
        Ok(fresh)
    }

    pub fn memo_len(&self) -> usize {
        self.memo.lock().unwrap().len()
    }
}

pub struct Engine {
    pub config: Config,
    root: Option<PathBuf>,
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
}

impl Engine {
    pub fn new(config: Config, root: Option<PathBuf>) -> Self {
        Engine {
            config,
            root,
            datasets: RwLock::new(BTreeMap::new()),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    fn make_dataset(&self, events: Vec<u8>, attributes: Option<Vec<u8>>) -> Dataset {
        let digest = dataset_digest(&events, attributes.as_deref());
        let id = digest[..16].to_owned();
        let capacity = NonZeroUsize::new(self.config.memo_capacity.max(1)).expect("non-zero");
        Dataset {
            dir: self.root.as_ref().map(|r| r.join(&id)),
            id,
            digest,
            events,
            attributes,
            log: OnceLock::new(),
            snapshots: RwLock::new(HashMap::new()),
            filters: RwLock::new(BTreeMap::new()),
            memo: Mutex::new(LruCache::new(capacity)),
        }
    }

    /// Registers uploaded CSVs. The id is derived from the content, so
    /// uploading the same files twice returns the existing dataset.
    pub fn register(
        &self,
        events: Vec<u8>,
        attributes: Option<Vec<u8>>,
    ) -> Result<(Arc<Dataset>, bool), EngineError> {
        let ds = self.make_dataset(events, attributes);
        let mut all = self.datasets.write().unwrap();
        if let Some(existing) = all.get(&ds.id) {
            return Ok((existing.clone(), false));
        }
        if let Some(dir) = &ds.dir {
            fs::create_dir_all(dir.join("trees"))?;
            fs::write(dir.join("events.csv"), &ds.events)?;
            if let Some(a) = &ds.attributes {
                fs::write(dir.join("attributes.csv"), a)?;
            }
            let manifest = Manifest {
                dataset_id: ds.id.clone(),
                digest: ds.digest.clone(),
                has_attributes: ds.attributes.is_some(),
            };
            fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
        }
        let ds = Arc::new(ds);
        all.insert(ds.id.clone(), ds.clone());
        Ok((ds, true))
    }

    /// Registers every dataset directory under the root.
    pub fn load_root(&self) -> Result<Vec<Arc<Dataset>>, EngineError> {
        let Some(root) = self.root.clone() else {
            return Ok(Vec::new());
        };
        let mut loaded = Vec::new();
        if !root.exists() {
            return Ok(loaded);
        }
        let mut dirs: Vec<PathBuf> = fs::read_dir(&root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join("manifest.json").is_file())
            .collect();
        dirs.sort();
        for dir in dirs {
            let manifest: Manifest = serde_json::from_slice(&fs::read(dir.join("manifest.json"))?)?;
            let events = fs::read(dir.join("events.csv"))?;
            let attributes = if manifest.has_attributes {
                Some(fs::read(dir.join("attributes.csv"))?)
            } else {
                None
            };
            let (ds, _) = self.register(events, attributes)?;
            if let Ok(entries) = fs::read_dir(dir.join("filters")) {
                let mut known = ds.filters.write().unwrap();
                for entry in entries.flatten() {
                    let path = entry.path();
                    let Some(sig) = path.file_stem().and_then(|s| s.to_str()) else {
                        continue;
                    };
                    let filters: Vec<Filter> = serde_json::from_slice(&fs::read(&path)?)?;
                    if filter_signature(&filters) == sig {
                        known.insert(sig.to_owned(), filters);
                    }
                }
            }
            loaded.push(ds);
        }
        Ok(loaded)
    }

    pub fn dataset(&self, id: &str) -> Result<Arc<Dataset>, EngineError> {
        self.datasets
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownDataset(id.to_owned()))
    }

    /// The only dataset, or the one named by `id`.
    pub fn pick(&self, id: Option<&str>) -> Result<Arc<Dataset>, EngineError> {
        if let Some(id) = id {
            return self.dataset(id);
        }
        let all = self.datasets.read().unwrap();
        match all.len() {
            1 => Ok(all.values().next().cloned().expect("one dataset")),
            0 => Err(EngineError::UnknownDataset("(none built)".into())),
            _ => Err(EngineError::UnknownDataset(format!(
                "(several datasets; pick one of {})",
                all.keys().cloned().collect::<Vec<_>>().join(", ")
            ))),
        }
    }

    pub fn dataset_ids(&self) -> Vec<String> {
        self.datasets.read().unwrap().keys().cloned().collect()
    }
}
