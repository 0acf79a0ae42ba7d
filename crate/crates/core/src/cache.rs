//! Versioned JSON container for built trees.
//!
//! Gaps are written as the event id `alphabet.len()`, one past the last
//! real event type.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::aggtree::{AggregateTree, MergeStep, TreeError};
use crate::alignment::{AlignError, AlignParams, AlignmentMatrix, Symbol};
use crate::distance::SequenceMetric;
use crate::ingest::{Alphabet, EventId, UniqueSequenceSet};

pub const CACHE_FORMAT: &str = "seqlod-tree";
pub const CACHE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("malformed cache file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unsupported cache format `{format}` version {version}")]
    Version { format: String, version: u32 },
    #[error("cache content hash mismatch: expected {expected}, found {found}")]
    HashMismatch { expected: String, found: String },
    #[error("corrupt cache: {0}")]
    Corrupt(String),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Align(#[from] AlignError),
}

/// SHA-256 over the raw input files.
pub fn dataset_digest(events: &[u8], attributes: Option<&[u8]>) -> String {
    let mut h = Sha256::new();
    h.update((events.len() as u64).to_le_bytes());
    h.update(events);
    match attributes {
        Some(a) => {
            h.update([1]);
            h.update((a.len() as u64).to_le_bytes());
            h.update(a);
        }
        None => h.update([0]),
    }
    hex::encode(h.finalize())
}

/// Cache key over everything that determines a tree.
pub fn content_hash(
    dataset_digest: &str,
    filter_signature: &str,
    metric: &SequenceMetric,
    params: &AlignParams,
) -> String {
    let key = serde_json::json!({
        "dataset": dataset_digest,
        "filters": filter_signature,
        "metric": metric,
        "params": params,
        "version": CACHE_VERSION,
    });
    hex::encode(Sha256::digest(key.to_string().as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredSequence {
    events: Vec<u32>,
    frequency: u64,
    member_record_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct StoredNode {
    row_sequence_ids: Vec<usize>,
    rows: Vec<Vec<u32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CacheFile {
    format: String,
    version: u32,
    content_hash: String,
    alphabet: Alphabet,
    metric: SequenceMetric,
    params: AlignParams,
    sequences: Vec<StoredSequence>,
    merge_log: Vec<MergeStep>,
    nodes: Vec<StoredNode>,
}

/// A tree together with the inputs needed to reopen it.
#[derive(Debug, Clone)]
pub struct CachedTree {
    pub content_hash: String,
    pub alphabet: Alphabet,
    pub sequences: UniqueSequenceSet,
    pub tree: AggregateTree,
}

pub fn to_json(
    content_hash: &str,
    alphabet: &Alphabet,
    sequences: &UniqueSequenceSet,
    tree: &AggregateTree,
) -> String {
    let gap = alphabet.gap_id();
    let file = CacheFile {
        format: CACHE_FORMAT.into(),
        version: CACHE_VERSION,
        content_hash: content_hash.into(),
        alphabet: alphabet.clone(),
        metric: tree.metric,
        params: tree.params,
        sequences: sequences
            .sequences
            .iter()
            .map(|s| StoredSequence {
                events: s.events.iter().map(|e| e.0).collect(),
                frequency: s.frequency,
                member_record_ids: s.member_record_ids.clone(),
            })
            .collect(),
        merge_log: tree.merge_log().to_vec(),
        nodes: tree
            .nodes()
            .iter()
            .map(|n| StoredNode {
                row_sequence_ids: n.alignment.row_sequence_ids().to_vec(),
                rows: n
                    .alignment
                    .rows()
                    .iter()
                    .map(|r| {
                        r.iter()
                            .map(|s| match s {
                                Symbol::Event(e) => e.0,
                                Symbol::Gap => gap,
                            })
                            .collect()
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string(&file).expect("cache file serializes")
}

pub fn from_json(text: &str) -> Result<CachedTree, CacheError> {
    let file: CacheFile = serde_json::from_str(text)?;
    if file.format != CACHE_FORMAT || file.version != CACHE_VERSION {
        return Err(CacheError::Version {
            format: file.format,
            version: file.version,
        });
    }
    let gap = file.alphabet.gap_id();
    let n = file.sequences.len();
    if n < 2 {
        return Err(CacheError::Corrupt(format!("{n} sequences")));
    }
    let to_event = |id: u32| -> Result<EventId, CacheError> {
        if id < gap {
            Ok(EventId(id))
        } else {
            Err(CacheError::Corrupt(format!("event id {id} outside alphabet")))
        }
    };
    let mut sequences = Vec::with_capacity(n);
    for s in &file.sequences {
        sequences.push(crate::ingest::UniqueSequence {
            events: s.events.iter().map(|&e| to_event(e)).collect::<Result<_, _>>()?,
            frequency: s.frequency,
            member_record_ids: s.member_record_ids.clone(),
        });
    }
    let frequencies: Vec<u64> = sequences.iter().map(|s| s.frequency).collect();

    let mut alignments = Vec::with_capacity(file.nodes.len());
    for node in file.nodes {
        let freqs = node
            .row_sequence_ids
            .iter()
            .map(|&i| {
                frequencies
                    .get(i)
                    .copied()
                    .ok_or_else(|| CacheError::Corrupt(format!("row references sequence {i}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let rows = node
            .rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|&x| {
                        if x == gap {
                            Ok(Symbol::Gap)
                        } else {
                            to_event(x).map(Symbol::Event)
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        alignments.push(AlignmentMatrix::from_rows(rows, node.row_sequence_ids, freqs)?);
    }
    let tree = AggregateTree::from_stored(n, file.merge_log, alignments, file.metric, file.params)?;
    Ok(CachedTree {
        content_hash: file.content_hash,
        alphabet: file.alphabet,
        sequences: UniqueSequenceSet { sequences },
        tree,
    })
}

pub fn write(
    path: &Path,
    content_hash: &str,
    alphabet: &Alphabet,
    sequences: &UniqueSequenceSet,
    tree: &AggregateTree,
) -> Result<(), CacheError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, to_json(content_hash, alphabet, sequences, tree))?;
    fs::rename(tmp, path)?;
    Ok(())
}

/// Reads a cache file, checking its hash when `expected_hash` is given.
pub fn read(path: &Path, expected_hash: Option<&str>) -> Result<CachedTree, CacheError> {
    let cached = from_json(&fs::read_to_string(path)?)?;
    if let Some(expected) = expected_hash {
        if cached.content_hash != expected {
            return Err(CacheError::HashMismatch {
                expected: expected.into(),
                found: cached.content_hash,
            });
        }
    }
    Ok(cached)
}
