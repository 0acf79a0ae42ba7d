//! Progressive multiple sequence alignment.
//!
//! Each aggregate-tree node aligns the alignments of its two children with a
//! global profile-profile Needleman-Wunsch pass. Columns are compared with a
//! frequency-weighted sum-of-pairs score, which reduces to plain
//! match/mismatch scoring when both sides hold a single sequence. Gaps cost a
//! flat `gap_open_penalty` per inserted column.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::EventId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("row {row} out of range for alignment with {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },
    #[error("alignment has no rows")]
    EmptyAlignment,
    #[error("both alignments contain sequence {0}")]
    OverlappingRows(usize),
    #[error("rows have unequal lengths")]
    RaggedRows,
    #[error("row metadata does not match the number of rows")]
    MetadataMismatch,
    #[error("invalid alignment parameters: {0}")]
    InvalidParams(&'static str),
}

/// One cell of an alignment matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Symbol {
    Event(EventId),
    Gap,
}

impl Symbol {
    pub fn event(self) -> Option<EventId> {
        match self {
            Symbol::Event(e) => Some(e),
            Symbol::Gap => None,
        }
    }

    pub fn is_gap(self) -> bool {
        matches!(self, Symbol::Gap)
    }
}

impl From<EventId> for Symbol {
    fn from(e: EventId) -> Self {
        Symbol::Event(e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlignParams {
    pub gap_open_penalty: f64,
    pub match_score: f64,
    pub mismatch_score: f64,
}

impl Default for AlignParams {
    fn default() -> Self {
        AlignParams {
            gap_open_penalty: 0.8,
            match_score: 3.0,
            mismatch_score: -1.0,
        }
    }
}

impl AlignParams {
    pub fn validate(&self) -> Result<(), AlignError> {
        if !(self.gap_open_penalty.is_finite() && self.gap_open_penalty >= 0.0) {
            return Err(AlignError::InvalidParams(
                "gap_open_penalty must be finite and non-negative",
            ));
        }
        if !(self.match_score.is_finite() && self.mismatch_score.is_finite()) {
            return Err(AlignError::InvalidParams("scores must be finite"));
        }
        if self.match_score <= self.mismatch_score {
            return Err(AlignError::InvalidParams(
                "match_score must exceed mismatch_score",
            ));
        }
        Ok(())
    }
}

/// Rows of aligned symbols, one per member unique sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentMatrix {
    rows: Vec<Vec<Symbol>>,
    row_sequence_ids: Vec<usize>,
    frequencies: Vec<u64>,
    width: usize,
}

impl AlignmentMatrix {
    /// Single-sequence alignment for a leaf.
    pub fn leaf(sequence_index: usize, events: &[EventId], frequency: u64) -> Self {
        AlignmentMatrix {
            width: events.len(),
            rows: vec![events.iter().copied().map(Symbol::Event).collect()],
            row_sequence_ids: vec![sequence_index],
            frequencies: vec![frequency],
        }
    }

    pub fn from_rows(
        rows: Vec<Vec<Symbol>>,
        row_sequence_ids: Vec<usize>,
        frequencies: Vec<u64>,
    ) -> Result<Self, AlignError> {
        if rows.is_empty() {
            return Err(AlignError::EmptyAlignment);
        }
        if rows.len() != row_sequence_ids.len() || rows.len() != frequencies.len() {
            return Err(AlignError::MetadataMismatch);
        }
        let width = rows[0].len();
        if rows.iter().any(|r| r.len() != width) {
            return Err(AlignError::RaggedRows);
        }
        Ok(AlignmentMatrix {
            rows,
            row_sequence_ids,
            frequencies,
            width,
        })
    }

    pub fn rows(&self) -> &[Vec<Symbol>] {
        &self.rows
    }

    pub fn row(&self, i: usize) -> Option<&[Symbol]> {
        self.rows.get(i).map(Vec::as_slice)
    }

    pub fn row_sequence_ids(&self) -> &[usize] {
        &self.row_sequence_ids
    }

    pub fn frequencies(&self) -> &[u64] {
        &self.frequencies
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    /// Alignment length `M`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = Symbol> + '_ {
        self.rows.iter().map(move |r| r[j])
    }

    pub fn total_frequency(&self) -> u64 {
        self.frequencies.iter().sum()
    }

    /// Renders rows as strings, with `-` for gaps.
    pub fn render<F: Fn(EventId) -> String>(&self, name: F) -> Vec<String> {
        self.rows
            .iter()
            .map(|r| {
                r.iter()
                    .map(|s| match s {
                        Symbol::Event(e) => name(*e),
                        Symbol::Gap => "-".to_owned(),
                    })
                    .collect()
            })
            .collect()
    }
}

/// The row with gaps removed.
pub fn recover_sequence(lambda: &AlignmentMatrix, row: usize) -> Result<Vec<EventId>, AlignError> {
    let r = lambda.row(row).ok_or(AlignError::RowOutOfRange {
        row,
        rows: lambda.n_rows(),
    })?;
    Ok(r.iter().filter_map(|s| s.event()).collect())
}

/// Non-gap weight of each event in one column, sorted by event id.
/// Weights are row frequencies over the alignment's total frequency.
#[derive(Debug, Clone, Default)]
struct ProfileColumn {
    weights: Vec<(EventId, f64)>,
    occupied: f64,
}

fn profile(m: &AlignmentMatrix) -> Vec<ProfileColumn> {
    let total = m.total_frequency() as f64;
    (0..m.width)
        .map(|j| {
            let mut weights: Vec<(EventId, f64)> = Vec::new();
            for (row, &freq) in m.rows.iter().zip(&m.frequencies) {
                if let Symbol::Event(e) = row[j] {
                    match weights.binary_search_by_key(&e, |&(k, _)| k) {
                        Ok(pos) => weights[pos].1 += freq as f64,
                        Err(pos) => weights.insert(pos, (e, freq as f64)),
                    }
                }
            }
            let mut occupied = 0.0;
            for w in &mut weights {
                w.1 /= total;
                occupied += w.1;
            }
            ProfileColumn { weights, occupied }
        })
        .collect()
}

/// Frequency-weighted average of pair scores between two columns. Pairs
/// involving a gap contribute 0.
fn column_score(a: &ProfileColumn, b: &ProfileColumn, p: &AlignParams) -> f64 {
    let mut same = 0.0;
    let (mut i, mut j) = (0, 0);
    while i < a.weights.len() && j < b.weights.len() {
        let (ea, wa) = a.weights[i];
        let (eb, wb) = b.weights[j];
        match ea.cmp(&eb) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                same += wa * wb;
                i += 1;
                j += 1;
            }
        }
    }
    p.mismatch_score * (a.occupied * b.occupied) + (p.match_score - p.mismatch_score) * same
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Step {
    Diagonal,
    /// Column of `a` against gaps in `b`.
    GapInB,
    /// Column of `b` against gaps in `a`.
    GapInA,
}

/// Aligns two alignments end to end. Output rows are `a`'s rows followed by
/// `b`'s rows.
pub fn pairwise_align(
    a: &AlignmentMatrix,
    b: &AlignmentMatrix,
    params: &AlignParams,
) -> Result<AlignmentMatrix, AlignError> {
    pairwise_align_scored(a, b, params).map(|(m, _)| m)
}

/// Like [`pairwise_align`], also returning the optimal alignment score.
pub fn pairwise_align_scored(
    a: &AlignmentMatrix,
    b: &AlignmentMatrix,
    params: &AlignParams,
) -> Result<(AlignmentMatrix, f64), AlignError> {
    if a.rows.is_empty() || b.rows.is_empty() {
        return Err(AlignError::EmptyAlignment);
    }
    if let Some(&shared) = a
        .row_sequence_ids
        .iter()
        .find(|id| b.row_sequence_ids.contains(id))
    {
        return Err(AlignError::OverlappingRows(shared));
    }

    let pa = profile(a);
    let pb = profile(b);
    let (la, lb) = (a.width, b.width);
    let gap = params.gap_open_penalty;
    let stride = lb + 1;

    let mut score = vec![0.0f64; (la + 1) * stride];
    let mut trace = vec![Step::Diagonal; (la + 1) * stride];
    for j in 1..=lb {
        score[j] = -gap * j as f64;
        trace[j] = Step::GapInA;
    }
    for i in 1..=la {
        score[i * stride] = -gap * i as f64;
        trace[i * stride] = Step::GapInB;
        for j in 1..=lb {
            let diag = score[(i - 1) * stride + j - 1] + column_score(&pa[i - 1], &pb[j - 1], params);
            let up = score[(i - 1) * stride + j] - gap;
            let left = score[i * stride + j - 1] - gap;
            // ties: diagonal, then gap in b, then gap in a
            let (best, step) = if diag >= up && diag >= left {
                (diag, Step::Diagonal)
            } else if up >= left {
                (up, Step::GapInB)
            } else {
                (left, Step::GapInA)
            };
            score[i * stride + j] = best;
            trace[i * stride + j] = step;
        }
    }

    let mut path = Vec::with_capacity(la + lb);
    let (mut i, mut j) = (la, lb);
    while i > 0 || j > 0 {
        let step = trace[i * stride + j];
        path.push(step);
        match step {
            Step::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Step::GapInB => i -= 1,
            Step::GapInA => j -= 1,
        }
    }
    path.reverse();

    let width = path.len();
    let mut rows = Vec::with_capacity(a.n_rows() + b.n_rows());
    for src in &a.rows {
        let mut row = Vec::with_capacity(width);
        let mut k = 0;
        for step in &path {
            match step {
                Step::Diagonal | Step::GapInB => {
                    row.push(src[k]);
                    k += 1;
                }
                Step::GapInA => row.push(Symbol::Gap),
            }
        }
        rows.push(row);
    }
    for src in &b.rows {
        let mut row = Vec::with_capacity(width);
        let mut k = 0;
        for step in &path {
            match step {
                Step::Diagonal | Step::GapInA => {
                    row.push(src[k]);
                    k += 1;
                }
                Step::GapInB => row.push(Symbol::Gap),
            }
        }
        rows.push(row);
    }

    let mut row_sequence_ids = a.row_sequence_ids.clone();
    row_sequence_ids.extend_from_slice(&b.row_sequence_ids);
    let mut frequencies = a.frequencies.clone();
    frequencies.extend_from_slice(&b.frequencies);

    Ok((
        AlignmentMatrix {
            rows,
            row_sequence_ids,
            frequencies,
            width,
        },
        score[la * stride + lb],
    ))
}
