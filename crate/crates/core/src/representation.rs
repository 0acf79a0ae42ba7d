//! Score and Simplify: column information scores and column merging.
//!
//! For column `j` of an alignment, with `P_a` the frequency-weighted share of
//! rows holding symbol `a` and `G_j` the (unweighted) number of gap rows:
//!
//! ```text
//! E_j = sum over non-gap a of -P_a log2(P_a)  +  -P_gap log2(P_gap / G_j)
//! I_j = 1 - min(E_j, log2(|A| + 1)) / log2(|A| + 1)
//! ```
//!
//! where `|A|` counts the distinct event types in the whole alignment. A run
//! of two or more consecutive columns scoring below the threshold `I_τ` is
//! collapsed into one column whose cells hold each row's events in order.

use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{AlignmentMatrix, Symbol};
use crate::ingest::EventId;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RepresentationError {
    #[error("column {column} out of range for alignment of width {width}")]
    ColumnOutOfRange { column: usize, width: usize },
    #[error("score vector has {scores} entries but alignment has {width} columns")]
    ScoreLengthMismatch { scores: usize, width: usize },
}

/// Symbol probabilities of one alignment column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnDistribution {
    pub probs: BTreeMap<Symbol, f64>,
    pub gap_count: usize,
}

impl ColumnDistribution {
    pub fn prob(&self, symbol: Symbol) -> f64 {
        self.probs.get(&symbol).copied().unwrap_or(0.0)
    }
}

pub fn column_distribution(
    lambda: &AlignmentMatrix,
    j: usize,
) -> Result<ColumnDistribution, RepresentationError> {
    if j >= lambda.width() {
        return Err(RepresentationError::ColumnOutOfRange {
            column: j,
            width: lambda.width(),
        });
    }
    let total = lambda.total_frequency() as f64;
    let mut weights: BTreeMap<Symbol, u64> = BTreeMap::new();
    let mut gap_count = 0;
    for (symbol, &freq) in lambda.column(j).zip(lambda.frequencies()) {
        *weights.entry(symbol).or_default() += freq;
        if symbol.is_gap() {
            gap_count += 1;
        }
    }
    let probs = weights
        .into_iter()
        .map(|(s, w)| (s, w as f64 / total))
        .collect();
    Ok(ColumnDistribution { probs, gap_count })
}

pub fn column_entropy(dist: &ColumnDistribution) -> f64 {
    dist.probs
        .iter()
        .filter(|(_, &p)| p > 0.0)
        .map(|(symbol, &p)| match symbol {
            Symbol::Gap => -p * (p / dist.gap_count as f64).log2(),
            Symbol::Event(_) => -p * p.log2(),
        })
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfoScoreVector {
    pub scores: Vec<f64>,
    pub alphabet_size: usize,
}

/// Distinct event types anywhere in the alignment.
pub fn alignment_alphabet_size(lambda: &AlignmentMatrix) -> usize {
    lambda
        .rows()
        .iter()
        .flatten()
        .filter_map(|s| s.event())
        .collect::<BTreeSet<EventId>>()
        .len()
}

/// Score from a column entropy, clamped into `[0, 1]`.
pub fn information_score(entropy: f64, alphabet_size: usize) -> f64 {
    let max = ((alphabet_size + 1) as f64).log2();
    if max <= 0.0 {
        return 0.0;
    }
    1.0 - entropy.min(max) / max
}

pub fn information_scores(lambda: &AlignmentMatrix) -> InfoScoreVector {
    let alphabet_size = alignment_alphabet_size(lambda);
    let scores = (0..lambda.width())
        .map(|j| {
            let dist = column_distribution(lambda, j).expect("column in range");
            information_score(column_entropy(&dist), alphabet_size)
        })
        .collect();
    InfoScoreVector {
        scores,
        alphabet_size,
    }
}

/// Alignment after merging low-information column runs. A cell is an
/// ordered list of events; an empty cell is a gap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimplifiedMatrix {
    pub cells: Vec<Vec<Vec<EventId>>>,
    /// Half-open range of original alignment columns each column absorbed.
    pub column_origin: Vec<Range<usize>>,
}

impl SimplifiedMatrix {
    pub fn width(&self) -> usize {
        self.column_origin.len()
    }

    pub fn is_merged(&self, column: usize) -> bool {
        self.column_origin[column].len() > 1
    }

    /// Concatenation of a row's cells.
    pub fn row_events(&self, row: usize) -> Vec<EventId> {
        self.cells[row].iter().flatten().copied().collect()
    }
}

/// Left-to-right sweep: whenever columns `j` and `j + 1` both score below
/// `threshold`, column `j`'s content is prepended to column `j + 1` and `j`
/// is dropped. Scores are not recomputed during the sweep.
pub fn simplify(
    lambda: &AlignmentMatrix,
    scores: &InfoScoreVector,
    threshold: f64,
) -> Result<SimplifiedMatrix, RepresentationError> {
    let width = lambda.width();
    if scores.scores.len() != width {
        return Err(RepresentationError::ScoreLengthMismatch {
            scores: scores.scores.len(),
            width,
        });
    }
    let low: Vec<bool> = scores.scores.iter().map(|&s| s < threshold).collect();

    let mut column_origin = Vec::new();
    let mut start = 0;
    for j in 0..width {
        let absorbed_into_next = j + 1 < width && low[j] && low[j + 1];
        if !absorbed_into_next {
            column_origin.push(start..j + 1);
            start = j + 1;
        }
    }

    let cells = lambda
        .rows()
        .iter()
        .map(|row| {
            column_origin
                .iter()
                .map(|range| row[range.clone()].iter().filter_map(|s| s.event()).collect())
                .collect()
        })
        .collect();

    Ok(SimplifiedMatrix {
        cells,
        column_origin,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewCell {
    pub events: Vec<EventId>,
    pub merged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewRow {
    pub sequence_index: usize,
    pub frequency: u64,
    pub cells: Vec<ViewCell>,
}

/// Everything a client needs to draw one cluster at a given `I_τ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterView {
    pub node_id: usize,
    pub rows: Vec<ViewRow>,
    pub column_origin: Vec<Range<usize>>,
    pub information_scores: Vec<f64>,
    pub record_count: u64,
    pub record_share: f64,
    pub small_cluster: bool,
}

/// Builds the view payload for an alignment. `total_records` is the record
/// count of the whole (filtered) dataset.
pub fn build_cluster_view(
    node_id: usize,
    lambda: &AlignmentMatrix,
    scores: &InfoScoreVector,
    simplified: &SimplifiedMatrix,
    total_records: u64,
    small_cluster_threshold: f64,
) -> ClusterView {
    let record_count = lambda.total_frequency();
    let record_share = if total_records == 0 {
        0.0
    } else {
        record_count as f64 / total_records as f64
    };
    let rows = simplified
        .cells
        .iter()
        .zip(lambda.row_sequence_ids().iter().zip(lambda.frequencies()))
        .map(|(cells, (&sequence_index, &frequency))| ViewRow {
            sequence_index,
            frequency,
            cells: cells
                .iter()
                .enumerate()
                .map(|(c, events)| ViewCell {
                    events: events.clone(),
                    merged: simplified.is_merged(c),
                })
                .collect(),
        })
        .collect();
    ClusterView {
        node_id,
        rows,
        column_origin: simplified.column_origin.clone(),
        information_scores: scores.scores.clone(),
        record_count,
        record_share,
        small_cluster: record_share < small_cluster_threshold,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::recover_sequence;

    const A: Symbol = Symbol::Event(EventId(0));
    const B: Symbol = Symbol::Event(EventId(1));
    const C: Symbol = Symbol::Event(EventId(2));
    const GAP: Symbol = Symbol::Gap;

    fn matrix(rows: Vec<Vec<Symbol>>, freqs: Vec<u64>) -> AlignmentMatrix {
        let ids = (0..rows.len()).collect();
        AlignmentMatrix::from_rows(rows, ids, freqs).unwrap()
    }

    fn dist(pairs: &[(Symbol, f64)], gap_count: usize) -> ColumnDistribution {
        ColumnDistribution {
            probs: pairs.iter().copied().collect(),
            gap_count,
        }
    }

    #[test]
    fn distribution_examples() {
        let m = matrix(vec![vec![A], vec![A], vec![A]], vec![5, 1, 2]);
        let d = column_distribution(&m, 0).unwrap();
        assert_eq!(d.prob(A), 1.0);
        assert_eq!(d.gap_count, 0);

        let m = matrix(vec![vec![A], vec![GAP]], vec![1, 1]);
        let d = column_distribution(&m, 0).unwrap();
        assert_eq!(d.prob(A), 0.5);
        assert_eq!(d.prob(GAP), 0.5);
        assert_eq!(d.gap_count, 1);

        let m = matrix(vec![vec![A], vec![B]], vec![3, 1]);
        let d = column_distribution(&m, 0).unwrap();
        assert_eq!(d.prob(A), 0.75);
        assert_eq!(d.prob(B), 0.25);

        assert_eq!(
            column_distribution(&m, 1),
            Err(RepresentationError::ColumnOutOfRange { column: 1, width: 1 })
        );
    }

    #[test]
    fn gap_count_is_unweighted() {
        let m = matrix(vec![vec![GAP], vec![GAP], vec![A]], vec![5, 1, 2]);
        let d = column_distribution(&m, 0).unwrap();
        assert_eq!(d.gap_count, 2);
        assert_eq!(d.prob(GAP), 0.75);
    }

    #[test]
    fn entropy_examples() {
        assert_eq!(column_entropy(&dist(&[(A, 1.0)], 0)), 0.0);
        assert_eq!(column_entropy(&dist(&[(A, 0.5), (B, 0.5)], 0)), 1.0);
        assert_eq!(column_entropy(&dist(&[(A, 0.5), (GAP, 0.5)], 1)), 1.0);
        assert_eq!(column_entropy(&dist(&[(GAP, 1.0)], 4)), 2.0);
    }

    #[test]
    fn score_examples() {
        // homogeneous gap-free column
        let m = matrix(vec![vec![A, A], vec![A, B], vec![A, C]], vec![1, 1, 1]);
        assert_eq!(information_scores(&m).scores[0], 1.0);

        // even split over |A| = 3: 1 - 1/log2(4)
        let m = matrix(vec![vec![A, C], vec![B, C]], vec![1, 1]);
        let s = information_scores(&m);
        assert_eq!(s.alphabet_size, 3);
        assert!((s.scores[0] - 0.5).abs() < 1e-9);

        // |A| = 1, {a: 0.25, gap: 0.75} with 3 gap rows: E = 0.5 + 1.5 = 2 > 1
        let m = matrix(vec![vec![A], vec![GAP], vec![GAP], vec![GAP]], vec![1, 1, 1, 1]);
        let d = column_distribution(&m, 0).unwrap();
        assert!((column_entropy(&d) - 2.0).abs() < 1e-12);
        assert_eq!(information_scores(&m).scores[0], 0.0);
    }

    fn scores(v: &[f64]) -> InfoScoreVector {
        InfoScoreVector {
            scores: v.to_vec(),
            alphabet_size: 3,
        }
    }

    #[test]
    fn zero_threshold_keeps_alignment() {
        let m = matrix(vec![vec![A, B, GAP, C], vec![B, A, C, C]], vec![1, 1]);
        let s = information_scores(&m);
        let simple = simplify(&m, &s, 0.0).unwrap();
        assert_eq!(simple.width(), 4);
        assert_eq!(simple.cells[0], vec![vec![EventId(0)], vec![EventId(1)], vec![], vec![EventId(2)]]);
        assert!((0..4).all(|c| !simple.is_merged(c)));
    }

    #[test]
    fn sweep_trace() {
        let m = matrix(vec![vec![A, B, C, A], vec![A, C, GAP, A]], vec![1, 1]);
        let simple = simplify(&m, &scores(&[0.9, 0.3, 0.2, 1.0]), 0.6).unwrap();
        assert_eq!(simple.width(), 3);
        assert_eq!(simple.column_origin, vec![0..1, 1..3, 3..4]);
        assert_eq!(simple.cells[0][1], vec![EventId(1), EventId(2)]);
        assert_eq!(simple.cells[1][1], vec![EventId(2)]);
    }

    #[test]
    fn whole_run_collapses_to_one_column() {
        let m = matrix(vec![vec![A, B, C], vec![C, GAP, A]], vec![1, 1]);
        let simple = simplify(&m, &scores(&[0.1, 0.1, 0.1]), 0.6).unwrap();
        assert_eq!(simple.width(), 1);
        assert_eq!(simple.cells[0][0], vec![EventId(0), EventId(1), EventId(2)]);
        assert_eq!(simple.cells[1][0], vec![EventId(2), EventId(0)]);
    }

    #[test]
    fn isolated_low_column_is_kept() {
        let m = matrix(vec![vec![A, B, C]], vec![1]);
        let simple = simplify(&m, &scores(&[0.9, 0.1, 0.9]), 0.6).unwrap();
        assert_eq!(simple.width(), 3);
    }

    #[test]
    fn all_gap_merge_is_empty_cell() {
        let m = matrix(vec![vec![GAP, GAP, A], vec![B, C, A]], vec![1, 1]);
        let simple = simplify(&m, &scores(&[0.1, 0.1, 1.0]), 0.5).unwrap();
        assert_eq!(simple.cells[0][0], Vec::<EventId>::new());
        assert!(simple.is_merged(0));
    }

    #[test]
    fn mismatched_score_length() {
        let m = matrix(vec![vec![A, B]], vec![1]);
        assert!(simplify(&m, &scores(&[1.0]), 0.5).is_err());
    }

    #[test]
    fn leaf_view_has_no_merges() {
        let m = AlignmentMatrix::leaf(7, &[EventId(0), EventId(1), EventId(0)], 4);
        let s = information_scores(&m);
        assert!(s.scores.iter().all(|&x| x == 1.0));
        let simple = simplify(&m, &s, 1.0).unwrap();
        let view = build_cluster_view(7, &m, &s, &simple, 8, 0.01);
        assert_eq!(view.rows.len(), 1);
        assert!(view.rows[0].cells.iter().all(|c| c.events.len() == 1 && !c.merged));
        assert_eq!(view.record_count, 4);
        assert_eq!(view.record_share, 0.5);
        assert!(!view.small_cluster);
    }

    #[test]
    fn full_threshold_preserves_row_order() {
        let m = matrix(vec![vec![A, B], vec![B, A]], vec![1, 1]);
        let s = information_scores(&m);
        let simple = simplify(&m, &s, 1.0).unwrap();
        let view = build_cluster_view(0, &m, &s, &simple, 300, 0.01);
        assert_eq!(view.rows[0].cells.len(), 1);
        assert_eq!(view.rows[0].cells[0].events, vec![EventId(0), EventId(1)]);
        assert_eq!(view.rows[1].cells[0].events, vec![EventId(1), EventId(0)]);
        assert!(view.rows[0].cells[0].merged);
        assert!(view.small_cluster);
    }

    #[test]
    fn simplified_rows_keep_every_event() {
        let m = matrix(
            vec![vec![A, GAP, B, C, GAP], vec![A, C, GAP, B, A], vec![GAP, B, B, C, A]],
            vec![2, 1, 3],
        );
        let s = information_scores(&m);
        let mut previous = usize::MAX;
        for t in 0..=10 {
            let simple = simplify(&m, &s, f64::from(t) / 10.0).unwrap();
            assert!(simple.width() <= previous);
            previous = simple.width();
            for row in 0..3 {
                assert_eq!(simple.row_events(row), recover_sequence(&m, row).unwrap());
            }
        }
    }
}
