//! q-gram profiles and the cosine distance between them.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::{EventId, UniqueSequenceSet};

/// Distances below this are treated as exact zeros in equality checks.
pub const ZERO_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DistanceError {
    #[error("sequence of length {len} is shorter than q = {q}")]
    EmptySequence { len: usize, q: usize },
    #[error("q must be at least 1")]
    InvalidQ,
    #[error("profiles use different q ({0} vs {1})")]
    QMismatch(usize, usize),
    #[error("clusters share sequence {0}")]
    OverlappingClusters(usize),
    #[error("cluster is empty")]
    EmptyCluster,
    #[error("need at least 2 sequences, found {0}")]
    TooFewSequences(usize),
}

/// Sequence distance used to seed the aggregate tree.
///
/// Only the cosine q-gram distance is implemented; the enum is the hook for
/// alternative metrics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "metric", rename_all = "snake_case")]
pub enum SequenceMetric {
    QgramCosine { q: usize },
}

impl Default for SequenceMetric {
    fn default() -> Self {
        SequenceMetric::QgramCosine { q: 1 }
    }
}

/// Counts of every contiguous length-`q` window of a sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QGramProfile {
    q: usize,
    counts: BTreeMap<Vec<EventId>, u32>,
}

impl QGramProfile {
    pub fn q(&self) -> usize {
        self.q
    }

    pub fn counts(&self) -> &BTreeMap<Vec<EventId>, u32> {
        &self.counts
    }

    pub fn count(&self, gram: &[EventId]) -> u32 {
        self.counts.get(gram).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    fn norm(&self) -> f64 {
        self.counts
            .values()
            .map(|&c| f64::from(c) * f64::from(c))
            .sum::<f64>()
            .sqrt()
    }
}

pub fn qgram_profile(seq: &[EventId], q: usize) -> Result<QGramProfile, DistanceError> {
    if q == 0 {
        return Err(DistanceError::InvalidQ);
    }
    if seq.len() < q {
        return Err(DistanceError::EmptySequence { len: seq.len(), q });
    }
    let mut counts = BTreeMap::new();
    for window in seq.windows(q) {
        *counts.entry(window.to_vec()).or_insert(0) += 1;
    }
    Ok(QGramProfile { q, counts })
}

/// `1 - cos(p, r)` over the union of q-gram keys, clamped to `[0, 1]`.
/// Equal profiles give exactly 0.
pub fn qgram_distance(p: &QGramProfile, r: &QGramProfile) -> Result<f64, DistanceError> {
    if p.q != r.q {
        return Err(DistanceError::QMismatch(p.q, r.q));
    }
    Ok(cosine_distance(p, p.norm(), r, r.norm()))
}

fn cosine_distance(p: &QGramProfile, p_norm: f64, r: &QGramProfile, r_norm: f64) -> f64 {
    if p.counts == r.counts {
        return 0.0;
    }
    if p_norm == 0.0 || r_norm == 0.0 {
        return 1.0;
    }
    // merge-walk both sorted key sets; summation order is fixed by key order
    let mut dot = 0.0;
    let mut a = p.counts.iter().peekable();
    let mut b = r.counts.iter().peekable();
    while let (Some((ka, &ca)), Some((kb, &cb))) = (a.peek(), b.peek()) {
        match ka.cmp(kb) {
            std::cmp::Ordering::Less => {
                a.next();
            }
            std::cmp::Ordering::Greater => {
                b.next();
            }
            std::cmp::Ordering::Equal => {
                dot += f64::from(ca) * f64::from(cb);
                a.next();
                b.next();
            }
        }
    }
    (1.0 - dot / (p_norm * r_norm)).clamp(0.0, 1.0)
}

/// Dense symmetric matrix of pairwise sequence distances.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from a full row-major table. The table must be square,
    /// symmetric, zero on the diagonal, and bounded by `[0, 1]`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return None;
        }
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return None;
            }
            for j in 0..n {
                let v = rows[i][j];
                if !(0.0..=1.0).contains(&v) || v != rows[j][i] {
                    return None;
                }
            }
        }
        Some(DistanceMatrix {
            n,
            values: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }
}

pub fn distance_matrix(
    set: &UniqueSequenceSet,
    metric: SequenceMetric,
) -> Result<DistanceMatrix, DistanceError> {
    let n = set.len();
    if n < 2 {
        return Err(DistanceError::TooFewSequences(n));
    }
    let SequenceMetric::QgramCosine { q } = metric;
    let profiles = set
        .sequences
        .iter()
        .map(|s| qgram_profile(&s.events, q).map(|p| (p.norm(), p)))
        .collect::<Result<Vec<_>, _>>()?;

    // each entry is computed independently, so the parallel result is
    // identical to a sequential one
    let upper: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (ni, pi) = &profiles[i];
            ((i + 1)..n)
                .map(|j| {
                    let (nj, pj) = &profiles[j];
                    cosine_distance(pi, *ni, pj, *nj)
                })
                .collect()
        })
        .collect();

    let mut values = vec![0.0; n * n];
    for (i, row) in upper.iter().enumerate() {
        for (offset, &d) in row.iter().enumerate() {
            let j = i + 1 + offset;
            values[i * n + j] = d;
            values[j * n + i] = d;
        }
    }
    Ok(DistanceMatrix { n, values })
}

/// Mean of `d[i][j]` over `i` in `a`, `j` in `b`, summed with `a` as the
/// outer loop in the order given.
pub fn average_linkage(a: &[usize], b: &[usize], d: &DistanceMatrix) -> Result<f64, DistanceError> {
    if a.is_empty() || b.is_empty() {
        return Err(DistanceError::EmptyCluster);
    }
    if let Some(&shared) = a.iter().find(|x| b.contains(x)) {
        return Err(DistanceError::OverlappingClusters(shared));
    }
    Ok(linkage_unchecked(a, b, d))
}

#[inline]
pub(crate) fn linkage_unchecked(a: &[usize], b: &[usize], d: &DistanceMatrix) -> f64 {
    let mut sum = 0.0;
    for &i in a {
        let row = d.row(i);
        for &j in b {
            sum += row[j];
        }
    }
    sum / (a.len() * b.len()) as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ids(s: &str) -> Vec<EventId> {
        s.bytes().map(|b| EventId(u32::from(b - b'a'))).collect()
    }

    fn dist(a: &str, b: &str) -> f64 {
        qgram_distance(
            &qgram_profile(&ids(a), 1).unwrap(),
            &qgram_profile(&ids(b), 1).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn unigram_profile() {
        let p = qgram_profile(&ids("aab"), 1).unwrap();
        assert_eq!(p.count(&ids("a")), 2);
        assert_eq!(p.count(&ids("b")), 1);
        assert_eq!(p.counts().len(), 2);
    }

    #[test]
    fn bigram_profile() {
        let p = qgram_profile(&ids("abab"), 2).unwrap();
        assert_eq!(p.count(&ids("ab")), 2);
        assert_eq!(p.count(&ids("ba")), 1);
        assert_eq!(p.total(), 3);
    }

    #[test]
    fn empty_sequence_rejected() {
        assert_eq!(
            qgram_profile(&[], 1),
            Err(DistanceError::EmptySequence { len: 0, q: 1 })
        );
        assert_eq!(qgram_profile(&ids("ab"), 0), Err(DistanceError::InvalidQ));
    }

    #[test]
    fn permutation_has_zero_distance() {
        assert_eq!(dist("abcde", "deabc"), 0.0);
    }

    #[test]
    fn disjoint_support_is_one() {
        assert_eq!(dist("ab", "cd"), 1.0);
    }

    #[test]
    fn hand_computed_cosine() {
        // (2,1)·(1,1) = 3, |(2,1)| = sqrt 5, |(1,1)| = sqrt 2
        let expected = 1.0 - 3.0 / 10f64.sqrt();
        assert!((dist("aab", "ab") - expected).abs() < 1e-15);
        assert!((expected - 0.05132).abs() < 1e-5);
    }

    #[test]
    fn q_mismatch() {
        let p = qgram_profile(&ids("abc"), 1).unwrap();
        let r = qgram_profile(&ids("abc"), 2).unwrap();
        assert_eq!(qgram_distance(&p, &r), Err(DistanceError::QMismatch(1, 2)));
    }

    fn set(seqs: &[&str]) -> UniqueSequenceSet {
        UniqueSequenceSet::from_frequencies(seqs.iter().map(|s| (ids(s), 1)))
    }

    #[test]
    fn matrix_examples() {
        let m = distance_matrix(&set(&["ab", "ba"]), SequenceMetric::default()).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        let m = distance_matrix(&set(&["ab", "cd"]), SequenceMetric::default()).unwrap();
        assert_eq!(m.get(0, 1), 1.0);
        assert_eq!(m.get(1, 0), 1.0);
        assert!(matches!(
            distance_matrix(&set(&["ab"]), SequenceMetric::default()),
            Err(DistanceError::TooFewSequences(1))
        ));
    }

    #[test]
    fn matrix_propagates_short_sequences() {
        let m = distance_matrix(
            &set(&["ab", "abc", "c"]),
            SequenceMetric::QgramCosine { q: 2 },
        );
        assert_eq!(m, Err(DistanceError::EmptySequence { len: 1, q: 2 }));
    }

    #[test]
    fn linkage_examples() {
        let d = DistanceMatrix::from_rows(&[
            vec![0.0, 0.2, 0.4],
            vec![0.2, 0.0, 0.7],
            vec![0.4, 0.7, 0.0],
        ])
        .unwrap();
        assert_eq!(average_linkage(&[0], &[1], &d).unwrap(), 0.2);
        assert!((average_linkage(&[0], &[1, 2], &d).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(
            average_linkage(&[0, 1], &[1, 2], &d),
            Err(DistanceError::OverlappingClusters(1))
        );
        assert_eq!(average_linkage(&[], &[1], &d), Err(DistanceError::EmptyCluster));
    }

    fn seq_strategy() -> impl Strategy<Value = Vec<EventId>> {
        prop::collection::vec((0u32..6).prop_map(EventId), 1..10)
    }

    proptest! {
        #[test]
        fn distance_bounded_and_symmetric(a in seq_strategy(), b in seq_strategy()) {
            let pa = qgram_profile(&a, 1).unwrap();
            let pb = qgram_profile(&b, 1).unwrap();
            let ab = qgram_distance(&pa, &pb).unwrap();
            let ba = qgram_distance(&pb, &pa).unwrap();
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert_eq!(ab, ba);
            prop_assert_eq!(qgram_distance(&pa, &pa).unwrap(), 0.0);
        }

        #[test]
        fn unigram_distance_ignores_order(a in seq_strategy(), b in seq_strategy(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = a.clone();
            shuffled.shuffle(&mut rng);
            let pb = qgram_profile(&b, 1).unwrap();
            let d1 = qgram_distance(&qgram_profile(&a, 1).unwrap(), &pb).unwrap();
            let d2 = qgram_distance(&qgram_profile(&shuffled, 1).unwrap(), &pb).unwrap();
            prop_assert_eq!(d1, d2);
        }

        #[test]
        fn linkage_matches_brute_force(
            seqs in prop::collection::btree_set(seq_strategy(), 9..12),
        ) {
            let s = UniqueSequenceSet::from_frequencies(seqs.into_iter().map(|x| (x, 1)));
            let d = distance_matrix(&s, SequenceMetric::default()).unwrap();
            let a: Vec<usize> = (0..5).collect();
            let b: Vec<usize> = (5..9).collect();
            let mut pairs = Vec::new();
            for &i in &a {
                for &j in &b {
                    pairs.push(d.get(i, j));
                }
            }
            prop_assert_eq!(pairs.len(), 20);
            let brute = pairs.iter().sum::<f64>() / pairs.len() as f64;
            let got = average_linkage(&a, &b, &d).unwrap();
            prop_assert!((got - brute).abs() < 1e-12);
            let lo = pairs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = pairs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(got >= lo - 1e-12 && got <= hi + 1e-12);
        }

        #[test]
        fn matrix_is_symmetric_with_zero_diagonal(
            seqs in prop::collection::btree_set(seq_strategy(), 2..10),
        ) {
            let s = UniqueSequenceSet::from_frequencies(seqs.into_iter().map(|x| (x, 1)));
            let d = distance_matrix(&s, SequenceMetric::default()).unwrap();
            for i in 0..d.len() {
                prop_assert_eq!(d.get(i, i), 0.0);
                for j in 0..d.len() {
                    prop_assert_eq!(d.get(i, j), d.get(j, i));
                }
            }
        }
    }
}
