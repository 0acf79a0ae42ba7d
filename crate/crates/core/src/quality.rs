//! Average silhouette width over the cuts of an aggregate tree, and the
//! recommended numbers of clusters derived from its peaks.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggtree::{AggregateTree, TreeError};
use crate::distance::DistanceMatrix;

pub const DEFAULT_MAX_RECOMMENDATIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QualityError {
    #[error("silhouette needs at least 2 clusters, found {0}")]
    DegeneratePartition(usize),
    #[error("k = {k} outside the silhouette domain 2..={max}")]
    KOutOfRange { k: usize, max: usize },
    #[error("assignment covers {assignment} sequences but the matrix has {matrix}")]
    SizeMismatch { assignment: usize, matrix: usize },
    #[error(transparent)]
    Tree(#[from] TreeError),
}

/// How per-sequence silhouette values are averaged.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Every unique sequence counts once.
    #[default]
    Unweighted,
    /// Each unique sequence counts by its record frequency.
    Frequency,
}

/// Silhouette of sequence `s` under a labelling. Singletons score 0.
pub fn silhouette_value(
    s: usize,
    labels: &[usize],
    d: &DistanceMatrix,
) -> Result<f64, QualityError> {
    if labels.len() != d.len() {
        return Err(QualityError::SizeMismatch {
            assignment: labels.len(),
            matrix: d.len(),
        });
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    for (t, &c) in labels.iter().enumerate() {
        if t != s {
            sums[c] += d.get(s, t);
            counts[c] += 1;
        }
    }
    let present = (0..k).filter(|&c| counts[c] > 0 || c == labels[s]).count();
    if present < 2 {
        return Err(QualityError::DegeneratePartition(present));
    }
    Ok(silhouette_from_sums(labels[s], &sums, &counts))
}

fn silhouette_from_sums(own: usize, sums: &[f64], counts: &[usize]) -> f64 {
    if counts[own] == 0 {
        return 0.0;
    }
    let u = sums[own] / counts[own] as f64;
    let v = (0..sums.len())
        .filter(|&c| c != own && counts[c] > 0)
        .map(|c| sums[c] / counts[c] as f64)
        .fold(f64::INFINITY, f64::min);
    let denom = u.max(v);
    if denom == 0.0 {
        0.0
    } else {
        (v - u) / denom
    }
}

/// Mean silhouette over all sequences at the `k`-cluster cut.
pub fn average_silhouette_width(
    tree: &AggregateTree,
    d: &DistanceMatrix,
    k: usize,
) -> Result<f64, QualityError> {
    let n = tree.n_leaves();
    if k < 2 || k + 1 > n {
        return Err(QualityError::KOutOfRange {
            k,
            max: n.saturating_sub(1),
        });
    }
    let labels = tree.assignment(&tree.cut_at_k(k)?);
    let total: f64 = (0..n)
        .into_par_iter()
        .map(|s| silhouette_value(s, &labels, d))
        .collect::<Result<Vec<_>, _>>()?
        .iter()
        .sum();
    Ok(total / n as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SilhouetteCurve {
    pub values: BTreeMap<usize, f64>,
    pub recommendations: Vec<usize>,
}

impl SilhouetteCurve {
    /// Computes `z̄(k)` for `k` in `2..=min(N - 1, k_max)` in one
    /// leaves-to-root sweep, keeping for every sequence its distance sum to
    /// each live cluster.
    pub fn compute(
        tree: &AggregateTree,
        d: &DistanceMatrix,
        k_max: Option<usize>,
        weighting: Weighting,
        max_recommendations: usize,
    ) -> Result<SilhouetteCurve, QualityError> {
        let n = tree.n_leaves();
        if d.len() != n {
            return Err(QualityError::SizeMismatch {
                assignment: n,
                matrix: d.len(),
            });
        }
        let upper = n.saturating_sub(1).min(k_max.unwrap_or(usize::MAX));
        let weights: Vec<f64> = match weighting {
            Weighting::Unweighted => vec![1.0; n],
            Weighting::Frequency => (0..n)
                .map(|i| tree.node(i).map(|x| x.record_count as f64))
                .collect::<Result<_, _>>()?,
        };
        let weight_total: f64 = weights.iter().sum();

        // slot per live cluster; merges keep the lower slot
        let mut slot_of_node: Vec<usize> = (0..n).collect();
        slot_of_node.resize(2 * n - 1, usize::MAX);
        let mut label: Vec<usize> = (0..n).collect();
        let mut counts = vec![1usize; n];
        let mut alive = vec![true; n];
        // sums[s][c] = sum of d(s, t) over t in cluster c, excluding s itself
        let mut sums: Vec<Vec<f64>> = (0..n).map(|s| d.row(s).to_vec()).collect();

        let mut values = BTreeMap::new();
        for (step, m) in tree.merge_log().iter().enumerate() {
            let (a, b) = (slot_of_node[m.left], slot_of_node[m.right]);
            let (keep, gone) = (a.min(b), a.max(b));
            slot_of_node[m.node] = keep;
            sums.par_iter_mut().for_each(|row| {
                row[keep] += row[gone];
                row[gone] = 0.0;
            });
            counts[keep] += counts[gone];
            counts[gone] = 0;
            alive[gone] = false;
            for l in label.iter_mut() {
                if *l == gone {
                    *l = keep;
                }
            }

            let k = n - step - 1;
            if k < 2 || k > upper {
                continue;
            }
            let live: Vec<usize> = (0..n).filter(|&c| alive[c]).collect();
            let total: f64 = (0..n)
                .into_par_iter()
                .map(|s| {
                    let own = label[s];
                    let own_count = counts[own] - 1;
                    if own_count == 0 {
                        return 0.0;
                    }
                    let u = sums[s][own] / own_count as f64;
                    let v = live
                        .iter()
                        .filter(|&&c| c != own)
                        .map(|&c| sums[s][c] / counts[c] as f64)
                        .fold(f64::INFINITY, f64::min);
                    let denom = u.max(v);
                    let z = if denom == 0.0 { 0.0 } else { (v - u) / denom };
                    z * weights[s]
                })
                .sum();
            values.insert(k, total / weight_total);
        }

        let recommendations = recommend_k(&values, max_recommendations);
        Ok(SilhouetteCurve {
            values,
            recommendations,
        })
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.values.get(&k).copied()
    }

    /// `k,avg_silhouette_width` CSV, ascending `k`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,avg_silhouette_width\n");
        for (k, z) in &self.values {
            let _ = writeln!(out, "{k},{z}");
        }
        out
    }
}

/// Global maximum plus every local maximum of the curve, ranked by value
/// (ties: smaller `k` first), at most `max_recommendations` long.
///
/// An interior `k` is a local maximum when `z̄(k) > z̄(k-1)` and
/// `z̄(k) >= z̄(k+1)`; the end points compare with their single neighbour
/// using the same inequality.
pub fn recommend_k(values: &BTreeMap<usize, f64>, max_recommendations: usize) -> Vec<usize> {
    let points: Vec<(usize, f64)> = values.iter().map(|(&k, &z)| (k, z)).collect();
    let mut picks: Vec<(usize, f64)> = Vec::new();
    for (i, &(k, z)) in points.iter().enumerate() {
        let rises = i == 0 || z > points[i - 1].1;
        let holds = i + 1 == points.len() || z >= points[i + 1].1;
        if rises && holds {
            picks.push((k, z));
        }
    }
    if let Some(&best) = points
        .iter()
        .fold(None::<&(usize, f64)>, |acc, p| match acc {
            Some(a) if a.1 >= p.1 => Some(a),
            _ => Some(p),
        })
    {
        if !picks.iter().any(|p| p.0 == best.0) {
            picks.push(best);
        }
    }
    picks.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    picks.truncate(max_recommendations);
    picks.into_iter().map(|(k, _)| k).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::alignment::AlignParams;
    use crate::distance::SequenceMetric;
    use crate::ingest::{EventId, UniqueSequenceSet};

    fn ids(s: &str) -> Vec<EventId> {
        s.bytes().map(|b| EventId(u32::from(b - b'a'))).collect()
    }

    fn curve(points: &[(usize, f64)]) -> BTreeMap<usize, f64> {
        points.iter().copied().collect()
    }

    #[test]
    fn peaks_from_hand_curve() {
        let c = curve(&[(2, 0.5), (3, 0.9), (4, 0.7), (5, 0.8), (6, 0.6)]);
        assert_eq!(recommend_k(&c, 10), vec![3, 5]);
    }

    #[test]
    fn decreasing_curve_peaks_at_two() {
        let c = curve(&[(2, 0.9), (3, 0.8), (4, 0.5), (5, 0.1)]);
        assert_eq!(recommend_k(&c, 10), vec![2]);
    }

    #[test]
    fn increasing_curve_peaks_at_end() {
        let c = curve(&[(2, 0.1), (3, 0.2), (4, 0.3)]);
        assert_eq!(recommend_k(&c, 10), vec![4]);
    }

    #[test]
    fn plateau_and_truncation() {
        let c = curve(&[(2, 0.5), (3, 0.5), (4, 0.1), (5, 0.4), (6, 0.2), (7, 0.3)]);
        // k=2 counts (>= its right neighbour); k=3 does not rise
        assert_eq!(recommend_k(&c, 10), vec![2, 5, 7]);
        assert_eq!(recommend_k(&c, 2), vec![2, 5]);
        assert!(recommend_k(&BTreeMap::new(), 10).is_empty());
    }

    fn toy() -> (AggregateTree, DistanceMatrix) {
        let set = UniqueSequenceSet::from_frequencies(
            ["aab", "ab", "cd", "ccd"].iter().map(|s| (ids(s), 1)),
        );
        AggregateTree::build(&set, SequenceMetric::default(), &AlignParams::default()).unwrap()
    }

    #[test]
    fn toy_silhouette() {
        let (tree, d) = toy();
        let z = average_silhouette_width(&tree, &d, 2).unwrap();
        let expected = 3.0 / 10f64.sqrt();
        assert!((z - expected).abs() < 1e-12, "{z}");
        let labels = tree.assignment(&tree.cut_at_k(2).unwrap());
        for s in 0..4 {
            let zs = silhouette_value(s, &labels, &d).unwrap();
            assert!((zs - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn singleton_and_degenerate() {
        let (tree, d) = toy();
        let labels = tree.assignment(&tree.cut_at_k(3).unwrap());
        let singleton = (0..4)
            .find(|&s| labels.iter().filter(|&&l| l == labels[s]).count() == 1)
            .unwrap();
        assert_eq!(silhouette_value(singleton, &labels, &d).unwrap(), 0.0);
        assert_eq!(
            silhouette_value(0, &[0, 0, 0, 0], &d),
            Err(QualityError::DegeneratePartition(1))
        );
        assert!(matches!(
            average_silhouette_width(&tree, &d, 1),
            Err(QualityError::KOutOfRange { .. })
        ));
        assert!(matches!(
            average_silhouette_width(&tree, &d, 4),
            Err(QualityError::KOutOfRange { .. })
        ));
    }

    #[test]
    fn equal_distances_give_zero() {
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..4).map(|j| if i == j { 0.0 } else { 0.5 }).collect())
            .collect();
        let d = DistanceMatrix::from_rows(&rows).unwrap();
        for s in 0..4 {
            assert_eq!(silhouette_value(s, &[0, 0, 1, 1], &d).unwrap(), 0.0);
        }
    }

    #[test]
    fn sweep_matches_per_k() {
        let set = UniqueSequenceSet::from_frequencies(
            ["aab", "ab", "cd", "ccd", "abcd", "ddc", "bba", "e", "ee"]
                .iter()
                .enumerate()
                .map(|(i, s)| (ids(s), i as u64 + 1)),
        );
        let (tree, d) =
            AggregateTree::build(&set, SequenceMetric::default(), &AlignParams::default()).unwrap();
        let c = SilhouetteCurve::compute(&tree, &d, None, Weighting::Unweighted, 10).unwrap();
        assert_eq!(c.values.keys().copied().collect::<Vec<_>>(), (2..=8).collect::<Vec<_>>());
        for (&k, &z) in &c.values {
            let direct = average_silhouette_width(&tree, &d, k).unwrap();
            assert!((z - direct).abs() < 1e-12, "k={k}: {z} vs {direct}");
            assert!((-1.0..=1.0).contains(&z));
        }
        let best = c.values.values().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(c.get(c.recommendations[0]), Some(best));

        let capped = SilhouetteCurve::compute(&tree, &d, Some(4), Weighting::Unweighted, 10).unwrap();
        assert_eq!(capped.values.len(), 3);

        let weighted = SilhouetteCurve::compute(&tree, &d, None, Weighting::Frequency, 10).unwrap();
        assert_eq!(weighted.values.len(), 7);
    }

    #[test]
    fn csv_export() {
        let (tree, d) = toy();
        let c = SilhouetteCurve::compute(&tree, &d, None, Weighting::Unweighted, 10).unwrap();
        let csv = c.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("k,avg_silhouette_width"));
        assert_eq!(lines.count(), 2);
    }
}
