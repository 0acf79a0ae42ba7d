//! Slow, obviously-correct reference implementations.
//!
//! Nothing here depends on `seqlod-core`; inputs are plain vectors of event
//! codes so the references cannot share bugs with the engine.

use std::collections::{BTreeSet, HashMap};

/// `1 - cos` between q-gram count vectors, clamped to `[0, 1]`.
pub fn cosine_distance(a: &[u32], b: &[u32], q: usize) -> f64 {
    let grams = |s: &[u32]| {
        let mut m: HashMap<Vec<u32>, f64> = HashMap::new();
        if s.len() >= q {
            for w in s.windows(q) {
                *m.entry(w.to_vec()).or_insert(0.0) += 1.0;
            }
        }
        m
    };
    let (pa, pb) = (grams(a), grams(b));
    if pa == pb {
        return 0.0;
    }
    let dot: f64 = pa.iter().map(|(g, x)| x * pb.get(g).unwrap_or(&0.0)).sum();
    let na: f64 = pa.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = pb.values().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 1.0;
    }
    (1.0 - dot / (na * nb)).clamp(0.0, 1.0)
}

/// One merge: `(lower node id, higher node id, new node id, distance)`.
pub type Merge = (usize, usize, usize, f64);

/// Average-linkage agglomeration by full rescans.
///
/// Every step recomputes every live pair's distance from scratch as the mean
/// of cross distances, summing with the lower-id cluster's sorted members as
/// the outer loop, and merges the smallest `(distance, low id, high id)`.
pub fn average_linkage(d: &[Vec<f64>]) -> Vec<Merge> {
    let n = d.len();
    let mut live: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(f64, usize, usize, usize, usize)> = None;
        for x in 0..live.len() {
            for y in 0..live.len() {
                let ((ia, ma), (ib, mb)) = (&live[x], &live[y]);
                if ia >= ib {
                    continue;
                }
                let mut sum = 0.0;
                for &i in ma {
                    for &j in mb {
                        sum += d[i][j];
                    }
                }
                let v = sum / (ma.len() * mb.len()) as f64;
                let better = match best {
                    None => true,
                    Some((bv, bi, bj, _, _)) => v < bv || (v == bv && (*ia, *ib) < (bi, bj)),
                };
                if better {
                    best = Some((v, *ia, *ib, x, y));
                }
            }
        }
        let (v, ia, ib, x, y) = best.expect("two live clusters");
        let mut members: Vec<usize> = live[x].1.iter().chain(&live[y].1).copied().collect();
        members.sort_unstable();
        let node = n + step;
        merges.push((ia, ib, node, v));
        let (hi, lo) = (x.max(y), x.min(y));
        live.remove(hi);
        live.remove(lo);
        live.push((node, members));
    }
    merges
}

/// Partition into `k` clusters obtained by replaying the first `n - k`
/// merges.
pub fn partition_at(n: usize, merges: &[Merge], k: usize) -> BTreeSet<BTreeSet<usize>> {
    let mut sets: HashMap<usize, BTreeSet<usize>> = (0..n).map(|i| (i, BTreeSet::from([i]))).collect();
    for &(a, b, node, _) in &merges[..n - k] {
        let mut s = sets.remove(&a).expect("live");
        s.extend(sets.remove(&b).expect("live"));
        sets.insert(node, s);
    }
    sets.into_values().collect()
}

/// Best global alignment score of two sequences, by enumerating every
/// alignment path.
pub fn best_alignment_score(a: &[u32], b: &[u32], matched: f64, mismatched: f64, gap: f64) -> f64 {
    fn go(a: &[u32], b: &[u32], m: f64, x: f64, g: f64) -> f64 {
        match (a.split_first(), b.split_first()) {
            (None, None) => 0.0,
            (Some((_, ra)), None) => -g + go(ra, b, m, x, g),
            (None, Some((_, rb))) => -g + go(a, rb, m, x, g),
            (Some((ca, ra)), Some((cb, rb))) => {
                let pair = if ca == cb { m } else { x };
                let diag = pair + go(ra, rb, m, x, g);
                let up = -g + go(ra, b, m, x, g);
                let left = -g + go(a, rb, m, x, g);
                diag.max(up).max(left)
            }
        }
    }
    go(a, b, matched, mismatched, gap)
}

/// Score of a given pairwise alignment; `None` marks a gap.
pub fn alignment_score(
    a: &[Option<u32>],
    b: &[Option<u32>],
    matched: f64,
    mismatched: f64,
    gap: f64,
) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| match (x, y) {
            (Some(x), Some(y)) if x == y => matched,
            (Some(_), Some(_)) => mismatched,
            (None, None) => 0.0,
            _ => -gap,
        })
        .sum()
}

/// Mean silhouette over all points; points in singleton clusters score 0.
pub fn average_silhouette(d: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = d.len();
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            continue;
        }
        let a = own.iter().map(|&j| d[i][j]).sum::<f64>() / own.len() as f64;
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|&c| {
                let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                other.iter().map(|&j| d[i][j]).sum::<f64>() / other.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    total / n as f64
}

/// Information score of one alignment column. `column[r]` is row `r`'s
/// symbol (`None` for a gap), weighted by `weights[r]`; `alphabet_size` is
/// the number of distinct event types in the whole alignment.
pub fn column_information(column: &[Option<u32>], weights: &[u64], alphabet_size: usize) -> f64 {
    let total: u64 = weights.iter().sum();
    let mut mass: HashMap<Option<u32>, u64> = HashMap::new();
    for (s, w) in column.iter().zip(weights) {
        *mass.entry(*s).or_insert(0) += w;
    }
    let gaps = column.iter().filter(|s| s.is_none()).count() as f64;
    let mut entropy = 0.0;
    for (s, w) in mass {
        let p = w as f64 / total as f64;
        if p == 0.0 {
            continue;
        }
        entropy += match s {
            Some(_) => -p * p.log2(),
            None => -p * (p / gaps).log2(),
        };
    }
    let max = ((alphabet_size + 1) as f64).log2();
    if max == 0.0 {
        return 0.0;
    }
    1.0 - entropy.min(max) / max
}
