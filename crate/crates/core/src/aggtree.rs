//! The aggregate tree.
//!
//! Leaves are the unique sequences (node id = sequence index). Internal
//! nodes are numbered `N, N + 1, ...` in merge order, so the node created by
//! the `m`-th merge (1-based) has id `N + m - 1` and the root is `2N - 2`.
//! Every node keeps the alignment of its member sequences; information
//! scores are computed lazily and memoized per node.

use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::alignment::{pairwise_align, AlignError, AlignParams, AlignmentMatrix};
use crate::distance::{distance_matrix, linkage_unchecked, DistanceError, DistanceMatrix, SequenceMetric};
use crate::ingest::UniqueSequenceSet;
use crate::representation::{information_scores, simplify, InfoScoreVector};

pub type NodeId = usize;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TreeError {
    #[error("no sequences to cluster")]
    NoSequences,
    #[error("a single unique sequence cannot be clustered")]
    SingleSequence,
    #[error(transparent)]
    Distance(#[from] DistanceError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error("distance matrix has {matrix} rows but there are {sequences} sequences")]
    MatrixMismatch { matrix: usize, sequences: usize },
    #[error("k = {k} outside 1..={n}")]
    KOutOfRange { k: usize, n: usize },
    #[error("node {0} is a leaf and cannot be split")]
    LeafNotSplittable(NodeId),
    #[error("node {0} is not in the frontier")]
    NodeNotInFrontier(NodeId),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("invalid frontier: {0}")]
    InvalidFrontier(String),
}

/// One agglomeration step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub left: NodeId,
    pub right: NodeId,
    pub node: NodeId,
    pub distance: f64,
}

#[derive(Debug)]
pub struct TreeNode {
    pub id: NodeId,
    pub children: Option<(NodeId, NodeId)>,
    pub alignment: AlignmentMatrix,
    /// Sorted unique-sequence indices.
    pub members: Vec<usize>,
    pub record_count: u64,
    /// Average-linkage distance at which the node was formed; 0 for leaves.
    pub merge_distance: f64,
    /// 1-based merge index; `None` for leaves.
    pub merge_order: Option<usize>,
    scores: OnceLock<InfoScoreVector>,
}

impl Clone for TreeNode {
    fn clone(&self) -> Self {
        TreeNode {
            id: self.id,
            children: self.children,
            alignment: self.alignment.clone(),
            members: self.members.clone(),
            record_count: self.record_count,
            merge_distance: self.merge_distance,
            merge_order: self.merge_order,
            scores: self.scores.clone(),
        }
    }
}

impl TreeNode {
    pub fn leaf(id: NodeId, events: &[crate::ingest::EventId], frequency: u64) -> Self {
        TreeNode {
            id,
            children: None,
            alignment: AlignmentMatrix::leaf(id, events, frequency),
            members: vec![id],
            record_count: frequency,
            merge_distance: 0.0,
            merge_order: None,
            scores: OnceLock::new(),
        }
    }

    pub(crate) fn from_parts(
        id: NodeId,
        children: Option<(NodeId, NodeId)>,
        alignment: AlignmentMatrix,
        merge_distance: f64,
        merge_order: Option<usize>,
    ) -> Self {
        let mut members = alignment.row_sequence_ids().to_vec();
        members.sort_unstable();
        TreeNode {
            id,
            children,
            record_count: alignment.total_frequency(),
            alignment,
            members,
            merge_distance,
            merge_order,
            scores: OnceLock::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.children.is_none()
    }

    /// Column information scores of this node's alignment (memoized).
    pub fn scores(&self) -> &InfoScoreVector {
        self.scores
            .get_or_init(|| information_scores(&self.alignment))
    }
}

/// Builds the parent of `left` and `right`: aligns their alignments and
/// sums their record counts. The caller sets `merge_distance` and
/// `merge_order`.
pub fn aggregate(
    id: NodeId,
    left: &TreeNode,
    right: &TreeNode,
    params: &AlignParams,
) -> Result<TreeNode, TreeError> {
    let alignment = pairwise_align(&left.alignment, &right.alignment, params)?;
    let mut node = TreeNode::from_parts(id, Some((left.id, right.id)), alignment, 0.0, None);
    debug_assert_eq!(node.record_count, left.record_count + right.record_count);
    node.record_count = left.record_count + right.record_count;
    Ok(node)
}

/// Wall-clock time of each build phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildTimings {
    /// Distance matrix and agglomeration, without alignment.
    pub tree: Duration,
    pub align: Duration,
    /// Scores and a default-threshold simplification for every node.
    pub score_simplify: Duration,
}

impl BuildTimings {
    pub fn total(&self) -> Duration {
        self.tree + self.align + self.score_simplify
    }
}

#[derive(Debug, Clone)]
pub struct AggregateTree {
    nodes: Vec<TreeNode>,
    merge_log: Vec<MergeStep>,
    parents: Vec<Option<NodeId>>,
    n_leaves: usize,
    pub metric: SequenceMetric,
    pub params: AlignParams,
}

/// Average-linkage agglomeration over a distance matrix.
///
/// At each step the live pair with the smallest cluster distance merges;
/// ties go to the smallest `(lower id, higher id)` node pair. The distance
/// from the new cluster to each live cluster is recomputed as the mean of
/// all cross pairs, summed with the older cluster's sorted members as the
/// outer loop.
pub fn average_linkage_merges(d: &DistanceMatrix) -> Vec<MergeStep> {
    let n = d.len();
    if n < 2 {
        return Vec::new();
    }

    // live clusters occupy slots; a merge reuses the lower slot
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    let mut node_of: Vec<NodeId> = (0..n).collect();
    let mut alive = vec![true; n];
    let mut dist: Vec<f64> = (0..n).flat_map(|i| d.row(i).to_vec()).collect();

    let key = |dist: &[f64], node_of: &[NodeId], s: usize, t: usize| {
        let (a, b) = (node_of[s], node_of[t]);
        (dist[s * n + t], a.min(b), a.max(b))
    };
    let less = |x: (f64, usize, usize), y: (f64, usize, usize)| {
        x.0 < y.0 || (x.0 == y.0 && (x.1, x.2) < (y.1, y.2))
    };
    let nearest = |dist: &[f64], node_of: &[NodeId], alive: &[bool], s: usize| {
        let mut best: Option<(usize, (f64, usize, usize))> = None;
        for t in 0..n {
            if t == s || !alive[t] {
                continue;
            }
            let k = key(dist, node_of, s, t);
            if best.is_none_or(|(_, b)| less(k, b)) {
                best = Some((t, k));
            }
        }
        best
    };

    let mut nn: Vec<Option<(usize, (f64, usize, usize))>> =
        (0..n).map(|s| nearest(&dist, &node_of, &alive, s)).collect();

    let mut merges = Vec::with_capacity(n - 1);
    for step in 0..n - 1 {
        let (sa, (sb, (distance, _, _))) = (0..n)
            .filter(|&s| alive[s])
            .filter_map(|s| nn[s].map(|x| (s, x)))
            .fold(None::<(usize, (usize, (f64, usize, usize)))>, |best, cand| match best {
                Some(b) if !less(cand.1 .1, b.1 .1) => Some(b),
                _ => Some(cand),
            })
            .expect("at least two live clusters");

        let (left, right) = {
            let (a, b) = (node_of[sa], node_of[sb]);
            (a.min(b), a.max(b))
        };
        let new_id = n + step;
        merges.push(MergeStep {
            left,
            right,
            node: new_id,
            distance,
        });

        let (keep, gone) = (sa.min(sb), sa.max(sb));
        let mut merged = Vec::with_capacity(members[keep].len() + members[gone].len());
        {
            let (x, y) = (&members[keep], &members[gone]);
            let (mut i, mut j) = (0, 0);
            while i < x.len() || j < y.len() {
                if j == y.len() || (i < x.len() && x[i] < y[j]) {
                    merged.push(x[i]);
                    i += 1;
                } else {
                    merged.push(y[j]);
                    j += 1;
                }
            }
        }
        members[keep] = merged;
        members[gone] = Vec::new();
        alive[gone] = false;
        nn[gone] = None;
        node_of[keep] = new_id;

        for t in 0..n {
            if !alive[t] || t == keep {
                continue;
            }
            // the new node has the largest id, so the other cluster is outer
            let v = linkage_unchecked(&members[t], &members[keep], d);
            dist[t * n + keep] = v;
            dist[keep * n + t] = v;
        }

        nn[keep] = nearest(&dist, &node_of, &alive, keep);
        for t in 0..n {
            if !alive[t] || t == keep {
                continue;
            }
            match nn[t] {
                Some((p, _)) if p == keep || p == gone => {
                    nn[t] = nearest(&dist, &node_of, &alive, t);
                }
                Some((_, current)) => {
                    let k = key(&dist, &node_of, t, keep);
                    if less(k, current) {
                        nn[t] = Some((keep, k));
                    }
                }
                None => nn[t] = nearest(&dist, &node_of, &alive, t),
            }
        }
    }
    merges
}

impl AggregateTree {
    /// Runs the full precompute: distances, agglomeration, and one alignment
    /// per internal node.
    pub fn build(
        set: &UniqueSequenceSet,
        metric: SequenceMetric,
        params: &AlignParams,
    ) -> Result<(AggregateTree, DistanceMatrix), TreeError> {
        let (tree, d, _) = Self::build_timed(set, metric, params, None)?;
        Ok((tree, d))
    }

    /// Like [`AggregateTree::build`], also reporting phase timings. When
    /// `warm_threshold` is set, every node's scores are computed and its
    /// alignment simplified at that threshold as part of the build.
    pub fn build_timed(
        set: &UniqueSequenceSet,
        metric: SequenceMetric,
        params: &AlignParams,
        warm_threshold: Option<f64>,
    ) -> Result<(AggregateTree, DistanceMatrix, BuildTimings), TreeError> {
        params.validate()?;
        match set.len() {
            0 => return Err(TreeError::NoSequences),
            1 => return Err(TreeError::SingleSequence),
            _ => {}
        }
        let mut timings = BuildTimings::default();

        let started = Instant::now();
        let d = distance_matrix(set, metric)?;
        let merges = average_linkage_merges(&d);
        timings.tree = started.elapsed();

        let started = Instant::now();
        let tree = Self::from_merges(set, merges, metric, params)?;
        timings.align = started.elapsed();

        if let Some(threshold) = warm_threshold {
            let started = Instant::now();
            tree.nodes.par_iter().for_each(|node| {
                let scores = node.scores();
                let _ = simplify(&node.alignment, scores, threshold);
            });
            timings.score_simplify = started.elapsed();
        }
        Ok((tree, d, timings))
    }

    /// Builds every node from a merge log. Alignments of nodes at the same
    /// height are independent and computed in parallel.
    pub fn from_merges(
        set: &UniqueSequenceSet,
        merges: Vec<MergeStep>,
        metric: SequenceMetric,
        params: &AlignParams,
    ) -> Result<AggregateTree, TreeError> {
        let n = set.len();
        if n == 0 {
            return Err(TreeError::NoSequences);
        }
        if merges.len() != n - 1 {
            return Err(TreeError::InvalidFrontier(format!(
                "merge log has {} steps, expected {}",
                merges.len(),
                n - 1
            )));
        }
        let total = 2 * n - 1;
        let mut height = vec![0usize; total];
        let mut parents = vec![None; total];
        for (step, m) in merges.iter().enumerate() {
            if m.node != n + step || m.left >= m.node || m.right >= m.node || m.left == m.right {
                return Err(TreeError::InvalidFrontier(format!(
                    "merge {step} is out of order"
                )));
            }
            if parents[m.left].is_some() || parents[m.right].is_some() {
                return Err(TreeError::InvalidFrontier(format!(
                    "merge {step} reuses a merged node"
                )));
            }
            parents[m.left] = Some(m.node);
            parents[m.right] = Some(m.node);
            height[m.node] = 1 + height[m.left].max(height[m.right]);
        }

        let mut nodes: Vec<Option<TreeNode>> = set
            .sequences
            .iter()
            .enumerate()
            .map(|(i, s)| Some(TreeNode::leaf(i, &s.events, s.frequency)))
            .collect();
        nodes.resize_with(total, || None);

        let max_height = height.iter().copied().max().unwrap_or(0);
        let mut by_height: Vec<Vec<usize>> = vec![Vec::new(); max_height + 1];
        for (step, m) in merges.iter().enumerate() {
            by_height[height[m.node]].push(step);
        }
        for level in by_height.iter().skip(1) {
            let built: Vec<TreeNode> = level
                .par_iter()
                .map(|&step| {
                    let m = &merges[step];
                    let left = nodes[m.left].as_ref().expect("child built at lower height");
                    let right = nodes[m.right].as_ref().expect("child built at lower height");
                    let mut node = aggregate(m.node, left, right, params)?;
                    node.merge_distance = m.distance;
                    node.merge_order = Some(step + 1);
                    Ok(node)
                })
                .collect::<Result<_, TreeError>>()?;
            for node in built {
                let id = node.id;
                nodes[id] = Some(node);
            }
        }

        Ok(AggregateTree {
            nodes: nodes.into_iter().map(|n| n.expect("all nodes built")).collect(),
            merge_log: merges,
            parents,
            n_leaves: n,
            metric,
            params: *params,
        })
    }

    /// Reassembles a tree from stored nodes (used by the cache reader).
    pub(crate) fn from_stored(
        n_leaves: usize,
        merges: Vec<MergeStep>,
        alignments: Vec<AlignmentMatrix>,
        metric: SequenceMetric,
        params: AlignParams,
    ) -> Result<AggregateTree, TreeError> {
        let total = 2 * n_leaves - 1;
        if alignments.len() != total || merges.len() != n_leaves - 1 {
            return Err(TreeError::InvalidFrontier("node count mismatch".into()));
        }
        let mut parents = vec![None; total];
        for (step, m) in merges.iter().enumerate() {
            if m.node != n_leaves + step
                || m.left >= m.node
                || m.right >= m.node
                || m.left == m.right
                || parents[m.left].is_some()
                || parents[m.right].is_some()
            {
                return Err(TreeError::InvalidFrontier(format!("merge {step} is malformed")));
            }
            parents[m.left] = Some(m.node);
            parents[m.right] = Some(m.node);
        }
        let nodes = alignments
            .into_iter()
            .enumerate()
            .map(|(id, alignment)| {
                if id < n_leaves {
                    TreeNode::from_parts(id, None, alignment, 0.0, None)
                } else {
                    let step = id - n_leaves;
                    let m = &merges[step];
                    TreeNode::from_parts(
                        id,
                        Some((m.left, m.right)),
                        alignment,
                        m.distance,
                        Some(step + 1),
                    )
                }
            })
            .collect::<Vec<TreeNode>>();
        for node in &nodes {
            let expected = match node.children {
                None => vec![node.id],
                Some((l, r)) => {
                    let mut m = nodes[l].members.clone();
                    m.extend_from_slice(&nodes[r].members);
                    m.sort_unstable();
                    m
                }
            };
            if node.members != expected {
                return Err(TreeError::InvalidFrontier(format!(
                    "node {} rows do not match its children",
                    node.id
                )));
            }
        }
        Ok(AggregateTree {
            nodes,
            merge_log: merges,
            parents,
            n_leaves,
            metric,
            params,
        })
    }

    /// Number of unique sequences `N`.
    pub fn n_leaves(&self) -> usize {
        self.n_leaves
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&TreeNode, TreeError> {
        self.nodes.get(id).ok_or(TreeError::UnknownNode(id))
    }

    pub fn parent(&self, id: NodeId) -> Option<NodeId> {
        self.parents.get(id).copied().flatten()
    }

    pub fn merge_log(&self) -> &[MergeStep] {
        &self.merge_log
    }

    pub fn root(&self) -> NodeId {
        self.nodes.len() - 1
    }

    pub fn total_records(&self) -> u64 {
        self.nodes[self.root()].record_count
    }

    /// Frontier after replaying the first `N - k` merges, in left-to-right
    /// dendrogram order.
    pub fn cut_at_k(&self, k: usize) -> Result<Frontier, TreeError> {
        let n = self.n_leaves;
        if k == 0 || k > n {
            return Err(TreeError::KOutOfRange { k, n });
        }
        let limit = n + (n - k);
        let mut out = Vec::with_capacity(k);
        let mut stack = vec![self.root()];
        while let Some(id) = stack.pop() {
            if id < limit {
                out.push(id);
            } else {
                let (l, r) = self.nodes[id].children.expect("internal node");
                stack.push(r);
                stack.push(l);
            }
        }
        Ok(Frontier { nodes: out })
    }

    /// Replaces `node` in the frontier by its two children, in place.
    pub fn split_node(&self, frontier: &Frontier, node: NodeId) -> Result<Frontier, TreeError> {
        let pos = frontier
            .nodes
            .iter()
            .position(|&x| x == node)
            .ok_or(TreeError::NodeNotInFrontier(node))?;
        let (l, r) = self
            .node(node)?
            .children
            .ok_or(TreeError::LeafNotSplittable(node))?;
        let mut nodes = frontier.nodes.clone();
        nodes.splice(pos..=pos, [l, r]);
        Ok(Frontier { nodes })
    }

    /// Inverse of [`AggregateTree::split_node`]: replaces both children of
    /// `parent` by `parent`, at the left child's position.
    pub fn collapse_node(&self, frontier: &Frontier, parent: NodeId) -> Result<Frontier, TreeError> {
        let (l, r) = self
            .node(parent)?
            .children
            .ok_or(TreeError::LeafNotSplittable(parent))?;
        let pl = frontier
            .nodes
            .iter()
            .position(|&x| x == l)
            .ok_or(TreeError::NodeNotInFrontier(l))?;
        if !frontier.nodes.contains(&r) {
            return Err(TreeError::NodeNotInFrontier(r));
        }
        let nodes = frontier
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, &x)| {
                if i == pl {
                    Some(parent)
                } else if x == l || x == r {
                    None
                } else {
                    Some(x)
                }
            })
            .collect();
        Ok(Frontier { nodes })
    }

    /// Checks that the frontier's members partition all unique sequences.
    pub fn validate_frontier(&self, frontier: &Frontier) -> Result<(), TreeError> {
        let mut seen = vec![false; self.n_leaves];
        for &id in &frontier.nodes {
            for &m in &self.node(id)?.members {
                if std::mem::replace(&mut seen[m], true) {
                    return Err(TreeError::InvalidFrontier(format!(
                        "sequence {m} is covered twice"
                    )));
                }
            }
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(TreeError::InvalidFrontier(format!(
                "sequence {missing} is not covered"
            )));
        }
        Ok(())
    }

    /// Cluster label (frontier position) of every unique sequence.
    pub fn assignment(&self, frontier: &Frontier) -> Vec<usize> {
        let mut labels = vec![usize::MAX; self.n_leaves];
        for (c, &id) in frontier.nodes.iter().enumerate() {
            for &m in &self.nodes[id].members {
                labels[m] = c;
            }
        }
        labels
    }

    /// Frontier nodes sorted for presentation.
    pub fn ordered(&self, frontier: &Frontier, order: ClusterOrder) -> Vec<NodeId> {
        let mut ids = frontier.nodes.clone();
        if order == ClusterOrder::Frequency {
            // stable: equal counts keep dendrogram order
            ids.sort_by(|a, b| self.nodes[*b].record_count.cmp(&self.nodes[*a].record_count));
        }
        ids
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClusterOrder {
    /// Left-to-right dendrogram order.
    #[default]
    Similarity,
    /// Descending record count.
    Frequency,
}

/// Node ids whose members partition all unique sequences.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Frontier {
    pub nodes: Vec<NodeId>,
}

impl Frontier {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn contains(&self, id: NodeId) -> bool {
        self.nodes.contains(&id)
    }
}
