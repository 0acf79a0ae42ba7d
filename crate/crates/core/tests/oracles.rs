use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use seqlod_core::aggtree::average_linkage_merges;
use seqlod_core::alignment::{pairwise_align_scored, recover_sequence};
use seqlod_core::distance::qgram_profile;
use seqlod_core::quality::average_silhouette_width;
use seqlod_core::synth::random_set;
use seqlod_core::{
    distance_matrix, qgram_distance, AggregateTree, AlignParams, AlignmentMatrix, EventId,
    SequenceMetric, SilhouetteCurve, UniqueSequenceSet, Weighting,
};
use seqlod_testkit as oracle;

fn codes(s: &[EventId]) -> Vec<u32> {
    s.iter().map(|e| e.0).collect()
}

fn rows(d: &seqlod_core::DistanceMatrix) -> Vec<Vec<f64>> {
    (0..d.len()).map(|i| d.row(i).to_vec()).collect()
}

#[test]
fn distances_match_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let set = random_set(&mut rng, 12, 6, 8);
        let d = distance_matrix(&set, SequenceMetric::default()).unwrap();
        for i in 0..set.len() {
            for j in 0..set.len() {
                let want = oracle::cosine_distance(
                    &codes(&set.sequences[i].events),
                    &codes(&set.sequences[j].events),
                    1,
                );
                assert!((d.get(i, j) - want).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn bigram_distance_matches_brute_force() {
    let a = [0u32, 1, 2, 1, 2].map(EventId);
    let b = [1u32, 2, 0, 1].map(EventId);
    let got = qgram_distance(&qgram_profile(&a, 2).unwrap(), &qgram_profile(&b, 2).unwrap()).unwrap();
    let want = oracle::cosine_distance(&codes(&a), &codes(&b), 2);
    assert!((got - want).abs() < 1e-12);
}

#[test]
fn clustering_matches_naive_linkage() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rand::Rng::gen_range(&mut rng, 2..=15);
        let set = random_set(&mut rng, n, 6, 8);
        let d = distance_matrix(&set, SequenceMetric::default()).unwrap();
        let fast = average_linkage_merges(&d);
        let slow = oracle::average_linkage(&rows(&d));
        assert_eq!(fast.len(), slow.len());
        for (f, s) in fast.iter().zip(&slow) {
            assert_eq!((f.left, f.right, f.node), (s.0, s.1, s.2));
            assert_eq!(f.distance.to_bits(), s.3.to_bits());
        }
        let (tree, _) = AggregateTree::build(&set, SequenceMetric::default(), &AlignParams::default()).unwrap();
        for k in 1..=n {
            let frontier = tree.cut_at_k(k).unwrap();
            let got: BTreeSet<BTreeSet<usize>> = frontier
                .nodes
                .iter()
                .map(|&id| tree.node(id).unwrap().members.iter().copied().collect())
                .collect();
            assert_eq!(got, oracle::partition_at(n, &slow, k), "k = {k}");
        }
    }
}

#[test]
fn tied_distances_follow_the_id_order() {
    // four sequences at pairwise distance 1 from each other
    let set = UniqueSequenceSet::from_frequencies((0..4u32).map(|e| (vec![EventId(e)], 1)));
    let d = distance_matrix(&set, SequenceMetric::default()).unwrap();
    let fast = average_linkage_merges(&d);
    let slow = oracle::average_linkage(&rows(&d));
    assert_eq!((fast[0].left, fast[0].right), (0, 1));
    for (f, s) in fast.iter().zip(&slow) {
        assert_eq!((f.left, f.right), (s.0, s.1));
    }
}

fn leaf(id: usize, events: &[u32]) -> AlignmentMatrix {
    let ev: Vec<EventId> = events.iter().copied().map(EventId).collect();
    AlignmentMatrix::leaf(id, &ev, 1)
}

proptest! {
    #[test]
    fn pairwise_alignment_is_optimal(
        a in prop::collection::vec(0u32..4, 0..=8),
        b in prop::collection::vec(0u32..4, 0..=8),
    ) {
        prop_assume!(!(a.is_empty() && b.is_empty()));
        let p = AlignParams::default();
        let (lambda, score) = pairwise_align_scored(&leaf(0, &a), &leaf(1, &b), &p).unwrap();
        let best = oracle::best_alignment_score(&a, &b, p.match_score, p.mismatch_score, p.gap_open_penalty);
        prop_assert!((score - best).abs() < 1e-9, "score {score} vs optimum {best}");
        let column = |r: usize| -> Vec<Option<u32>> {
            lambda.row(r).unwrap().iter().map(|s| s.event().map(|e| e.0)).collect()
        };
        let realised = oracle::alignment_score(&column(0), &column(1), p.match_score, p.mismatch_score, p.gap_open_penalty);
        prop_assert!((realised - best).abs() < 1e-9);
        prop_assert_eq!(codes(&recover_sequence(&lambda, 0).unwrap()), a);
        prop_assert_eq!(codes(&recover_sequence(&lambda, 1).unwrap()), b);
    }
}

#[test]
fn silhouette_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..60 {
        let n = rand::Rng::gen_range(&mut rng, 3..=12);
        let set = random_set(&mut rng, n, 5, 6);
        let (tree, d) = AggregateTree::build(&set, SequenceMetric::default(), &AlignParams::default()).unwrap();
        let curve = SilhouetteCurve::compute(&tree, &d, None, Weighting::Unweighted, 10).unwrap();
        for k in 2..n {
            let labels = tree.assignment(&tree.cut_at_k(k).unwrap());
            let want = oracle::average_silhouette(&rows(&d), &labels);
            assert!((curve.get(k).unwrap() - want).abs() < 1e-9);
            assert!((average_silhouette_width(&tree, &d, k).unwrap() - want).abs() < 1e-9);
        }
    }
}

#[test]
fn scores_match_column_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..30 {
        let set = random_set(&mut rng, 8, 5, 6);
        let (tree, _) = AggregateTree::build(&set, SequenceMetric::default(), &AlignParams::default()).unwrap();
        for node in tree.nodes() {
            let lambda = &node.alignment;
            let scores = node.scores();
            for j in 0..lambda.width() {
                let column: Vec<Option<u32>> = lambda.column(j).map(|s| s.event().map(|e| e.0)).collect();
                let want = oracle::column_information(&column, lambda.frequencies(), scores.alphabet_size);
                assert!((scores.scores[j] - want).abs() < 1e-12);
            }
        }
    }
}
