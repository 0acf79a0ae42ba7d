//! Seeded synthetic datasets.
//!
//! The dedup-shaped logs mimic the record / unique-sequence ratios of two
//! clinical datasets (an emergency-care log with 21,805 records over 962
//! unique sequences and an ICU log with 1,425 records over 1,311), since the
//! originals cannot be redistributed.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ingest::{parse_event_log, EventId, EventLog, IngestError, UniqueSequenceSet};

/// Event and attribute CSV text, ready for the ingest parser.
#[derive(Debug, Clone)]
pub struct SyntheticLog {
    pub events_csv: String,
    pub attributes_csv: String,
}

impl SyntheticLog {
    pub fn parse(&self) -> Result<EventLog, IngestError> {
        parse_event_log(self.events_csv.as_bytes(), Some(self.attributes_csv.as_bytes()))
    }
}

const CARE_EVENTS: [&str; 18] = [
    "CAL", "SCE", "AMB", "ARR", "TRI", "ED", "XRAY", "LAB", "CT", "ADM", "WARD", "ICU", "SURG",
    "DIS", "TRA", "OUT", "GP", "DEC",
];

const ICU_EVENTS: [&str; 24] = [
    "admit", "icu_in", "vent_on", "vent_off", "sedation", "antibiotic", "vasopressor", "culture",
    "lab_panel", "abg", "xray", "ct", "dialysis", "transfusion", "intubation", "extubation",
    "line_in", "line_out", "consult", "surgery", "icu_out", "ward", "discharge", "death",
];

/// Frequencies for `n` unique sequences summing to `total`: `head` is used
/// verbatim, the rest follow a capped `1/rank` profile below the last head
/// value. Non-increasing, all at least 1.
pub fn frequency_profile(n: usize, total: u64, head: &[u64]) -> Vec<u64> {
    assert!(head.len() <= n, "head longer than n");
    assert!(head.windows(2).all(|w| w[0] >= w[1]), "head must be non-increasing");
    let m = n - head.len();
    let rest = total
        .checked_sub(head.iter().sum())
        .expect("head exceeds total");
    let cap = head.last().map_or(u64::MAX, |&h| h.saturating_sub(1).max(1));
    assert!(rest >= m as u64, "total too small for {n} sequences");
    assert!(m > 0 || rest == 0, "total does not match head");
    assert!(rest <= (m as u64).saturating_mul(cap), "total too large for cap");

    let tail = |a: u64| -> Vec<u64> {
        (0..m)
            .map(|i| (a / (i as u64 + 1)).clamp(1, cap))
            .collect()
    };
    let (mut lo, mut hi) = (0u64, rest.max(1) * 2);
    while lo < hi {
        let mid = lo + (hi - lo).div_ceil(2);
        if tail(mid).iter().sum::<u64>() <= rest {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let mut out = tail(lo);
    let mut missing = rest - out.iter().sum::<u64>();
    while missing > 0 {
        for v in out.iter_mut() {
            if missing == 0 {
                break;
            }
            if *v < cap {
                *v += 1;
                missing -= 1;
            }
        }
    }
    let mut all = head.to_vec();
    all.extend(out);
    all
}

fn zipf_index(rng: &mut ChaCha8Rng, n: usize) -> usize {
    // inverse-CDF over weights 1/(i+1)
    let total: f64 = (1..=n).map(|i| 1.0 / i as f64).sum();
    let mut x = rng.gen::<f64>() * total;
    for i in 0..n {
        x -= 1.0 / (i + 1) as f64;
        if x <= 0.0 {
            return i;
        }
    }
    n - 1
}

fn distinct_sequences(
    rng: &mut ChaCha8Rng,
    n: usize,
    alphabet: usize,
    lengths: std::ops::RangeInclusive<usize>,
) -> Vec<Vec<usize>> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.gen_range(lengths.clone());
        let seq: Vec<usize> = (0..len).map(|_| zipf_index(rng, alphabet)).collect();
        if seen.insert(seq.clone()) {
            out.push(seq);
        }
    }
    // shorter, more common-looking sequences first so they get the high
    // frequencies
    out.sort_by_key(|s| s.len());
    out
}

fn render_log(
    rng: &mut ChaCha8Rng,
    names: &[&str],
    sequences: &[Vec<usize>],
    frequencies: &[u64],
) -> SyntheticLog {
    let mut records: Vec<usize> = frequencies
        .iter()
        .enumerate()
        .flat_map(|(i, &f)| std::iter::repeat_n(i, f as usize))
        .collect();
    records.shuffle(rng);
    let base = 1_420_070_400_000i64; // 2015-01-01T00:00:00Z
    let regions = ["north", "south", "east", "west", "central"];

    let mut events = String::from("record_id,event_type,timestamp\n");
    let mut attrs = String::from("record_id,age,gender,region,admitted\n");
    for (r, &seq) in records.iter().enumerate() {
        let id = format!("r{r:06}");
        let mut t = base + rng.gen_range(0..4 * 365 * 86_400i64) * 1000;
        let admitted = crate::ingest::format_timestamp(t);
        for &e in &sequences[seq] {
            let _ = writeln!(events, "{id},{},{}", names[e], crate::ingest::format_timestamp(t));
            t += rng.gen_range(1..=240i64) * 60_000;
        }
        let age = rng.gen_range(0..=95);
        let gender = if rng.gen_bool(0.5) { "F" } else { "M" };
        let region = regions[rng.gen_range(0..regions.len())];
        let _ = writeln!(attrs, "{id},{age},{gender},{region},{}", &admitted[..10]);
    }
    SyntheticLog {
        events_csv: events,
        attributes_csv: attrs,
    }
}

/// Emergency-care-shaped log: 21,805 records, 962 unique sequences; the
/// ninth most frequent sequence (`S9`) has exactly 411 records.
pub fn care_pathways(seed: u64) -> SyntheticLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let head = [5200, 3100, 2000, 1400, 1000, 800, 620, 500, 411, 350];
    let freqs = frequency_profile(962, 21_805, &head);
    let seqs = distinct_sequences(&mut rng, 962, CARE_EVENTS.len(), 2..=9);
    render_log(&mut rng, &CARE_EVENTS, &seqs, &freqs)
}

/// ICU-shaped log: 1,425 records, 1,311 unique sequences.
pub fn icu_stays(seed: u64) -> SyntheticLog {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let freqs = frequency_profile(1311, 1425, &[]);
    let seqs = distinct_sequences(&mut rng, 1311, ICU_EVENTS.len(), 3..=14);
    render_log(&mut rng, &ICU_EVENTS, &seqs, &freqs)
}

/// `n` distinct sequences over `alphabet` event types with lengths spread
/// evenly around `avg_len`. Sequences are mutated copies of a few templates
/// so the tree has real cluster structure. Frequencies are 1 to 20.
pub fn benchmark_set(n: usize, avg_len: usize, alphabet: usize, seed: u64) -> UniqueSequenceSet {
    assert!(avg_len >= 1 && alphabet >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let templates: Vec<Vec<u32>> = (0..(n / 15).max(2))
        .map(|_| {
            (0..avg_len)
                .map(|_| zipf_index(&mut rng, alphabet) as u32)
                .collect()
        })
        .collect();
    let spread = (avg_len / 2).max(1);
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(n);
    while items.len() < n {
        let t = &templates[rng.gen_range(0..templates.len())];
        let len = rng.gen_range(avg_len.saturating_sub(spread).max(1)..=avg_len + spread);
        let seq: Vec<EventId> = (0..len)
            .map(|i| {
                if i < t.len() && rng.gen_bool(0.7) {
                    EventId(t[i])
                } else {
                    EventId(rng.gen_range(0..alphabet) as u32)
                }
            })
            .collect();
        if seen.insert(seq.clone()) {
            items.push((seq, rng.gen_range(1..=20u64)));
        }
    }
    UniqueSequenceSet::from_frequencies(items)
}

/// `groups` groups over disjoint event types. Every sequence repeats its
/// group's dominant event 4 to 6 times and adds at most one of two minor
/// events, so within-group distances are small and cross-group ones are 1.
pub fn separated_groups(groups: usize, per_group: usize, seed: u64) -> UniqueSequenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut items = Vec::new();
    for g in 0..groups {
        let base = 3 * g as u32;
        let mut made = 0;
        let mut attempts = 0;
        while made < per_group {
            attempts += 1;
            assert!(attempts < 100_000, "cannot make {per_group} distinct sequences per group");
            let mut seq = vec![EventId(base); rng.gen_range(4..=6)];
            if rng.gen_bool(0.8) {
                let minor = EventId(base + rng.gen_range(1..=2));
                let at = rng.gen_range(0..=seq.len());
                seq.insert(at, minor);
            }
            if seen.insert(seq.clone()) {
                items.push((seq, rng.gen_range(1..=50u64)));
                made += 1;
            }
        }
    }
    UniqueSequenceSet::from_frequencies(items)
}

/// Small random set: `n` distinct sequences of length `1..=max_len` over
/// `alphabet` event types, frequencies `1..=5`.
pub fn random_set(rng: &mut impl Rng, n: usize, alphabet: usize, max_len: usize) -> UniqueSequenceSet {
    let mut seen = HashSet::new();
    let mut items = Vec::with_capacity(n);
    let mut attempts = 0;
    while items.len() < n {
        attempts += 1;
        assert!(attempts < 100_000, "alphabet too small for {n} distinct sequences");
        let len = rng.gen_range(1..=max_len);
        let seq: Vec<EventId> = (0..len)
            .map(|_| EventId(rng.gen_range(0..alphabet) as u32))
            .collect();
        if seen.insert(seq.clone()) {
            items.push((seq, rng.gen_range(1..=5u64)));
        }
    }
    UniqueSequenceSet::from_frequencies(items)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::deduplicate;

    #[test]
    fn profile_hits_totals() {
        let f = frequency_profile(962, 21_805, &[5200, 3100, 2000, 1400, 1000, 800, 620, 500, 411, 350]);
        assert_eq!(f.len(), 962);
        assert_eq!(f.iter().sum::<u64>(), 21_805);
        assert!(f.windows(2).all(|w| w[0] >= w[1]));
        assert_eq!(f[8], 411);
        assert!(f[9] < 411 && f[7] > 411);
        let g = frequency_profile(1311, 1425, &[]);
        assert_eq!(g.iter().sum::<u64>(), 1425);
        assert!(g.iter().all(|&x| x >= 1));
    }

    #[test]
    fn icu_shape() {
        let log = icu_stays(1).parse().unwrap();
        assert_eq!(log.len(), 1425);
        assert_eq!(deduplicate(&log).len(), 1311);
    }

    #[test]
    fn benchmark_and_groups() {
        let set = benchmark_set(50, 6, 30, 3);
        assert_eq!(set.len(), 50);
        let mean = set.sequences.iter().map(|s| s.events.len()).sum::<usize>() as f64 / 50.0;
        assert!((mean - 6.0).abs() < 1.0, "mean length {mean}");
        let g = separated_groups(3, 8, 3);
        assert_eq!(g.len(), 24);
    }

    #[test]
    fn seeded_output_is_stable() {
        assert_eq!(benchmark_set(20, 5, 10, 9), benchmark_set(20, 5, 10, 9));
        let mut a = ChaCha8Rng::seed_from_u64(4);
        let mut b = ChaCha8Rng::seed_from_u64(4);
        assert_eq!(random_set(&mut a, 10, 4, 5), random_set(&mut b, 10, 4, 5));
    }
}
