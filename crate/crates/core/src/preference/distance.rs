//! Conflict-probability distances.
//!
//! Between total orders: the fraction of item pairs ranked oppositely.
//! Between partial orders: the mean of that fraction over pairs of their
//! linear extensions.

use std::collections::{BTreeSet, HashMap};

use super::sampling::{enumerate_poset, extensions_of, DEFAULT_ENUMERATION_CAP};
use super::{ItemId, PartialPreference, Poset, PreferenceError, SamplerConfig, TotalOrder};
use crate::rng;

/// Counts inversions by merge sort, reusing its scratch buffer.
#[derive(Debug, Default)]
pub(crate) struct InversionCounter {
    scratch: Vec<u32>,
}

impl InversionCounter {
    /// Number of pairs `i < j` with `seq[i] > seq[j]`. Sorts `seq`.
    pub(crate) fn count(&mut self, seq: &mut [u32]) -> u64 {
        if self.scratch.len() < seq.len() {
            self.scratch.resize(seq.len(), 0);
        }
        sort_count(seq, &mut self.scratch[..seq.len()])
    }
}

fn sort_count(a: &mut [u32], buf: &mut [u32]) -> u64 {
    let n = a.len();
    if n <= 12 {
        let mut inv = 0;
        for i in 1..n {
            let mut j = i;
            while j > 0 && a[j - 1] > a[j] {
                a.swap(j - 1, j);
                inv += 1;
                j -= 1;
            }
        }
        return inv;
    }
    let mid = n / 2;
    let mut inv = {
        let (l, r) = a.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        sort_count(l, bl) + sort_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if a[i] <= a[j] {
            buf[k] = a[i];
            i += 1;
        } else {
            buf[k] = a[j];
            j += 1;
            inv += (mid - i) as u64;
        }
        k += 1;
    }
    buf[k..k + (mid - i)].copy_from_slice(&a[i..mid]);
    k += mid - i;
    buf[k..n].copy_from_slice(&a[j..n]);
    a.copy_from_slice(buf);
    inv
}

/// Discordant-pair fraction for a sequence of ranks under the other order.
pub(crate) fn inversion_distance(counter: &mut InversionCounter, seq: &mut [u32]) -> f64 {
    let m = seq.len();
    if m < 2 {
        return 0.0;
    }
    let pairs = (m * (m - 1) / 2) as f64;
    counter.count(seq) as f64 / pairs
}

/// Fraction of unordered item pairs that `t1` and `t2` rank oppositely.
/// Orders over fewer than two items are at distance 0.
pub fn total_order_distance(t1: &TotalOrder, t2: &TotalOrder) -> Result<f64, PreferenceError> {
    if t1.len() != t2.len() {
        return Err(PreferenceError::DomainMismatch);
    }
    let pos: HashMap<&ItemId, u32> = t2
        .items()
        .iter()
        .enumerate()
        .map(|(k, i)| (i, k as u32))
        .collect();
    let mut seq = t1
        .items()
        .iter()
        .map(|i| pos.get(i).copied().ok_or(PreferenceError::DomainMismatch))
        .collect::<Result<Vec<u32>, _>>()?;
    Ok(inversion_distance(
        &mut InversionCounter::default(),
        &mut seq,
    ))
}

/// Mean distance over every pairing of two extension lists drawn on the same
/// universe poset.
fn mean_cross_distance(a: &[Vec<usize>], b: &[Vec<usize>], n: usize) -> f64 {
    let mut counter = InversionCounter::default();
    let mut pos = vec![0u32; n];
    let mut seq = vec![0u32; n];
    let mut total = 0.0;
    for ea in a {
        for (k, &v) in ea.iter().enumerate() {
            pos[v] = k as u32;
        }
        for eb in b {
            for (slot, &v) in seq.iter_mut().zip(eb) {
                *slot = pos[v];
            }
            total += inversion_distance(&mut counter, &mut seq);
        }
    }
    total / (a.len() * b.len()) as f64
}

fn sorted_universe(universe: &BTreeSet<ItemId>) -> Vec<ItemId> {
    universe.iter().cloned().collect()
}

/// Estimated distance between two partial orders over `universe`.
///
/// Both structures are reinterpreted over the universe: items they never
/// constrained are free, edges leaving the universe are dropped. The
/// estimate averages all `num_extensions²` pairs of sampled extensions; in
/// exhaustive mode it is exact.
pub fn partial_distance(
    p1: &PartialPreference,
    p2: &PartialPreference,
    cfg: &SamplerConfig,
    universe: &BTreeSet<ItemId>,
) -> Result<f64, PreferenceError> {
    cfg.validate()?;
    if universe.len() < 2 {
        return Ok(0.0);
    }
    let items = sorted_universe(universe);
    let q1 = p1.poset().project(&items);
    let q2 = p2.poset().project(&items);
    let e1 = extensions_of(&q1, cfg, &mut rng::stream(cfg.seed, &[1]))?;
    let e2 = extensions_of(&q2, cfg, &mut rng::stream(cfg.seed, &[2]))?;
    Ok(mean_cross_distance(&e1, &e2, items.len()))
}

/// Exact distance: averages over the full cross product of enumerated
/// extensions. Refuses universes above the enumeration cap.
pub fn exact_partial_distance(
    p1: &PartialPreference,
    p2: &PartialPreference,
    universe: &BTreeSet<ItemId>,
) -> Result<f64, PreferenceError> {
    if universe.len() < 2 {
        return Ok(0.0);
    }
    let items = sorted_universe(universe);
    let project = |p: &PartialPreference| -> Result<Vec<Vec<usize>>, PreferenceError> {
        let q: Poset = p.poset().project(&items);
        enumerate_poset(&q, DEFAULT_ENUMERATION_CAP)
    };
    let e1 = project(p1)?;
    let e2 = project(p2)?;
    Ok(mean_cross_distance(&e1, &e2, items.len()))
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;

    #[test]
    fn inversions_match_naive_count() {
        let mut counter = InversionCounter::default();
        let mut state = 12345u64;
        for len in [0usize, 1, 2, 5, 13, 40, 200] {
            let seq: Vec<u32> = (0..len)
                .map(|_| {
                    state = state
                        .wrapping_mul(6364136223846793005)
                        .wrapping_add(1442695040888963407);
                    (state >> 40) as u32 % 1000
                })
                .collect();
            let naive = (0..len)
                .flat_map(|i| ((i + 1)..len).map(move |j| (i, j)))
                .filter(|&(i, j)| seq[i] > seq[j])
                .count() as u64;
            let mut work = seq.clone();
            assert_eq!(counter.count(&mut work), naive, "len {len}");
        }
    }

    #[test]
    fn total_order_distance_examples() {
        let abc = order(&["a", "b", "c"]);
        assert_eq!(total_order_distance(&abc, &abc).unwrap(), 0.0);
        assert_eq!(
            total_order_distance(&abc, &order(&["c", "b", "a"])).unwrap(),
            1.0
        );
        assert!(
            (total_order_distance(&abc, &order(&["b", "a", "c"])).unwrap() - 1.0 / 3.0).abs()
                < 1e-15
        );
        assert_eq!(
            total_order_distance(&order(&["a"]), &order(&["a"])).unwrap(),
            0.0
        );
        assert_eq!(
            total_order_distance(&abc, &order(&["a", "b", "d"])),
            Err(PreferenceError::DomainMismatch)
        );
        assert_eq!(
            total_order_distance(&abc, &order(&["a", "b"])),
            Err(PreferenceError::DomainMismatch)
        );
    }

    #[test]
    fn partial_distance_examples() {
        let cfg = SamplerConfig::new(30, 100, 5);
        let chain = pref(&[], &[("a", "b"), ("b", "c")]);
        let u = set(&["a", "b", "c"]);
        assert_eq!(partial_distance(&chain, &chain, &cfg, &u).unwrap(), 0.0);

        let ab = set(&["a", "b"]);
        let empty = PartialPreference::default();
        let d = partial_distance(&empty, &empty, &cfg, &ab).unwrap();
        assert!((d - 0.5).abs() <= 0.05, "{d}");
        assert_eq!(exact_partial_distance(&empty, &empty, &ab).unwrap(), 0.5);

        let fwd = pref(&[], &[("a", "b")]);
        let back = pref(&[], &[("b", "a")]);
        assert_eq!(partial_distance(&fwd, &back, &cfg, &ab).unwrap(), 1.0);
        assert_eq!(exact_partial_distance(&fwd, &back, &ab).unwrap(), 1.0);
    }

    #[test]
    fn small_universe_is_zero() {
        let cfg = SamplerConfig::default();
        let p = pref(&[], &[("a", "b")]);
        assert_eq!(partial_distance(&p, &p, &cfg, &set(&["a"])).unwrap(), 0.0);
        assert_eq!(
            exact_partial_distance(&p, &p, &BTreeSet::new()).unwrap(),
            0.0
        );
    }

    #[test]
    fn exact_distance_empty_vs_chain() {
        let chain = pref(&[], &[("a", "b"), ("b", "c")]);
        let d = exact_partial_distance(
            &PartialPreference::default(),
            &chain,
            &set(&["a", "b", "c"]),
        )
        .unwrap();
        assert!((d - 0.5).abs() < 1e-12);
    }

    #[test]
    fn edges_outside_universe_are_projected_away() {
        let p = pref(&[], &[("a", "b"), ("b", "z")]);
        let q = pref(&[], &[("b", "a")]);
        assert_eq!(
            exact_partial_distance(&p, &q, &set(&["a", "b"])).unwrap(),
            1.0
        );
    }
}
