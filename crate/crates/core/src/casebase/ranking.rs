//! Case retrieval and completion of the active user's partial order.
//!
//! Extensions of the active user are drawn over the whole ranking universe,
//! so items nobody asked about still receive a rank. Each stored case is
//! scored by the mean distance from those extensions to the case's own
//! extensions. Distances only look at the comparison universe of a pair:
//! the active user's constrained items plus the case's items, each side cut
//! to its top `top_k`. The closest case then selects, among the active
//! extensions, the one nearest to it.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{Case, CaseBase, UserId, DEFAULT_TOP_K};
use crate::preference::{
    extensions_of, InversionCounter, ItemId, PartialPreference, Poset, PreferenceError,
    SamplerConfig, TotalOrder,
};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingConfig {
    pub sampler: SamplerConfig,
    pub top_k: usize,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            sampler: SamplerConfig::default(),
            top_k: DEFAULT_TOP_K,
        }
    }
}

impl RankingConfig {
    pub fn new(sampler: SamplerConfig) -> Self {
        RankingConfig {
            sampler,
            top_k: DEFAULT_TOP_K,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RankingError {
    #[error("the case base is empty; rank by the catalog star-rating order instead")]
    EmptyCaseBase,
    #[error(
        "no preferences elicited yet; mark about five movies each as Like, OK and Dislike first"
    )]
    EmptyPreference,
    #[error(transparent)]
    Preference(#[from] PreferenceError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingResult {
    pub order: TotalOrder,
    pub matched_user: UserId,
    pub distance: f64,
}

struct ActiveView {
    poset: Poset,
    extensions: Vec<Vec<usize>>,
    constrained: Vec<usize>,
    top_k: usize,
}

struct CaseScore {
    distance: f64,
    best_extension: usize,
}

fn by_distance_then_user(a: (&UserId, f64), b: (&UserId, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then_with(|| a.0.cmp(b.0))
}

fn prepare(
    active: &PartialPreference,
    cb: &CaseBase,
    cfg: &RankingConfig,
    universe: &BTreeSet<ItemId>,
) -> Result<(ActiveView, Vec<ItemId>), RankingError> {
    if cb.is_empty() {
        return Err(RankingError::EmptyCaseBase);
    }
    if active.is_empty() {
        return Err(RankingError::EmptyPreference);
    }
    if let Some(outside) = active.domain().iter().find(|i| !universe.contains(*i)) {
        return Err(PreferenceError::NotInDomain(outside.clone()).into());
    }
    cfg.sampler.validate()?;
    let items: Vec<ItemId> = universe.iter().cloned().collect();
    let poset = active.poset().project(&items);
    let extensions = extensions_of(
        &poset,
        &cfg.sampler,
        &mut rng::stream(cfg.sampler.seed, &[0]),
    )?;
    let constrained = active
        .domain()
        .iter()
        .map(|i| poset.index_of(i).expect("checked above"))
        .collect();
    Ok((
        ActiveView {
            poset,
            extensions,
            constrained,
            top_k: cfg.top_k,
        },
        items,
    ))
}

fn score_case(
    active: &ActiveView,
    case: &Case,
    cfg: &SamplerConfig,
    case_index: u64,
) -> Result<CaseScore, PreferenceError> {
    let universe = &active.poset;
    let case_poset = case.preference.poset();

    // The case's own top-k inside the ranking universe, by its initial extension.
    let case_items: Vec<ItemId> = case_poset
        .items()
        .iter()
        .filter(|i| universe.index_of(i).is_some())
        .cloned()
        .collect();
    let in_universe = case_poset.project(&case_items);
    let mut top: Vec<ItemId> = in_universe
        .initial_extension()
        .into_iter()
        .take(active.top_k)
        .map(|i| in_universe.item(i).clone())
        .collect();
    top.sort();
    let truncated = in_universe.project(&top);

    // Sampling universe for the case: its top-k plus every active constrained item.
    let mut shared: BTreeSet<ItemId> = top.iter().cloned().collect();
    shared.extend(active.constrained.iter().map(|&r| universe.item(r).clone()));
    let shared: Vec<ItemId> = shared.into_iter().collect();
    let case_view = truncated.project(&shared);
    let case_exts = extensions_of(
        &case_view,
        cfg,
        &mut rng::stream(cfg.seed, &[1, case_index]),
    )?;

    let to_universe: Vec<usize> = shared
        .iter()
        .map(|i| universe.index_of(i).expect("subset of universe"))
        .collect();
    let case_exts: Vec<Vec<u32>> = case_exts
        .iter()
        .map(|e| e.iter().map(|&w| to_universe[w] as u32).collect())
        .collect();
    let in_case_top: Vec<bool> = {
        let mut flags = vec![false; universe.len()];
        for i in &top {
            flags[universe.index_of(i).expect("subset of universe")] = true;
        }
        flags
    };
    let truncate_active = active.constrained.len() > active.top_k;

    let mut counter = InversionCounter::default();
    let mut position = vec![0u32; universe.len()];
    let mut keep = vec![true; universe.len()];
    let mut seq = Vec::with_capacity(shared.len());
    // Per active extension the distance is `discordant / (|case_exts| * pairs)`;
    // the argmin is taken on exact integers so ties keep the first extension.
    let mut total = 0.0;
    let mut best: Option<(usize, u64, u64)> = None;
    for (j, ext) in active.extensions.iter().enumerate() {
        for (k, &r) in ext.iter().enumerate() {
            position[r] = k as u32;
        }
        if truncate_active {
            for &r in &active.constrained {
                keep[r] = in_case_top[r];
            }
            let mut ranked: Vec<usize> = active.constrained.clone();
            ranked.sort_by_key(|&r| position[r]);
            for &r in ranked.iter().take(active.top_k) {
                keep[r] = true;
            }
        }
        let mut discordant = 0u64;
        let mut pairs = 0u64;
        for case_ext in &case_exts {
            seq.clear();
            seq.extend(
                case_ext
                    .iter()
                    .filter(|&&r| keep[r as usize])
                    .map(|&r| position[r as usize]),
            );
            let m = seq.len() as u64;
            pairs = m * m.saturating_sub(1) / 2;
            discordant += counter.count(&mut seq);
        }
        let closer = match best {
            None => true,
            Some((_, d, p)) => {
                u128::from(discordant) * u128::from(p) < u128::from(d) * u128::from(pairs)
            }
        };
        if closer {
            best = Some((j, discordant, pairs));
        }
        if pairs > 0 {
            total += discordant as f64 / (case_exts.len() as u64 * pairs) as f64;
        }
    }
    let best_extension = best.map_or(0, |b| b.0);
    Ok(CaseScore {
        distance: total / active.extensions.len() as f64,
        best_extension,
    })
}

fn score_all(
    active: &ActiveView,
    cb: &CaseBase,
    cfg: &SamplerConfig,
) -> Result<Vec<(UserId, CaseScore)>, PreferenceError> {
    let cases: Vec<(usize, (&UserId, &Case))> = cb.iter().enumerate().collect();
    cases
        .into_par_iter()
        .map(|(k, (user, case))| score_case(active, case, cfg, k as u64).map(|s| (user.clone(), s)))
        .collect()
}

/// Completes `active` into a total order over `universe`, guided by the
/// closest case in `cb`.
///
/// The returned order is one of the active user's sampled (or, in
/// exhaustive mode, enumerated) extensions, so every directly elicited
/// preference is kept.
pub fn preference_ranking(
    active: &PartialPreference,
    cb: &CaseBase,
    cfg: &RankingConfig,
    universe: &BTreeSet<ItemId>,
) -> Result<RankingResult, RankingError> {
    let (view, _) = prepare(active, cb, cfg, universe)?;
    let scores = score_all(&view, cb, &cfg.sampler)?;
    let (user, score) = scores
        .into_iter()
        .min_by(|a, b| by_distance_then_user((&a.0, a.1.distance), (&b.0, b.1.distance)))
        .expect("case base is non-empty");
    let order = TotalOrder::from_indices(&view.poset, &view.extensions[score.best_extension]);
    debug_assert!(order.check_respects(active).is_ok());
    Ok(RankingResult {
        order,
        matched_user: user,
        distance: score.distance,
    })
}

/// The `m` closest cases, ascending by estimated distance, ties by user id.
pub fn nearest_cases(
    active: &PartialPreference,
    cb: &CaseBase,
    cfg: &RankingConfig,
    m: usize,
    universe: &BTreeSet<ItemId>,
) -> Result<Vec<(UserId, f64)>, RankingError> {
    let (view, _) = prepare(active, cb, cfg, universe)?;
    let mut scored: Vec<(UserId, f64)> = score_all(&view, cb, &cfg.sampler)?
        .into_iter()
        .map(|(u, s)| (u, s.distance))
        .collect();
    scored.sort_by(|a, b| by_distance_then_user((&a.0, a.1), (&b.0, b.1)));
    scored.truncate(m.max(1));
    Ok(scored)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::casebase::{RatingLevel, Ratings};
    use crate::preference::test_support::*;
    use crate::preference::{build_ldo, TriageLists};

    fn chain_ratings(items: &[&str]) -> Ratings {
        // best first, distinct levels
        items
            .iter()
            .enumerate()
            .map(|(k, i)| {
                (
                    id(i),
                    RatingLevel::from_step((RatingLevel::MAX_STEP as usize - k) as u8).unwrap(),
                )
            })
            .collect()
    }

    fn exhaustive() -> RankingConfig {
        RankingConfig::new(SamplerConfig::exhaustive())
    }

    #[test]
    fn identical_chain_matches_at_zero() {
        let mut cb = CaseBase::new();
        cb.insert(UserId::new("u1"), chain_ratings(&["a", "b", "c"]));
        let active = pref(&[], &[("a", "b"), ("b", "c")]);
        let universe = set(&["a", "b", "c"]);
        for cfg in [exhaustive(), RankingConfig::default()] {
            let r = preference_ranking(&active, &cb, &cfg, &universe).unwrap();
            assert_eq!(r.distance, 0.0);
            assert_eq!(r.order, order(&["a", "b", "c"]));
            assert_eq!(r.matched_user, UserId::new("u1"));
        }
    }

    #[test]
    fn attractor_picks_consistent_case() {
        let mut cb = CaseBase::new();
        cb.insert(UserId::new("case1"), chain_ratings(&["a", "b", "c"]));
        cb.insert(UserId::new("case2"), chain_ratings(&["c", "b", "a"]));
        let active = pref(&["c"], &[("a", "b")]);
        let r = preference_ranking(&active, &cb, &exhaustive(), &set(&["a", "b", "c"])).unwrap();
        assert_eq!(r.matched_user, UserId::new("case1"));
        assert_eq!(r.order, order(&["a", "b", "c"]));
        assert!((r.distance - 1.0 / 3.0).abs() < 1e-12);

        let near = nearest_cases(&active, &cb, &exhaustive(), 5, &set(&["a", "b", "c"])).unwrap();
        assert_eq!(near.len(), 2);
        assert!((near[1].1 - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        let active = pref(&[], &[("a", "b")]);
        let universe = set(&["a", "b"]);
        assert_eq!(
            preference_ranking(
                &active,
                &CaseBase::new(),
                &RankingConfig::default(),
                &universe
            ),
            Err(RankingError::EmptyCaseBase)
        );
        let mut cb = CaseBase::new();
        cb.insert(UserId::new("u"), chain_ratings(&["a", "b"]));
        assert_eq!(
            preference_ranking(
                &PartialPreference::default(),
                &cb,
                &RankingConfig::default(),
                &universe
            ),
            Err(RankingError::EmptyPreference)
        );
        assert!(matches!(
            preference_ranking(&active, &cb, &RankingConfig::default(), &set(&["a"])),
            Err(RankingError::Preference(PreferenceError::NotInDomain(_)))
        ));
    }

    #[test]
    fn ties_go_to_smaller_user_id() {
        let mut cb = CaseBase::new();
        cb.insert(UserId::new("zed"), chain_ratings(&["a", "b"]));
        cb.insert(UserId::new("amy"), chain_ratings(&["a", "b"]));
        let active = pref(&[], &[("a", "b")]);
        let r = preference_ranking(&active, &cb, &exhaustive(), &set(&["a", "b"])).unwrap();
        assert_eq!(r.matched_user, UserId::new("amy"));
    }

    #[test]
    fn likes_precede_dislikes_over_large_universe() {
        let triage = TriageLists {
            like: set(&["l1", "l2"]),
            ok: set(&["o1"]),
            dislike: set(&["d1", "d2"]),
        };
        let active = build_ldo(&triage).unwrap();
        let mut universe: BTreeSet<ItemId> = (0..40).map(|k| id(&format!("x{k:02}"))).collect();
        universe.extend(active.domain().iter().cloned());
        let mut cb = CaseBase::new();
        cb.insert(
            UserId::new("u1"),
            chain_ratings(&["x01", "l1", "x02", "d1"]),
        );
        cb.insert(UserId::new("u2"), chain_ratings(&["d2", "x05", "o1"]));
        for seed in 0..20 {
            let cfg = RankingConfig::new(SamplerConfig::new(10, 500, seed));
            let r = preference_ranking(&active, &cb, &cfg, &universe).unwrap();
            assert_eq!(r.order.len(), universe.len());
            r.order.check_respects(&active).unwrap();
        }
    }

    #[test]
    fn truncation_limits_the_comparison() {
        // With top_k = 1 only each side's best item takes part.
        let mut cb = CaseBase::new();
        cb.insert(UserId::new("u"), chain_ratings(&["a", "b", "c"]));
        let active = pref(&[], &[("c", "b"), ("b", "a")]);
        let universe = set(&["a", "b", "c"]);
        let mut cfg = exhaustive();
        cfg.top_k = 1;
        let r = preference_ranking(&active, &cb, &cfg, &universe).unwrap();
        // comparison universe {a, c}: case has them free, active has c > a
        assert!((r.distance - 0.5).abs() < 1e-12);
    }
}
