//! Pearson-correlation collaborative filtering over raw rating levels.
//!
//! Correlations are taken over the items both users rated, with means over
//! that intersection. Predictions weight each neighbour's deviation from
//! their own mean by the correlation, so negatively correlated neighbours
//! push the other way.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::casebase::{CaseBase, Ratings, UserId};
use crate::preference::ItemId;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupLensConfig {
    /// Neighbours sharing fewer rated items are ignored. 0 keeps everyone
    /// with a defined correlation.
    pub min_overlap: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Pearson correlation over co-rated items, or `None` when fewer than two
/// items are shared or either side is constant on them.
pub fn pearson(a: &Ratings, u: &Ratings) -> Option<f64> {
    let pairs: Vec<(f64, f64)> = a
        .iter()
        .filter_map(|(item, ra)| u.get(item).map(|ru| (ra.value(), ru.value())))
        .collect();
    pearson_pairs(&pairs)
}

fn pearson_pairs(pairs: &[(f64, f64)]) -> Option<f64> {
    if pairs.len() < 2 {
        return None;
    }
    let n = pairs.len() as f64;
    let ma = pairs.iter().map(|p| p.0).sum::<f64>() / n;
    let mu = pairs.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut cov, mut va, mut vu) = (0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        cov += (x - ma) * (y - mu);
        va += (x - ma) * (x - ma);
        vu += (y - mu) * (y - mu);
    }
    if va <= 0.0 || vu <= 0.0 {
        return None;
    }
    Some((cov / (va.sqrt() * vu.sqrt())).clamp(-1.0, 1.0))
}

struct Neighbour<'a> {
    weight: f64,
    mean: f64,
    ratings: &'a Ratings,
}

/// Correlations between one active user and every case, computed once.
pub struct Neighbourhood<'a> {
    active_mean: f64,
    neighbours: Vec<Neighbour<'a>>,
}

impl<'a> Neighbourhood<'a> {
    pub fn new(active: &Ratings, cb: &'a CaseBase, cfg: &GroupLensConfig) -> Self {
        let active_mean = mean(active.values().map(|r| r.value())).unwrap_or(0.0);
        let neighbours = cb
            .iter()
            .filter_map(|(_, case)| {
                let overlap = active
                    .keys()
                    .filter(|i| case.ratings.contains_key(*i))
                    .count();
                if overlap < cfg.min_overlap {
                    return None;
                }
                let weight = pearson(active, &case.ratings)?;
                (weight != 0.0).then(|| Neighbour {
                    weight,
                    mean: mean(case.ratings.values().map(|r| r.value()))
                        .expect("correlated cases have ratings"),
                    ratings: &case.ratings,
                })
            })
            .collect();
        Neighbourhood {
            active_mean,
            neighbours,
        }
    }

    pub fn active_mean(&self) -> f64 {
        self.active_mean
    }

    pub fn len(&self) -> usize {
        self.neighbours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbours.is_empty()
    }

    /// Predicted rating for `item`, clamped to [0, 1]. Falls back to the
    /// active user's mean when no correlated neighbour rated it.
    pub fn predict(&self, item: &ItemId) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for n in &self.neighbours {
            if let Some(v) = n.ratings.get(item) {
                num += n.weight * (v.value() - n.mean);
                den += n.weight.abs();
            }
        }
        let raw = if den > 0.0 {
            self.active_mean + num / den
        } else {
            self.active_mean
        };
        raw.clamp(0.0, 1.0)
    }
}

/// Single-item prediction. Prefer [`Neighbourhood`] when predicting many items.
pub fn predict(active: &Ratings, item: &ItemId, cb: &CaseBase, cfg: &GroupLensConfig) -> f64 {
    Neighbourhood::new(active, cb, cfg).predict(item)
}

/// The `n` candidates with the highest predicted rating, ties by id.
pub fn baseline_recommend(
    active: &Ratings,
    cb: &CaseBase,
    candidates: &BTreeSet<ItemId>,
    n: usize,
    cfg: &GroupLensConfig,
) -> Vec<ItemId> {
    let hood = Neighbourhood::new(active, cb, cfg);
    let mut scored: Vec<(f64, &ItemId)> = candidates
        .par_iter()
        .map(|i| (hood.predict(i), i))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(n).map(|(_, i)| i.clone()).collect()
}

/// Correlations with every case, strongest first. Undefined ones are omitted.
pub fn correlations(active: &Ratings, cb: &CaseBase) -> Vec<(UserId, f64)> {
    let mut out: Vec<(UserId, f64)> = cb
        .iter()
        .filter_map(|(u, c)| pearson(active, &c.ratings).map(|r| (u.clone(), r)))
        .collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}
