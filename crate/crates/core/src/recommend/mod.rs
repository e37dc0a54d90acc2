//! Short-term constraints, top-n selection, and feedback.
//!
//! A search filters the catalog by the user's constraints, ranks the
//! survivors with the completed preference order and shows the first `n`.
//! When too few movies pass all constraints, the same constraints are
//! evaluated as a disjunction instead.

mod feedback;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casebase::{Catalog, MovieRecord};
use crate::preference::{ItemId, TotalOrder};

pub use feedback::{
    apply_longterm_feedback, merged_session_preference, session_edges, Feedback, FeedbackEntry,
    ItemFeedback, LongTermVerdict, MergedPreference, ShortTermTag,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RecommendError {
    #[error("year range {0}..{1} is reversed")]
    ReversedYearRange(i32, i32),
    #[error("item {0} is tagged both near-miss and not-even-close")]
    ConflictingTags(ItemId),
    #[error("item {0} received conflicting feedback")]
    ConflictingVerdicts(ItemId),
    #[error("item {0} was marked as seen but also tagged for the current search")]
    TagOnSeenItem(ItemId),
    #[error("minimum star rating {0} is outside 0-5")]
    BadStarRating(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Every present predicate must hold.
    #[default]
    All,
    /// At least one present predicate must hold.
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct YearRange {
    pub min: i32,
    pub max: i32,
}

/// Optional per-attribute predicates. List-valued predicates match when
/// the movie has any listed value (case-insensitive exact tokens).
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConstraintSet {
    pub actors: Vec<String>,
    pub directors: Vec<String>,
    pub genres: Vec<String>,
    pub min_star_rating: Option<f64>,
    pub countries: Vec<String>,
    pub year_range: Option<YearRange>,
    pub mpaa: Vec<String>,
    pub max_runtime_minutes: Option<u32>,
    pub mode: MatchMode,
}

fn any_token(wanted: &[String], have: &[String]) -> bool {
    wanted
        .iter()
        .any(|w| have.iter().any(|h| h.trim().eq_ignore_ascii_case(w.trim())))
}

fn one_token(wanted: &[String], have: &str) -> bool {
    wanted
        .iter()
        .any(|w| have.trim().eq_ignore_ascii_case(w.trim()))
}

impl ConstraintSet {
    pub fn validate(&self) -> Result<(), RecommendError> {
        if let Some(r) = self.year_range {
            if r.min > r.max {
                return Err(RecommendError::ReversedYearRange(r.min, r.max));
            }
        }
        if let Some(s) = self.min_star_rating {
            if !(0.0..=5.0).contains(&s) {
                return Err(RecommendError::BadStarRating(s));
            }
        }
        Ok(())
    }

    /// Results of each present predicate on `m`.
    fn predicates(&self, m: &MovieRecord) -> Vec<bool> {
        let mut out = Vec::with_capacity(8);
        if !self.actors.is_empty() {
            out.push(any_token(&self.actors, &m.actors));
        }
        if !self.directors.is_empty() {
            out.push(one_token(&self.directors, &m.director));
        }
        if !self.genres.is_empty() {
            out.push(any_token(&self.genres, &m.genres));
        }
        if let Some(s) = self.min_star_rating {
            out.push(m.star_rating >= s);
        }
        if !self.countries.is_empty() {
            out.push(one_token(&self.countries, &m.country));
        }
        if let Some(r) = self.year_range {
            out.push((r.min..=r.max).contains(&m.year));
        }
        if !self.mpaa.is_empty() {
            out.push(one_token(&self.mpaa, &m.mpaa));
        }
        if let Some(max) = self.max_runtime_minutes {
            out.push(m.runtime_minutes <= max);
        }
        out
    }

    pub fn predicate_count(&self) -> usize {
        [
            !self.actors.is_empty(),
            !self.directors.is_empty(),
            !self.genres.is_empty(),
            self.min_star_rating.is_some(),
            !self.countries.is_empty(),
            self.year_range.is_some(),
            !self.mpaa.is_empty(),
            self.max_runtime_minutes.is_some(),
        ]
        .into_iter()
        .filter(|&p| p)
        .count()
    }

    pub fn is_unconstrained(&self) -> bool {
        self.predicate_count() == 0
    }

    pub fn matches(&self, m: &MovieRecord) -> bool {
        let results = self.predicates(m);
        if results.is_empty() {
            return true;
        }
        match self.mode {
            MatchMode::All => results.iter().all(|&r| r),
            MatchMode::Any => results.iter().any(|&r| r),
        }
    }
}

/// Movies satisfying `c`, in catalog order.
pub fn filter_movies<'a>(catalog: &'a [MovieRecord], c: &ConstraintSet) -> Vec<&'a MovieRecord> {
    catalog.iter().filter(|m| c.matches(m)).collect()
}

/// Switches the constraints to disjunctive evaluation. A no-op on an
/// empty set.
pub fn relax(c: &ConstraintSet) -> ConstraintSet {
    let mut relaxed = c.clone();
    if !c.is_unconstrained() {
        relaxed.mode = MatchMode::Any;
    }
    relaxed
}

/// Search-scoped state, discarded when the search ends.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionState {
    pub near_miss: BTreeSet<ItemId>,
    pub not_even_close: BTreeSet<ItemId>,
    pub shown: BTreeSet<ItemId>,
    pub constraints: ConstraintSet,
}

impl SessionState {
    pub fn new(constraints: ConstraintSet) -> Self {
        SessionState {
            constraints,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), RecommendError> {
        if let Some(i) = self.near_miss.intersection(&self.not_even_close).next() {
            return Err(RecommendError::ConflictingTags(i.clone()));
        }
        Ok(())
    }
}

/// The first `n` of `eligible` in ranking order, skipping `shown`.
/// Eligible items the ranking does not cover are never returned.
pub fn top_n<'a>(
    ranking: &TotalOrder,
    eligible: &[&'a MovieRecord],
    shown: &BTreeSet<ItemId>,
    n: usize,
) -> Vec<&'a MovieRecord> {
    let by_id: std::collections::HashMap<&ItemId, &'a MovieRecord> =
        eligible.iter().map(|m| (&m.id, *m)).collect();
    ranking
        .items()
        .iter()
        .filter(|i| !shown.contains(*i))
        .filter_map(|i| by_id.get(i).copied())
        .take(n)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Recommendation {
    pub movies: Vec<MovieRecord>,
    /// The constraints had to be disjoined to fill the list.
    pub relaxed: bool,
    /// Nothing matched, even after relaxing.
    pub no_matches: bool,
}

/// Next `n` movies for the session, recording them as shown.
pub fn recommend(
    ranking: &TotalOrder,
    catalog: &Catalog,
    session: &mut SessionState,
    n: usize,
) -> Recommendation {
    recommend_excluding(ranking, catalog, session, n, &BTreeSet::new())
}

/// As [`recommend`], never offering anything in `exclude` (typically the
/// movies the user has already classified).
pub fn recommend_excluding(
    ranking: &TotalOrder,
    catalog: &Catalog,
    session: &mut SessionState,
    n: usize,
    exclude: &BTreeSet<ItemId>,
) -> Recommendation {
    let n = n.max(1);
    let unshown = |c: &ConstraintSet| -> Vec<&MovieRecord> {
        filter_movies(catalog.movies(), c)
            .into_iter()
            .filter(|m| !session.shown.contains(&m.id) && !exclude.contains(&m.id))
            .collect()
    };
    let mut eligible = unshown(&session.constraints);
    let mut relaxed = false;
    if eligible.len() < n
        && session.constraints.mode == MatchMode::All
        && session.constraints.predicate_count() > 1
    {
        eligible = unshown(&relax(&session.constraints));
        relaxed = true;
    }
    let movies: Vec<MovieRecord> = top_n(ranking, &eligible, &session.shown, n)
        .into_iter()
        .cloned()
        .collect();
    session.shown.extend(movies.iter().map(|m| m.id.clone()));
    Recommendation {
        no_matches: movies.is_empty(),
        movies,
        relaxed,
    }
}

#[cfg(test)]
pub(crate) mod fixture {
    use super::*;
    use crate::preference::test_support::id;

    pub fn movie(key: &str, genres: &[&str], year: i32) -> MovieRecord {
        MovieRecord {
            id: id(key),
            title: key.to_uppercase(),
            director: format!("dir-{key}"),
            actors: vec![format!("actor-{key}")],
            genres: genres.iter().map(|g| g.to_string()).collect(),
            star_rating: 3.0,
            mpaa: "PG".into(),
            country: "USA".into(),
            runtime_minutes: 100,
            year,
        }
    }

    /// Two crime films (one from the 1990s), a comedy, and a crime comedy from 2035.
    pub fn catalog() -> Catalog {
        Catalog::new(vec![
            movie("m1", &["crime", "drama"], 1994),
            movie("m2", &["comedy"], 1993),
            movie("m3", &["Crime"], 1972),
            movie("m4", &["romance"], 2031),
        ])
        .unwrap()
    }
}
