use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{RecommendError, SessionState};
use crate::preference::{ItemId, PartialPreference, PreferenceError, TriageLists};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LongTermVerdict {
    SeenLiked,
    SeenDisliked,
    /// Not seen, but confident it would not be enjoyed.
    SureWouldDislike,
}

impl LongTermVerdict {
    pub fn is_seen(self) -> bool {
        matches!(
            self,
            LongTermVerdict::SeenLiked | LongTermVerdict::SeenDisliked
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShortTermTag {
    NearMiss,
    NotEvenClose,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackEntry {
    pub item: ItemId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<LongTermVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<ShortTermTag>,
}

/// Verdict and tag given to one item, after collapsing repeats.
pub type ItemFeedback = (Option<LongTermVerdict>, Option<ShortTermTag>);

/// Per-item feedback on a recommendation list.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feedback {
    #[serde(default)]
    pub entries: Vec<FeedbackEntry>,
}

impl Feedback {
    /// Collapses repeated entries per item, rejecting contradictions and
    /// short-term tags on movies the user has seen.
    pub fn normalized(&self) -> Result<BTreeMap<ItemId, ItemFeedback>, RecommendError> {
        let mut out: BTreeMap<ItemId, ItemFeedback> = BTreeMap::new();
        for e in &self.entries {
            let slot = out.entry(e.item.clone()).or_default();
            if let Some(v) = e.verdict {
                if slot.0.is_some_and(|old| old != v) {
                    return Err(RecommendError::ConflictingVerdicts(e.item.clone()));
                }
                slot.0 = Some(v);
            }
            if let Some(t) = e.tag {
                if slot.1.is_some_and(|old| old != t) {
                    return Err(RecommendError::ConflictingTags(e.item.clone()));
                }
                slot.1 = Some(t);
            }
            if slot.1.is_some() && slot.0.is_some_and(LongTermVerdict::is_seen) {
                return Err(RecommendError::TagOnSeenItem(e.item.clone()));
            }
        }
        Ok(out)
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.iter().map(|e| &e.item)
    }
}

/// Moves liked movies to the Like list and disliked (or surely disliked)
/// ones to the Dislike list, taking them out of whatever list held them.
pub fn apply_longterm_feedback(
    triage: &TriageLists,
    fb: &Feedback,
) -> Result<TriageLists, RecommendError> {
    let mut next = triage.clone();
    for (item, (verdict, _)) in fb.normalized()? {
        let Some(verdict) = verdict else { continue };
        next.like.remove(&item);
        next.ok.remove(&item);
        next.dislike.remove(&item);
        match verdict {
            LongTermVerdict::SeenLiked => next.like.insert(item),
            LongTermVerdict::SeenDisliked | LongTermVerdict::SureWouldDislike => {
                next.dislike.insert(item)
            }
        };
    }
    Ok(next)
}

/// Every near-miss item preferred to every not-even-close item.
pub fn session_edges(session: &SessionState) -> BTreeSet<(ItemId, ItemId)> {
    session
        .near_miss
        .iter()
        .flat_map(|a| {
            session
                .not_even_close
                .iter()
                .map(move |b| (a.clone(), b.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedPreference {
    pub preference: PartialPreference,
    /// Session edges left out because they contradicted longer-lived preferences.
    pub dropped: Vec<(ItemId, ItemId)>,
}

/// Adds the session's edges to the long-term order one at a time in a fixed
/// order, dropping any edge that would close a cycle.
pub fn merged_session_preference(
    ldo: &PartialPreference,
    session: &SessionState,
) -> MergedPreference {
    let mut preference = ldo.clone();
    let mut dropped = Vec::new();
    for (a, b) in session_edges(session) {
        match preference.add_edges([(a.clone(), b.clone())]) {
            Ok(next) => preference = next,
            Err(PreferenceError::Cycle(_) | PreferenceError::SelfEdge(_)) => dropped.push((a, b)),
            Err(e) => unreachable!("adding an edge only fails on cycles: {e}"),
        }
    }
    MergedPreference {
        preference,
        dropped,
    }
}
