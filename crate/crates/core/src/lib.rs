//! Preference-order movie recommendation.
//!
//! User taste is modeled as a strict partial order over items. A partial
//! order is completed by sampling its linear extensions with a lazy
//! adjacent-transposition Markov chain and picking the extension that sits
//! closest to the most similar stored case. Similarity between orders is
//! the probability that a random pair of items is ranked in conflict.
//!
//! Modules:
//! - [`preference`]: partial orders, linear-extension sampling, distances.
//! - [`casebase`]: ratings ingestion, movie catalog, case retrieval.
//! - [`recommend`]: constraint filtering, sessions and feedback merging.
//! - [`grouplens`]: Pearson-correlation collaborative filtering baseline.
//! - [`evaluation`]: observed/held-out splits, precision/recall, grid runs.

pub mod casebase;
pub mod evaluation;
pub mod grouplens;
pub mod preference;
pub mod recommend;
pub mod rng;

pub use casebase::{CaseBase, MovieRecord, RankingConfig, RankingResult, RatingLevel, UserId};
pub use preference::{
    ItemId, PartialPreference, PositionWeighting, PreferenceError, SamplerConfig, TotalOrder,
    TriageLists,
};
