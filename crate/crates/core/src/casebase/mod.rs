//! The case base of stored user preferences.
//!
//! Ratings arrive on a six-level scale (0.0 to 1.0 in steps of 0.2) and are
//! turned into partial orders: a higher-rated item is preferred to a
//! lower-rated one, equal ratings stay incomparable. Raw ratings are kept
//! alongside for the correlation baseline.

mod catalog;
mod ranking;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::preference::{ItemId, PartialPreference, PreferenceError, TotalOrder};

pub use catalog::{fallback_ranking, read_movies_csv, write_movies_csv, Catalog, MovieRecord};
pub use ranking::{nearest_cases, preference_ranking, RankingConfig, RankingError, RankingResult};

/// Truncation depth used when comparing two users' orders.
pub const DEFAULT_TOP_K: usize = 100;

#[derive(Debug, Error)]
pub enum CaseBaseError {
    #[error("malformed header: expected `{expected}`, found `{found}`")]
    BadHeader { expected: String, found: String },
    #[error("line {line}: {reason}")]
    BadRecord { line: usize, reason: String },
    #[error("duplicate movie id {0}")]
    DuplicateMovie(ItemId),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Preference(#[from] PreferenceError),
}

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(String);

impl UserId {
    pub fn new(id: impl Into<String>) -> Self {
        UserId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl From<&str> for UserId {
    fn from(s: &str) -> Self {
        UserId::new(s)
    }
}

/// One of the six legal rating levels, stored as steps of 0.2.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct RatingLevel(u8);

impl RatingLevel {
    pub const MAX_STEP: u8 = 5;

    pub fn from_step(step: u8) -> Option<Self> {
        (step <= Self::MAX_STEP).then_some(RatingLevel(step))
    }

    /// Accepts 0.0, 0.2, ..., 1.0 (within float noise).
    pub fn from_value(value: f64) -> Option<Self> {
        let scaled = value * 5.0;
        let step = scaled.round();
        if !value.is_finite() || (scaled - step).abs() > 1e-6 || !(0.0..=5.0).contains(&step) {
            return None;
        }
        Some(RatingLevel(step as u8))
    }

    pub fn step(self) -> u8 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 5.0
    }
}

impl TryFrom<f64> for RatingLevel {
    type Error = String;

    fn try_from(v: f64) -> Result<Self, Self::Error> {
        RatingLevel::from_value(v).ok_or_else(|| format!("{v} is not a legal rating level"))
    }
}

impl From<RatingLevel> for f64 {
    fn from(r: RatingLevel) -> f64 {
        r.value()
    }
}

impl fmt::Display for RatingLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.1}", self.value())
    }
}

impl fmt::Debug for RatingLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

/// A user's ratings keyed by item.
pub type Ratings = BTreeMap<ItemId, RatingLevel>;

/// Edge `(s1, s2)` for every pair with `rating(s1) > rating(s2)`.
pub fn ratings_to_partial(ratings: &Ratings) -> PartialPreference {
    let mut by_level: BTreeMap<RatingLevel, Vec<&ItemId>> = BTreeMap::new();
    for (item, level) in ratings {
        by_level.entry(*level).or_default().push(item);
    }
    let levels: Vec<&Vec<&ItemId>> = by_level.values().collect();
    let mut edges = Vec::new();
    for (lo, lower) in levels.iter().enumerate() {
        for upper in &levels[lo + 1..] {
            for a in upper.iter() {
                for b in lower.iter() {
                    edges.push(((*a).clone(), (*b).clone()));
                }
            }
        }
    }
    PartialPreference::new(ratings.keys().cloned(), edges)
        .expect("rating levels are totally ordered")
}

/// Induced sub-order of `p` on its first `k` items in `hint` order.
/// The hint may contain items outside `p`; those are skipped.
pub fn restrict_top_k(
    p: &PartialPreference,
    k: usize,
    hint: &TotalOrder,
) -> Result<PartialPreference, PreferenceError> {
    if let Some(missing) = p.domain().iter().find(|i| hint.position(i).is_none()) {
        return Err(PreferenceError::NotInDomain(missing.clone()));
    }
    if k >= p.len() {
        return Ok(p.clone());
    }
    let keep: BTreeSet<ItemId> = hint
        .items()
        .iter()
        .filter(|i| p.contains(i))
        .take(k)
        .cloned()
        .collect();
    Ok(p.restrict(&keep))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Case {
    pub preference: PartialPreference,
    pub ratings: Ratings,
}

impl Case {
    pub fn from_ratings(ratings: Ratings) -> Self {
        Case {
            preference: ratings_to_partial(&ratings),
            ratings,
        }
    }
}

/// Stored per-user preference structures plus their raw ratings.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CaseBase {
    cases: BTreeMap<UserId, Arc<Case>>,
}

impl CaseBase {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: UserId, ratings: Ratings) {
        self.cases
            .insert(user, Arc::new(Case::from_ratings(ratings)));
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }

    pub fn get(&self, user: &UserId) -> Option<&Case> {
        self.cases.get(user).map(Arc::as_ref)
    }

    pub fn contains(&self, user: &UserId) -> bool {
        self.cases.contains_key(user)
    }

    pub fn users(&self) -> impl Iterator<Item = &UserId> {
        self.cases.keys()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&UserId, &Case)> {
        self.cases.iter().map(|(u, c)| (u, c.as_ref()))
    }

    pub fn ratings(&self, user: &UserId) -> Option<&Ratings> {
        self.get(user).map(|c| &c.ratings)
    }

    pub fn preference(&self, user: &UserId) -> Option<&PartialPreference> {
        self.get(user).map(|c| &c.preference)
    }

    /// A copy without the given users; shared cases are not deep-copied.
    pub fn without<'a>(&self, users: impl IntoIterator<Item = &'a UserId>) -> CaseBase {
        let mut cases = self.cases.clone();
        for u in users {
            cases.remove(u);
        }
        CaseBase { cases }
    }

    /// Every item rated by anyone.
    pub fn items(&self) -> BTreeSet<ItemId> {
        self.cases
            .values()
            .flat_map(|c| c.ratings.keys().cloned())
            .collect()
    }

    /// One JSON object per line: `{"user": ..., "ratings": {item: level}}`.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (user, case) in &self.cases {
            let line = CaseLine {
                user: user.clone(),
                ratings: case.ratings.clone(),
            };
            serde_json_line(&mut w, &line)?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R) -> Result<CaseBase, CaseBaseError> {
        let mut cb = CaseBase::new();
        for (k, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: CaseLine =
                serde_json::from_str(&line).map_err(|e| CaseBaseError::BadRecord {
                    line: k + 1,
                    reason: e.to_string(),
                })?;
            cb.insert(parsed.user, parsed.ratings);
        }
        Ok(cb)
    }
}

#[derive(Serialize, Deserialize)]
struct CaseLine {
    user: UserId,
    ratings: Ratings,
}

fn serde_json_line<W: Write, T: Serialize>(w: &mut W, value: &T) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, value)?;
    w.write_all(b"\n")
}

/// A raw ratings row before validation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRecord {
    #[serde(rename = "user_id")]
    pub user: UserId,
    #[serde(rename = "item_id")]
    pub item: ItemId,
    pub rating: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rejection {
    /// File line for CSV input, 1-based record position otherwise.
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Ingested {
    pub casebase: CaseBase,
    pub rejected: Vec<Rejection>,
    /// Users dropped for having fewer than `min_ratings` ratings.
    pub dropped_users: Vec<UserId>,
}

/// Builds a case base, dropping users with fewer than `min_ratings` ratings.
/// Off-grid levels and repeated (user, item) pairs are rejected per record.
pub fn ingest_ratings(
    records: impl IntoIterator<Item = RatingRecord>,
    min_ratings: usize,
) -> Ingested {
    ingest_numbered(
        records.into_iter().enumerate().map(|(k, r)| (k + 1, r)),
        min_ratings,
        |_| true,
    )
}

/// Like [`ingest_ratings`], but ratings for items failing `keep_item` are
/// discarded before the `min_ratings` threshold is applied.
pub fn ingest_ratings_filtered(
    records: impl IntoIterator<Item = RatingRecord>,
    min_ratings: usize,
    keep_item: impl Fn(&ItemId) -> bool,
) -> Ingested {
    ingest_numbered(
        records.into_iter().enumerate().map(|(k, r)| (k + 1, r)),
        min_ratings,
        keep_item,
    )
}

fn ingest_numbered(
    records: impl Iterator<Item = (usize, RatingRecord)>,
    min_ratings: usize,
    keep_item: impl Fn(&ItemId) -> bool,
) -> Ingested {
    let mut per_user: BTreeMap<UserId, Ratings> = BTreeMap::new();
    let mut rejected = Vec::new();
    for (line, rec) in records {
        let Some(level) = RatingLevel::from_value(rec.rating) else {
            rejected.push(Rejection {
                line,
                reason: format!("illegal rating level {}", rec.rating),
            });
            continue;
        };
        if !keep_item(&rec.item) {
            continue;
        }
        let ratings = per_user.entry(rec.user.clone()).or_default();
        if ratings.contains_key(&rec.item) {
            rejected.push(Rejection {
                line,
                reason: format!("duplicate rating of {} by {}", rec.item, rec.user),
            });
            continue;
        }
        ratings.insert(rec.item, level);
    }
    let mut casebase = CaseBase::new();
    let mut dropped_users = Vec::new();
    for (user, ratings) in per_user {
        if ratings.len() < min_ratings {
            dropped_users.push(user);
        } else {
            casebase.insert(user, ratings);
        }
    }
    Ingested {
        casebase,
        rejected,
        dropped_users,
    }
}

const RATINGS_HEADER: [&str; 3] = ["user_id", "item_id", "rating"];

/// Reads a `user_id,item_id,rating` CSV and ingests it. Only a malformed
/// header fails the whole file; bad rows are reported with their line.
pub fn read_ratings_csv<R: Read>(
    reader: R,
    min_ratings: usize,
    keep_item: impl Fn(&ItemId) -> bool,
) -> Result<Ingested, CaseBaseError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().map(str::trim).ne(RATINGS_HEADER) {
        return Err(CaseBaseError::BadHeader {
            expected: RATINGS_HEADER.join(","),
            found: header.iter().collect::<Vec<_>>().join(","),
        });
    }
    let mut rows = Vec::new();
    let mut parse_failures = Vec::new();
    for result in rdr.records() {
        let (line, parsed) = match result {
            Ok(rec) => {
                let line = rec.position().map_or(0, |p| p.line() as usize);
                (line, parse_rating_row(&rec))
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line() as usize);
                (line, Err(e.to_string()))
            }
        };
        match parsed {
            Ok(r) => rows.push((line, r)),
            Err(reason) => parse_failures.push(Rejection { line, reason }),
        }
    }
    let mut ingested = ingest_numbered(rows.into_iter(), min_ratings, keep_item);
    ingested.rejected.extend(parse_failures);
    ingested.rejected.sort_by_key(|r| r.line);
    Ok(ingested)
}

fn parse_rating_row(rec: &csv::StringRecord) -> Result<RatingRecord, String> {
    if rec.len() != 3 {
        return Err(format!("expected 3 fields, found {}", rec.len()));
    }
    let user = rec[0].trim();
    if user.is_empty() {
        return Err("empty user id".into());
    }
    let item = ItemId::new(rec[1].trim()).map_err(|e| e.to_string())?;
    let rating: f64 = rec[2]
        .trim()
        .parse()
        .map_err(|_| format!("unparsable rating `{}`", &rec[2]))?;
    Ok(RatingRecord {
        user: UserId::new(user),
        item,
        rating,
    })
}

/// Writes ratings as CSV with one-decimal levels.
pub fn write_ratings_csv<'a, W: Write>(
    w: W,
    rows: impl IntoIterator<Item = (&'a UserId, &'a ItemId, RatingLevel)>,
) -> Result<(), CaseBaseError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(RATINGS_HEADER)?;
    for (u, i, r) in rows {
        wtr.write_record([u.as_str(), i.as_str(), &r.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::test_support::*;
    use proptest::prelude::*;

    fn rec(user: &str, item: &str, rating: f64) -> RatingRecord {
        RatingRecord {
            user: UserId::new(user),
            item: id(item),
            rating,
        }
    }

    fn level(v: f64) -> RatingLevel {
        RatingLevel::from_value(v).unwrap()
    }

    fn ratings(pairs: &[(&str, f64)]) -> Ratings {
        pairs.iter().map(|(i, v)| (id(i), level(*v))).collect()
    }

    #[test]
    fn rating_levels() {
        for (k, v) in [0.0, 0.2, 0.4, 0.6, 0.8, 1.0].into_iter().enumerate() {
            assert_eq!(RatingLevel::from_value(v).unwrap().step(), k as u8);
        }
        assert_eq!(level(0.6).to_string(), "0.6");
        for bad in [0.3, -0.2, 1.2, f64::NAN, 0.1] {
            assert!(RatingLevel::from_value(bad).is_none(), "{bad}");
        }
    }

    #[test]
    fn ingest_min_ratings() {
        let mut records = Vec::new();
        for (user, count) in [("u1", 25), ("u2", 20), ("u3", 5)] {
            for k in 0..count {
                records.push(rec(user, &format!("m{k:03}"), [0.0, 0.4, 1.0][k % 3]));
            }
        }
        let out = ingest_ratings(records, 20);
        assert_eq!(out.casebase.len(), 2);
        assert_eq!(out.dropped_users, vec![UserId::new("u3")]);
        assert!(out.rejected.is_empty());
    }

    #[test]
    fn ingest_empty() {
        let out = ingest_ratings(Vec::new(), 20);
        assert!(out.casebase.is_empty());
    }

    #[test]
    fn ingest_rejects_off_grid_and_duplicates() {
        let records = vec![
            rec("u", "a", 0.3),
            rec("u", "b", 0.4),
            rec("u", "b", 0.8),
            rec("u", "c", 1.0),
        ];
        let out = ingest_ratings(records, 1);
        assert_eq!(
            out.rejected.iter().map(|r| r.line).collect::<Vec<_>>(),
            vec![1, 3]
        );
        let kept = out.casebase.ratings(&UserId::new("u")).unwrap();
        assert_eq!(kept, &ratings(&[("b", 0.4), ("c", 1.0)]));
    }

    #[test]
    fn ingest_is_idempotent() {
        let records = vec![
            rec("u", "a", 0.2),
            rec("u", "b", 0.4),
            rec("v", "a", 1.0),
            rec("v", "c", 0.0),
        ];
        assert_eq!(
            ingest_ratings(records.clone(), 1),
            ingest_ratings(records, 1)
        );
    }

    #[test]
    fn ratings_to_partial_examples() {
        let p = ratings_to_partial(&ratings(&[("m1", 1.0), ("m2", 0.6), ("m3", 0.6)]));
        let expected: BTreeSet<_> = [(id("m1"), id("m2")), (id("m1"), id("m3"))]
            .into_iter()
            .collect();
        assert_eq!(p.edges(), &expected);
        assert!(!p.is_preferred(&id("m2"), &id("m3")).unwrap());

        let flat = ratings_to_partial(&ratings(&[("a", 0.4), ("b", 0.4), ("c", 0.4)]));
        assert!(flat.edges().is_empty());

        let low = ratings_to_partial(&ratings(&[("m1", 0.0), ("m2", 0.2)]));
        assert_eq!(
            low.edges().iter().collect::<Vec<_>>(),
            vec![&(id("m2"), id("m1"))]
        );
    }

    #[test]
    fn restrict_top_k_examples() {
        let chain = pref(&[], &[("a", "b"), ("b", "c"), ("c", "d"), ("d", "e")]);
        let hint = order(&["a", "b", "c", "d", "e"]);
        assert_eq!(restrict_top_k(&chain, 10, &hint).unwrap(), chain);
        let top = restrict_top_k(&chain, 3, &hint).unwrap();
        assert_eq!(top, pref(&[], &[("a", "b"), ("b", "c"), ("a", "c")]));
        assert_eq!(
            restrict_top_k(&chain, 3, &order(&["a", "b"])),
            Err(PreferenceError::NotInDomain(id("c")))
        );
        assert_eq!(DEFAULT_TOP_K, 100);
    }

    #[test]
    fn ratings_csv_round_trip_and_errors() {
        let csv_text = "user_id,item_id,rating\nu1,m1,0.6\nu1,m2,0.3\nu1,m3\nu1,m4,1.0\n";
        let out = read_ratings_csv(csv_text.as_bytes(), 1, |_| true).unwrap();
        assert_eq!(
            out.rejected.iter().map(|r| r.line).collect::<Vec<_>>(),
            vec![3, 4]
        );
        let user = UserId::new("u1");
        assert_eq!(out.casebase.ratings(&user).unwrap().len(), 2);

        let mut buf = Vec::new();
        let rows: Vec<_> = out
            .casebase
            .iter()
            .flat_map(|(u, c)| c.ratings.iter().map(move |(i, r)| (u, i, *r)))
            .collect();
        write_ratings_csv(&mut buf, rows).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "user_id,item_id,rating\nu1,m1,0.6\nu1,m4,1.0\n"
        );

        let err = read_ratings_csv("user,item,rating\n".as_bytes(), 1, |_| true).unwrap_err();
        assert!(matches!(err, CaseBaseError::BadHeader { .. }));
    }

    #[test]
    fn jsonl_round_trip() {
        let mut cb = CaseBase::new();
        cb.insert(UserId::new("u1"), ratings(&[("a", 0.2), ("b", 1.0)]));
        cb.insert(UserId::new("u2"), ratings(&[("a", 0.8)]));
        let mut buf = Vec::new();
        cb.write_jsonl(&mut buf).unwrap();
        let back = CaseBase::read_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, cb);
        let err = CaseBase::read_jsonl("{\"user\":\"x\",\"ratings\":{\"a\":0.3}}\n".as_bytes())
            .unwrap_err();
        assert!(matches!(err, CaseBaseError::BadRecord { line: 1, .. }));
    }

    proptest! {
        #[test]
        fn ratings_orders_are_consistent(levels in proptest::collection::vec(0u8..=5, 0..25)) {
            let r: Ratings = levels
                .iter()
                .enumerate()
                .map(|(k, s)| (id(&format!("m{k:02}")), RatingLevel::from_step(*s).unwrap()))
                .collect();
            let p = ratings_to_partial(&r);
            for (a, ra) in &r {
                for (b, rb) in &r {
                    prop_assert_eq!(p.is_preferred(a, b).unwrap(), ra > rb);
                }
            }
        }
    }
}
