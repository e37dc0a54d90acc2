//! Offline evaluation: observed/held-out splits, precision and recall, and
//! the (extensions x iterations) experiment grid.
//!
//! For each test user the OK and Dislike lists plus three random Like items
//! are observed; the remaining Like items are held out. Each method then
//! recommends `rated / 6` movies from every item outside the observed set.

mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::io::Write;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::casebase::{
    preference_ranking, CaseBase, RankingConfig, RankingError, RatingLevel, Ratings, UserId,
};
use crate::grouplens::{baseline_recommend, GroupLensConfig};
use crate::preference::{build_ldo, ItemId, PreferenceError, SamplerConfig, TriageLists};
use crate::rng::{self, StreamRng};

pub use synth::{
    quantize_scores, synth_casebase, SynthConfig, Synthetic, LEVEL_PROFILE, MODERATE_NOISE,
};

/// Like items moved into the observed set.
pub const OBSERVED_LIKES: usize = 3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvalError {
    #[error("user needs at least 4 Like, 1 OK and 1 Dislike item; has {likes}/{oks}/{dislikes}")]
    Ineligible {
        likes: usize,
        oks: usize,
        dislikes: usize,
    },
    #[error("an empty recommendation list has no precision")]
    EmptyRecommendation,
    #[error("need {wanted} eligible test users but only {available} qualify")]
    NotEnoughTestUsers { wanted: usize, available: usize },
    #[error("grid {0} must be at least 1")]
    InvalidGrid(&'static str),
    #[error("ranking failed for {user}: {source}")]
    Ranking { user: UserId, source: RankingError },
    #[error(transparent)]
    Preference(#[from] PreferenceError),
}

/// The list a rating level lands in: >= 0.8 Like, 0.4-0.6 OK, <= 0.2 Dislike.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum TriageLevel {
    Dislike,
    Ok,
    Like,
}

pub fn triage_level(level: RatingLevel) -> TriageLevel {
    match level.step() {
        0 | 1 => TriageLevel::Dislike,
        2 | 3 => TriageLevel::Ok,
        _ => TriageLevel::Like,
    }
}

pub fn triage_from_ratings(ratings: &Ratings) -> TriageLists {
    let mut t = TriageLists::default();
    for (item, level) in ratings {
        let list = match triage_level(*level) {
            TriageLevel::Like => &mut t.like,
            TriageLevel::Ok => &mut t.ok,
            TriageLevel::Dislike => &mut t.dislike,
        };
        list.insert(item.clone());
    }
    t
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EvalSplit {
    /// O_1: every OK and Dislike item plus three Like items.
    pub observed: TriageLists,
    /// O_2: the remaining Like items.
    pub held_out_liked: BTreeSet<ItemId>,
    pub rated_count: usize,
}

pub fn split_user(ratings: &Ratings, rng: &mut StreamRng) -> Result<EvalSplit, EvalError> {
    let triage = triage_from_ratings(ratings);
    let (likes, oks, dislikes) = (triage.like.len(), triage.ok.len(), triage.dislike.len());
    if likes < OBSERVED_LIKES + 1 || oks == 0 || dislikes == 0 {
        return Err(EvalError::Ineligible {
            likes,
            oks,
            dislikes,
        });
    }
    let like: Vec<&ItemId> = triage.like.iter().collect();
    let picked: BTreeSet<ItemId> = index::sample(rng, like.len(), OBSERVED_LIKES)
        .into_iter()
        .map(|k| like[k].clone())
        .collect();
    let held_out_liked = triage.like.difference(&picked).cloned().collect();
    Ok(EvalSplit {
        observed: TriageLists {
            like: picked,
            ok: triage.ok,
            dislike: triage.dislike,
        },
        held_out_liked,
        rated_count: ratings.len(),
    })
}

pub fn is_eligible(ratings: &Ratings) -> bool {
    let t = triage_from_ratings(ratings);
    t.like.len() > OBSERVED_LIKES && !t.ok.is_empty() && !t.dislike.is_empty()
}

/// One sixth of the rated items, at least one.
pub fn recommendation_length(rated_count: usize) -> usize {
    (rated_count / 6).max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    /// `None` when the liked set is empty.
    pub recall: Option<f64>,
    pub list_length: usize,
}

pub fn precision_recall(
    recommended: &[ItemId],
    liked: &BTreeSet<ItemId>,
) -> Result<Metrics, EvalError> {
    if recommended.is_empty() {
        return Err(EvalError::EmptyRecommendation);
    }
    let distinct: BTreeSet<&ItemId> = recommended.iter().collect();
    let hits = distinct.iter().filter(|i| liked.contains(**i)).count() as f64;
    Ok(Metrics {
        precision: hits / recommended.len() as f64,
        recall: (!liked.is_empty()).then(|| hits / liked.len() as f64),
        list_length: recommended.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub extensions_axis: Vec<usize>,
    pub iterations_axis: Vec<u64>,
    pub runs_per_cell: usize,
    pub test_user_count: usize,
    pub seed: u64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
}

fn default_top_k() -> usize {
    crate::casebase::DEFAULT_TOP_K
}

impl Default for ExperimentGrid {
    fn default() -> Self {
        ExperimentGrid {
            extensions_axis: vec![10, 30, 50],
            iterations_axis: vec![50, 100, 150],
            runs_per_cell: 100,
            test_user_count: 10,
            seed: 0,
            top_k: default_top_k(),
        }
    }
}

impl ExperimentGrid {
    pub fn single(
        extensions: usize,
        iterations: u64,
        runs: usize,
        test_users: usize,
        seed: u64,
    ) -> Self {
        ExperimentGrid {
            extensions_axis: vec![extensions],
            iterations_axis: vec![iterations],
            runs_per_cell: runs,
            test_user_count: test_users,
            seed,
            top_k: default_top_k(),
        }
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        if self.extensions_axis.is_empty() || self.extensions_axis.contains(&0) {
            return Err(EvalError::InvalidGrid("extension counts"));
        }
        if self.iterations_axis.is_empty() {
            return Err(EvalError::InvalidGrid("iteration axis length"));
        }
        if self.runs_per_cell == 0 {
            return Err(EvalError::InvalidGrid("runs per cell"));
        }
        if self.test_user_count == 0 {
            return Err(EvalError::InvalidGrid("test user count"));
        }
        if self.top_k == 0 {
            return Err(EvalError::InvalidGrid("top_k"));
        }
        Ok(())
    }

    fn cells(&self) -> Vec<(usize, u64)> {
        self.extensions_axis
            .iter()
            .flat_map(|&e| self.iterations_axis.iter().map(move |&i| (e, i)))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Diva,
    GroupLens,
    Random,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Diva, Method::GroupLens, Method::Random];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Diva => "diva",
            Method::GroupLens => "grouplens",
            Method::Random => "random",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub extensions: usize,
    pub iterations: u64,
    pub run: usize,
    pub user: UserId,
    pub precision: f64,
    pub recall: Option<f64>,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridResult {
    pub grid: ExperimentGrid,
    pub test_users: Vec<UserId>,
    pub rows: Vec<ResultRow>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMean {
    pub precision: f64,
    /// Mean over rows with a defined recall.
    pub recall: Option<f64>,
    pub count: usize,
}

impl GridResult {
    pub fn mean(&self, method: Method, extensions: usize, iterations: u64) -> Option<CellMean> {
        mean_of(self.rows.iter().filter(|r| {
            r.method == method && r.extensions == extensions && r.iterations == iterations
        }))
    }

    pub fn method_mean(&self, method: Method) -> Option<CellMean> {
        mean_of(self.rows.iter().filter(|r| r.method == method))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record([
            "extensions",
            "iterations",
            "run",
            "user",
            "precision",
            "recall",
            "method",
        ])?;
        for r in &self.rows {
            wtr.write_record([
                r.extensions.to_string(),
                r.iterations.to_string(),
                r.run.to_string(),
                r.user.to_string(),
                format!("{:.6}", r.precision),
                r.recall.map_or_else(String::new, |x| format!("{x:.6}")),
                r.method.to_string(),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }

    /// Per-cell means laid out with one column group per extension count.
    pub fn summary(&self) -> String {
        let pct =
            |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{:.0}%", v * 100.0));
        let mut out = String::new();
        let header: Vec<String> = self
            .grid
            .extensions_axis
            .iter()
            .map(|e| e.to_string())
            .collect();
        let iters: Vec<String> = self
            .grid
            .iterations_axis
            .iter()
            .map(|i| i.to_string())
            .collect();
        let _ = writeln!(
            out,
            "{:<28}\t{}",
            "Number of linear extensions",
            header.join("\t")
        );
        let _ = writeln!(
            out,
            "{:<28}\t{}",
            "Number of iterations",
            vec![iters.join(","); header.len()].join("\t")
        );
        for method in Method::ALL {
            for (label, pick) in [("Precision", true), ("Recall", false)] {
                let groups: Vec<String> = self
                    .grid
                    .extensions_axis
                    .iter()
                    .map(|&e| {
                        self.grid
                            .iterations_axis
                            .iter()
                            .map(|&i| {
                                let m = self.mean(method, e, i);
                                pct(if pick {
                                    m.map(|m| m.precision)
                                } else {
                                    m.and_then(|m| m.recall)
                                })
                            })
                            .collect::<Vec<_>>()
                            .join(",")
                    })
                    .collect();
                let _ = writeln!(
                    out,
                    "{:<28}\t{}",
                    format!("{label} ({method})"),
                    groups.join("\t")
                );
            }
        }
        out
    }
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a ResultRow>) -> Option<CellMean> {
    let (mut p, mut r, mut n, mut nr) = (0.0, 0.0, 0usize, 0usize);
    for row in rows {
        p += row.precision;
        n += 1;
        if let Some(x) = row.recall {
            r += x;
            nr += 1;
        }
    }
    (n > 0).then(|| CellMean {
        precision: p / n as f64,
        recall: (nr > 0).then(|| r / nr as f64),
        count: n,
    })
}

/// Inputs beyond the case base itself.
#[derive(Debug, Clone, Default)]
pub struct EvalContext<'a> {
    /// Items that may be recommended. The case base's items and the test
    /// users' ratings are always included.
    pub catalog: BTreeSet<ItemId>,
    /// Per-user liked items from a noiseless source, when known. Otherwise
    /// a user's held-out Like items count as liked.
    pub ground_truth: Option<&'a BTreeMap<UserId, BTreeSet<ItemId>>>,
    pub grouplens: GroupLensConfig,
}

/// Test users drawn from the eligible users of `cb`, in id order.
pub fn choose_test_users(cb: &CaseBase, count: usize, seed: u64) -> Result<Vec<UserId>, EvalError> {
    let eligible: Vec<&UserId> = cb
        .iter()
        .filter(|(_, c)| is_eligible(&c.ratings))
        .map(|(u, _)| u)
        .collect();
    if eligible.len() < count {
        return Err(EvalError::NotEnoughTestUsers {
            wanted: count,
            available: eligible.len(),
        });
    }
    let mut picked: Vec<UserId> =
        index::sample(&mut rng::stream(seed, &[0]), eligible.len(), count)
            .into_iter()
            .map(|k| eligible[k].clone())
            .collect();
    picked.sort();
    Ok(picked)
}

struct Trial<'a> {
    run: usize,
    user_index: usize,
    user: &'a UserId,
    split: EvalSplit,
    pool: BTreeSet<ItemId>,
    liked: BTreeSet<ItemId>,
    n: usize,
}

fn prepare_trial<'a>(
    run: usize,
    user_index: usize,
    user: &'a UserId,
    ratings: &Ratings,
    universe: &BTreeSet<ItemId>,
    ctx: &EvalContext<'_>,
    seed: u64,
) -> Result<Trial<'a>, EvalError> {
    let split = split_user(
        ratings,
        &mut rng::stream(seed, &[1, run as u64, user_index as u64]),
    )?;
    let observed: BTreeSet<&ItemId> = split.observed.items().collect();
    let pool: BTreeSet<ItemId> = universe
        .iter()
        .filter(|i| !observed.contains(i))
        .cloned()
        .collect();
    let liked = match ctx.ground_truth.and_then(|g| g.get(user)) {
        Some(truth) => truth
            .iter()
            .filter(|i| !observed.contains(i))
            .cloned()
            .collect(),
        None => split.held_out_liked.clone(),
    };
    let n = recommendation_length(split.rated_count);
    Ok(Trial {
        run,
        user_index,
        user,
        split,
        pool,
        liked,
        n,
    })
}

fn observed_ratings(ratings: &Ratings, split: &EvalSplit) -> Ratings {
    split
        .observed
        .items()
        .map(|i| (i.clone(), ratings[i]))
        .collect()
}

fn row(t: &Trial<'_>, cell: (usize, u64), m: Metrics, method: Method) -> ResultRow {
    ResultRow {
        extensions: cell.0,
        iterations: cell.1,
        run: t.run,
        user: t.user.clone(),
        precision: m.precision,
        recall: m.recall,
        method,
    }
}

/// Runs every grid cell for every run and test user.
///
/// Test users are removed from the scanned case base. Splits depend on
/// (seed, run, user) only, so every cell sees the same splits; the
/// baseline and random lists therefore repeat across cells.
pub fn run_grid(
    cb: &CaseBase,
    grid: &ExperimentGrid,
    ctx: &EvalContext<'_>,
) -> Result<GridResult, EvalError> {
    grid.validate()?;
    let test_users = choose_test_users(cb, grid.test_user_count, grid.seed)?;
    let scanned = cb.without(&test_users);
    let mut universe = ctx.catalog.clone();
    universe.extend(cb.items());

    let mut trials = Vec::with_capacity(grid.runs_per_cell * test_users.len());
    for run in 0..grid.runs_per_cell {
        for (k, user) in test_users.iter().enumerate() {
            let ratings = cb.ratings(user).expect("test users come from cb");
            trials.push(prepare_trial(
                run, k, user, ratings, &universe, ctx, grid.seed,
            )?);
        }
    }

    let cells = grid.cells();
    let mut rows = Vec::with_capacity(trials.len() * cells.len() * Method::ALL.len());
    for &cell in &cells {
        for t in &trials {
            let active = build_ldo(&t.split.observed)?;
            let sampler = SamplerConfig::new(
                cell.0,
                cell.1,
                rng::derive_seed(
                    grid.seed,
                    &[2, cell.0 as u64, cell.1, t.run as u64, t.user_index as u64],
                ),
            );
            let cfg = RankingConfig {
                sampler,
                top_k: grid.top_k,
            };
            let ranked =
                preference_ranking(&active, &scanned, &cfg, &universe).map_err(|source| {
                    EvalError::Ranking {
                        user: t.user.clone(),
                        source,
                    }
                })?;
            let list: Vec<ItemId> = ranked
                .order
                .items()
                .iter()
                .filter(|i| t.pool.contains(*i))
                .take(t.n)
                .cloned()
                .collect();
            rows.push(row(
                t,
                cell,
                precision_recall(&list, &t.liked)?,
                Method::Diva,
            ));
        }
    }

    let baselines: Vec<(Metrics, Metrics)> = trials
        .par_iter()
        .map(|t| {
            let ratings = cb.ratings(t.user).expect("test users come from cb");
            let gl = baseline_recommend(
                &observed_ratings(ratings, &t.split),
                &scanned,
                &t.pool,
                t.n,
                &ctx.grouplens,
            );
            let pool: Vec<&ItemId> = t.pool.iter().collect();
            let mut r = rng::stream(grid.seed, &[3, t.run as u64, t.user_index as u64]);
            let random: Vec<ItemId> = index::sample(&mut r, pool.len(), t.n.min(pool.len()))
                .into_iter()
                .map(|k| pool[k].clone())
                .collect();
            Ok((
                precision_recall(&gl, &t.liked)?,
                precision_recall(&random, &t.liked)?,
            ))
        })
        .collect::<Result<_, EvalError>>()?;
    for &cell in &cells {
        for (t, (gl, random)) in trials.iter().zip(&baselines) {
            rows.push(row(t, cell, *gl, Method::GroupLens));
            rows.push(row(t, cell, *random, Method::Random));
        }
    }

    rows.sort_by(|a, b| {
        (a.extensions, a.iterations, a.run, &a.user, a.method).cmp(&(
            b.extensions,
            b.iterations,
            b.run,
            &b.user,
            b.method,
        ))
    });
    Ok(GridResult {
        grid: grid.clone(),
        test_users,
        rows,
    })
}

/// GroupLens and random lists only, one row per run and user.
pub fn run_baseline(
    cb: &CaseBase,
    runs: usize,
    test_users: usize,
    seed: u64,
    ctx: &EvalContext<'_>,
) -> Result<GridResult, EvalError> {
    let grid = ExperimentGrid {
        extensions_axis: vec![0],
        iterations_axis: vec![0],
        ..ExperimentGrid::single(1, 0, runs, test_users, seed)
    };
    if runs == 0 || test_users == 0 {
        return Err(EvalError::InvalidGrid("runs and test users"));
    }
    let chosen = choose_test_users(cb, test_users, seed)?;
    let scanned = cb.without(&chosen);
    let mut universe = ctx.catalog.clone();
    universe.extend(cb.items());
    let mut rows = Vec::new();
    for run in 0..runs {
        for (k, user) in chosen.iter().enumerate() {
            let ratings = cb.ratings(user).expect("test users come from cb");
            let t = prepare_trial(run, k, user, ratings, &universe, ctx, seed)?;
            let gl = baseline_recommend(
                &observed_ratings(ratings, &t.split),
                &scanned,
                &t.pool,
                t.n,
                &ctx.grouplens,
            );
            rows.push(row(
                &t,
                (0, 0),
                precision_recall(&gl, &t.liked)?,
                Method::GroupLens,
            ));
            let pool: Vec<&ItemId> = t.pool.iter().collect();
            let mut r = rng::stream(seed, &[3, run as u64, k as u64]);
            let random: Vec<ItemId> = index::sample(&mut r, pool.len(), t.n.min(pool.len()))
                .into_iter()
                .map(|k| pool[k].clone())
                .collect();
            rows.push(row(
                &t,
                (0, 0),
                precision_recall(&random, &t.liked)?,
                Method::Random,
            ));
        }
    }
    Ok(GridResult {
        grid,
        test_users: chosen,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::test_support::id;

    fn user_ratings(like: usize, ok: usize, dislike: usize) -> Ratings {
        let mut r = Ratings::new();
        let mut k = 0;
        for (count, step) in [(like, 5u8), (ok, 3), (dislike, 0)] {
            for _ in 0..count {
                r.insert(
                    id(&format!("m{k:03}")),
                    RatingLevel::from_step(step).unwrap(),
                );
                k += 1;
            }
        }
        r
    }

    #[test]
    fn thresholds() {
        let levels: Vec<TriageLevel> = (0..=5)
            .map(|s| triage_level(RatingLevel::from_step(s).unwrap()))
            .collect();
        use TriageLevel::*;
        assert_eq!(levels, [Dislike, Dislike, Ok, Ok, Like, Like]);
    }

    #[test]
    fn split_sizes() {
        let r = user_ratings(13, 7, 9);
        let s = split_user(&r, &mut rng::stream(1, &[])).unwrap();
        assert_eq!(s.observed.len(), 19);
        assert_eq!(s.held_out_liked.len(), 10);
        assert_eq!(s.observed.like.len(), 3);
        assert_eq!(s.rated_count, 29);
        let s4 = split_user(&user_ratings(4, 1, 1), &mut rng::stream(1, &[])).unwrap();
        assert_eq!(s4.held_out_liked.len(), 1);
        assert_eq!(split_user(&r, &mut rng::stream(1, &[])).unwrap(), s);
    }

    #[test]
    fn split_rejects_thin_users() {
        assert_eq!(
            split_user(&user_ratings(3, 2, 2), &mut rng::stream(0, &[])),
            Err(EvalError::Ineligible {
                likes: 3,
                oks: 2,
                dislikes: 2
            })
        );
        assert!(split_user(&user_ratings(5, 0, 2), &mut rng::stream(0, &[])).is_err());
        assert!(split_user(&user_ratings(5, 2, 0), &mut rng::stream(0, &[])).is_err());
    }

    #[test]
    fn list_lengths() {
        assert_eq!(recommendation_length(29), 4);
        assert_eq!(recommendation_length(6), 1);
        assert_eq!(recommendation_length(70), 11);
        assert_eq!(recommendation_length(2), 1);
    }

    #[test]
    fn precision_and_recall() {
        let rec: Vec<ItemId> = (0..6).map(|k| id(&format!("m{k}"))).collect();
        let liked: BTreeSet<ItemId> = (1..11).map(|k| id(&format!("m{k}"))).collect();
        let m = precision_recall(&rec, &liked).unwrap();
        assert!((m.precision - 5.0 / 6.0).abs() < 1e-12);
        assert_eq!(m.recall, Some(0.5));
        assert_eq!(precision_recall(&rec[1..], &liked).unwrap().precision, 1.0);
        assert_eq!(
            precision_recall(&rec, &BTreeSet::new()).unwrap().recall,
            None
        );
        assert_eq!(
            precision_recall(&[], &liked),
            Err(EvalError::EmptyRecommendation)
        );
    }

    #[test]
    fn grid_validation() {
        assert!(ExperimentGrid::default().validate().is_ok());
        assert!(ExperimentGrid::single(0, 10, 1, 1, 0).validate().is_err());
        assert!(ExperimentGrid::single(1, 10, 0, 1, 0).validate().is_err());
        assert!(ExperimentGrid::single(1, 10, 1, 0, 0).validate().is_err());
    }

    #[test]
    fn too_few_test_users() {
        let mut cb = CaseBase::new();
        cb.insert(UserId::new("u1"), user_ratings(5, 2, 2));
        cb.insert(UserId::new("u2"), user_ratings(2, 2, 2));
        assert_eq!(
            run_grid(
                &cb,
                &ExperimentGrid::single(2, 5, 1, 2, 0),
                &EvalContext::default()
            ),
            Err(EvalError::NotEnoughTestUsers {
                wanted: 2,
                available: 1
            })
        );
    }
}
