//! Synthetic case bases with latent tastes.
//!
//! Users and movies get unit-Gaussian vectors; a user's score for a movie is
//! their dot product plus Gaussian noise. Each user's rated scores are
//! rank-quantized onto the six levels with a fixed level profile, and the
//! top share of the catalog by noiseless score is recorded as what the
//! user actually likes.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Exp, Normal, StandardNormal};

use crate::casebase::{CaseBase, Catalog, MovieRecord, RatingLevel, Ratings, UserId};
use crate::preference::ItemId;
use crate::rng;

/// Share of each level from 0.0 up to 1.0.
pub const LEVEL_PROFILE: [f64; 6] = [0.10, 0.10, 0.20, 0.20, 0.25, 0.15];

/// Noise standard deviation used for the benchmark runs. The noiseless
/// score has standard deviation close to `sqrt(taste_dims)`.
pub const MODERATE_NOISE: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub population: usize,
    pub catalog_size: usize,
    pub taste_dims: usize,
    pub noise: f64,
    pub min_rated: usize,
    /// Mean number of rated items per user, before capping at the catalog size.
    pub mean_rated: f64,
    /// Fraction of the catalog a user truly likes.
    pub liked_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            population: 200,
            catalog_size: 300,
            taste_dims: 3,
            noise: MODERATE_NOISE,
            min_rated: 20,
            mean_rated: 70.0,
            liked_fraction: 0.4,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Synthetic {
    pub catalog: Catalog,
    pub casebase: CaseBase,
    pub ground_truth: BTreeMap<UserId, BTreeSet<ItemId>>,
}

/// Levels for `scores` by rank: the lowest 10% get 0.0, the next 10% 0.2,
/// and so on per [`LEVEL_PROFILE`]. Ties in score keep input order.
pub fn quantize_scores(scores: &[f64]) -> Vec<RatingLevel> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut cumulative = [0.0; 6];
    let mut acc = 0.0;
    for (c, share) in cumulative.iter_mut().zip(LEVEL_PROFILE) {
        acc += share;
        *c = acc;
    }
    let mut levels = vec![RatingLevel::from_step(0).expect("valid"); n];
    for (rank, &k) in order.iter().enumerate() {
        let q = (rank as f64 + 0.5) / n as f64;
        let step = cumulative.iter().position(|&c| q < c).unwrap_or(5);
        levels[k] = RatingLevel::from_step(step as u8).expect("valid");
    }
    levels
}

fn gaussian_vec<R: Rng>(rng: &mut R, dims: usize) -> Vec<f64> {
    (0..dims).map(|_| StandardNormal.sample(rng)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

const GENRES: [&str; 8] = [
    "action", "comedy", "crime", "drama", "horror", "romance", "sci-fi", "western",
];
const MPAA: [&str; 4] = ["G", "PG", "PG-13", "R"];
const COUNTRIES: [&str; 5] = ["USA", "UK", "France", "Italy", "Japan"];

fn movie<R: Rng>(rng: &mut R, k: usize, features: &[f64]) -> MovieRecord {
    // genres follow the strongest latent features so attributes carry some taste signal
    let mut dims: Vec<usize> = (0..features.len()).collect();
    dims.sort_by(|&a, &b| features[b].abs().total_cmp(&features[a].abs()));
    let genres = dims
        .iter()
        .take(2)
        .map(|&d| GENRES[(2 * d + usize::from(features[d] < 0.0)) % GENRES.len()].to_string())
        .collect();
    MovieRecord {
        id: ItemId::new(format!("m{:04}", k + 1)).expect("non-empty"),
        title: format!("Movie {:04}", k + 1),
        director: format!("Director {}", rng.random_range(1..=60)),
        actors: (0..3)
            .map(|_| format!("Actor {}", rng.random_range(1..=150)))
            .collect(),
        genres,
        star_rating: f64::from(rng.random_range(2..=10u8)) / 2.0,
        mpaa: MPAA[rng.random_range(0..MPAA.len())].to_string(),
        country: COUNTRIES[rng.random_range(0..COUNTRIES.len())].to_string(),
        runtime_minutes: rng.random_range(75..=180),
        year: rng.random_range(1930..=1998),
    }
}

pub fn synth_casebase(cfg: &SynthConfig) -> Synthetic {
    let dims = cfg.taste_dims.max(1);
    let mut movie_rng = rng::stream(cfg.seed, &[10]);
    let features: Vec<Vec<f64>> = (0..cfg.catalog_size)
        .map(|_| gaussian_vec(&mut movie_rng, dims))
        .collect();
    let movies: Vec<MovieRecord> = features
        .iter()
        .enumerate()
        .map(|(k, f)| movie(&mut movie_rng, k, f))
        .collect();
    let ids: Vec<ItemId> = movies.iter().map(|m| m.id.clone()).collect();
    let catalog = Catalog::new(movies).expect("generated movies are valid");

    let extra =
        Exp::new(1.0 / (cfg.mean_rated - cfg.min_rated as f64).max(1.0)).expect("positive rate");
    let noise = Normal::new(0.0, cfg.noise.max(0.0)).expect("finite noise");
    let liked_count =
        ((cfg.catalog_size as f64 * cfg.liked_fraction).round() as usize).min(cfg.catalog_size);
    let mut casebase = CaseBase::new();
    let mut ground_truth = BTreeMap::new();
    for u in 0..cfg.population {
        let mut r = rng::stream(cfg.seed, &[11, u as u64]);
        let user = UserId::new(format!("u{:04}", u + 1));
        let taste = gaussian_vec(&mut r, dims);
        let clean: Vec<f64> = features.iter().map(|f| dot(&taste, f)).collect();

        let mut by_score: Vec<usize> = (0..cfg.catalog_size).collect();
        by_score.sort_by(|&a, &b| clean[b].total_cmp(&clean[a]).then(a.cmp(&b)));
        ground_truth.insert(
            user.clone(),
            by_score[..liked_count]
                .iter()
                .map(|&k| ids[k].clone())
                .collect(),
        );

        let wanted = cfg.min_rated + extra.sample(&mut r).floor() as usize;
        let count = wanted.min(cfg.catalog_size);
        let mut rated = index::sample(&mut r, cfg.catalog_size, count).into_vec();
        rated.sort_unstable();
        let noisy: Vec<f64> = rated
            .iter()
            .map(|&k| clean[k] + noise.sample(&mut r))
            .collect();
        let ratings: Ratings = rated
            .iter()
            .map(|&k| ids[k].clone())
            .zip(quantize_scores(&noisy))
            .collect();
        casebase.insert(user, ratings);
    }
    Synthetic {
        catalog,
        casebase,
        ground_truth,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preference::{exact_partial_distance, total_order_distance, TotalOrder};

    #[test]
    fn profile_sums_to_one() {
        assert!((LEVEL_PROFILE.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn quantization_follows_profile() {
        let scores: Vec<f64> = (0..100).map(f64::from).collect();
        let levels = quantize_scores(&scores);
        let mut counts = [0usize; 6];
        for l in &levels {
            counts[l.step() as usize] += 1;
        }
        assert_eq!(counts, [10, 10, 20, 20, 25, 15]);
        assert!(levels.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = SynthConfig {
            population: 20,
            catalog_size: 60,
            seed: 7,
            ..Default::default()
        };
        let a = synth_casebase(&cfg);
        let b = synth_casebase(&cfg);
        assert_eq!(a.casebase, b.casebase);
        assert_eq!(a.catalog, b.catalog);
        assert_eq!(a.ground_truth, b.ground_truth);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        a.casebase.write_jsonl(&mut buf_a).unwrap();
        b.casebase.write_jsonl(&mut buf_b).unwrap();
        assert_eq!(buf_a, buf_b);
    }

    #[test]
    fn sizes_and_bounds() {
        let cfg = SynthConfig {
            population: 50,
            catalog_size: 80,
            seed: 3,
            ..Default::default()
        };
        let s = synth_casebase(&cfg);
        assert_eq!(s.casebase.len(), 50);
        assert_eq!(s.catalog.len(), 80);
        for (u, c) in s.casebase.iter() {
            assert!(c.ratings.len() >= 20 && c.ratings.len() <= 80);
            assert!(c.ratings.keys().all(|i| s.catalog.contains(i)));
            assert_eq!(s.ground_truth[u].len(), 32);
        }
    }

    #[test]
    fn mean_rated_is_near_target() {
        let cfg = SynthConfig {
            population: 400,
            catalog_size: 1000,
            seed: 1,
            ..Default::default()
        };
        let s = synth_casebase(&cfg);
        let mean = s
            .casebase
            .iter()
            .map(|(_, c)| c.ratings.len())
            .sum::<usize>() as f64
            / 400.0;
        assert!((mean - 70.0).abs() < 8.0, "mean rated {mean}");
    }

    fn levels_for(taste: &[f64], features: &[Vec<f64>]) -> Vec<RatingLevel> {
        let scores: Vec<f64> = features.iter().map(|f| dot(taste, f)).collect();
        quantize_scores(&scores)
    }

    fn chain_of(levels: &[RatingLevel]) -> TotalOrder {
        // one representative per level, best first
        let mut reps: BTreeMap<RatingLevel, usize> = BTreeMap::new();
        for (k, l) in levels.iter().enumerate() {
            reps.entry(*l).or_insert(k);
        }
        TotalOrder::new(
            reps.values()
                .rev()
                .map(|k| ItemId::new(format!("i{k}")).unwrap())
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_tastes_give_identical_orders() {
        let mut r = rng::stream(5, &[]);
        let features: Vec<Vec<f64>> = (0..30).map(|_| gaussian_vec(&mut r, 3)).collect();
        let taste = gaussian_vec(&mut r, 3);
        let a = levels_for(&taste, &features);
        let b = levels_for(&taste, &features);
        assert_eq!(a, b);
        let to_ratings = |ls: &[RatingLevel]| -> Ratings {
            ls.iter()
                .enumerate()
                .map(|(k, l)| (ItemId::new(format!("i{k}")).unwrap(), *l))
                .collect()
        };
        let pa = crate::casebase::ratings_to_partial(&to_ratings(&a));
        let pb = crate::casebase::ratings_to_partial(&to_ratings(&b));
        assert_eq!(pa, pb);
        let chain = chain_of(&a);
        assert_eq!(total_order_distance(&chain, &chain).unwrap(), 0.0);
        let keep: BTreeSet<ItemId> = chain.items().iter().cloned().collect();
        assert_eq!(
            exact_partial_distance(&pa.restrict(&keep), &pb.restrict(&keep), &keep).unwrap(),
            0.0
        );
    }

    #[test]
    fn opposite_tastes_reverse_the_chains() {
        let mut r = rng::stream(6, &[]);
        let features: Vec<Vec<f64>> = (0..30).map(|_| gaussian_vec(&mut r, 3)).collect();
        let taste = gaussian_vec(&mut r, 3);
        let opposite: Vec<f64> = taste.iter().map(|x| -x).collect();
        let a = levels_for(&taste, &features);
        let b = levels_for(&opposite, &features);
        // items at distinct levels for both users, one per level of a
        let chain_a = chain_of(&a);
        let b_scores: Vec<f64> = features.iter().map(|f| dot(&opposite, f)).collect();
        let mut on_b = chain_a.items().to_vec();
        on_b.sort_by(|x, y| {
            let kx: usize = x.as_str()[1..].parse().unwrap();
            let ky: usize = y.as_str()[1..].parse().unwrap();
            b_scores[ky].total_cmp(&b_scores[kx])
        });
        let chain_b = TotalOrder::new(on_b).unwrap();
        assert_eq!(total_order_distance(&chain_a, &chain_b).unwrap(), 1.0);
        assert_ne!(a, b);
    }
}
