//! Linear-extension sampling with the lazy adjacent-transposition chain.
//!
//! Each step holds with probability 1/2; otherwise it draws an adjacent
//! position and swaps the two items there when they are incomparable. The
//! chain is symmetric and aperiodic over the set of linear extensions, so
//! it converges to the uniform distribution.

use fixedbitset::FixedBitSet;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PartialPreference, Poset, PreferenceError, TotalOrder};

/// Default domain-size cap for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: usize = 10;

/// How the chain picks the adjacent pair to try swapping.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PositionWeighting {
    /// Every adjacent position equally likely.
    #[default]
    Uniform,
    /// Position `i` (1-based, swapping `i` and `i + 1`) weighted by `i * (n - i)`.
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub num_extensions: usize,
    /// Chain steps per sample, each started from the initial extension.
    pub num_iterations: u64,
    pub seed: u64,
    #[serde(default)]
    pub position_weighting: PositionWeighting,
    /// Enumerate every extension instead of sampling (small instances only).
    #[serde(default)]
    pub exhaustive: bool,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            num_extensions: 30,
            num_iterations: 100,
            seed: 0,
            position_weighting: PositionWeighting::Uniform,
            exhaustive: false,
        }
    }
}

impl SamplerConfig {
    pub fn new(num_extensions: usize, num_iterations: u64, seed: u64) -> Self {
        SamplerConfig {
            num_extensions,
            num_iterations,
            seed,
            ..Default::default()
        }
    }

    pub fn exhaustive() -> Self {
        SamplerConfig {
            exhaustive: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), PreferenceError> {
        if self.num_extensions == 0 && !self.exhaustive {
            return Err(PreferenceError::InvalidConfig(
                "num_extensions must be at least 1",
            ));
        }
        Ok(())
    }
}

pub(crate) enum PositionPicker {
    Fixed,
    Uniform(usize),
    Weighted(WeightedIndex<f64>),
}

impl PositionPicker {
    pub(crate) fn new(n: usize, weighting: PositionWeighting) -> Self {
        if n < 2 {
            return PositionPicker::Fixed;
        }
        match weighting {
            PositionWeighting::Uniform => PositionPicker::Uniform(n - 1),
            PositionWeighting::Quadratic => {
                let weights = (1..n).map(|i| (i * (n - i)) as f64);
                PositionPicker::Weighted(WeightedIndex::new(weights).expect("positive weights"))
            }
        }
    }

    #[inline]
    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<usize> {
        match self {
            PositionPicker::Fixed => None,
            PositionPicker::Uniform(slots) => Some(rng.random_range(0..*slots)),
            PositionPicker::Weighted(w) => Some(w.sample(rng)),
        }
    }
}

/// Runs `iterations` steps of the chain in place on a linear extension.
pub(crate) fn run_chain<R: Rng + ?Sized>(
    poset: &Poset,
    order: &mut [usize],
    iterations: u64,
    picker: &PositionPicker,
    rng: &mut R,
) {
    for _ in 0..iterations {
        if rng.random_bool(0.5) {
            continue;
        }
        let Some(i) = picker.pick(rng) else { continue };
        // adjacent items in an extension are either incomparable or a > b
        if !poset.prefers(order[i], order[i + 1]) {
            order.swap(i, i + 1);
        }
    }
}

/// Extensions used to represent `poset`: the full enumeration in exhaustive
/// mode, otherwise `num_extensions` independent chain runs.
pub(crate) fn extensions_of<R: Rng + ?Sized>(
    poset: &Poset,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, PreferenceError> {
    cfg.validate()?;
    if cfg.exhaustive {
        return enumerate_poset(poset, DEFAULT_ENUMERATION_CAP);
    }
    let start = poset.initial_extension();
    let picker = PositionPicker::new(poset.len(), cfg.position_weighting);
    Ok((0..cfg.num_extensions)
        .map(|_| {
            let mut order = start.clone();
            run_chain(poset, &mut order, cfg.num_iterations, &picker, rng);
            order
        })
        .collect())
}

/// Deterministic topological order of `p`, ties broken by ascending id.
pub fn initial_extension(p: &PartialPreference) -> TotalOrder {
    let poset = p.poset();
    TotalOrder::from_indices(poset, &poset.initial_extension())
}

/// Runs the chain for `iterations` steps starting from `start`.
pub fn sample_extension<R: Rng + ?Sized>(
    p: &PartialPreference,
    start: &TotalOrder,
    iterations: u64,
    weighting: PositionWeighting,
    rng: &mut R,
) -> Result<TotalOrder, PreferenceError> {
    start.check_extension_of(p)?;
    let poset = p.poset();
    let mut order: Vec<usize> = start
        .items()
        .iter()
        .map(|i| poset.index_of(i).expect("checked against domain"))
        .collect();
    let picker = PositionPicker::new(poset.len(), weighting);
    run_chain(poset, &mut order, iterations, &picker, rng);
    Ok(TotalOrder::from_indices(poset, &order))
}

/// Every linear extension of `p`, in lexicographic order of item ids.
/// Refuses domains larger than [`DEFAULT_ENUMERATION_CAP`].
pub fn enumerate_extensions(p: &PartialPreference) -> Result<Vec<TotalOrder>, PreferenceError> {
    enumerate_extensions_capped(p, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_extensions_capped(
    p: &PartialPreference,
    cap: usize,
) -> Result<Vec<TotalOrder>, PreferenceError> {
    let poset = p.poset();
    Ok(enumerate_poset(poset, cap)?
        .iter()
        .map(|o| TotalOrder::from_indices(poset, o))
        .collect())
}

pub(crate) fn enumerate_poset(
    poset: &Poset,
    cap: usize,
) -> Result<Vec<Vec<usize>>, PreferenceError> {
    let n = poset.len();
    if n > cap {
        return Err(PreferenceError::EnumerationCap { size: n, cap });
    }
    let above = poset.above_sets();
    let mut out = Vec::new();
    let mut placed = FixedBitSet::with_capacity(n);
    let mut prefix = Vec::with_capacity(n);
    extend_all(&above, &mut placed, &mut prefix, &mut out);
    Ok(out)
}

fn extend_all(
    above: &[FixedBitSet],
    placed: &mut FixedBitSet,
    prefix: &mut Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    let n = above.len();
    if prefix.len() == n {
        out.push(prefix.clone());
        return;
    }
    for v in 0..n {
        if !placed.contains(v) && above[v].is_subset(placed) {
            placed.insert(v);
            prefix.push(v);
            extend_all(above, placed, prefix, out);
            prefix.pop();
            placed.set(v, false);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;
    use super::*;
    use crate::rng::stream;
    use std::collections::HashMap;

    #[test]
    fn initial_extension_examples() {
        let ldo = pref(&[], &[("x", "y"), ("y", "z"), ("x", "z")]);
        assert_eq!(initial_extension(&ldo), order(&["x", "y", "z"]));
        let anti = pref(&["b", "a"], &[]);
        assert_eq!(initial_extension(&anti), order(&["a", "b"]));
        let p = pref(&["c"], &[("a", "b")]);
        let first = initial_extension(&p);
        assert_eq!(first, initial_extension(&p));
        assert!(first.is_extension_of(&p));
    }

    #[test]
    fn chain_fixed_point_on_total_order() {
        let chain = pref(&[], &[("a", "b"), ("b", "c")]);
        let start = initial_extension(&chain);
        let mut rng = stream(1, &[]);
        for iters in [0, 1, 10, 1000] {
            for w in [PositionWeighting::Uniform, PositionWeighting::Quadratic] {
                let s = sample_extension(&chain, &start, iters, w, &mut rng).unwrap();
                assert_eq!(s, order(&["a", "b", "c"]));
            }
        }
    }

    #[test]
    fn zero_iterations_returns_start() {
        let anti = pref(&["a", "b", "c", "d"], &[]);
        let start = order(&["c", "a", "d", "b"]);
        let mut rng = stream(2, &[]);
        assert_eq!(
            sample_extension(&anti, &start, 0, PositionWeighting::Uniform, &mut rng).unwrap(),
            start
        );
    }

    #[test]
    fn start_must_be_an_extension() {
        let p = pref(&[], &[("a", "b")]);
        let mut rng = stream(3, &[]);
        let bad = order(&["b", "a"]);
        assert_eq!(
            sample_extension(&p, &bad, 5, PositionWeighting::Uniform, &mut rng),
            Err(PreferenceError::NotAnExtension(id("a"), id("b")))
        );
        let short = order(&["a"]);
        assert_eq!(
            sample_extension(&p, &short, 5, PositionWeighting::Uniform, &mut rng),
            Err(PreferenceError::DomainMismatch)
        );
    }

    fn frequencies(
        p: &PartialPreference,
        samples: usize,
        iters: u64,
        w: PositionWeighting,
    ) -> HashMap<TotalOrder, usize> {
        let start = initial_extension(p);
        let mut rng = stream(11, &[iters]);
        let mut counts = HashMap::new();
        for _ in 0..samples {
            let s = sample_extension(p, &start, iters, w, &mut rng).unwrap();
            assert!(s.is_extension_of(p));
            *counts.entry(s).or_default() += 1;
        }
        counts
    }

    #[test]
    fn antichain_of_two_is_balanced() {
        let anti = pref(&["a", "b"], &[]);
        for w in [PositionWeighting::Uniform, PositionWeighting::Quadratic] {
            let counts = frequencies(&anti, 10_000, 20, w);
            assert_eq!(counts.len(), 2);
            for c in counts.values() {
                let f = *c as f64 / 10_000.0;
                assert!((f - 0.5).abs() <= 0.02, "frequency {f}");
            }
        }
    }

    #[test]
    fn single_edge_on_three_is_uniform_over_three() {
        let p = pref(&["c"], &[("a", "b")]);
        let counts = frequencies(&p, 10_000, 60, PositionWeighting::Uniform);
        assert_eq!(counts.len(), 3);
        for c in counts.values() {
            let f = *c as f64 / 10_000.0;
            assert!((f - 1.0 / 3.0).abs() <= 0.02, "frequency {f}");
        }
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(
            enumerate_extensions(&pref(&[], &[("a", "b"), ("b", "c")]))
                .unwrap()
                .len(),
            1
        );
        assert_eq!(
            enumerate_extensions(&pref(&["a", "b", "c"], &[]))
                .unwrap()
                .len(),
            6
        );
        let exts = enumerate_extensions(&pref(&["c"], &[("a", "b")])).unwrap();
        assert_eq!(
            exts,
            vec![
                order(&["a", "b", "c"]),
                order(&["a", "c", "b"]),
                order(&["c", "a", "b"])
            ]
        );
    }

    #[test]
    fn enumeration_refuses_large_domains() {
        let names: Vec<String> = (0..11).map(|i| format!("i{i:02}")).collect();
        let p = PartialPreference::unconstrained(names.iter().map(|n| id(n)));
        assert_eq!(
            enumerate_extensions(&p).unwrap_err(),
            PreferenceError::EnumerationCap {
                size: 11,
                cap: DEFAULT_ENUMERATION_CAP
            }
        );
    }

    #[test]
    fn config_requires_an_extension() {
        assert!(SamplerConfig::new(0, 10, 0).validate().is_err());
        assert!(SamplerConfig::new(1, 0, 0).validate().is_ok());
    }
}
