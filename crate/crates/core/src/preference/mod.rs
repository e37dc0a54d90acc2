//! Partial-order preference structures.
//!
//! A [`PartialPreference`] stores the asserted "a preferred to b" edges over
//! a domain of items. Reachability is answered from a transitive closure
//! that is computed once per value and cached.

mod distance;
mod poset;
mod sampling;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub(crate) use distance::InversionCounter;
pub use distance::{exact_partial_distance, partial_distance, total_order_distance};
pub(crate) use poset::Poset;
pub(crate) use sampling::extensions_of;
pub use sampling::{
    enumerate_extensions, enumerate_extensions_capped, initial_extension, sample_extension,
    PositionWeighting, SamplerConfig, DEFAULT_ENUMERATION_CAP,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PreferenceError {
    #[error("item id must be non-empty")]
    EmptyItemId,
    #[error("item {0} appears in more than one triage list")]
    OverlappingTriage(ItemId),
    #[error("item {0} cannot be preferred to itself")]
    SelfEdge(ItemId),
    #[error("preferences contain a cycle: {}", join_cycle(.0))]
    Cycle(Vec<ItemId>),
    #[error("item {0} is not in the preference domain")]
    NotInDomain(ItemId),
    #[error("orders do not cover the same items")]
    DomainMismatch,
    #[error("item {0} appears twice in a total order")]
    DuplicateItem(ItemId),
    #[error("order places {1} before {0}, violating {0} > {1}")]
    NotAnExtension(ItemId, ItemId),
    #[error("refusing to enumerate extensions of {size} items (cap is {cap})")]
    EnumerationCap { size: usize, cap: usize },
    #[error("invalid sampler configuration: {0}")]
    InvalidConfig(&'static str),
}

fn join_cycle(items: &[ItemId]) -> String {
    let mut out: Vec<&str> = items.iter().map(ItemId::as_str).collect();
    if let Some(first) = items.first() {
        out.push(first.as_str());
    }
    out.join(" > ")
}

/// Opaque catalog item token.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ItemId(Arc<str>);

impl ItemId {
    pub fn new(id: impl AsRef<str>) -> Result<Self, PreferenceError> {
        let id = id.as_ref();
        if id.is_empty() {
            return Err(PreferenceError::EmptyItemId);
        }
        Ok(ItemId(Arc::from(id)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for ItemId {
    type Error = PreferenceError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        ItemId::new(value)
    }
}

impl From<ItemId> for String {
    fn from(id: ItemId) -> String {
        id.0.to_string()
    }
}

impl std::str::FromStr for ItemId {
    type Err = PreferenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ItemId::new(s)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", &*self.0)
    }
}

/// The Like / OK / Dislike lists collected at registration.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TriageLists {
    #[serde(default)]
    pub like: BTreeSet<ItemId>,
    #[serde(default)]
    pub ok: BTreeSet<ItemId>,
    #[serde(default)]
    pub dislike: BTreeSet<ItemId>,
}

impl TriageLists {
    pub fn validate(&self) -> Result<(), PreferenceError> {
        if let Some(dup) = self
            .like
            .iter()
            .find(|i| self.ok.contains(*i) || self.dislike.contains(*i))
            .or_else(|| self.ok.iter().find(|i| self.dislike.contains(*i)))
        {
            return Err(PreferenceError::OverlappingTriage(dup.clone()));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.like.is_empty() && self.ok.is_empty() && self.dislike.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.like.iter().chain(&self.ok).chain(&self.dislike)
    }

    pub fn len(&self) -> usize {
        self.like.len() + self.ok.len() + self.dislike.len()
    }
}

/// Builds the three-layer order: every Like item is preferred to every OK
/// item, which is preferred to every Dislike item.
pub fn build_ldo(triage: &TriageLists) -> Result<PartialPreference, PreferenceError> {
    triage.validate()?;
    let mut edges = BTreeSet::new();
    let layers = [
        (&triage.like, &triage.ok),
        (&triage.ok, &triage.dislike),
        (&triage.like, &triage.dislike),
    ];
    for (upper, lower) in layers {
        for a in upper {
            for b in lower {
                edges.insert((a.clone(), b.clone()));
            }
        }
    }
    let domain = triage.items().cloned().collect();
    let closure = OnceLock::new();
    Ok(PartialPreference {
        domain,
        edges,
        closure,
    })
}

/// A strict partial order: edge `(a, b)` means `a` is preferred to `b`.
#[derive(Clone, Serialize, Deserialize)]
#[serde(try_from = "PreferenceRepr", into = "PreferenceRepr")]
pub struct PartialPreference {
    domain: BTreeSet<ItemId>,
    edges: BTreeSet<(ItemId, ItemId)>,
    closure: OnceLock<Arc<Poset>>,
}

#[derive(Serialize, Deserialize)]
struct PreferenceRepr {
    domain: Vec<ItemId>,
    edges: Vec<(ItemId, ItemId)>,
}

impl TryFrom<PreferenceRepr> for PartialPreference {
    type Error = PreferenceError;

    fn try_from(r: PreferenceRepr) -> Result<Self, Self::Error> {
        PartialPreference::new(r.domain, r.edges)
    }
}

impl From<PartialPreference> for PreferenceRepr {
    fn from(p: PartialPreference) -> Self {
        PreferenceRepr {
            domain: p.domain.into_iter().collect(),
            edges: p.edges.into_iter().collect(),
        }
    }
}

impl PartialEq for PartialPreference {
    fn eq(&self, other: &Self) -> bool {
        self.domain == other.domain && self.edges == other.edges
    }
}

impl Eq for PartialPreference {}

impl fmt::Debug for PartialPreference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PartialPreference")
            .field("domain", &self.domain)
            .field("edges", &self.edges)
            .finish()
    }
}

impl Default for PartialPreference {
    fn default() -> Self {
        PartialPreference {
            domain: BTreeSet::new(),
            edges: BTreeSet::new(),
            closure: OnceLock::new(),
        }
    }
}

impl PartialPreference {
    /// Builds a structure from a domain and edges. Edge endpoints join the
    /// domain automatically.
    pub fn new(
        domain: impl IntoIterator<Item = ItemId>,
        edges: impl IntoIterator<Item = (ItemId, ItemId)>,
    ) -> Result<Self, PreferenceError> {
        PartialPreference::default().with_edges(domain, edges)
    }

    pub fn from_edges(
        edges: impl IntoIterator<Item = (ItemId, ItemId)>,
    ) -> Result<Self, PreferenceError> {
        PartialPreference::new(std::iter::empty(), edges)
    }

    /// An antichain: every pair of items is incomparable.
    pub fn unconstrained(domain: impl IntoIterator<Item = ItemId>) -> Self {
        PartialPreference {
            domain: domain.into_iter().collect(),
            ..Default::default()
        }
    }

    /// Returns a new structure with `new_edges` added, re-checking acyclicity.
    pub fn add_edges(
        &self,
        new_edges: impl IntoIterator<Item = (ItemId, ItemId)>,
    ) -> Result<Self, PreferenceError> {
        self.with_edges(std::iter::empty(), new_edges)
    }

    fn with_edges(
        &self,
        domain: impl IntoIterator<Item = ItemId>,
        new_edges: impl IntoIterator<Item = (ItemId, ItemId)>,
    ) -> Result<Self, PreferenceError> {
        let mut next = PartialPreference {
            domain: self.domain.clone(),
            edges: self.edges.clone(),
            closure: OnceLock::new(),
        };
        next.domain.extend(domain);
        for (a, b) in new_edges {
            if a == b {
                return Err(PreferenceError::SelfEdge(a));
            }
            next.domain.insert(a.clone());
            next.domain.insert(b.clone());
            next.edges.insert((a, b));
        }
        let poset = Poset::from_edges(&next.domain, &next.edges)?;
        let _ = next.closure.set(Arc::new(poset));
        Ok(next)
    }

    pub fn domain(&self) -> &BTreeSet<ItemId> {
        &self.domain
    }

    pub fn edges(&self) -> &BTreeSet<(ItemId, ItemId)> {
        &self.edges
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.domain.contains(item)
    }

    pub fn is_empty(&self) -> bool {
        self.domain.is_empty()
    }

    pub fn len(&self) -> usize {
        self.domain.len()
    }

    /// True iff `b` is reachable from `a` through the asserted edges.
    pub fn is_preferred(&self, a: &ItemId, b: &ItemId) -> Result<bool, PreferenceError> {
        let poset = self.poset();
        let i = poset
            .index_of(a)
            .ok_or_else(|| PreferenceError::NotInDomain(a.clone()))?;
        let j = poset
            .index_of(b)
            .ok_or_else(|| PreferenceError::NotInDomain(b.clone()))?;
        Ok(poset.prefers(i, j))
    }

    /// True iff every pair of domain items is comparable.
    pub fn is_total(&self) -> bool {
        let poset = self.poset();
        let n = poset.len();
        (0..n).all(|i| ((i + 1)..n).all(|j| poset.prefers(i, j) || poset.prefers(j, i)))
    }

    /// Induced sub-order on `keep`: two kept items stay ordered iff they were
    /// ordered (possibly transitively) before.
    pub fn restrict(&self, keep: &BTreeSet<ItemId>) -> PartialPreference {
        let poset = self.poset();
        let domain: BTreeSet<ItemId> = self.domain.intersection(keep).cloned().collect();
        let mut edges = BTreeSet::new();
        for a in &domain {
            let i = poset.index_of(a).expect("kept item is in domain");
            for j in poset.below(i).ones() {
                let b = poset.item(j);
                if keep.contains(b) {
                    edges.insert((a.clone(), b.clone()));
                }
            }
        }
        // The closure restricted to a subset is already transitive and acyclic.
        PartialPreference {
            domain,
            edges,
            closure: OnceLock::new(),
        }
    }

    pub(crate) fn poset(&self) -> &Poset {
        self.closure.get_or_init(|| {
            Arc::new(
                Poset::from_edges(&self.domain, &self.edges)
                    .expect("stored preferences are acyclic"),
            )
        })
    }
}

/// A permutation of a domain, best item first.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<ItemId>", into = "Vec<ItemId>")]
pub struct TotalOrder(Vec<ItemId>);

impl TotalOrder {
    pub fn new(sequence: Vec<ItemId>) -> Result<Self, PreferenceError> {
        let mut seen = BTreeSet::new();
        for item in &sequence {
            if !seen.insert(item) {
                return Err(PreferenceError::DuplicateItem(item.clone()));
            }
        }
        Ok(TotalOrder(sequence))
    }

    pub(crate) fn from_indices(poset: &Poset, order: &[usize]) -> Self {
        TotalOrder(order.iter().map(|&i| poset.item(i).clone()).collect())
    }

    pub fn items(&self) -> &[ItemId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn position(&self, item: &ItemId) -> Option<usize> {
        self.0.iter().position(|x| x == item)
    }

    pub fn into_vec(self) -> Vec<ItemId> {
        self.0
    }

    /// Ok iff this order covers exactly `p`'s domain and respects every edge.
    pub fn check_extension_of(&self, p: &PartialPreference) -> Result<(), PreferenceError> {
        if self.0.len() != p.domain.len() || !self.0.iter().all(|i| p.domain.contains(i)) {
            return Err(PreferenceError::DomainMismatch);
        }
        self.check_respects(p)
    }

    /// Ok iff every edge of `p` between two items of this order points
    /// forward. Items of `p` missing from the order are ignored.
    pub fn check_respects(&self, p: &PartialPreference) -> Result<(), PreferenceError> {
        let pos: std::collections::HashMap<&ItemId, usize> =
            self.0.iter().enumerate().map(|(k, i)| (i, k)).collect();
        for (a, b) in &p.edges {
            if let (Some(pa), Some(pb)) = (pos.get(a), pos.get(b)) {
                if pa > pb {
                    return Err(PreferenceError::NotAnExtension(a.clone(), b.clone()));
                }
            }
        }
        Ok(())
    }

    pub fn is_extension_of(&self, p: &PartialPreference) -> bool {
        self.check_extension_of(p).is_ok()
    }
}

impl TryFrom<Vec<ItemId>> for TotalOrder {
    type Error = PreferenceError;

    fn try_from(v: Vec<ItemId>) -> Result<Self, Self::Error> {
        TotalOrder::new(v)
    }
}

impl From<TotalOrder> for Vec<ItemId> {
    fn from(t: TotalOrder) -> Self {
        t.0
    }
}
