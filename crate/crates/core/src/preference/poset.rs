use std::collections::{BTreeSet, HashMap, VecDeque};

use fixedbitset::FixedBitSet;

use super::{ItemId, PreferenceError};

/// Index-based view of a partial order with its full transitive closure.
///
/// Items are stored in ascending id order, so index order doubles as the
/// deterministic tie-break.
#[derive(Debug, Clone)]
pub(crate) struct Poset {
    items: Vec<ItemId>,
    index: HashMap<ItemId, usize>,
    // below[i] holds every j with i preferred to j
    below: Vec<FixedBitSet>,
}

impl Poset {
    pub(crate) fn from_edges(
        domain: &BTreeSet<ItemId>,
        edges: &BTreeSet<(ItemId, ItemId)>,
    ) -> Result<Poset, PreferenceError> {
        let items: Vec<ItemId> = domain.iter().cloned().collect();
        let index: HashMap<ItemId, usize> = items
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, x)| (x, i))
            .collect();
        let n = items.len();
        let mut succ = vec![Vec::new(); n];
        let mut pred = vec![Vec::new(); n];
        for (a, b) in edges {
            let (i, j) = (index[a], index[b]);
            succ[i].push(j);
            pred[j].push(i);
        }

        let mut indeg: Vec<usize> = pred.iter().map(Vec::len).collect();
        let mut queue: VecDeque<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            topo.push(v);
            for &s in &succ[v] {
                indeg[s] -= 1;
                if indeg[s] == 0 {
                    queue.push_back(s);
                }
            }
        }
        if topo.len() < n {
            return Err(PreferenceError::Cycle(find_cycle(&items, &pred, &indeg)));
        }

        let mut below = vec![FixedBitSet::with_capacity(n); n];
        for &v in topo.iter().rev() {
            let mut row = FixedBitSet::with_capacity(n);
            for &s in &succ[v] {
                row.insert(s);
                row.union_with(&below[s]);
            }
            below[v] = row;
        }
        Ok(Poset {
            items,
            index,
            below,
        })
    }

    /// Reinterprets this order over `universe` (ascending, deduplicated).
    /// Relations between shared items are kept; universe items this order
    /// never saw are unconstrained; items outside the universe vanish.
    pub(crate) fn project(&self, universe: &[ItemId]) -> Poset {
        debug_assert!(universe.windows(2).all(|w| w[0] < w[1]));
        let n = universe.len();
        let mut old_to_new = vec![None; self.items.len()];
        let mut new_to_old = vec![None; n];
        for (k, item) in universe.iter().enumerate() {
            if let Some(&o) = self.index.get(item) {
                old_to_new[o] = Some(k);
                new_to_old[k] = Some(o);
            }
        }
        let below = new_to_old
            .iter()
            .map(|old| {
                let mut row = FixedBitSet::with_capacity(n);
                if let Some(o) = *old {
                    for j in self.below[o].ones() {
                        if let Some(k) = old_to_new[j] {
                            row.insert(k);
                        }
                    }
                }
                row
            })
            .collect();
        let index = universe
            .iter()
            .cloned()
            .enumerate()
            .map(|(i, x)| (x, i))
            .collect();
        Poset {
            items: universe.to_vec(),
            index,
            below,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.items.len()
    }

    pub(crate) fn items(&self) -> &[ItemId] {
        &self.items
    }

    pub(crate) fn item(&self, i: usize) -> &ItemId {
        &self.items[i]
    }

    pub(crate) fn index_of(&self, item: &ItemId) -> Option<usize> {
        self.index.get(item).copied()
    }

    #[inline]
    pub(crate) fn prefers(&self, i: usize, j: usize) -> bool {
        self.below[i].contains(j)
    }

    pub(crate) fn below(&self, i: usize) -> &FixedBitSet {
        &self.below[i]
    }

    /// `above[j]` = every i preferred to j.
    pub(crate) fn above_sets(&self) -> Vec<FixedBitSet> {
        let n = self.len();
        let mut above = vec![FixedBitSet::with_capacity(n); n];
        for (i, row) in self.below.iter().enumerate() {
            for j in row.ones() {
                above[j].insert(i);
            }
        }
        above
    }

    /// Topological order, ties broken by ascending item id.
    pub(crate) fn initial_extension(&self) -> Vec<usize> {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        for row in &self.below {
            for j in row.ones() {
                indeg[j] += 1;
            }
        }
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for j in self.below[v].ones() {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.insert(j);
                }
            }
        }
        order
    }

    #[cfg(test)]
    pub(crate) fn is_extension(&self, order: &[usize]) -> bool {
        if order.len() != self.len() {
            return false;
        }
        let mut placed = FixedBitSet::with_capacity(self.len());
        for &v in order {
            if placed.contains(v) || self.below[v].intersection(&placed).next().is_some() {
                return false;
            }
            placed.insert(v);
        }
        true
    }
}

// Every node left after Kahn's pass has a predecessor that was also left,
// so walking predecessors must revisit a node.
fn find_cycle(items: &[ItemId], pred: &[Vec<usize>], indeg: &[usize]) -> Vec<ItemId> {
    let stuck = |v: usize| indeg[v] > 0;
    let start = (0..items.len())
        .find(|&v| stuck(v))
        .expect("a cycle leaves nodes behind");
    let mut seen_at = HashMap::new();
    let mut path = Vec::new();
    let mut v = start;
    while !seen_at.contains_key(&v) {
        seen_at.insert(v, path.len());
        path.push(v);
        v = *pred[v]
            .iter()
            .find(|&&u| stuck(u))
            .expect("stuck node has a stuck predecessor");
    }
    let mut cycle: Vec<usize> = path[seen_at[&v]..].to_vec();
    // the walk followed predecessors; flip to preference direction
    cycle.reverse();
    cycle.into_iter().map(|i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::super::test_support::*;

    #[test]
    fn projection_drops_and_frees() {
        let p = pref(&[], &[("a", "b"), ("b", "c")]);
        let q = p.poset().project(&ids(&["a", "c", "z"]));
        assert_eq!(q.len(), 3);
        assert!(q.prefers(0, 1));
        assert!(!q.prefers(0, 2) && !q.prefers(2, 0) && !q.prefers(1, 2));
    }

    #[test]
    fn initial_extension_is_valid() {
        let p = pref(&["e"], &[("d", "a"), ("c", "b")]);
        let poset = p.poset();
        let order = poset.initial_extension();
        assert!(poset.is_extension(&order));
        let names: Vec<&str> = order.iter().map(|&i| poset.item(i).as_str()).collect();
        assert_eq!(names, ["c", "b", "d", "a", "e"]);
    }
}
