use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap, HashSet};

use super::{Label, ScoredSequence, Semiring, StateId, Weight, Wfst, EPSILON};
use crate::{Error, Result};

/// Tropical distance from every state to a final state (final weight
/// included). Negative arc weights are allowed as long as no cycle has
/// negative total weight.
pub fn shortest_distance_to_final(fst: &Wfst) -> Vec<Weight> {
    let n = fst.num_states();
    let mut dist: Vec<Weight> = (0..n).map(|s| fst.final_weight(s)).collect();
    let relax = |s: StateId, dist: &mut Vec<Weight>| -> bool {
        let mut best = dist[s];
        for a in fst.arcs(s) {
            let cand = a.weight.times(dist[a.next]);
            if cand.value() < best.value() {
                best = cand;
            }
        }
        let changed = best.value() < dist[s].value();
        dist[s] = best;
        changed
    };
    if let Some(order) = fst.topological_order() {
        for &s in order.iter().rev() {
            relax(s, &mut dist);
        }
        return dist;
    }
    // Bellman-Ford style sweeps for cyclic machines.
    for _ in 0..n.max(1) {
        let mut changed = false;
        for s in (0..n).rev() {
            changed |= relax(s, &mut dist);
        }
        if !changed {
            break;
        }
    }
    dist
}

#[derive(Debug)]
struct Entry {
    priority: f64,
    prefix: Vec<Label>,
    /// `None` marks a completed string.
    state: Option<StateId>,
    cost: Weight,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Entry {}
impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Entry {
    // BinaryHeap is a max-heap: invert so the cheapest entry pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .priority
            .total_cmp(&self.priority)
            .then_with(|| other.prefix.cmp(&self.prefix))
            .then_with(|| self.state.is_none().cmp(&other.state.is_none()))
            .then_with(|| other.state.cmp(&self.state))
    }
}

/// The `n` cheapest distinct output strings (epsilons removed) under the
/// tropical semiring, ascending by weight with ties broken by label order.
///
/// A string's weight is the minimum over the paths that produce it. The
/// search is A* with the exact distance-to-final as heuristic, so negative
/// arc weights are fine on acyclic machines.
pub fn shortest_path(fst: &Wfst, n: usize) -> Result<Vec<ScoredSequence>> {
    if n == 0 {
        return Err(Error::contract("shortest_path needs n >= 1"));
    }
    let start = fst.start().ok_or(Error::NoPath)?;
    let heuristic = shortest_distance_to_final(fst);
    if heuristic[start].is_zero() {
        return Err(Error::NoPath);
    }

    let mut heap = BinaryHeap::new();
    heap.push(Entry {
        priority: heuristic[start].value(),
        prefix: Vec::new(),
        state: Some(start),
        cost: Weight::ONE,
    });
    let mut expanded: HashSet<(StateId, Vec<Label>)> = HashSet::new();
    let mut found: BTreeMap<Vec<Label>, Weight> = BTreeMap::new();
    let mut kth_best: Option<f64> = None;

    while let Some(entry) = heap.pop() {
        if let Some(bound) = kth_best {
            let tol = 1e-9 * (1.0 + bound.abs());
            if entry.priority > bound + tol {
                break;
            }
        }
        let Some(state) = entry.state else {
            let slot = found.entry(entry.prefix).or_insert(entry.cost);
            if entry.cost.value() < slot.value() {
                *slot = entry.cost;
            }
            if found.len() >= n {
                let mut totals: Vec<f64> = found.values().map(|w| w.value()).collect();
                totals.sort_by(f64::total_cmp);
                kth_best = Some(totals[n - 1]);
            }
            continue;
        };
        if !expanded.insert((state, entry.prefix.clone())) {
            continue;
        }
        let fw = fst.final_weight(state);
        if !fw.is_zero() {
            let total = entry.cost.times(fw);
            heap.push(Entry {
                priority: total.value(),
                prefix: entry.prefix.clone(),
                state: None,
                cost: total,
            });
        }
        for a in fst.arcs(state) {
            if a.weight.is_zero() || heuristic[a.next].is_zero() {
                continue;
            }
            let cost = entry.cost.times(a.weight);
            let mut prefix = entry.prefix.clone();
            if a.olabel != EPSILON {
                prefix.push(a.olabel);
            }
            heap.push(Entry {
                priority: cost.times(heuristic[a.next]).value(),
                prefix,
                state: Some(a.next),
                cost,
            });
        }
    }

    if found.is_empty() {
        return Err(Error::NoPath);
    }
    let mut results: Vec<ScoredSequence> = found
        .into_iter()
        .map(|(labels, weight)| ScoredSequence { labels, weight })
        .collect();
    results.sort_by(|a, b| {
        a.weight
            .value()
            .total_cmp(&b.weight.value())
            .then_with(|| a.labels.cmp(&b.labels))
    });
    results.truncate(n);
    Ok(results)
}

/// `⊕`-sum of all accepting paths whose epsilon-free input and output
/// strings equal `input` and `output`.
///
/// Cyclic machines need `max_arcs`, which bounds the number of arcs per
/// counted path (the bound applies to acyclic machines too when given).
pub fn total_weight(
    fst: &Wfst,
    input: &[Label],
    output: &[Label],
    semiring: Semiring,
    max_arcs: Option<usize>,
) -> Result<Weight> {
    if max_arcs.is_none() && !fst.is_acyclic() {
        return Err(Error::contract(
            "total_weight on a cyclic machine requires a path length bound",
        ));
    }
    let Some(start) = fst.start() else {
        return Ok(Weight::ZERO);
    };
    let mut memo = HashMap::new();
    let budget = max_arcs.unwrap_or(usize::MAX);
    Ok(pair_weight(
        fst, input, output, semiring, start, 0, 0, budget, &mut memo,
    ))
}

#[allow(clippy::too_many_arguments)]
fn pair_weight(
    fst: &Wfst,
    input: &[Label],
    output: &[Label],
    semiring: Semiring,
    state: StateId,
    i: usize,
    j: usize,
    budget: usize,
    memo: &mut HashMap<(StateId, usize, usize, usize), Weight>,
) -> Weight {
    let key = (state, i, j, budget);
    if let Some(&w) = memo.get(&key) {
        return w;
    }
    let mut acc = if i == input.len() && j == output.len() {
        fst.final_weight(state)
    } else {
        Weight::ZERO
    };
    if budget > 0 {
        for a in fst.arcs(state) {
            let ni = if a.ilabel == EPSILON {
                i
            } else if input.get(i) == Some(&a.ilabel) {
                i + 1
            } else {
                continue;
            };
            let nj = if a.olabel == EPSILON {
                j
            } else if output.get(j) == Some(&a.olabel) {
                j + 1
            } else {
                continue;
            };
            let nb = if budget == usize::MAX { budget } else { budget - 1 };
            let rest = pair_weight(fst, input, output, semiring, a.next, ni, nj, nb, memo);
            acc = semiring.plus(acc, a.weight.times(rest));
        }
    }
    memo.insert(key, acc);
    acc
}
