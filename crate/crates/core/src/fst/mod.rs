//! Weighted finite-state transducers over negative-log weights.
//!
//! Machines are built once and then treated as immutable values: every
//! operation here returns a new machine.

mod compose;
mod paths;
mod symbols;
mod text;
mod weight;

use std::sync::Arc;

pub use compose::compose;
pub use paths::{shortest_distance_to_final, shortest_path, total_weight};
pub use symbols::{same_table, Label, SymbolTable, EPSILON, EPSILON_SYMBOL};
pub use text::{parse_att, write_att};
pub use weight::{Semiring, Weight};

use crate::{Error, Result};

pub type StateId = usize;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub ilabel: Label,
    pub olabel: Label,
    pub weight: Weight,
    pub next: StateId,
}

#[derive(Debug, Clone, PartialEq)]
struct State {
    arcs: Vec<Transition>,
    final_weight: Weight,
}

/// An epsilon-free label sequence with its weight.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSequence {
    pub labels: Vec<Label>,
    pub weight: Weight,
}

/// Which tape to keep when projecting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Input,
    Output,
}

#[derive(Debug, Clone)]
pub struct Wfst {
    states: Vec<State>,
    start: Option<StateId>,
    isyms: Arc<SymbolTable>,
    osyms: Arc<SymbolTable>,
}

impl Wfst {
    /// An empty machine (no states) over the given alphabets.
    pub fn new(isyms: Arc<SymbolTable>, osyms: Arc<SymbolTable>) -> Self {
        Wfst {
            states: Vec::new(),
            start: None,
            isyms,
            osyms,
        }
    }

    pub fn new_acceptor(syms: Arc<SymbolTable>) -> Self {
        Wfst::new(syms.clone(), syms)
    }

    pub fn add_state(&mut self) -> StateId {
        self.states.push(State {
            arcs: Vec::new(),
            final_weight: Weight::ZERO,
        });
        self.states.len() - 1
    }

    pub fn add_states(&mut self, n: usize) -> StateId {
        let first = self.states.len();
        for _ in 0..n {
            self.add_state();
        }
        first
    }

    pub fn set_start(&mut self, s: StateId) {
        assert!(s < self.states.len(), "start state {s} out of range");
        self.start = Some(s);
    }

    pub fn set_final(&mut self, s: StateId, w: Weight) {
        self.states[s].final_weight = w;
    }

    pub fn add_arc(&mut self, src: StateId, ilabel: Label, olabel: Label, weight: Weight, next: StateId) {
        assert!(
            src < self.states.len() && next < self.states.len(),
            "arc endpoint out of range"
        );
        assert!(self.isyms.contains(ilabel), "input label {ilabel} not in table");
        assert!(self.osyms.contains(olabel), "output label {olabel} not in table");
        self.states[src].arcs.push(Transition {
            ilabel,
            olabel,
            weight,
            next,
        });
    }

    pub fn start(&self) -> Option<StateId> {
        self.start
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn num_arcs(&self) -> usize {
        self.states.iter().map(|s| s.arcs.len()).sum()
    }

    pub fn arcs(&self, s: StateId) -> &[Transition] {
        &self.states[s].arcs
    }

    /// All arcs as `(source, transition)` pairs.
    pub fn all_arcs(&self) -> impl Iterator<Item = (StateId, &Transition)> {
        self.states
            .iter()
            .enumerate()
            .flat_map(|(s, st)| st.arcs.iter().map(move |a| (s, a)))
    }

    pub fn final_weight(&self, s: StateId) -> Weight {
        self.states[s].final_weight
    }

    pub fn is_final(&self, s: StateId) -> bool {
        !self.states[s].final_weight.is_zero()
    }

    pub fn input_symbols(&self) -> &Arc<SymbolTable> {
        &self.isyms
    }

    pub fn output_symbols(&self) -> &Arc<SymbolTable> {
        &self.osyms
    }

    /// True when the machine has no start state (accepts nothing).
    pub fn is_empty(&self) -> bool {
        self.start.is_none()
    }

    pub fn is_acceptor(&self) -> bool {
        self.all_arcs().all(|(_, a)| a.ilabel == a.olabel)
    }

    /// Checks the structural invariants.
    pub fn validate(&self) -> Result<()> {
        let n = self.states.len();
        if n > 0 && self.start.is_none() {
            return Err(Error::contract("nonempty machine without a start state"));
        }
        for (s, a) in self.all_arcs() {
            if a.next >= n {
                return Err(Error::contract(format!("arc from {s} to missing state {}", a.next)));
            }
            if !self.isyms.contains(a.ilabel) || !self.osyms.contains(a.olabel) {
                return Err(Error::contract(format!("arc from {s} uses unknown label")));
            }
            if a.weight.value().is_nan() {
                return Err(Error::contract("NaN weight"));
            }
        }
        Ok(())
    }

    /// Swaps input and output labels (and tables).
    pub fn invert(&self) -> Wfst {
        let mut out = self.clone();
        std::mem::swap(&mut out.isyms, &mut out.osyms);
        for st in &mut out.states {
            for a in &mut st.arcs {
                std::mem::swap(&mut a.ilabel, &mut a.olabel);
            }
        }
        out
    }

    /// Acceptor over the chosen tape.
    pub fn project(&self, side: Side) -> Wfst {
        let mut out = self.clone();
        let syms = match side {
            Side::Input => self.isyms.clone(),
            Side::Output => self.osyms.clone(),
        };
        out.isyms = syms.clone();
        out.osyms = syms;
        for st in &mut out.states {
            for a in &mut st.arcs {
                match side {
                    Side::Input => a.olabel = a.ilabel,
                    Side::Output => a.ilabel = a.olabel,
                }
            }
        }
        out
    }

    /// Applies `f` to every arc and final weight.
    pub fn map_weights(&self, f: impl Fn(Weight) -> Weight) -> Wfst {
        let mut out = self.clone();
        for st in &mut out.states {
            st.final_weight = f(st.final_weight);
            for a in &mut st.arcs {
                a.weight = f(a.weight);
            }
        }
        out
    }

    /// Zero-exponentiation: every non-`Zero` weight becomes `One`.
    pub fn discount_weights(&self) -> Wfst {
        self.map_weights(|w| if w.is_zero() { Weight::ZERO } else { Weight::ONE })
    }

    /// States reachable from the start and co-reachable to a final state,
    /// renumbered in order of first appearance.
    pub fn trim(&self) -> Wfst {
        let n = self.states.len();
        let Some(start) = self.start else {
            return Wfst::new(self.isyms.clone(), self.osyms.clone());
        };
        let mut accessible = vec![false; n];
        let mut stack = vec![start];
        accessible[start] = true;
        while let Some(s) = stack.pop() {
            for a in &self.states[s].arcs {
                if !accessible[a.next] {
                    accessible[a.next] = true;
                    stack.push(a.next);
                }
            }
        }
        let mut reverse: Vec<Vec<StateId>> = vec![Vec::new(); n];
        for (s, a) in self.all_arcs() {
            reverse[a.next].push(s);
        }
        let mut coaccessible = vec![false; n];
        let mut stack: Vec<StateId> = (0..n).filter(|&s| self.is_final(s)).collect();
        for &s in &stack {
            coaccessible[s] = true;
        }
        while let Some(s) = stack.pop() {
            for &p in &reverse[s] {
                if !coaccessible[p] {
                    coaccessible[p] = true;
                    stack.push(p);
                }
            }
        }
        if !(accessible[start] && coaccessible[start]) {
            return Wfst::new(self.isyms.clone(), self.osyms.clone());
        }

        let keep = |s: StateId| accessible[s] && coaccessible[s];
        let mut remap = vec![usize::MAX; n];
        let mut order = Vec::new();
        let mut queue = std::collections::VecDeque::from([start]);
        remap[start] = 0;
        order.push(start);
        while let Some(s) = queue.pop_front() {
            for a in &self.states[s].arcs {
                if keep(a.next) && remap[a.next] == usize::MAX {
                    remap[a.next] = order.len();
                    order.push(a.next);
                    queue.push_back(a.next);
                }
            }
        }
        let mut out = Wfst::new(self.isyms.clone(), self.osyms.clone());
        out.add_states(order.len());
        out.set_start(0);
        for (new, &old) in order.iter().enumerate() {
            out.states[new].final_weight = self.states[old].final_weight;
            out.states[new].arcs = self.states[old]
                .arcs
                .iter()
                .filter(|a| keep(a.next) && !a.weight.is_zero())
                .map(|a| Transition {
                    next: remap[a.next],
                    ..*a
                })
                .collect();
        }
        out
    }

    /// A topological order of all states, or `None` if the machine has a
    /// cycle.
    pub fn topological_order(&self) -> Option<Vec<StateId>> {
        let n = self.states.len();
        let mut indegree = vec![0usize; n];
        for (_, a) in self.all_arcs() {
            indegree[a.next] += 1;
        }
        let mut ready: Vec<StateId> = (0..n).filter(|&s| indegree[s] == 0).rev().collect();
        let mut order = Vec::with_capacity(n);
        while let Some(s) = ready.pop() {
            order.push(s);
            for a in &self.states[s].arcs {
                indegree[a.next] -= 1;
                if indegree[a.next] == 0 {
                    ready.push(a.next);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    pub fn is_acyclic(&self) -> bool {
        self.topological_order().is_some()
    }

    /// Sorted arc multiset, used for structural comparisons.
    pub fn arc_set(&self) -> Vec<(StateId, Label, Label, u64, StateId)> {
        let mut v: Vec<_> = self
            .all_arcs()
            .map(|(s, a)| (s, a.ilabel, a.olabel, a.weight.value().to_bits(), a.next))
            .collect();
        v.sort();
        v
    }

    /// Single-path machine accepting exactly `(input, output)` with weight
    /// `w`. The shorter side is padded with trailing epsilons.
    pub fn linear(
        isyms: Arc<SymbolTable>,
        osyms: Arc<SymbolTable>,
        input: &[Label],
        output: &[Label],
        w: Weight,
    ) -> Result<Wfst> {
        if input.is_empty() && output.is_empty() {
            return Err(Error::contract("linear machine needs a nonempty side"));
        }
        let len = input.len().max(output.len());
        let mut f = Wfst::new(isyms, osyms);
        f.add_states(len + 1);
        f.set_start(0);
        for i in 0..len {
            let il = input.get(i).copied().unwrap_or(EPSILON);
            let ol = output.get(i).copied().unwrap_or(EPSILON);
            let aw = if i == 0 { w } else { Weight::ONE };
            f.add_arc(i, il, ol, aw, i + 1);
        }
        f.set_final(len, Weight::ONE);
        Ok(f)
    }

    /// Linear acceptor for `labels`; an empty sequence gives a machine
    /// accepting only the empty string.
    pub fn linear_acceptor(syms: Arc<SymbolTable>, labels: &[Label], w: Weight) -> Wfst {
        if labels.is_empty() {
            let mut f = Wfst::new_acceptor(syms);
            let s = f.add_state();
            f.set_start(s);
            f.set_final(s, w);
            return f;
        }
        Wfst::linear(syms.clone(), syms, labels, labels, w).expect("nonempty")
    }

    /// Copies `other` into `self` and returns the offset of its states.
    /// Labels are copied verbatim, so the tables must agree.
    pub(crate) fn splice(&mut self, other: &Wfst) -> StateId {
        let offset = self.states.len();
        for st in &other.states {
            self.states.push(State {
                final_weight: st.final_weight,
                arcs: st
                    .arcs
                    .iter()
                    .map(|a| Transition {
                        next: a.next + offset,
                        ..*a
                    })
                    .collect(),
            });
        }
        offset
    }
}

/// Free-function form of [`Wfst::linear`].
pub fn linear_fst(
    isyms: Arc<SymbolTable>,
    osyms: Arc<SymbolTable>,
    input: &[Label],
    output: &[Label],
    w: Weight,
) -> Result<Wfst> {
    Wfst::linear(isyms, osyms, input, output, w)
}
