use std::collections::{HashMap, VecDeque};

use super::{same_table, StateId, Wfst, EPSILON};
use crate::{Error, Result};

/// Epsilon-matching filter state.
///
/// `Free` allows any move; after `LeftAlone` only the left machine may keep
/// taking output-epsilon moves, after `RightAlone` only the right one may
/// take input-epsilon moves. A real (or paired epsilon) match resets it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Filter {
    Free,
    LeftAlone,
    RightAlone,
}

/// Composes `a` (applied first) with `b`.
///
/// The result relates `x` to `z` with weight `⊕_y a(x,y) ⊗ b(y,z)` under any
/// semiring sharing the `+` product, and is trimmed.
pub fn compose(a: &Wfst, b: &Wfst) -> Result<Wfst> {
    if !same_table(a.output_symbols(), b.input_symbols()) {
        return Err(Error::SymbolTableMismatch(
            "left output alphabet differs from right input alphabet".into(),
        ));
    }
    let mut out = Wfst::new(a.input_symbols().clone(), b.output_symbols().clone());
    let (Some(sa), Some(sb)) = (a.start(), b.start()) else {
        return Ok(out);
    };

    let mut ids: HashMap<(StateId, StateId, Filter), StateId> = HashMap::new();
    let mut queue = VecDeque::new();
    let mut intern = |key: (StateId, StateId, Filter), out: &mut Wfst, queue: &mut VecDeque<_>| {
        *ids.entry(key).or_insert_with(|| {
            let id = out.add_state();
            queue.push_back((key, id));
            id
        })
    };

    let start = intern((sa, sb, Filter::Free), &mut out, &mut queue);
    out.set_start(start);

    while let Some(((qa, qb, filter), id)) = queue.pop_front() {
        out.set_final(id, a.final_weight(qa).times(b.final_weight(qb)));

        for ea in a.arcs(qa) {
            if ea.olabel != EPSILON {
                for eb in b.arcs(qb).iter().filter(|eb| eb.ilabel == ea.olabel) {
                    let dst = intern((ea.next, eb.next, Filter::Free), &mut out, &mut queue);
                    out.add_arc(id, ea.ilabel, eb.olabel, ea.weight.times(eb.weight), dst);
                }
                continue;
            }
            if filter != Filter::RightAlone {
                let dst = intern((ea.next, qb, Filter::LeftAlone), &mut out, &mut queue);
                out.add_arc(id, ea.ilabel, EPSILON, ea.weight, dst);
            }
            if filter == Filter::Free {
                for eb in b.arcs(qb).iter().filter(|eb| eb.ilabel == EPSILON) {
                    let dst = intern((ea.next, eb.next, Filter::Free), &mut out, &mut queue);
                    out.add_arc(id, ea.ilabel, eb.olabel, ea.weight.times(eb.weight), dst);
                }
            }
        }
        if filter != Filter::LeftAlone {
            for eb in b.arcs(qb).iter().filter(|eb| eb.ilabel == EPSILON) {
                let dst = intern((qa, eb.next, Filter::RightAlone), &mut out, &mut queue);
                out.add_arc(id, EPSILON, eb.olabel, eb.weight, dst);
            }
        }
    }
    Ok(out.trim())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::{total_weight, Semiring, SymbolTable, Weight};
    use std::sync::Arc;

    fn abc() -> Arc<SymbolTable> {
        SymbolTable::from_symbols(["a", "x", "y", "p", "q"]).shared()
    }

    /// A: a→x | 0.5, a→y | 0.5.  B: x→p | 1, y→q | 1.
    fn toy() -> (Wfst, Wfst) {
        let t = abc();
        let (a, x, y, p, q) = (1, 2, 3, 4, 5);
        let mut fa = Wfst::new(t.clone(), t.clone());
        fa.add_states(3);
        fa.set_start(0);
        fa.add_arc(0, a, x, Weight::from_prob(0.5), 1);
        fa.add_arc(0, a, y, Weight::from_prob(0.5), 2);
        fa.set_final(1, Weight::ONE);
        fa.set_final(2, Weight::ONE);
        let mut fb = Wfst::new(t.clone(), t);
        fb.add_states(3);
        fb.set_start(0);
        fb.add_arc(0, x, p, Weight::ONE, 1);
        fb.add_arc(0, y, q, Weight::ONE, 2);
        fb.set_final(1, Weight::ONE);
        fb.set_final(2, Weight::ONE);
        (fa, fb)
    }

    #[test]
    fn toy_pair_weight() {
        let (fa, fb) = toy();
        let c = compose(&fa, &fb).unwrap();
        let w = total_weight(&c, &[1], &[4], Semiring::Log, None).unwrap();
        assert!((w.value() - (-(0.5f64).ln())).abs() < 1e-12);
        let inv = c.invert();
        let wi = total_weight(&inv, &[4], &[1], Semiring::Log, None).unwrap();
        assert_eq!(w, wi);
    }

    #[test]
    fn empty_annihilates() {
        let (fa, _) = toy();
        let empty = Wfst::new(abc(), abc());
        assert!(compose(&fa, &empty).unwrap().is_empty());
        assert!(compose(&empty, &fa).unwrap().is_empty());
    }

    #[test]
    fn epsilons_are_not_double_counted() {
        // a:ε then ε:b on one side, ε:c on the other; exactly one path.
        let t = abc();
        let mut l = Wfst::new(t.clone(), t.clone());
        l.add_states(2);
        l.set_start(0);
        l.add_arc(0, 1, EPSILON, Weight::new(1.0), 1);
        l.set_final(1, Weight::ONE);
        let mut r = Wfst::new(t.clone(), t);
        r.add_states(2);
        r.set_start(0);
        r.add_arc(0, EPSILON, 4, Weight::new(2.0), 1);
        r.set_final(1, Weight::ONE);
        let c = compose(&l, &r).unwrap();
        let w = total_weight(&c, &[1], &[4], Semiring::Log, None).unwrap();
        assert!((w.value() - 3.0).abs() < 1e-12, "got {w:?}");
    }

    #[test]
    fn mismatched_tables_rejected() {
        let (fa, _) = toy();
        let other = SymbolTable::from_symbols(["z"]).shared();
        let fb = Wfst::new(other.clone(), other);
        assert!(matches!(compose(&fa, &fb), Err(Error::SymbolTableMismatch(_))));
    }
}
