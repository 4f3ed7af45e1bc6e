//! Oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use ptforge::fst::{Label, Semiring, Weight, Wfst};
use ptforge::seq2seq::Example;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CIPHER_LETTERS: [&str; 6] = ["a", "b", "c", "d", "e", "f"];
pub const CIPHER_PHONES: [&str; 6] = ["p", "t", "k", "m", "n", "s"];

/// Letter sequences of length 1..=6 paired with their letter-by-letter
/// substitution into phones.
pub fn cipher(n: usize, seed: u64) -> Vec<Example> {
    cipher_over(n, seed, CIPHER_LETTERS.len())
}

pub fn cipher_over(n: usize, seed: u64, alphabet: usize) -> Vec<Example> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(1..=6);
            let idx: Vec<usize> = (0..len).map(|_| rng.gen_range(0..alphabet)).collect();
            let letters: Vec<&str> = idx.iter().map(|&i| CIPHER_LETTERS[i]).collect();
            let phones: Vec<&str> = idx.iter().map(|&i| CIPHER_PHONES[i]).collect();
            Example::new(&letters, &phones)
        })
        .collect()
}

/// Every accepting path with at most `max_arcs` arcs, as
/// `(input labels, output labels, path weight)` with epsilons removed.
pub fn enumerate_paths(fst: &Wfst, max_arcs: usize) -> Vec<(Vec<Label>, Vec<Label>, Weight)> {
    let mut out = Vec::new();
    let Some(start) = fst.start() else { return out };
    let mut stack = vec![(start, Vec::new(), Vec::new(), Weight::ONE, 0usize)];
    while let Some((s, i, o, w, depth)) = stack.pop() {
        if fst.is_final(s) {
            out.push((i.clone(), o.clone(), w.times(fst.final_weight(s))));
        }
        if depth == max_arcs {
            continue;
        }
        for a in fst.arcs(s) {
            let mut i2 = i.clone();
            let mut o2 = o.clone();
            if a.ilabel != 0 {
                i2.push(a.ilabel);
            }
            if a.olabel != 0 {
                o2.push(a.olabel);
            }
            stack.push((a.next, i2, o2, w.times(a.weight), depth + 1));
        }
    }
    out
}

/// ⊕-total per distinct (input, output) string pair.
pub fn string_totals(fst: &Wfst, max_arcs: usize, semiring: Semiring) -> BTreeMap<(Vec<Label>, Vec<Label>), Weight> {
    let mut m: BTreeMap<(Vec<Label>, Vec<Label>), Weight> = BTreeMap::new();
    for (i, o, w) in enumerate_paths(fst, max_arcs) {
        let e = m.entry((i, o)).or_insert(Weight::ZERO);
        *e = semiring.plus(*e, w);
    }
    m
}

pub fn fixture(rel: &str) -> String {
    let path = format!("{}/fixtures/{rel}", env!("CARGO_MANIFEST_DIR"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

/// The bundled two-word toy: a five-string lattice over {p, q} and every
/// constraint resource, plus the hand-derived answers.
pub struct Toy {
    pub phones: std::sync::Arc<ptforge::fst::SymbolTable>,
    pub pt: ptforge::channel::PtLattice,
    pub rules: ptforge::constraints::G2PRuleSet,
    pub words: ptforge::constraints::WordList,
    pub dict: ptforge::constraints::PronDict,
    pub word_lm: ptforge::lm::BigramModel,
    /// (constraint, 1-best, weight)
    pub expected: Vec<(String, String, f64)>,
}

pub fn toy() -> Toy {
    use ptforge::constraints::*;
    use ptforge::fst::{parse_att, SymbolTable};
    let phones = SymbolTable::parse(&fixture("toy/phones.syms"), "phones.syms")
        .unwrap()
        .shared();
    let fst = parse_att(&fixture("toy/toy.fst"), phones.clone(), phones.clone(), "toy.fst").unwrap();
    let expected = fixture("toy/expected.tsv")
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let f: Vec<&str> = l.split('\t').collect();
            (f[0].to_string(), f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    Toy {
        pt: ptforge::channel::PtLattice::new(fst).unwrap(),
        rules: parse_g2p_rules(&fixture("toy/rules.tsv"), &phones, "rules.tsv").unwrap(),
        words: WordList::parse(&fixture("toy/words.txt")).unwrap(),
        dict: PronDict::parse(&fixture("toy/dict.tsv"), &phones, "dict.tsv").unwrap(),
        word_lm: ptforge::lm::BigramModel::parse(&fixture("toy/word.lm"), "word.lm").unwrap(),
        phones,
        expected,
    }
}

/// Random acyclic machine: arcs only go from lower to higher states, so
/// every path has at most `states - 1` arcs. Label 0 is epsilon and is
/// drawn with probability `eps`.
pub fn random_acyclic(
    rng: &mut ChaCha8Rng,
    isyms: std::sync::Arc<ptforge::fst::SymbolTable>,
    osyms: std::sync::Arc<ptforge::fst::SymbolTable>,
    states: usize,
    eps: f64,
    acceptor: bool,
) -> Wfst {
    let ni = isyms.len() as Label - 1;
    let no = osyms.len() as Label - 1;
    let mut f = Wfst::new(isyms, osyms);
    f.add_states(states);
    f.set_start(0);
    let label = |rng: &mut ChaCha8Rng, n: Label| if rng.gen_bool(eps) { 0 } else { rng.gen_range(1..=n) };
    for s in 0..states {
        for t in s + 1..states {
            for _ in 0..rng.gen_range(0..=2) {
                let i = label(rng, ni);
                let o = if acceptor { i } else { label(rng, no) };
                f.add_arc(s, i, o, Weight::new(rng.gen_range(0.0..3.0)), t);
            }
        }
        if s + 1 == states || rng.gen_bool(0.3) {
            f.set_final(s, Weight::new(rng.gen_range(0.0..1.0)));
        }
    }
    f
}

/// Path weights grouped by string, sorted, for bit-exact comparison.
pub fn path_weights(fst: &Wfst, max_arcs: usize) -> BTreeMap<Vec<Label>, Vec<u64>> {
    let mut m: BTreeMap<Vec<Label>, Vec<u64>> = BTreeMap::new();
    for (i, _, w) in enumerate_paths(fst, max_arcs) {
        m.entry(i).or_default().push(w.value().to_bits());
    }
    for v in m.values_mut() {
        v.sort_unstable();
    }
    m
}
