//! Target-language constraints on phone lattices.
//!
//! Grapheme-to-phoneme rules, word lists, pronunciation dictionaries and
//! word bigram models are compiled into transducers and composed with a
//! lattice. Word sequences are spelled with [`WORD_BOUNDARY`] between
//! words; the G2P machines map that symbol to nothing.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use crate::channel::PtLattice;
use crate::fst::{compose, Label, Side, SymbolTable, Weight, Wfst, EPSILON};
use crate::lm::BigramModel;
use crate::textfmt::data_lines;
use crate::{Error, Result};

pub const WORD_BOUNDARY: &str = "#";

/// Unweighted grapheme → pronunciation rules.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct G2PRuleSet {
    rules: BTreeMap<String, BTreeSet<Vec<String>>>,
}

impl G2PRuleSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a rule; returns false if it was already present.
    pub fn insert(&mut self, grapheme: &str, phones: Vec<String>) -> bool {
        assert!(!grapheme.is_empty(), "grapheme must be nonempty");
        self.rules.entry(grapheme.to_string()).or_default().insert(phones)
    }

    pub fn len(&self) -> usize {
        self.rules.values().map(BTreeSet::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn pronunciations(&self, grapheme: &str) -> Option<&BTreeSet<Vec<String>>> {
        self.rules.get(grapheme)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vec<String>)> {
        self.rules
            .iter()
            .flat_map(|(g, ps)| ps.iter().map(move |p| (g.as_str(), p)))
    }

    /// Every phone used by some rule.
    pub fn phones(&self) -> BTreeSet<&str> {
        self.iter().flat_map(|(_, p)| p.iter().map(String::as_str)).collect()
    }

    /// Every character used by some grapheme.
    pub fn graphemes(&self) -> BTreeSet<char> {
        self.rules.keys().flat_map(|g| g.chars()).collect()
    }

    /// Lexicographically smallest phone sequence over all segmentations of
    /// `word`, or `None` if the rules cannot cover it.
    pub fn smallest_pronunciation(&self, word: &str) -> Option<Vec<String>> {
        let chars: Vec<char> = word.chars().collect();
        let n = chars.len();
        let mut best: Vec<Option<Vec<String>>> = vec![None; n + 1];
        best[n] = Some(Vec::new());
        for i in (0..n).rev() {
            for (g, prons) in &self.rules {
                let glen = g.chars().count();
                if i + glen > n || !g.chars().eq(chars[i..i + glen].iter().copied()) {
                    continue;
                }
                let (head, tail) = best.split_at_mut(i + 1);
                let Some(rest) = &tail[glen - 1] else { continue };
                for p in prons {
                    let cand: Vec<String> = p.iter().chain(rest).cloned().collect();
                    if head[i].as_ref().is_none_or(|b| cand < *b) {
                        head[i] = Some(cand);
                    }
                }
            }
        }
        best.swap_remove(0)
    }
}

/// Parses `grapheme<TAB>space-separated phones` lines. `#` comments and
/// blank lines are skipped; an empty phone field is a silent grapheme.
pub fn parse_g2p_rules(text: &str, phones: &SymbolTable, source_name: &str) -> Result<G2PRuleSet> {
    let mut rules = G2PRuleSet::new();
    for (no, line) in data_lines(text) {
        if line.starts_with('#') {
            continue;
        }
        let (g, p) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, no, "expected 'grapheme<TAB>phones'"))?;
        let g = g.trim();
        if g.is_empty() {
            return Err(Error::parse(source_name, no, "empty grapheme"));
        }
        let pron: Vec<String> = p.split_whitespace().map(str::to_string).collect();
        if let Some(bad) = pron.iter().find(|s| phones.id(s).is_none()) {
            return Err(Error::parse(source_name, no, format!("unknown phone '{bad}'")));
        }
        rules.insert(g, pron);
    }
    if rules.is_empty() {
        return Err(Error::parse(source_name, 0, "rule file has no rules"));
    }
    Ok(rules)
}

/// A set of orthographic words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordList {
    words: BTreeSet<String>,
}

impl WordList {
    pub fn new<I: IntoIterator<Item = S>, S: Into<String>>(words: I) -> Result<Self> {
        let words: BTreeSet<String> = words.into_iter().map(Into::into).filter(|w| !w.is_empty()).collect();
        if words.is_empty() {
            return Err(Error::contract("word list is empty"));
        }
        Ok(WordList { words })
    }

    pub fn parse(text: &str) -> Result<Self> {
        WordList::new(data_lines(text).map(|(_, l)| l.trim().to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn contains(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Word → pronunciation variants.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PronDict {
    entries: BTreeMap<String, Vec<Vec<String>>>,
}

impl PronDict {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, word: &str, pron: Vec<String>) {
        let v = self.entries.entry(word.to_string()).or_default();
        if !v.contains(&pron) {
            v.push(pron);
        }
    }

    pub fn pronunciations(&self, word: &str) -> Option<&[Vec<String>]> {
        self.entries.get(word).map(Vec::as_slice)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `word<TAB>space-separated phones`; repeated words add variants.
    pub fn parse(text: &str, phones: &SymbolTable, source_name: &str) -> Result<Self> {
        let mut dict = PronDict::new();
        for (no, line) in data_lines(text) {
            let (w, p) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, no, "expected 'word<TAB>phones'"))?;
            let pron: Vec<String> = p.split_whitespace().map(str::to_string).collect();
            if pron.is_empty() {
                return Err(Error::parse(source_name, no, "empty pronunciation"));
            }
            if let Some(bad) = pron.iter().find(|s| phones.id(s).is_none()) {
                return Err(Error::parse(source_name, no, format!("unknown phone '{bad}'")));
            }
            dict.insert(w.trim(), pron);
        }
        Ok(dict)
    }
}

/// Phones that exist in the target language.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhoneInventory {
    phones: BTreeSet<Label>,
}

impl PhoneInventory {
    pub fn new(phones: impl IntoIterator<Item = Label>) -> Result<Self> {
        let phones: BTreeSet<Label> = phones.into_iter().filter(|&l| l != EPSILON).collect();
        if phones.is_empty() {
            return Err(Error::contract("phone inventory is empty"));
        }
        Ok(PhoneInventory { phones })
    }

    /// The phones attested by a rule set.
    pub fn from_rules(rules: &G2PRuleSet, table: &SymbolTable) -> Result<Self> {
        let syms: Vec<&str> = rules.phones().into_iter().collect();
        PhoneInventory::new(table.encode(&syms)?)
    }

    /// One phone per line.
    pub fn parse(text: &str, table: &SymbolTable) -> Result<Self> {
        let syms: Vec<&str> = data_lines(text).map(|(_, l)| l.trim()).collect();
        PhoneInventory::new(table.encode(&syms)?)
    }

    pub fn contains(&self, l: Label) -> bool {
        self.phones.contains(&l)
    }

    pub fn iter(&self) -> impl Iterator<Item = Label> + '_ {
        self.phones.iter().copied()
    }
}

/// Grapheme table: the word boundary followed by every character used by
/// the rules and the extra words, in code-point order.
pub fn grapheme_table<'a>(rules: &G2PRuleSet, words: impl IntoIterator<Item = &'a str>) -> SymbolTable {
    let mut chars = rules.graphemes();
    for w in words {
        chars.extend(w.chars());
    }
    let mut t = SymbolTable::new();
    t.add(WORD_BOUNDARY);
    for c in chars {
        t.add(&c.to_string());
    }
    t
}

fn encode_chars(word: &str, graphemes: &SymbolTable) -> Result<Vec<Label>> {
    let chars: Vec<String> = word.chars().map(|c| c.to_string()).collect();
    graphemes.encode(&chars)
}

/// Adds a path `hub --(input, output)--> hub`, padding the shorter side with
/// epsilons.
fn add_loop(fst: &mut Wfst, hub: usize, input: &[Label], output: &[Label], w: Weight) {
    let len = input.len().max(output.len());
    debug_assert!(len > 0);
    let mut prev = hub;
    for k in 0..len {
        let next = if k + 1 == len { hub } else { fst.add_state() };
        let il = input.get(k).copied().unwrap_or(EPSILON);
        let ol = output.get(k).copied().unwrap_or(EPSILON);
        fst.add_arc(prev, il, ol, if k == 0 { w } else { Weight::ONE }, next);
        prev = next;
    }
}

/// Closure of single-rule paths; accepts every segmentation, all weights
/// `One`. With `boundary`, the word boundary maps to nothing.
fn rules_closure(
    rules: &G2PRuleSet,
    graphemes: Arc<SymbolTable>,
    phones: Arc<SymbolTable>,
    boundary: bool,
) -> Result<Wfst> {
    let mut fst = Wfst::new(graphemes.clone(), phones.clone());
    let hub = fst.add_state();
    fst.set_start(hub);
    fst.set_final(hub, Weight::ONE);
    if boundary {
        let b = graphemes
            .id(WORD_BOUNDARY)
            .ok_or_else(|| Error::contract("grapheme table lacks the word boundary"))?;
        fst.add_arc(hub, b, EPSILON, Weight::ONE, hub);
    }
    for (g, pron) in rules.iter() {
        let input = encode_chars(g, &graphemes)?;
        let output = phones.encode(pron)?;
        add_loop(&mut fst, hub, &input, &output, Weight::ONE);
    }
    Ok(fst)
}

/// Compiles rules into a grapheme → phone transducer accepting any
/// concatenation of rule graphemes (and word boundaries).
pub fn g2p_to_fst(rules: &G2PRuleSet, graphemes: Arc<SymbolTable>, phones: Arc<SymbolTable>) -> Result<Wfst> {
    rules_closure(rules, graphemes, phones, true)
}

/// Unweighted acceptor of `word (# word)*` over the list.
pub fn build_word_lm(words: &WordList, graphemes: Arc<SymbolTable>) -> Result<Wfst> {
    let boundary = graphemes
        .id(WORD_BOUNDARY)
        .ok_or_else(|| Error::contract("grapheme table lacks the word boundary"))?;
    let mut fst = Wfst::new_acceptor(graphemes.clone());
    let start = fst.add_state();
    let end = fst.add_state();
    fst.set_start(start);
    fst.set_final(end, Weight::ONE);
    fst.add_arc(end, boundary, boundary, Weight::ONE, start);
    for w in words.iter() {
        let chars = encode_chars(w, &graphemes)?;
        let mut prev = start;
        for (k, &c) in chars.iter().enumerate() {
            let next = if k + 1 == chars.len() { end } else { fst.add_state() };
            fst.add_arc(prev, c, c, Weight::ONE, next);
            prev = next;
        }
    }
    Ok(fst)
}

/// Weighted acceptor of word sequences scored by a word bigram model,
/// spelled out in graphemes with boundaries between words. The empty word
/// sequence is not accepted.
pub fn word_bigram_to_fsa(lm: &BigramModel, graphemes: Arc<SymbolTable>) -> Result<Wfst> {
    let boundary = graphemes
        .id(WORD_BOUNDARY)
        .ok_or_else(|| Error::contract("grapheme table lacks the word boundary"))?;
    let words: Vec<(Label, Vec<Label>)> = lm
        .vocab()
        .iter()
        .map(|(l, w)| Ok((l, encode_chars(w, &graphemes)?)))
        .collect::<Result<_>>()?;
    let mut fst = Wfst::new_acceptor(graphemes);
    let start = fst.add_state();
    fst.set_start(start);
    // after[l]: just finished word l; gap[l]: after word l and a boundary.
    let mut after = vec![usize::MAX; lm.vocab().len()];
    let mut gap = vec![usize::MAX; lm.vocab().len()];
    for &(l, _) in &words {
        after[l as usize] = fst.add_state();
        gap[l as usize] = fst.add_state();
        fst.add_arc(after[l as usize], boundary, boundary, Weight::ONE, gap[l as usize]);
        fst.set_final(after[l as usize], Weight::from_prob(lm.prob(Some(l), None)));
    }
    for prev in std::iter::once(None).chain(words.iter().map(|(l, _)| Some(*l))) {
        let from = prev.map_or(start, |l| gap[l as usize]);
        for (next, chars) in &words {
            let p = lm.prob(prev, Some(*next));
            if p == 0.0 || chars.is_empty() {
                continue;
            }
            let mut s = from;
            for (k, &c) in chars.iter().enumerate() {
                let to = if k + 1 == chars.len() {
                    after[*next as usize]
                } else {
                    fst.add_state()
                };
                fst.add_arc(s, c, c, if k == 0 { Weight::from_prob(p) } else { Weight::ONE }, to);
                s = to;
            }
        }
    }
    Ok(fst.trim())
}

/// Word → phone transducer (closed over word sequences): dictionary words
/// get only their listed pronunciations, other words in `words` go through
/// the fallback rules. Returns the machine and the words neither source
/// could map.
pub fn build_dict_fst(
    dict: &PronDict,
    fallback: Option<&G2PRuleSet>,
    words: Option<&WordList>,
    graphemes: Arc<SymbolTable>,
    phones: Arc<SymbolTable>,
) -> Result<(Wfst, Vec<String>)> {
    if dict.is_empty() && fallback.is_none_or(G2PRuleSet::is_empty) {
        return Err(Error::contract("dictionary and fallback rules are both empty"));
    }
    let boundary = graphemes
        .id(WORD_BOUNDARY)
        .ok_or_else(|| Error::contract("grapheme table lacks the word boundary"))?;
    let mut fst = Wfst::new(graphemes.clone(), phones.clone());
    let hub = fst.add_state();
    fst.set_start(hub);
    fst.set_final(hub, Weight::ONE);
    fst.add_arc(hub, boundary, EPSILON, Weight::ONE, hub);

    let single_word = match fallback {
        Some(r) => Some(rules_closure(r, graphemes.clone(), phones.clone(), false)?),
        None => None,
    };
    let mut vocabulary: BTreeSet<&str> = dict.words().collect();
    if let Some(w) = words {
        vocabulary.extend(w.iter());
    }
    let mut excluded = Vec::new();
    for word in vocabulary {
        let Ok(chars) = encode_chars(word, &graphemes) else {
            excluded.push(word.to_string());
            continue;
        };
        if let Some(prons) = dict.pronunciations(word) {
            for pron in prons {
                add_loop(&mut fst, hub, &chars, &phones.encode(pron)?, Weight::ONE);
            }
            continue;
        }
        let spelled = match &single_word {
            Some(g2p) => compose(&Wfst::linear_acceptor(graphemes.clone(), &chars, Weight::ONE), g2p)?,
            None => Wfst::new(graphemes.clone(), phones.clone()),
        };
        let Some(inner_start) = spelled.start() else {
            excluded.push(word.to_string());
            continue;
        };
        let offset = fst.splice(&spelled);
        fst.add_arc(hub, EPSILON, EPSILON, Weight::ONE, offset + inner_start);
        for s in 0..spelled.num_states() {
            if spelled.is_final(s) {
                fst.set_final(offset + s, Weight::ZERO);
                fst.add_arc(offset + s, EPSILON, EPSILON, spelled.final_weight(s), hub);
            }
        }
    }
    Ok((fst, excluded))
}

/// Keeps exactly the lattice paths whose phones all lie in the inventory.
/// Weights of surviving paths are unchanged.
pub fn constrain_phoneme_inventory(pt: &PtLattice, inventory: &PhoneInventory) -> Result<PtLattice> {
    let phones = pt.phones().clone();
    let mut filter = Wfst::new_acceptor(phones.clone());
    let hub = filter.add_state();
    filter.set_start(hub);
    filter.set_final(hub, Weight::ONE);
    for l in inventory.iter() {
        if !phones.contains(l) {
            return Err(Error::contract(format!("inventory label {l} not in the phone table")));
        }
        filter.add_arc(hub, l, l, Weight::ONE, hub);
    }
    let out = compose(pt.fst(), &filter)?;
    if out.is_empty() {
        let offending: BTreeSet<&str> = pt
            .fst()
            .all_arcs()
            .filter(|(_, a)| a.ilabel != EPSILON && !inventory.contains(a.ilabel))
            .filter_map(|(_, a)| phones.symbol(a.ilabel))
            .collect();
        return Err(Error::EmptyLattice(format!(
            "every path uses a phone outside the inventory: {}",
            offending.into_iter().collect::<Vec<_>>().join(" ")
        )));
    }
    PtLattice::new(out)
}

/// Restricts a lattice to phone strings that pronounce some word sequence
/// accepted by `lm`: the output projection of `G2P⁻¹ ∘ LM ∘ G2P ∘ PT`.
///
/// G2P weights are always discounted. LM weights are discounted when
/// `discount_lm` is set, and otherwise added to the surviving paths.
pub fn constrain_lexicon(pt: &PtLattice, g2p: &Wfst, lm: &Wfst, discount_lm: bool) -> Result<PtLattice> {
    let g2p = g2p.discount_weights();
    let lm = if discount_lm { lm.discount_weights() } else { lm.clone() };
    let spelled = compose(&g2p, pt.fst())?;
    let in_lexicon = compose(&lm, &spelled)?;
    let out = compose(&g2p.invert(), &in_lexicon)?;
    if out.is_empty() {
        return Err(Error::EmptyLattice(
            "no lattice path pronounces a word sequence accepted by the lexicon".into(),
        ));
    }
    PtLattice::new(out.project(Side::Output).trim())
}

/// Compiled grapheme-side machines for one lexicon constraint variant.
#[derive(Debug, Clone)]
pub struct LexiconConstraint {
    pub g2p: Wfst,
    pub lm: Wfst,
    /// Words that could not be mapped to phones and were left out.
    pub excluded: Vec<String>,
}

impl LexiconConstraint {
    /// Rule G2P over an unweighted word list.
    pub fn g2p(rules: &G2PRuleSet, words: &WordList, phones: Arc<SymbolTable>) -> Result<Self> {
        let graphemes = grapheme_table(rules, words.iter()).shared();
        Ok(LexiconConstraint {
            g2p: g2p_to_fst(rules, graphemes.clone(), phones)?,
            lm: build_word_lm(words, graphemes)?,
            excluded: Vec::new(),
        })
    }

    /// Dictionary pronunciations, with rules for listed words the dictionary
    /// lacks. The vocabulary is the dictionary plus `words`.
    pub fn g2p_dict(
        dict: &PronDict,
        rules: Option<&G2PRuleSet>,
        words: Option<&WordList>,
        phones: Arc<SymbolTable>,
    ) -> Result<Self> {
        let vocabulary = WordList::new(dict.words().chain(words.into_iter().flat_map(|w| w.iter())))?;
        let empty = G2PRuleSet::new();
        let graphemes = grapheme_table(rules.unwrap_or(&empty), vocabulary.iter()).shared();
        let (g2p, excluded) = build_dict_fst(dict, rules, Some(&vocabulary), graphemes.clone(), phones)?;
        Ok(LexiconConstraint {
            g2p,
            lm: build_word_lm(&vocabulary, graphemes)?,
            excluded,
        })
    }

    /// Word bigram over the model's vocabulary, pronounced by the dictionary
    /// (falling back to rules) or by the rules alone.
    pub fn wlm(
        lm: &BigramModel,
        rules: Option<&G2PRuleSet>,
        dict: Option<&PronDict>,
        phones: Arc<SymbolTable>,
    ) -> Result<Self> {
        let words = WordList::new(lm.vocab().iter().map(|(_, w)| w))?;
        let empty = G2PRuleSet::new();
        let graphemes = grapheme_table(rules.unwrap_or(&empty), words.iter()).shared();
        let (g2p, excluded) = match (dict, rules) {
            (Some(d), _) => build_dict_fst(d, rules, Some(&words), graphemes.clone(), phones)?,
            (None, Some(r)) => (g2p_to_fst(r, graphemes.clone(), phones)?, Vec::new()),
            (None, None) => return Err(Error::contract("a word LM constraint needs rules or a dictionary")),
        };
        Ok(LexiconConstraint {
            g2p,
            lm: word_bigram_to_fsa(lm, graphemes)?,
            excluded,
        })
    }

    pub fn apply(&self, pt: &PtLattice, discount_lm: bool) -> Result<PtLattice> {
        constrain_lexicon(pt, &self.g2p, &self.lm, discount_lm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fst::{shortest_path, total_weight, Semiring};

    fn phones() -> Arc<SymbolTable> {
        SymbolTable::from_symbols(["a", "b", "k", "s", "tʃ", "h", "p", "q"]).shared()
    }

    fn rules(text: &str) -> G2PRuleSet {
        parse_g2p_rules(text, &phones(), "rules").unwrap()
    }

    fn outputs(fst: &Wfst, input: &str, graphemes: &SymbolTable) -> Vec<String> {
        let chars = encode_chars(input, graphemes).unwrap();
        let acc = Wfst::linear_acceptor(fst.input_symbols().clone(), &chars, Weight::ONE);
        let c = compose(&acc, fst).unwrap().project(Side::Output);
        let mut v: Vec<String> = shortest_path(&c, 100)
            .unwrap()
            .into_iter()
            .map(|s| {
                assert_eq!(s.weight, Weight::ONE);
                phones().render(&s.labels)
            })
            .collect();
        v.sort();
        v
    }

    #[test]
    fn parse_accumulates_variants() {
        let r = rules("# comment\nb\tb\nc\tk\nc\ts\nch\ttʃ\n");
        assert_eq!(r.pronunciations("b").unwrap().len(), 1);
        assert_eq!(r.pronunciations("c").unwrap().len(), 2);
        assert!(r.pronunciations("ch").is_some());
        let err = parse_g2p_rules("x\tzz\n", &phones(), "r").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_g2p_rules("x k\n", &phones(), "r").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn g2p_keeps_every_segmentation() {
        let r = rules("a\ta\n");
        let g = grapheme_table(&r, []).shared();
        let f = g2p_to_fst(&r, g.clone(), phones()).unwrap();
        assert_eq!(outputs(&f, "aa", &g), vec!["a a"]);

        let r = rules("c\tk\nc\ts\n");
        let g = grapheme_table(&r, []).shared();
        let f = g2p_to_fst(&r, g.clone(), phones()).unwrap();
        assert_eq!(outputs(&f, "cc", &g), vec!["k k", "k s", "s k", "s s"]);

        let r = rules("ch\ttʃ\nc\tk\nh\th\n");
        let g = grapheme_table(&r, []).shared();
        let f = g2p_to_fst(&r, g.clone(), phones()).unwrap();
        assert_eq!(outputs(&f, "ch", &g), vec!["k h", "tʃ"]);
    }

    #[test]
    fn word_lm_language() {
        let r = rules("a\ta\nb\tb\n");
        let g = grapheme_table(&r, []).shared();
        let lm = build_word_lm(&WordList::new(["ab"]).unwrap(), g.clone()).unwrap();
        let accepts = |s: &str| {
            let l = encode_chars(s, &g).unwrap();
            !total_weight(&lm, &l, &l, Semiring::Log, Some(l.len()))
                .unwrap()
                .is_zero()
        };
        assert!(accepts("ab"));
        assert!(accepts("ab#ab"));
        assert!(!accepts("ba"));
        assert!(!accepts("ab#"));
    }

    #[test]
    fn dictionary_overrides_rules() {
        let r = rules("p\tp\nq\tq\n");
        let words = WordList::new(["pq", "qq"]).unwrap();
        let g = grapheme_table(&r, words.iter()).shared();
        let mut dict = PronDict::new();
        dict.insert("pq", vec!["q".into(), "p".into()]);
        let (f, excluded) = build_dict_fst(&dict, Some(&r), Some(&words), g.clone(), phones()).unwrap();
        assert!(excluded.is_empty());
        assert_eq!(outputs(&f, "pq", &g), vec!["q p"]);
        assert_eq!(outputs(&f, "qq", &g), vec!["q q"]);
    }

    #[test]
    fn unmappable_words_are_reported() {
        let r = rules("p\tp\n");
        let words = WordList::new(["pz", "p"]).unwrap();
        let g = grapheme_table(&r, words.iter()).shared();
        let (_, excluded) = build_dict_fst(&PronDict::new(), Some(&r), Some(&words), g, phones()).unwrap();
        assert_eq!(excluded, vec!["pz"]);
    }

    #[test]
    fn smallest_pronunciation_is_lexicographic() {
        let r = rules("c\ts\nc\tk\nch\ttʃ\nh\th\n");
        assert_eq!(r.smallest_pronunciation("ch").unwrap(), vec!["k", "h"]);
        assert!(r.smallest_pronunciation("z").is_none());
    }
}
