//! Smoothed bigram language models over an arbitrary closed vocabulary.
//!
//! Used for the phone prior, the letter prior and word-level constraints.
//! Probabilities are stored densely: context `0` is the sentence start and
//! outcome `0` is the sentence end; every other index is the symbol's
//! label in the vocabulary table.

use std::fmt::Write as _;
use std::sync::Arc;

use crate::constraints::{G2PRuleSet, PronDict};
use crate::fst::{Label, SymbolTable, Weight, Wfst};
use crate::textfmt::{data_lines, format_sig9, parse_f64};
use crate::{Error, Result};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    WittenBell,
    AddK(f64),
}

impl Default for Smoothing {
    fn default() -> Self {
        Smoothing::WittenBell
    }
}

impl std::fmt::Display for Smoothing {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Smoothing::WittenBell => f.write_str("witten-bell"),
            Smoothing::AddK(k) => write!(f, "add-k {}", format_sig9(*k)),
        }
    }
}

impl std::str::FromStr for Smoothing {
    type Err = Error;

    /// Accepts `witten-bell`, `add-k:<k>` and `add-k <k>`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "witten-bell" {
            return Ok(Smoothing::WittenBell);
        }
        if let Some(rest) = s.strip_prefix("add-k") {
            let k = rest.trim_start_matches([':', ' ', '=']);
            return parse_f64(k)
                .filter(|k| *k >= 0.0 && k.is_finite())
                .map(Smoothing::AddK)
                .ok_or_else(|| Error::contract(format!("bad add-k constant '{k}'")));
        }
        Err(Error::contract(format!("unknown smoothing '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BigramModel {
    vocab: Arc<SymbolTable>,
    smoothing: Smoothing,
    /// `probs[context][outcome]`.
    probs: Vec<Vec<f64>>,
    unigram_counts: Vec<u64>,
    bigram_counts: Vec<Vec<u64>>,
}

impl BigramModel {
    pub fn vocab(&self) -> &Arc<SymbolTable> {
        &self.vocab
    }

    pub fn smoothing(&self) -> Smoothing {
        self.smoothing
    }

    /// Number of non-marker symbols.
    pub fn num_symbols(&self) -> usize {
        self.vocab.len() - 1
    }

    /// `p(next | prev)`. `None` stands for the start marker as context and
    /// the end marker as outcome.
    pub fn prob(&self, prev: Option<Label>, next: Option<Label>) -> f64 {
        self.probs[prev.unwrap_or(0) as usize][next.unwrap_or(0) as usize]
    }

    pub fn log_prob(&self, prev: Option<Label>, next: Option<Label>) -> f64 {
        self.prob(prev, next).ln()
    }

    pub fn bigram_count(&self, prev: Option<Label>, next: Option<Label>) -> u64 {
        self.bigram_counts[prev.unwrap_or(0) as usize][next.unwrap_or(0) as usize]
    }

    /// Natural-log probability of `labels` including both markers.
    pub fn score_labels(&self, labels: &[Label]) -> f64 {
        let mut prev = None;
        let mut total = 0.0;
        for &l in labels {
            total += self.log_prob(prev, Some(l));
            prev = Some(l);
        }
        total + self.log_prob(prev, None)
    }

    /// Natural-log probability of a symbol sequence.
    pub fn score_sequence<S: AsRef<str>>(&self, seq: &[S]) -> Result<f64> {
        Ok(self.score_labels(&self.vocab.encode(seq)?))
    }

    /// Weighted acceptor: state `0` is the start context, state `l` the
    /// context after symbol `l`.
    pub fn to_fsa(&self) -> Wfst {
        let n = self.num_symbols();
        let mut fst = Wfst::new_acceptor(self.vocab.clone());
        fst.add_states(n + 1);
        fst.set_start(0);
        for ctx in 0..=n {
            for y in 1..=n {
                let p = self.probs[ctx][y];
                if p > 0.0 {
                    fst.add_arc(ctx, y as Label, y as Label, Weight::from_prob(p), y);
                }
            }
            fst.set_final(ctx, Weight::from_prob(self.probs[ctx][0]));
        }
        fst
    }

    pub fn to_text(&self) -> String {
        let n = self.num_symbols();
        let name = |i: usize, marker: &str| -> String {
            if i == 0 {
                marker.to_string()
            } else {
                self.vocab.symbol(i as Label).unwrap().to_string()
            }
        };
        let mut out = String::from("\\ptforge-bigram\n");
        let _ = writeln!(out, "smoothing\t{}", self.smoothing);
        out.push_str("\\vocab\n");
        for (_, s) in self.vocab.iter() {
            let _ = writeln!(out, "{s}");
        }
        out.push_str("\\unigram-counts\n");
        for y in 0..=n {
            let _ = writeln!(out, "{}\t{}", name(y, EOS), self.unigram_counts[y]);
        }
        out.push_str("\\bigram-counts\n");
        for x in 0..=n {
            for y in 0..=n {
                let c = self.bigram_counts[x][y];
                if c > 0 {
                    let _ = writeln!(out, "{}\t{}\t{c}", name(x, BOS), name(y, EOS));
                }
            }
        }
        out.push_str("\\probabilities\n");
        for x in 0..=n {
            for y in 0..=n {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}",
                    name(x, BOS),
                    name(y, EOS),
                    format_sig9(self.probs[x][y])
                );
            }
        }
        out.push_str("\\end\n");
        out
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let err = |line: usize, msg: &str| Error::parse(source_name, line, msg);
        let mut section = "";
        let mut smoothing = None;
        let mut symbols = Vec::new();
        let mut sections: Vec<(&str, usize, Vec<String>)> = Vec::new();
        for (no, line) in data_lines(text) {
            if let Some(name) = line.strip_prefix('\\') {
                section = match name {
                    "ptforge-bigram" | "vocab" | "unigram-counts" | "bigram-counts" | "probabilities" | "end" => name,
                    _ => return Err(err(no, "unknown section")),
                };
                continue;
            }
            match section {
                "ptforge-bigram" => {
                    let (k, v) = line.split_once('\t').ok_or_else(|| err(no, "expected key<TAB>value"))?;
                    if k == "smoothing" {
                        smoothing = Some(v.parse::<Smoothing>().map_err(|_| err(no, "bad smoothing"))?);
                    }
                }
                "vocab" => symbols.push(line.to_string()),
                "unigram-counts" | "bigram-counts" | "probabilities" => {
                    sections.push((section, no, line.split('\t').map(str::to_string).collect()));
                }
                _ => return Err(err(no, "data outside a section")),
            }
        }
        let smoothing = smoothing.ok_or_else(|| err(1, "missing smoothing header"))?;
        let vocab = SymbolTable::from_symbols(&symbols).shared();
        let n = vocab.len() - 1;
        let ctx = |no: usize, s: &str| -> Result<usize> {
            if s == BOS {
                Ok(0)
            } else {
                vocab.id(s).map(|l| l as usize).ok_or_else(|| err(no, "unknown symbol"))
            }
        };
        let outcome = |no: usize, s: &str| -> Result<usize> {
            if s == EOS {
                Ok(0)
            } else {
                vocab.id(s).map(|l| l as usize).ok_or_else(|| err(no, "unknown symbol"))
            }
        };
        let mut unigram_counts = vec![0u64; n + 1];
        let mut bigram_counts = vec![vec![0u64; n + 1]; n + 1];
        let mut probs = vec![vec![f64::NAN; n + 1]; n + 1];
        for (sec, no, f) in sections.drain(..) {
            match (sec, f.as_slice()) {
                ("unigram-counts", [y, c]) => {
                    unigram_counts[outcome(no, y)?] = c.parse().map_err(|_| err(no, "bad count"))?;
                }
                ("bigram-counts", [x, y, c]) => {
                    bigram_counts[ctx(no, x)?][outcome(no, y)?] = c.parse().map_err(|_| err(no, "bad count"))?;
                }
                ("probabilities", [x, y, p]) => {
                    let p = parse_f64(p)
                        .filter(|p| (0.0..=1.0).contains(p))
                        .ok_or_else(|| err(no, "bad probability"))?;
                    probs[ctx(no, x)?][outcome(no, y)?] = p;
                }
                _ => return Err(err(no, "wrong number of fields")),
            }
        }
        if probs.iter().flatten().any(|p| p.is_nan()) {
            return Err(err(1, "probability table incomplete"));
        }
        Ok(BigramModel {
            vocab,
            smoothing,
            probs,
            unigram_counts,
            bigram_counts,
        })
    }
}

/// Estimates a bigram model over `vocab` from whitespace-tokenized
/// sequences.
pub fn train_bigram(vocab: Arc<SymbolTable>, corpus: &[Vec<String>], smoothing: Smoothing) -> Result<BigramModel> {
    if corpus.is_empty() {
        return Err(Error::contract("empty training corpus"));
    }
    let mut encoded = Vec::with_capacity(corpus.len());
    let mut unknown = Vec::new();
    for (i, seq) in corpus.iter().enumerate() {
        if seq.is_empty() {
            return Err(Error::contract(format!("training sequence {} is empty", i + 1)));
        }
        match vocab.encode(seq) {
            Ok(ids) => encoded.push(ids),
            Err(Error::UnknownSymbols(s)) => unknown.extend(s),
            Err(e) => return Err(e),
        }
    }
    if !unknown.is_empty() {
        unknown.sort();
        unknown.dedup();
        return Err(Error::UnknownSymbols(unknown));
    }
    Ok(train_bigram_labels(vocab, &encoded, smoothing))
}

/// [`train_bigram`] over already-encoded sequences.
pub fn train_bigram_labels(vocab: Arc<SymbolTable>, corpus: &[Vec<Label>], smoothing: Smoothing) -> BigramModel {
    let n = vocab.len() - 1;
    let mut unigram_counts = vec![0u64; n + 1];
    let mut bigram_counts = vec![vec![0u64; n + 1]; n + 1];
    for seq in corpus {
        let mut prev = 0usize;
        for &l in seq {
            bigram_counts[prev][l as usize] += 1;
            unigram_counts[l as usize] += 1;
            prev = l as usize;
        }
        bigram_counts[prev][0] += 1;
        unigram_counts[0] += 1;
    }
    let outcomes = (n + 1) as f64;
    let probs = match smoothing {
        Smoothing::AddK(k) => bigram_counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                let denom = total as f64 + k * outcomes;
                if denom == 0.0 {
                    vec![1.0 / outcomes; n + 1]
                } else {
                    row.iter().map(|&c| (c as f64 + k) / denom).collect()
                }
            })
            .collect(),
        Smoothing::WittenBell => {
            let tokens: u64 = unigram_counts.iter().sum();
            let types = unigram_counts.iter().filter(|&&c| c > 0).count() as f64;
            let lower: Vec<f64> = unigram_counts
                .iter()
                .map(|&c| (c as f64 + types / outcomes) / (tokens as f64 + types))
                .collect();
            bigram_counts
                .iter()
                .map(|row| {
                    let total = row.iter().sum::<u64>() as f64;
                    let distinct = row.iter().filter(|&&c| c > 0).count() as f64;
                    if total == 0.0 {
                        lower.clone()
                    } else {
                        row.iter()
                            .zip(&lower)
                            .map(|(&c, &pl)| (c as f64 + distinct * pl) / (total + distinct))
                            .collect()
                    }
                })
                .collect()
        }
    };
    BigramModel {
        vocab,
        smoothing,
        probs,
        unigram_counts,
        bigram_counts,
    }
}

/// Free-function form of [`BigramModel::to_fsa`].
pub fn bigram_to_fsa(m: &BigramModel) -> Wfst {
    m.to_fsa()
}

/// Free-function form of [`BigramModel::score_sequence`].
pub fn score_sequence<S: AsRef<str>>(m: &BigramModel, seq: &[S]) -> Result<f64> {
    m.score_sequence(seq)
}

/// Parses a corpus: one sequence per line, symbols separated by spaces.
pub fn parse_corpus(text: &str) -> Vec<Vec<String>> {
    data_lines(text)
        .map(|(_, l)| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}

/// Replaces each word by its first dictionary pronunciation, or else by
/// the lexicographically smallest pronunciation the fallback rules allow.
pub fn words_to_phones(
    corpus: &[Vec<String>],
    dict: &PronDict,
    fallback: Option<&G2PRuleSet>,
) -> Result<Vec<Vec<String>>> {
    let mut uncovered = Vec::new();
    let mut out = Vec::with_capacity(corpus.len());
    for sentence in corpus {
        let mut phones = Vec::new();
        for word in sentence {
            if let Some(p) = dict.pronunciations(word).and_then(|v| v.first()) {
                phones.extend(p.iter().cloned());
            } else if let Some(p) = fallback.and_then(|r| r.smallest_pronunciation(word)) {
                phones.extend(p);
            } else {
                uncovered.push(word.clone());
            }
        }
        out.push(phones);
    }
    if uncovered.is_empty() {
        Ok(out)
    } else {
        uncovered.sort();
        uncovered.dedup();
        Err(Error::UnknownSymbols(uncovered))
    }
}
