//! Merging multi-annotator transcripts into a confusion network.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::fst::{Label, SymbolTable, Weight, Wfst, EPSILON};
use crate::textfmt::is_comment;
use crate::{Error, Result};

/// One utterance worth of annotator transcripts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TranscriptBundle {
    pub utterance_id: String,
    pub transcripts: Vec<String>,
}

impl TranscriptBundle {
    /// Transcripts as letter-id sequences. Whitespace is ignored.
    pub fn encode(&self, letters: &SymbolTable) -> Result<Vec<Vec<Label>>> {
        self.transcripts
            .iter()
            .map(|t| {
                let chars: Vec<String> = letter_tokens(t);
                letters.encode(&chars)
            })
            .collect()
    }

    pub fn longest_len(&self) -> usize {
        self.transcripts
            .iter()
            .map(|t| letter_tokens(t).len())
            .max()
            .unwrap_or(0)
    }
}

/// Splits a transcript into one-character letter symbols.
pub fn letter_tokens(text: &str) -> Vec<String> {
    text.chars()
        .filter(|c| !c.is_whitespace())
        .map(|c| c.to_string())
        .collect()
}

/// Parses bundles: one transcript per line, a blank line between
/// utterances. Utterances are numbered from 1 unless preceded by an
/// `# utt <id>` comment.
pub fn parse_bundles(text: &str) -> Vec<TranscriptBundle> {
    let mut out = Vec::new();
    let mut current: Vec<String> = Vec::new();
    let mut pending_id: Option<String> = None;
    let flush = |current: &mut Vec<String>, id: &mut Option<String>, out: &mut Vec<TranscriptBundle>| {
        if !current.is_empty() {
            let utterance_id = id.take().unwrap_or_else(|| (out.len() + 1).to_string());
            out.push(TranscriptBundle {
                utterance_id,
                transcripts: std::mem::take(current),
            });
        }
    };
    for line in text.lines() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            flush(&mut current, &mut pending_id, &mut out);
        } else if is_comment(line) {
            if let Some(id) = line.strip_prefix("# utt ") {
                flush(&mut current, &mut pending_id, &mut out);
                pending_id = Some(id.trim().to_string());
            }
        } else {
            current.push(line.trim().to_string());
        }
    }
    flush(&mut current, &mut pending_id, &mut out);
    out
}

pub fn write_bundles(bundles: &[TranscriptBundle]) -> String {
    let mut out = String::new();
    for (i, b) in bundles.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&format!("# utt {}\n", b.utterance_id));
        for t in &b.transcripts {
            out.push_str(t);
            out.push('\n');
        }
    }
    out
}

/// A slot option: a letter, or `None` for "nothing written here".
pub type SlotOption = Option<Label>;

/// Ordered slots, each a probability mass function over options.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionNetwork {
    letters: Arc<SymbolTable>,
    slots: Vec<Vec<(SlotOption, f64)>>,
}

impl ConfusionNetwork {
    pub fn new(letters: Arc<SymbolTable>, slots: Vec<Vec<(SlotOption, f64)>>) -> Result<Self> {
        if slots.is_empty() {
            return Err(Error::contract("confusion network needs at least one slot"));
        }
        for (i, slot) in slots.iter().enumerate() {
            let mass: f64 = slot.iter().map(|(_, p)| p).sum();
            if (mass - 1.0).abs() > 1e-9 || slot.iter().any(|(_, p)| !(*p > 0.0 && *p <= 1.0)) {
                return Err(Error::contract(format!("slot {i} is not a pmf (mass {mass})")));
            }
            if slot
                .iter()
                .any(|(o, _)| o.is_some_and(|l| l == EPSILON || !letters.contains(l)))
            {
                return Err(Error::contract(format!("slot {i} has an invalid letter")));
            }
        }
        Ok(ConfusionNetwork { letters, slots })
    }

    pub fn letters(&self) -> &Arc<SymbolTable> {
        &self.letters
    }

    pub fn slots(&self) -> &[Vec<(SlotOption, f64)>] {
        &self.slots
    }

    pub fn num_slots(&self) -> usize {
        self.slots.len()
    }

    /// Probability of `option` in slot `i` (zero if absent).
    pub fn prob(&self, i: usize, option: SlotOption) -> f64 {
        self.slots[i]
            .iter()
            .find(|(o, _)| *o == option)
            .map_or(0.0, |(_, p)| *p)
    }

    /// Sausage acceptor: state `i` precedes slot `i`; skips become
    /// epsilon arcs.
    pub fn to_fst(&self) -> Wfst {
        let mut fst = Wfst::new_acceptor(self.letters.clone());
        fst.add_states(self.slots.len() + 1);
        fst.set_start(0);
        for (i, slot) in self.slots.iter().enumerate() {
            for &(opt, p) in slot {
                let l = opt.unwrap_or(EPSILON);
                fst.add_arc(i, l, l, Weight::from_prob(p), i + 1);
            }
        }
        fst.set_final(self.slots.len(), Weight::ONE);
        fst
    }

    /// Reads back a sausage written by [`ConfusionNetwork::to_fst`]:
    /// states in a chain where every arc goes from state `i` to `i + 1`.
    pub fn from_fst(fst: &Wfst) -> Result<Self> {
        let start = fst.start().ok_or_else(|| Error::contract("empty sausage"))?;
        let mut slots = Vec::new();
        let mut state = start;
        while !fst.arcs(state).is_empty() {
            let next = fst.arcs(state)[0].next;
            let mut slot: Vec<(SlotOption, f64)> = Vec::new();
            for a in fst.arcs(state) {
                if a.next != next || a.ilabel != a.olabel {
                    return Err(Error::contract("machine is not a sausage acceptor"));
                }
                let opt = (a.ilabel != EPSILON).then_some(a.ilabel);
                slot.push((opt, a.weight.prob()));
            }
            let mass: f64 = slot.iter().map(|(_, p)| p).sum();
            for (_, p) in &mut slot {
                *p /= mass;
            }
            slots.push(slot);
            state = next;
            if slots.len() > fst.num_states() {
                return Err(Error::contract("sausage has a cycle"));
            }
        }
        ConfusionNetwork::new(fst.input_symbols().clone(), slots)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    /// Transcript letter aligned to an existing slot.
    Diagonal,
    /// Slot left uncovered by the transcript.
    Deletion,
    /// Transcript letter with no slot: a new slot is inserted.
    Insertion,
}

/// ROVER-style merge. The first transcript is the backbone; each further
/// transcript is aligned to the current slots by unit-cost edit distance,
/// where a letter matches a slot at zero cost if any earlier annotator
/// wrote it there. Ties prefer substitution, then deletion. Slot options
/// carry annotator frequencies and are pruned, least probable first, down
/// to the smallest set holding at least `prune_mass`.
pub fn merge_transcripts(
    bundle: &TranscriptBundle,
    letters: Arc<SymbolTable>,
    prune_mass: f64,
) -> Result<ConfusionNetwork> {
    if !(prune_mass > 0.0 && prune_mass <= 1.0) {
        return Err(Error::contract(format!(
            "prune_mass must be in (0, 1], got {prune_mass}"
        )));
    }
    let encoded = bundle.encode(&letters)?;
    if encoded.is_empty() || encoded.iter().all(|t| t.is_empty()) {
        return Err(Error::contract(format!(
            "utterance {} has no nonempty transcripts",
            bundle.utterance_id
        )));
    }
    let encoded: Vec<Vec<Label>> = encoded.into_iter().filter(|t| !t.is_empty()).collect();

    let mut slots: Vec<BTreeMap<SlotOption, usize>> = encoded[0]
        .iter()
        .map(|&l| BTreeMap::from([(Some(l), 1usize)]))
        .collect();
    for (k, t) in encoded.iter().enumerate().skip(1) {
        slots = align_into(slots, t, k);
    }

    let annotators = encoded.len() as f64;
    let pmfs = slots
        .into_iter()
        .map(|counts| {
            let mut opts: Vec<(SlotOption, f64)> =
                counts.into_iter().map(|(o, c)| (o, c as f64 / annotators)).collect();
            opts.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            let mut kept = Vec::new();
            let mut mass = 0.0;
            for (o, p) in opts {
                if mass >= prune_mass - 1e-12 {
                    break;
                }
                mass += p;
                kept.push((o, p));
            }
            kept.iter_mut().for_each(|(_, p)| *p /= mass);
            kept.sort_by(|a, b| a.0.cmp(&b.0));
            kept
        })
        .collect();
    ConfusionNetwork::new(letters, pmfs)
}

/// Aligns transcript `t` (the `k`-th, 0-based) into `slots` and returns the
/// updated slots.
fn align_into(slots: Vec<BTreeMap<SlotOption, usize>>, t: &[Label], k: usize) -> Vec<BTreeMap<SlotOption, usize>> {
    let (n, m) = (slots.len(), t.len());
    let sub_cost = |i: usize, j: usize| usize::from(!slots[i].contains_key(&Some(t[j])));
    let mut cost = vec![vec![0usize; m + 1]; n + 1];
    for i in 1..=n {
        cost[i][0] = i;
    }
    for j in 1..=m {
        cost[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            cost[i][j] = (cost[i - 1][j - 1] + sub_cost(i - 1, j - 1))
                .min(cost[i - 1][j] + 1)
                .min(cost[i][j - 1] + 1);
        }
    }
    let mut steps = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let step = if i > 0 && j > 0 && cost[i][j] == cost[i - 1][j - 1] + sub_cost(i - 1, j - 1) {
            Step::Diagonal
        } else if i > 0 && cost[i][j] == cost[i - 1][j] + 1 {
            Step::Deletion
        } else {
            Step::Insertion
        };
        match step {
            Step::Diagonal => {
                i -= 1;
                j -= 1;
            }
            Step::Deletion => i -= 1,
            Step::Insertion => j -= 1,
        }
        steps.push(step);
    }
    steps.reverse();

    let mut old = slots.into_iter();
    let mut letters = t.iter();
    let mut merged = Vec::with_capacity(steps.len());
    for step in steps {
        match step {
            Step::Diagonal => {
                let mut s = old.next().expect("slot");
                *s.entry(Some(*letters.next().expect("letter"))).or_default() += 1;
                merged.push(s);
            }
            Step::Deletion => {
                let mut s = old.next().expect("slot");
                *s.entry(None).or_default() += 1;
                merged.push(s);
            }
            Step::Insertion => {
                let mut s = BTreeMap::new();
                s.insert(Some(*letters.next().expect("letter")), 1);
                s.insert(None, k);
                merged.push(s);
            }
        }
    }
    merged
}
