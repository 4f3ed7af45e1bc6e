//! Noisy-channel decoding of mismatched transcripts into phone lattices.
//!
//! Transcripts are merged into a confusion network over letters, and the
//! phone lattice scores each phone string by
//! `Pr(λ|π) Pr(π) / Pr(λ) · Pr(λ|T)`, where the letter string `λ` ranges
//! over the network.

mod confnet;
mod model;

use std::sync::Arc;

pub use confnet::{
    letter_tokens, merge_transcripts, parse_bundles, write_bundles, ConfusionNetwork, SlotOption, TranscriptBundle,
};
pub use model::{channel_to_fst, train_channel_em, ChannelModel, EmConfig, EmOutcome, MAX_CHUNK};

use crate::fst::{
    compose, same_table, shortest_path, total_weight, Label, ScoredSequence, Semiring, Side, SymbolTable, Weight, Wfst,
};
use crate::lm::BigramModel;
use crate::{Error, Result};

/// A probabilistic transcription: a weighted acceptor over phones.
#[derive(Debug, Clone)]
pub struct PtLattice {
    fst: Wfst,
}

impl PtLattice {
    pub fn new(fst: Wfst) -> Result<Self> {
        if !fst.is_acceptor() {
            return Err(Error::contract("a phone lattice must be an acceptor"));
        }
        fst.validate()?;
        Ok(PtLattice { fst })
    }

    pub fn fst(&self) -> &Wfst {
        &self.fst
    }

    pub fn into_fst(self) -> Wfst {
        self.fst
    }

    pub fn phones(&self) -> &Arc<SymbolTable> {
        self.fst.input_symbols()
    }

    pub fn is_empty(&self) -> bool {
        self.fst.is_empty()
    }

    /// Weight of one phone string, aggregated over every path spelling it
    /// (`Log` sums over letter strings and alignments, `Tropical` keeps the
    /// best one).
    pub fn string_weight(&self, phones: &[Label], semiring: Semiring) -> Result<Weight> {
        let bound = (!self.fst.is_acyclic()).then_some(4 * phones.len() + 8);
        total_weight(&self.fst, phones, phones, semiring, bound)
    }

    /// The `n` best distinct phone strings.
    pub fn nbest(&self, n: usize) -> Result<Vec<ScoredSequence>> {
        shortest_path(&self.fst, n)
    }
}

/// Options for [`decode_pt`].
#[derive(Debug, Clone, Copy, Default)]
pub struct DecodeOptions {
    /// Phone strings longer than this are pruned. Defaults to twice the
    /// number of confusion-network slots.
    pub max_phones: Option<usize>,
}

/// Acceptor for every phone string of length at most `max_len`.
fn length_limiter(phones: Arc<SymbolTable>, max_len: usize) -> Wfst {
    let mut f = Wfst::new_acceptor(phones.clone());
    f.add_states(max_len + 1);
    f.set_start(0);
    for s in 0..=max_len {
        f.set_final(s, Weight::ONE);
        if s < max_len {
            for (l, _) in phones.iter() {
                f.add_arc(s, l, l, Weight::ONE, s + 1);
            }
        }
    }
    f
}

/// Decodes a confusion network into a phone lattice.
///
/// The lattice is the input projection of
/// `limit ∘ phone_lm ∘ channel ∘ network ∘ letter_lm⁻¹`, where the letter
/// model's weights are negated to divide by `Pr(λ)`.
pub fn decode_pt(
    cn: &ConfusionNetwork,
    channel: &ChannelModel,
    letter_lm: Option<&BigramModel>,
    phone_lm: &BigramModel,
    options: DecodeOptions,
) -> Result<PtLattice> {
    if !same_table(channel.letters(), cn.letters()) {
        return Err(Error::SymbolTableMismatch(
            "channel and transcripts use different letters".into(),
        ));
    }
    if !same_table(channel.phones(), phone_lm.vocab()) {
        return Err(Error::SymbolTableMismatch(
            "phone LM vocabulary differs from channel phones".into(),
        ));
    }
    let mut letters = cn.to_fst();
    if let Some(lm) = letter_lm {
        if !same_table(lm.vocab(), cn.letters()) {
            return Err(Error::SymbolTableMismatch(
                "letter LM vocabulary differs from transcript letters".into(),
            ));
        }
        let inverse_prior = lm.to_fsa().map_weights(Weight::reciprocal);
        letters = compose(&letters, &inverse_prior)?;
    }
    let max_phones = options.max_phones.unwrap_or(2 * cn.num_slots());
    let limiter = length_limiter(channel.phones().clone(), max_phones);
    let prior = compose(&limiter, &phone_lm.to_fsa())?;
    // The network side is small, so attach it to the channel first.
    let explained = compose(&channel.to_fst(), &letters)?;
    let full = compose(&prior, &explained)?;
    if full.is_empty() {
        return Err(Error::EmptyLattice(
            "no phone string of the allowed length can produce these transcripts under the channel".into(),
        ));
    }
    PtLattice::new(full.project(Side::Input).trim())
}

/// Viterbi phone string of a lattice.
pub fn best_path_pt(pt: &PtLattice) -> Result<ScoredSequence> {
    let mut best = shortest_path(&pt.fst, 1)?;
    Ok(best.remove(0))
}

/// Most probable phone string under `semiring`. Tropical returns the best
/// single path. Log sums the paths of each string, ranking the
/// `candidates` best distinct strings by their total; a string outside that
/// shortlist is never returned.
pub fn best_string(pt: &PtLattice, semiring: Semiring, candidates: usize) -> Result<ScoredSequence> {
    match semiring {
        Semiring::Tropical => best_path_pt(pt),
        Semiring::Log => {
            let mut best: Option<ScoredSequence> = None;
            for c in pt.nbest(candidates.max(1))? {
                let w = pt.string_weight(&c.labels, Semiring::Log)?;
                let cand = ScoredSequence {
                    labels: c.labels,
                    weight: w,
                };
                let better = best
                    .as_ref()
                    .is_none_or(|b| (cand.weight.value(), &cand.labels) < (b.weight.value(), &b.labels));
                if better {
                    best = Some(cand);
                }
            }
            best.ok_or(Error::NoPath)
        }
    }
}
