//! Greedy and beam decoding, optionally fused with a phone bigram model.

use std::cmp::Ordering;
use std::sync::Arc;

use super::{DecoderState, Seq2SeqParams, BOS_ID, EOS_ID};
use crate::fst::{Label, SymbolTable, Weight, Wfst, EPSILON};
use crate::lm::BigramModel;
use crate::{Error, Result};

/// Language model added to the decoder score at every step. `Uniform` adds
/// nothing: a constant added to every hypothesis cannot change the ranking.
#[derive(Debug, Clone, Copy, Default)]
pub enum FusionLm<'a> {
    #[default]
    Uniform,
    Bigram(&'a BigramModel),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    /// Longest phone sequence considered (the end marker is extra).
    pub max_len: usize,
    pub model_weight: f64,
    pub lm_weight: f64,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam: 8,
            max_len: 64,
            model_weight: 1.0,
            lm_weight: 1.0,
        }
    }
}

/// A phone prefix with its accumulated natural-log scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub labels: Vec<usize>,
    pub model_log_prob: f64,
    pub lm_log_prob: f64,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamResult {
    pub phones: Vec<String>,
    pub hypothesis: Hypothesis,
    /// False when no hypothesis reached the end marker and the best partial
    /// one is returned instead.
    pub completed: bool,
}

/// Maps output-vocabulary indices to LM labels: `Some(None)` is the end
/// marker, `None` a phone the LM does not know.
struct LmView<'a> {
    lm: FusionLm<'a>,
    labels: Vec<Option<Option<Label>>>,
}

impl<'a> LmView<'a> {
    fn new(p: &Seq2SeqParams, lm: FusionLm<'a>) -> Self {
        let vocab = p.output_vocab();
        let labels = (0..vocab.len())
            .map(|i| match (i, lm) {
                (EOS_ID, _) => Some(None),
                (BOS_ID, _) => None,
                (_, FusionLm::Bigram(m)) => m.vocab().id(vocab.symbol(i)).map(Some),
                (_, FusionLm::Uniform) => Some(None),
            })
            .collect();
        LmView { lm, labels }
    }

    fn log_prob(&self, prev: usize, next: usize) -> f64 {
        let FusionLm::Bigram(m) = self.lm else { return 0.0 };
        let ctx = if prev == BOS_ID { Some(None) } else { self.labels[prev] };
        match (ctx, self.labels[next]) {
            (Some(c), Some(n)) => m.log_prob(c, n),
            _ => f64::NEG_INFINITY,
        }
    }
}

struct Live {
    hyp: Hypothesis,
    state: DecoderState,
}

fn better(a: &Hypothesis, b: &Hypothesis) -> Ordering {
    b.score.total_cmp(&a.score).then_with(|| a.labels.cmp(&b.labels))
}

/// Beam search over phone prefixes scored by
/// `model_weight · log Pr(y|x) + lm_weight · log Pr_LM(y)`, both sums
/// including the end marker. Ties go to the lexicographically smaller
/// label sequence.
pub fn beam_decode_with_lm<S: AsRef<str>>(
    p: &Seq2SeqParams,
    input: &[S],
    lm: FusionLm<'_>,
    config: &BeamConfig,
) -> Result<BeamResult> {
    if config.beam == 0 {
        return Err(Error::contract("beam width must be at least 1"));
    }
    let state = super::initial_state(p, input)?;
    let view = LmView::new(p, lm);
    let root = Hypothesis {
        labels: Vec::new(),
        model_log_prob: 0.0,
        lm_log_prob: 0.0,
        score: 0.0,
    };
    let mut live = vec![Live { hyp: root, state }];
    let mut completed: Vec<Hypothesis> = Vec::new();

    for step in 0..=config.max_len {
        let mut cands: Vec<(Hypothesis, usize)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (parent, h) in live.iter().enumerate() {
            let prev = h.hyp.labels.last().copied().unwrap_or(BOS_ID);
            let (next_state, pmf) = p.step_ids(&h.state, prev);
            states.push(next_state);
            for (k, &pk) in pmf.iter().enumerate().skip(EOS_ID) {
                if step == config.max_len && k != EOS_ID {
                    continue;
                }
                let model = h.hyp.model_log_prob + pk.ln();
                let lmlp = h.hyp.lm_log_prob + view.log_prob(prev, k);
                let score = config.model_weight * model + config.lm_weight * lmlp;
                if score == f64::NEG_INFINITY || score.is_nan() {
                    continue;
                }
                let mut labels = h.hyp.labels.clone();
                labels.push(k);
                cands.push((
                    Hypothesis {
                        labels,
                        model_log_prob: model,
                        lm_log_prob: lmlp,
                        score,
                    },
                    parent,
                ));
            }
        }
        cands.sort_by(|a, b| better(&a.0, &b.0));
        cands.truncate(config.beam);
        let mut next_live = Vec::new();
        for (mut hyp, parent) in cands {
            if hyp.labels.last() == Some(&EOS_ID) {
                hyp.labels.pop();
                completed.push(hyp);
            } else {
                next_live.push(Live {
                    hyp,
                    state: states[parent].clone(),
                });
            }
        }
        if next_live.is_empty() {
            live = next_live;
            break;
        }
        // Scores never increase, so a finished hypothesis that beats every
        // live one is final.
        let best_done = completed.iter().map(|h| h.score).fold(f64::NEG_INFINITY, f64::max);
        let best_live = next_live.iter().map(|l| l.hyp.score).fold(f64::NEG_INFINITY, f64::max);
        live = next_live;
        if best_done > best_live {
            break;
        }
    }

    let vocab = p.output_vocab();
    if let Some(best) = completed.into_iter().min_by(better) {
        return Ok(BeamResult {
            phones: vocab.decode(&best.labels),
            hypothesis: best,
            completed: true,
        });
    }
    let best = live
        .into_iter()
        .map(|l| l.hyp)
        .min_by(better)
        .ok_or_else(|| Error::contract("beam search found no hypothesis with nonzero probability"))?;
    Ok(BeamResult {
        phones: vocab.decode(&best.labels),
        hypothesis: best,
        completed: false,
    })
}

/// Picks the most probable symbol at every step until the end marker or
/// `max_len` phones. Returns the phone indices, their log-probability
/// (including the end marker when reached), and the per-step pmfs.
fn greedy(p: &Seq2SeqParams, input: &[usize], max_len: usize) -> (Vec<usize>, f64, Vec<Vec<f64>>) {
    let mut state = p.encode_ids(input);
    let mut prev = BOS_ID;
    let mut out = Vec::new();
    let mut pmfs = Vec::new();
    let mut lp = 0.0;
    while out.len() < max_len {
        let (next, pmf) = p.step_ids(&state, prev);
        let k = (EOS_ID..pmf.len()).fold(EOS_ID, |best, k| if pmf[k] > pmf[best] { k } else { best });
        lp += pmf[k].ln();
        pmfs.push(pmf);
        if k == EOS_ID {
            break;
        }
        out.push(k);
        state = next;
        prev = k;
    }
    (out, lp, pmfs)
}

/// Greedy decode; returns the phones and their log-probability.
pub fn greedy_decode<S: AsRef<str>>(p: &Seq2SeqParams, input: &[S], max_len: usize) -> Result<(Vec<String>, f64)> {
    if input.is_empty() {
        return Err(Error::contract("encoder input is empty"));
    }
    let ids = p.input_vocab().encode(input)?;
    let (out, lp, _) = greedy(p, &ids, max_len);
    Ok((p.output_vocab().decode(&out), lp))
}

/// Sausage of the decoder's distributions along its greedy path: one slot
/// per step, one arc per phone weighted `-ln p`, and an epsilon arc carrying
/// the end-marker probability. Phones are labelled through `phones`.
pub fn output_distributions_to_fst<S: AsRef<str>>(
    p: &Seq2SeqParams,
    input: &[S],
    max_len: usize,
    phones: &Arc<SymbolTable>,
) -> Result<Wfst> {
    if input.is_empty() {
        return Err(Error::contract("encoder input is empty"));
    }
    let vocab = p.output_vocab();
    let labels = phones.encode(vocab.symbols())?;
    let ids = p.input_vocab().encode(input)?;
    let (_, _, pmfs) = greedy(p, &ids, max_len);
    let mut fst = Wfst::new_acceptor(phones.clone());
    let mut s = fst.add_state();
    fst.set_start(s);
    for pmf in &pmfs {
        let t = fst.add_state();
        fst.add_arc(s, EPSILON, EPSILON, Weight::from_prob(pmf[EOS_ID]), t);
        for (k, &l) in labels.iter().enumerate() {
            fst.add_arc(s, l, l, Weight::from_prob(pmf[k + 2]), t);
        }
        s = t;
    }
    fst.set_final(s, Weight::ONE);
    Ok(fst)
}
