//! LSTM encoder-decoder from mismatched letter sequences to phone
//! sequences.
//!
//! All parameters live in one flat vector; [`Layout`] records where each
//! tensor starts. LSTM weight matrices are row-major with the four gate
//! blocks stacked in the order input, forget, cell, output, and columns
//! ordered `[layer input; previous hidden]`.
//!
//! The encoder reads the letters reversed, followed by the end marker.
//! The decoder starts from the encoder's final per-layer states, and its
//! first layer sees `[one-hot previous phone; context]` at every step,
//! where the context is the encoder's final top-layer hidden state. The
//! output projection reads `[top hidden; one-hot previous phone; context]`.

mod checkpoint;
mod decode;
mod train;

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

pub use checkpoint::{parse_checkpoint, write_checkpoint};
pub use decode::{
    beam_decode_with_lm, greedy_decode, output_distributions_to_fst, BeamConfig, BeamResult, FusionLm, Hypothesis,
};
pub use train::{
    adapt, loss, loss_and_gradients, parse_dataset, train, write_dataset, EpochRecord, Example, TrainOutcome,
    TrainingConfig,
};

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
/// Index of the start marker in every vocabulary.
pub const BOS_ID: usize = 0;
/// Index of the end marker in every vocabulary.
pub const EOS_ID: usize = 1;

/// Symbols plus the two markers, which always occupy indices 0 and 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    symbols: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut v = Vocab {
            symbols: Vec::new(),
            index: HashMap::new(),
        };
        for m in [BOS, EOS] {
            v.index.insert(m.to_string(), v.symbols.len());
            v.symbols.push(m.to_string());
        }
        for s in symbols.into_iter().map(Into::into) {
            if s.is_empty() || s.contains(char::is_whitespace) || s == BOS || s == EOS {
                return Err(Error::contract(format!("invalid vocabulary symbol {s:?}")));
            }
            if !v.index.contains_key(&s) {
                v.index.insert(s.clone(), v.symbols.len());
                v.symbols.push(s);
            }
        }
        if v.symbols.len() < 3 {
            return Err(Error::contract(
                "vocabulary needs at least one symbol besides the markers",
            ));
        }
        Ok(v)
    }

    /// Vocabulary of every symbol in the sequences, in sorted order.
    pub fn from_sequences<'a>(seqs: impl IntoIterator<Item = &'a Vec<String>>) -> Result<Self> {
        let set: std::collections::BTreeSet<&String> = seqs.into_iter().flatten().collect();
        Vocab::new(set.into_iter().cloned())
    }

    /// Size including markers.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn id(&self, s: &str) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn symbol(&self, i: usize) -> &str {
        &self.symbols[i]
    }

    /// Non-marker symbols in index order.
    pub fn symbols(&self) -> &[String] {
        &self.symbols[2..]
    }

    pub fn encode<S: AsRef<str>>(&self, seq: &[S]) -> Result<Vec<usize>> {
        let mut unknown: Vec<String> = seq
            .iter()
            .map(AsRef::as_ref)
            .filter(|s| self.id(s).is_none_or(|i| i < 2))
            .map(str::to_string)
            .collect();
        if !unknown.is_empty() {
            unknown.sort();
            unknown.dedup();
            return Err(Error::UnknownSymbols(unknown));
        }
        Ok(seq.iter().map(|s| self.index[s.as_ref()]).collect())
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter().map(|&i| self.symbols[i].clone()).collect()
    }
}

/// Offsets of every tensor in the flat parameter vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub hidden: usize,
    pub layers: usize,
    pub n_in: usize,
    pub n_out: usize,
    encoder: Vec<LayerSlots>,
    decoder: Vec<LayerSlots>,
    proj_w: usize,
    proj_b: usize,
    total: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct LayerSlots {
    pub w: usize,
    pub b: usize,
    pub in_dim: usize,
}

/// A named tensor view: `(name, rows, cols, offset)`.
pub type TensorInfo = (String, usize, usize, usize);

impl Layout {
    pub fn new(n_in: usize, n_out: usize, hidden: usize, layers: usize) -> Self {
        assert!(hidden >= 1 && layers >= 1);
        let mut total = 0;
        let mut stack = |first_in: usize| -> Vec<LayerSlots> {
            (0..layers)
                .map(|l| {
                    let in_dim = if l == 0 { first_in } else { hidden };
                    let w = total;
                    total += 4 * hidden * (in_dim + hidden);
                    let b = total;
                    total += 4 * hidden;
                    LayerSlots { w, b, in_dim }
                })
                .collect()
        };
        let encoder = stack(n_in);
        let decoder = stack(n_out + hidden);
        let proj_w = total;
        total += n_out * (2 * hidden + n_out);
        let proj_b = total;
        total += n_out;
        Layout {
            hidden,
            layers,
            n_in,
            n_out,
            encoder,
            decoder,
            proj_w,
            proj_b,
            total,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn proj_cols(&self) -> usize {
        2 * self.hidden + self.n_out
    }

    pub(crate) fn encoder(&self) -> &[LayerSlots] {
        &self.encoder
    }

    pub(crate) fn decoder(&self) -> &[LayerSlots] {
        &self.decoder
    }

    /// Every tensor in storage order.
    pub fn tensors(&self) -> Vec<TensorInfo> {
        let h = self.hidden;
        let mut out = Vec::new();
        for (name, stack) in [("encoder", &self.encoder), ("decoder", &self.decoder)] {
            for (l, s) in stack.iter().enumerate() {
                out.push((format!("{name}.{l}.w"), 4 * h, s.in_dim + h, s.w));
                out.push((format!("{name}.{l}.b"), 4 * h, 1, s.b));
            }
        }
        out.push(("proj.w".into(), self.n_out, self.proj_cols(), self.proj_w));
        out.push(("proj.b".into(), self.n_out, 1, self.proj_b));
        out
    }
}

/// Network parameters with their vocabularies.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqParams {
    input_vocab: Vocab,
    output_vocab: Vocab,
    layout: Layout,
    weights: Vec<f64>,
}

impl Seq2SeqParams {
    pub fn from_weights(
        input_vocab: Vocab,
        output_vocab: Vocab,
        hidden: usize,
        layers: usize,
        weights: Vec<f64>,
    ) -> Result<Self> {
        let layout = Layout::new(input_vocab.len(), output_vocab.len(), hidden, layers);
        if weights.len() != layout.len() {
            return Err(Error::contract(format!(
                "expected {} parameters, got {}",
                layout.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite()) {
            return Err(Error::Numeric(format!("parameter {i} is not finite")));
        }
        Ok(Seq2SeqParams {
            input_vocab,
            output_vocab,
            layout,
            weights,
        })
    }

    pub fn input_vocab(&self) -> &Vocab {
        &self.input_vocab
    }

    pub fn output_vocab(&self) -> &Vocab {
        &self.output_vocab
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn hidden(&self) -> usize {
        self.layout.hidden
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Row-major view of a named tensor with its shape.
    pub fn tensor(&self, name: &str) -> Option<(usize, usize, &[f64])> {
        self.layout
            .tensors()
            .into_iter()
            .find(|t| t.0 == name)
            .map(|(_, r, c, off)| (r, c, &self.weights[off..off + r * c]))
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().all(|w| w.is_finite())
    }
}

/// Architecture and initialization settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    pub hidden: usize,
    pub layers: usize,
    pub init_range: f64,
    pub forget_bias: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 100,
            layers: 2,
            init_range: 0.1,
            forget_bias: 1.0,
        }
    }
}

/// Weights uniform in `[-range, range]` from a seeded generator; biases zero
/// except the forget gates.
pub fn init_params(input_vocab: Vocab, output_vocab: Vocab, config: &ModelConfig, seed: u64) -> Seq2SeqParams {
    let layout = Layout::new(input_vocab.len(), output_vocab.len(), config.hidden, config.layers);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut weights = vec![0.0; layout.len()];
    let r = config.init_range;
    let h = config.hidden;
    for (name, rows, cols, off) in layout.tensors() {
        let t = &mut weights[off..off + rows * cols];
        if name.ends_with(".w") {
            for w in t.iter_mut() {
                *w = rng.gen_range(-r..=r);
            }
        } else if name != "proj.b" {
            t[h..2 * h].fill(config.forget_bias);
        }
    }
    Seq2SeqParams {
        input_vocab,
        output_vocab,
        layout,
        weights,
    }
}

/// Per-layer hidden and cell vectors plus the encoder context.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState {
    pub h: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub context: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cached activations of one LSTM cell application.
#[derive(Debug, Clone)]
pub(crate) struct StepCache {
    /// `[input; previous hidden]`.
    pub x: Vec<f64>,
    /// Activated gates, `[i; f; g; o]`.
    pub gates: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

/// `out[r] = bias[r] + W[r]·x` for a row-major `W`.
pub(crate) fn affine(w: &[f64], bias: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = bias[r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// One cell application; returns the cache, the new hidden and cell state.
pub(crate) fn lstm_cell(
    weights: &[f64],
    slots: LayerSlots,
    hidden: usize,
    input: &[f64],
    h_prev: &[f64],
    c_prev: &[f64],
) -> (StepCache, Vec<f64>, Vec<f64>) {
    let cols = slots.in_dim + hidden;
    let mut x = Vec::with_capacity(cols);
    x.extend_from_slice(input);
    x.extend_from_slice(h_prev);
    let w = &weights[slots.w..slots.w + 4 * hidden * cols];
    let b = &weights[slots.b..slots.b + 4 * hidden];
    let mut gates = vec![0.0; 4 * hidden];
    affine(w, b, &x, &mut gates);
    for (k, z) in gates.iter_mut().enumerate() {
        *z = if (2 * hidden..3 * hidden).contains(&k) {
            z.tanh()
        } else {
            sigmoid(*z)
        };
    }
    let mut c = vec![0.0; hidden];
    let mut h = vec![0.0; hidden];
    let mut tanh_c = vec![0.0; hidden];
    for j in 0..hidden {
        let (i, f, g, o) = (
            gates[j],
            gates[hidden + j],
            gates[2 * hidden + j],
            gates[3 * hidden + j],
        );
        c[j] = f * c_prev[j] + i * g;
        tanh_c[j] = c[j].tanh();
        h[j] = o * tanh_c[j];
    }
    let cache = StepCache {
        x,
        gates,
        c_prev: c_prev.to_vec(),
        tanh_c,
    };
    (cache, h, c)
}

/// Runs a stack over a sequence of first-layer inputs. Returns per-step,
/// per-layer caches and the final states.
pub(crate) fn run_stack(
    weights: &[f64],
    slots: &[LayerSlots],
    hidden: usize,
    inputs: &[Vec<f64>],
    mut h: Vec<Vec<f64>>,
    mut c: Vec<Vec<f64>>,
) -> (Vec<Vec<StepCache>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut caches = Vec::with_capacity(inputs.len());
    for input in inputs {
        let mut step = Vec::with_capacity(slots.len());
        let mut below = input.clone();
        for (l, &s) in slots.iter().enumerate() {
            let (cache, hn, cn) = lstm_cell(weights, s, hidden, &below, &h[l], &c[l]);
            step.push(cache);
            below = hn.clone();
            h[l] = hn;
            c[l] = cn;
        }
        caches.push(step);
    }
    (caches, h, c)
}

pub(crate) fn one_hot(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}

impl Seq2SeqParams {
    pub(crate) fn encoder_inputs(&self, input: &[usize]) -> Vec<Vec<f64>> {
        let n = self.layout.n_in;
        input
            .iter()
            .rev()
            .chain(std::iter::once(&EOS_ID))
            .map(|&i| one_hot(n, i))
            .collect()
    }

    pub(crate) fn zero_state(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let z = vec![vec![0.0; self.layout.hidden]; self.layout.layers];
        (z.clone(), z)
    }

    /// Encoder run on label indices, giving the decoder's initial state.
    pub fn encode_ids(&self, input: &[usize]) -> DecoderState {
        let (h0, c0) = self.zero_state();
        let inputs = self.encoder_inputs(input);
        let (_, h, c) = run_stack(&self.weights, &self.layout.encoder, self.layout.hidden, &inputs, h0, c0);
        let context = h[self.layout.layers - 1].clone();
        DecoderState { h, c, context }
    }

    pub(crate) fn decoder_input(&self, y_prev: usize, context: &[f64]) -> Vec<f64> {
        let mut x = one_hot(self.layout.n_out, y_prev);
        x.extend_from_slice(context);
        x
    }

    pub(crate) fn proj_input(&self, top: &[f64], y_prev: usize, context: &[f64]) -> Vec<f64> {
        let mut x = top.to_vec();
        x.extend(one_hot(self.layout.n_out, y_prev));
        x.extend_from_slice(context);
        x
    }

    pub(crate) fn logits(&self, proj_in: &[f64]) -> Vec<f64> {
        let l = &self.layout;
        let w = &self.weights[l.proj_w..l.proj_w + l.n_out * l.proj_cols()];
        let b = &self.weights[l.proj_b..l.proj_b + l.n_out];
        let mut out = vec![0.0; l.n_out];
        affine(w, b, proj_in, &mut out);
        // The start marker is never emitted.
        out[BOS_ID] = f64::NEG_INFINITY;
        out
    }

    pub(crate) fn proj_slots(&self) -> (usize, usize) {
        (self.layout.proj_w, self.layout.proj_b)
    }

    /// One decoder step on label indices.
    pub fn step_ids(&self, state: &DecoderState, y_prev: usize) -> (DecoderState, Vec<f64>) {
        let input = self.decoder_input(y_prev, &state.context);
        let (_, h, c) = run_stack(
            &self.weights,
            &self.layout.decoder,
            self.layout.hidden,
            std::slice::from_ref(&input),
            state.h.clone(),
            state.c.clone(),
        );
        let pin = self.proj_input(&h[self.layout.layers - 1], y_prev, &state.context);
        let pmf = softmax(&self.logits(&pin));
        (
            DecoderState {
                h,
                c,
                context: state.context.clone(),
            },
            pmf,
        )
    }
}

/// Context vector of `input` (letters).
pub fn encode<S: AsRef<str>>(p: &Seq2SeqParams, input: &[S]) -> Result<Vec<f64>> {
    if input.is_empty() {
        return Err(Error::contract("encoder input is empty"));
    }
    let ids = p.input_vocab.encode(input)?;
    Ok(p.encode_ids(&ids).context)
}

/// Initial decoder state for `input` (letters).
pub fn initial_state<S: AsRef<str>>(p: &Seq2SeqParams, input: &[S]) -> Result<DecoderState> {
    if input.is_empty() {
        return Err(Error::contract("encoder input is empty"));
    }
    let ids = p.input_vocab.encode(input)?;
    Ok(p.encode_ids(&ids))
}

/// Advances the decoder by one step after emitting `y_prev` (a phone or a
/// marker) and returns the distribution over output symbols, indexed as in
/// the output vocabulary.
pub fn decoder_step(p: &Seq2SeqParams, state: &DecoderState, y_prev: &str) -> Result<(DecoderState, Vec<f64>)> {
    let y = p
        .output_vocab
        .id(y_prev)
        .ok_or_else(|| Error::UnknownSymbols(vec![y_prev.to_string()]))?;
    Ok(p.step_ids(state, y))
}

#[cfg(test)]
mod tests;
