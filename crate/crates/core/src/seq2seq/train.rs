//! Teacher-forced loss, backpropagation through time and SGD training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{run_stack, softmax, LayerSlots, Seq2SeqParams, StepCache, BOS_ID, EOS_ID};
use crate::channel::letter_tokens;
use crate::exec::{self, Execution};
use crate::textfmt::data_lines;
use crate::{Error, Result};

/// Examples per gradient chunk. Chunks are summed in a fixed order, so the
/// result does not depend on how many threads computed them.
const CHUNK: usize = 8;

/// A letter sequence paired with its phone sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Example {
    pub letters: Vec<String>,
    pub phones: Vec<String>,
}

impl Example {
    pub fn new<A: AsRef<str>, B: AsRef<str>>(letters: &[A], phones: &[B]) -> Self {
        Example {
            letters: letters.iter().map(|s| s.as_ref().to_string()).collect(),
            phones: phones.iter().map(|s| s.as_ref().to_string()).collect(),
        }
    }
}

/// `letters<TAB>space-separated phones`, one pair per line. Whitespace in
/// the letter field is ignored.
pub fn parse_dataset(text: &str, source_name: &str) -> Result<Vec<Example>> {
    let mut out = Vec::new();
    for (no, line) in data_lines(text) {
        let (l, p) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source_name, no, "expected 'letters<TAB>phones'"))?;
        let letters = letter_tokens(l);
        let phones: Vec<String> = p.split_whitespace().map(str::to_string).collect();
        if letters.is_empty() || phones.is_empty() {
            return Err(Error::parse(source_name, no, "empty letter or phone sequence"));
        }
        out.push(Example { letters, phones });
    }
    Ok(out)
}

pub fn write_dataset(data: &[Example]) -> String {
    data.iter()
        .map(|e| format!("{}\t{}\n", e.letters.concat(), e.phones.join(" ")))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingConfig {
    pub learning_rate: f64,
    /// Epochs run at `learning_rate` before switching to `decayed_rate`.
    pub decay_after: usize,
    pub decayed_rate: f64,
    pub batch_size: usize,
    /// Stop once the relative change in dev loss falls below this.
    pub convergence: f64,
    pub max_epochs: usize,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Longest letter or phone sequence accepted.
    pub max_len: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            learning_rate: 0.4,
            decay_after: 8,
            decayed_rate: 0.2,
            batch_size: 128,
            convergence: 1e-7,
            max_epochs: 50,
            clip_norm: Some(5.0),
            max_len: 64,
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

impl TrainingConfig {
    /// Learning rate for a 1-based epoch.
    pub fn rate(&self, epoch: usize) -> f64 {
        if epoch <= self.decay_after {
            self.learning_rate
        } else {
            self.decayed_rate
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.decayed_rate > 0.0) {
            return Err(Error::contract("learning rates must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub dev_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub params: Seq2SeqParams,
    pub history: Vec<EpochRecord>,
    pub converged: bool,
}

struct Encoded {
    x: Vec<usize>,
    y: Vec<usize>,
}

fn encode_all(p: &Seq2SeqParams, data: &[Example], max_len: usize) -> Result<Vec<Encoded>> {
    data.iter()
        .map(|e| {
            if e.letters.is_empty() {
                return Err(Error::contract("empty letter sequence"));
            }
            if e.letters.len() > max_len || e.phones.len() > max_len {
                return Err(Error::contract(format!(
                    "sequence longer than {max_len} symbols: {}",
                    e.letters.concat()
                )));
            }
            Ok(Encoded {
                x: p.input_vocab().encode(&e.letters)?,
                y: p.output_vocab().encode(&e.phones)?,
            })
        })
        .collect()
}

/// Backpropagates through a stack. `d_top[t]` is the gradient on the top
/// layer's output at step `t`; `dh` and `dc` hold the gradient on the final
/// states on entry and on the initial states on return. Returns gradients
/// on the first-layer inputs.
#[allow(clippy::too_many_arguments)]
fn backward_stack(
    weights: &[f64],
    slots: &[LayerSlots],
    hidden: usize,
    caches: &[Vec<StepCache>],
    d_top: &[Vec<f64>],
    dh: &mut [Vec<f64>],
    dc: &mut [Vec<f64>],
    grad: &mut [f64],
) -> Vec<Vec<f64>> {
    let h = hidden;
    let top = slots.len() - 1;
    let mut d_inputs = vec![Vec::new(); caches.len()];
    let mut dz = vec![0.0; 4 * h];
    for t in (0..caches.len()).rev() {
        let mut from_above = d_top[t].clone();
        for l in (0..=top).rev() {
            let cache = &caches[t][l];
            let s = slots[l];
            let g = &cache.gates;
            for j in 0..h {
                let dhj = dh[l][j] + from_above[j];
                let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                let tc = cache.tanh_c[j];
                let d_o = dhj * tc;
                let dcj = dc[l][j] + dhj * o * (1.0 - tc * tc);
                dc[l][j] = dcj * f;
                dz[j] = dcj * gg * i * (1.0 - i);
                dz[h + j] = dcj * cache.c_prev[j] * f * (1.0 - f);
                dz[2 * h + j] = dcj * i * (1.0 - gg * gg);
                dz[3 * h + j] = d_o * o * (1.0 - o);
            }
            let cols = s.in_dim + h;
            let mut dx = vec![0.0; cols];
            for (r, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                let row = &weights[s.w + r * cols..s.w + (r + 1) * cols];
                let grow = &mut grad[s.w + r * cols..s.w + (r + 1) * cols];
                for k in 0..cols {
                    grow[k] += d * cache.x[k];
                    dx[k] += d * row[k];
                }
                grad[s.b + r] += d;
            }
            dh[l].copy_from_slice(&dx[s.in_dim..]);
            dx.truncate(s.in_dim);
            if l > 0 {
                from_above = dx;
            } else {
                d_inputs[t] = dx;
            }
        }
    }
    d_inputs
}

/// Negative log-likelihood of one pair; accumulates its gradient into
/// `grad` when given.
fn example_loss(p: &Seq2SeqParams, ex: &Encoded, grad: Option<&mut [f64]>) -> f64 {
    let lay = p.layout();
    let (h, layers, n_out) = (lay.hidden, lay.layers, lay.n_out);
    let w = p.weights();
    let (h0, c0) = p.zero_state();
    let (enc_caches, eh, ec) = run_stack(w, lay.encoder(), h, &p.encoder_inputs(&ex.x), h0, c0);
    let ctx = eh[layers - 1].clone();

    let prevs: Vec<usize> = std::iter::once(BOS_ID).chain(ex.y.iter().copied()).collect();
    let targets: Vec<usize> = ex.y.iter().copied().chain(std::iter::once(EOS_ID)).collect();
    let dec_inputs: Vec<Vec<f64>> = prevs.iter().map(|&y| p.decoder_input(y, &ctx)).collect();
    let (dec_caches, _, _) = run_stack(w, lay.decoder(), h, &dec_inputs, eh, ec);

    let (pw, pb) = p.proj_slots();
    let pcols = lay.proj_cols();
    let mut grad = grad;
    let mut loss = 0.0;
    let mut d_top = Vec::with_capacity(targets.len());
    let mut d_ctx = vec![0.0; h];
    for (t, (&prev, &target)) in prevs.iter().zip(&targets).enumerate() {
        let cache = &dec_caches[t][layers - 1];
        let top: Vec<f64> = (0..h).map(|j| cache.gates[3 * h + j] * cache.tanh_c[j]).collect();
        let pin = p.proj_input(&top, prev, &ctx);
        let pmf = softmax(&p.logits(&pin));
        loss -= pmf[target].ln();
        if let Some(g) = grad.as_deref_mut() {
            let mut dpin = vec![0.0; pcols];
            for (r, &pr) in pmf.iter().enumerate() {
                let d = if r == target { pr - 1.0 } else { pr };
                let row = &w[pw + r * pcols..pw + (r + 1) * pcols];
                let grow = &mut g[pw + r * pcols..pw + (r + 1) * pcols];
                for k in 0..pcols {
                    grow[k] += d * pin[k];
                    dpin[k] += d * row[k];
                }
                g[pb + r] += d;
            }
            for (a, b) in d_ctx.iter_mut().zip(&dpin[h + n_out..]) {
                *a += b;
            }
            dpin.truncate(h);
            d_top.push(dpin);
        }
    }
    let Some(g) = grad else { return loss };

    let mut dh = vec![vec![0.0; h]; layers];
    let mut dc = vec![vec![0.0; h]; layers];
    let d_in = backward_stack(w, lay.decoder(), h, &dec_caches, &d_top, &mut dh, &mut dc, g);
    for d in &d_in {
        for (a, b) in d_ctx.iter_mut().zip(&d[n_out..]) {
            *a += b;
        }
    }
    for (a, b) in dh[layers - 1].iter_mut().zip(&d_ctx) {
        *a += b;
    }
    let zeros = vec![vec![0.0; h]; enc_caches.len()];
    backward_stack(w, lay.encoder(), h, &enc_caches, &zeros, &mut dh, &mut dc, g);
    loss
}

fn batch_loss_grad(p: &Seq2SeqParams, batch: &[&Encoded], exec: Execution) -> (f64, Vec<f64>) {
    let n = p.layout().len();
    let chunks: Vec<&[&Encoded]> = batch.chunks(CHUNK).collect();
    let parts = exec::map(&chunks, exec, |chunk| {
        let mut g = vec![0.0; n];
        let loss: f64 = chunk.iter().map(|ex| example_loss(p, ex, Some(&mut g))).sum();
        (loss, g)
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; n];
    for (l, g) in parts {
        total += l;
        for (a, b) in grad.iter_mut().zip(g) {
            *a += b;
        }
    }
    let scale = 1.0 / batch.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    (total * scale, grad)
}

fn mean_loss(p: &Seq2SeqParams, data: &[Encoded], exec: Execution) -> f64 {
    let chunks: Vec<&[Encoded]> = data.chunks(CHUNK).collect();
    let parts = exec::map(&chunks, exec, |c| {
        c.iter().map(|ex| example_loss(p, ex, None)).sum::<f64>()
    });
    parts.into_iter().sum::<f64>() / data.len() as f64
}

/// Mean sequence negative log-likelihood and its gradient (flat, in the
/// parameter layout).
pub fn loss_and_gradients(p: &Seq2SeqParams, batch: &[Example], config: &TrainingConfig) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::contract("empty batch"));
    }
    let enc = encode_all(p, batch, config.max_len)?;
    let refs: Vec<&Encoded> = enc.iter().collect();
    Ok(batch_loss_grad(p, &refs, config.exec))
}

/// Mean sequence negative log-likelihood.
pub fn loss(p: &Seq2SeqParams, data: &[Example], config: &TrainingConfig) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("empty dataset"));
    }
    let enc = encode_all(p, data, config.max_len)?;
    Ok(mean_loss(p, &enc, config.exec))
}

fn sgd(
    mut p: Seq2SeqParams,
    data: &[Example],
    dev: Option<&[Example]>,
    config: &TrainingConfig,
    epochs: usize,
    rate: impl Fn(usize) -> f64,
) -> Result<TrainOutcome> {
    config.validate()?;
    if data.is_empty() || dev.is_some_and(<[Example]>::is_empty) {
        return Err(Error::contract("training and dev sets must be nonempty"));
    }
    let train_set = encode_all(&p, data, config.max_len)?;
    let dev_set = dev.map(|d| encode_all(&p, d, config.max_len)).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut converged = false;
    let mut prev_dev: Option<f64> = None;
    for epoch in 1..=epochs {
        let lr = rate(epoch);
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, idx) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Encoded> = idx.iter().map(|&i| &train_set[i]).collect();
            let (l, mut g) = batch_loss_grad(&p, &batch, config.exec);
            let norm = g.iter().map(|x| x * x).sum::<f64>().sqrt();
            if !l.is_finite() || !norm.is_finite() {
                return Err(Error::Numeric(format!(
                    "training diverged at epoch {epoch}, batch {}: loss {l}, gradient norm {norm}",
                    b + 1
                )));
            }
            if let Some(clip) = config.clip_norm {
                if norm > clip {
                    g.iter_mut().for_each(|x| *x *= clip / norm);
                }
            }
            for (w, d) in p.weights_mut().iter_mut().zip(&g) {
                *w -= lr * d;
            }
            epoch_loss += l * batch.len() as f64;
        }
        let dev_loss = dev_set.as_ref().map(|d| mean_loss(&p, d, config.exec));
        if dev_loss.is_some_and(|d| !d.is_finite()) {
            return Err(Error::Numeric(format!("dev loss is not finite after epoch {epoch}")));
        }
        history.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss: epoch_loss / train_set.len() as f64,
            dev_loss,
        });
        if let (Some(prev), Some(cur)) = (prev_dev, dev_loss) {
            if ((prev - cur) / prev).abs() < config.convergence {
                converged = true;
                break;
            }
        }
        prev_dev = dev_loss;
    }
    Ok(TrainOutcome {
        params: p,
        history,
        converged,
    })
}

/// SGD with the configured schedule, seeded shuffling every epoch, stopping
/// on dev-loss convergence or after `max_epochs`.
pub fn train(p: Seq2SeqParams, data: &[Example], dev: &[Example], config: &TrainingConfig) -> Result<TrainOutcome> {
    sgd(p, data, Some(dev), config, config.max_epochs, |e| config.rate(e))
}

/// Continues training on target data at the post-schedule rate.
pub fn adapt(p: Seq2SeqParams, target: &[Example], config: &TrainingConfig, epochs: usize) -> Result<TrainOutcome> {
    if target.is_empty() {
        return Err(Error::contract("adaptation set is empty"));
    }
    if epochs == 0 {
        return Ok(TrainOutcome {
            params: p,
            history: Vec::new(),
            converged: false,
        });
    }
    sgd(p, target, None, config, epochs, |_| config.decayed_rate)
}
