//! The phone→letter misperception model and its EM trainer.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{self, Execution};
use crate::fst::{Label, SymbolTable, Weight, Wfst, EPSILON};
use crate::textfmt::{data_lines, format_sig9, parse_f64};
use crate::{Error, Result};

/// Longest letter chunk a single phone may emit.
pub const MAX_CHUNK: usize = 4;

/// Memoryless emission model: each phone independently writes a chunk of
/// zero to [`MAX_CHUNK`] letters.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelModel {
    phones: Arc<SymbolTable>,
    letters: Arc<SymbolTable>,
    /// Indexed by phone label; entry 0 (epsilon) stays empty.
    emissions: Vec<BTreeMap<Vec<Label>, f64>>,
}

impl ChannelModel {
    /// Builds a model from `(phone, chunk, probability)` triples. Every
    /// phone that appears must have a normalized pmf.
    pub fn new(
        phones: Arc<SymbolTable>,
        letters: Arc<SymbolTable>,
        entries: impl IntoIterator<Item = (Label, Vec<Label>, f64)>,
    ) -> Result<Self> {
        let mut emissions = vec![BTreeMap::new(); phones.len()];
        for (p, chunk, prob) in entries {
            if p == EPSILON || !phones.contains(p) {
                return Err(Error::contract(format!("invalid phone label {p}")));
            }
            if chunk.len() > MAX_CHUNK || chunk.iter().any(|&l| l == EPSILON || !letters.contains(l)) {
                return Err(Error::contract(format!("invalid chunk for phone {p}")));
            }
            if !(0.0..=1.0).contains(&prob) {
                return Err(Error::contract(format!("probability {prob} out of range")));
            }
            if prob > 0.0 {
                *emissions[p as usize].entry(chunk).or_insert(0.0) += prob;
            }
        }
        let model = ChannelModel {
            phones,
            letters,
            emissions,
        };
        model.check_normalized()?;
        Ok(model)
    }

    fn check_normalized(&self) -> Result<()> {
        for (p, pmf) in self.emissions.iter().enumerate() {
            if pmf.is_empty() {
                continue;
            }
            let mass: f64 = pmf.values().sum();
            if (mass - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!(
                    "emission pmf of phone '{}' sums to {mass}",
                    self.phones.symbol(p as Label).unwrap_or("?")
                )));
            }
        }
        Ok(())
    }

    pub fn phones(&self) -> &Arc<SymbolTable> {
        &self.phones
    }

    pub fn letters(&self) -> &Arc<SymbolTable> {
        &self.letters
    }

    pub fn emission(&self, phone: Label, chunk: &[Label]) -> f64 {
        self.emissions
            .get(phone as usize)
            .and_then(|m| m.get(chunk))
            .copied()
            .unwrap_or(0.0)
    }

    /// Emission pmf of `phone`; empty if the phone never occurred in
    /// training.
    pub fn pmf(&self, phone: Label) -> &BTreeMap<Vec<Label>, f64> {
        &self.emissions[phone as usize]
    }

    /// Drops emissions below `min_prob` and renormalizes each phone's pmf.
    /// A phone keeps at least its most probable chunk.
    pub fn pruned(&self, min_prob: f64) -> Result<ChannelModel> {
        let mut entries = Vec::new();
        for (p, pmf) in self.emissions.iter().enumerate() {
            let best = pmf.values().copied().fold(0.0, f64::max);
            let kept: Vec<(&Vec<Label>, f64)> = pmf
                .iter()
                .filter(|(_, &q)| q >= min_prob || q == best)
                .map(|(c, &q)| (c, q))
                .collect();
            let mass: f64 = kept.iter().map(|e| e.1).sum();
            entries.extend(kept.into_iter().map(|(c, q)| (p as Label, c.clone(), q / mass)));
        }
        ChannelModel::new(self.phones.clone(), self.letters.clone(), entries)
    }

    /// Single looping state; a chunk of length `k > 1` is a chain whose first
    /// arc reads the phone and whose remaining arcs read epsilon.
    pub fn to_fst(&self) -> Wfst {
        let mut fst = Wfst::new(self.phones.clone(), self.letters.clone());
        let hub = fst.add_state();
        fst.set_start(hub);
        fst.set_final(hub, Weight::ONE);
        for (p, pmf) in self.emissions.iter().enumerate() {
            for (chunk, &prob) in pmf {
                let w = Weight::from_prob(prob);
                let p = p as Label;
                match chunk.len() {
                    0 => fst.add_arc(hub, p, EPSILON, w, hub),
                    1 => fst.add_arc(hub, p, chunk[0], w, hub),
                    k => {
                        let first = fst.add_states(k - 1);
                        fst.add_arc(hub, p, chunk[0], w, first);
                        for (i, &l) in chunk.iter().enumerate().skip(1) {
                            let next = if i + 1 == k { hub } else { first + i };
                            fst.add_arc(first + i - 1, EPSILON, l, Weight::ONE, next);
                        }
                    }
                }
            }
        }
        fst
    }

    /// `phone<TAB>chunk<TAB>prob` lines; chunk letters are space-separated
    /// and a deletion has an empty chunk field.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (p, pmf) in self.emissions.iter().enumerate() {
            for (chunk, prob) in pmf {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}",
                    self.phones.symbol(p as Label).unwrap(),
                    self.letters.render(chunk),
                    format_sig9(*prob)
                );
            }
        }
        out
    }

    /// Parses [`ChannelModel::to_tsv`] output. Probabilities are
    /// renormalized per phone to absorb print rounding.
    pub fn parse_tsv(
        text: &str,
        phones: Arc<SymbolTable>,
        letters: Arc<SymbolTable>,
        source_name: &str,
    ) -> Result<Self> {
        let mut entries = Vec::new();
        for (no, line) in data_lines(text) {
            let f: Vec<&str> = line.split('\t').collect();
            let [phone, chunk, prob] = f.as_slice() else {
                return Err(Error::parse(source_name, no, "expected phone<TAB>chunk<TAB>prob"));
            };
            let p = phones
                .id(phone)
                .ok_or_else(|| Error::parse(source_name, no, format!("unknown phone '{phone}'")))?;
            let syms: Vec<&str> = chunk.split_whitespace().collect();
            let chunk = letters
                .encode(&syms)
                .map_err(|e| Error::parse(source_name, no, e.to_string()))?;
            let prob = parse_f64(prob)
                .filter(|v| (0.0..=1.0).contains(v))
                .ok_or_else(|| Error::parse(source_name, no, format!("bad probability '{prob}'")))?;
            entries.push((p, chunk, prob));
        }
        let mut totals: BTreeMap<Label, f64> = BTreeMap::new();
        for (p, _, prob) in &entries {
            *totals.entry(*p).or_default() += prob;
        }
        ChannelModel::new(
            phones,
            letters,
            entries.into_iter().map(|(p, c, prob)| (p, c, prob / totals[&p])),
        )
    }
}

/// Free-function form of [`ChannelModel::to_fst`].
pub fn channel_to_fst(m: &ChannelModel) -> Wfst {
    m.to_fst()
}

#[derive(Debug, Clone, Copy)]
pub struct EmConfig {
    pub iterations: usize,
    pub seed: u64,
    pub exec: Execution,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            iterations: 25,
            seed: 0,
            exec: Execution::Parallel,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmOutcome {
    pub model: ChannelModel,
    /// Training log-likelihood evaluated at the start of each iteration,
    /// i.e. after `k` M-steps for entry `k`.
    pub log_likelihoods: Vec<f64>,
}

/// One feasible emission of a training pair: phone `i` (1-based) ends at
/// letter `j` having written `len` letters, using parameter `param`.
#[derive(Debug, Clone, Copy)]
struct Edge {
    i: usize,
    j: usize,
    len: usize,
    param: usize,
}

struct PairTrellis {
    phones: usize,
    letters: usize,
    edges: Vec<Edge>,
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

impl PairTrellis {
    /// Forward-backward pass. Returns the pair's log-likelihood and the
    /// expected count of every edge's parameter.
    fn expected_counts(&self, log_theta: &[f64]) -> (f64, Vec<(usize, f64)>) {
        let (n, m) = (self.phones, self.letters);
        let idx = |i: usize, j: usize| i * (m + 1) + j;
        let mut alpha = vec![f64::NEG_INFINITY; (n + 1) * (m + 1)];
        let mut beta = alpha.clone();
        alpha[idx(0, 0)] = 0.0;
        // Edges are sorted by (i, j), so predecessors are final before use.
        for e in &self.edges {
            let from = alpha[idx(e.i - 1, e.j - e.len)];
            alpha[idx(e.i, e.j)] = log_add(alpha[idx(e.i, e.j)], from + log_theta[e.param]);
        }
        beta[idx(n, m)] = 0.0;
        for e in self.edges.iter().rev() {
            let to = beta[idx(e.i, e.j)];
            let k = idx(e.i - 1, e.j - e.len);
            beta[k] = log_add(beta[k], to + log_theta[e.param]);
        }
        let ll = alpha[idx(n, m)];
        let counts = self
            .edges
            .iter()
            .filter_map(|e| {
                let lp = alpha[idx(e.i - 1, e.j - e.len)] + log_theta[e.param] + beta[idx(e.i, e.j)] - ll;
                (lp > f64::NEG_INFINITY).then(|| (e.param, lp.exp()))
            })
            .collect();
        (ll, counts)
    }
}

/// Trains the channel by EM over monotone phone→chunk alignments.
///
/// Every pair is `(phones, letters)`. Parameters start uniform over the
/// chunk lengths each phone can feasibly emit (and uniform within a
/// length), perturbed multiplicatively by seeded noise of size `1e-3`.
pub fn train_channel_em(
    phones: Arc<SymbolTable>,
    letters: Arc<SymbolTable>,
    pairs: &[(Vec<Label>, Vec<Label>)],
    config: &EmConfig,
) -> Result<EmOutcome> {
    if pairs.is_empty() {
        return Err(Error::contract("no training pairs"));
    }
    let mut infeasible = Vec::new();
    for (k, (ph, le)) in pairs.iter().enumerate() {
        if ph.is_empty() || le.is_empty() {
            return Err(Error::contract(format!("training pair {} has an empty side", k + 1)));
        }
        if le.len() > MAX_CHUNK * ph.len() {
            infeasible.push(format!("pair {}: {} letters for {} phones", k + 1, le.len(), ph.len()));
        }
    }
    if !infeasible.is_empty() {
        return Err(Error::Infeasible {
            max_chunk: MAX_CHUNK,
            details: infeasible.join("; "),
        });
    }

    // Enumerate parameters (phone, chunk) reachable by some alignment.
    let mut param_ids: BTreeMap<(Label, Vec<Label>), usize> = BTreeMap::new();
    let mut raw_edges = Vec::with_capacity(pairs.len());
    for (ph, le) in pairs {
        let (n, m) = (ph.len(), le.len());
        let feasible = |i: usize, j: usize| j <= MAX_CHUNK * i && m - j <= MAX_CHUNK * (n - i);
        let mut edges = Vec::new();
        for i in 1..=n {
            for j in 0..=m {
                if !feasible(i, j) {
                    continue;
                }
                for len in 0..=MAX_CHUNK.min(j) {
                    if feasible(i - 1, j - len) {
                        edges.push((i, j, len, (ph[i - 1], le[j - len..j].to_vec())));
                    }
                }
            }
        }
        for (_, _, _, key) in &edges {
            let next = param_ids.len();
            param_ids.entry(key.clone()).or_insert(next);
        }
        raw_edges.push((n, m, edges));
    }
    // Renumber parameters in key order so everything downstream is
    // independent of pair order.
    let keys: Vec<(Label, Vec<Label>)> = param_ids.keys().cloned().collect();
    for (new, key) in keys.iter().enumerate() {
        *param_ids.get_mut(key).unwrap() = new;
    }
    let trellises: Vec<PairTrellis> = raw_edges
        .into_iter()
        .map(|(n, m, edges)| PairTrellis {
            phones: n,
            letters: m,
            edges: edges
                .into_iter()
                .map(|(i, j, len, key)| Edge {
                    i,
                    j,
                    len,
                    param: param_ids[&key],
                })
                .collect(),
        })
        .collect();

    let mut theta = initial_parameters(&keys, config.seed);
    let mut log_likelihoods = Vec::with_capacity(config.iterations);
    for _ in 0..config.iterations {
        let log_theta: Vec<f64> = theta.iter().map(|t| t.ln()).collect();
        let per_pair = exec::map(&trellises, config.exec, |t| t.expected_counts(&log_theta));
        let mut counts = vec![0.0; keys.len()];
        let mut ll = 0.0;
        for (pair_ll, pair_counts) in per_pair {
            ll += pair_ll;
            for (param, c) in pair_counts {
                counts[param] += c;
            }
        }
        if !ll.is_finite() {
            return Err(Error::Numeric(format!("training log-likelihood became {ll}")));
        }
        log_likelihoods.push(ll);
        theta = normalize_by_phone(&keys, &counts);
    }

    let model = ChannelModel::new(
        phones,
        letters,
        keys.into_iter()
            .zip(theta)
            .filter(|(_, t)| *t > 0.0)
            .map(|((p, chunk), t)| (p, chunk, t)),
    )?;
    Ok(EmOutcome { model, log_likelihoods })
}

fn initial_parameters(keys: &[(Label, Vec<Label>)], seed: u64) -> Vec<f64> {
    let mut per_length: BTreeMap<(Label, usize), usize> = BTreeMap::new();
    for (p, chunk) in keys {
        *per_length.entry((*p, chunk.len())).or_default() += 1;
    }
    let mut lengths: BTreeMap<Label, usize> = BTreeMap::new();
    for (p, _) in per_length.keys() {
        *lengths.entry(*p).or_default() += 1;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = keys
        .iter()
        .map(|(p, chunk)| {
            let base = 1.0 / (lengths[p] as f64 * per_length[&(*p, chunk.len())] as f64);
            base * (1.0 + rng.gen_range(-1e-3..1e-3))
        })
        .collect();
    normalize_by_phone(keys, &raw)
}

fn normalize_by_phone(keys: &[(Label, Vec<Label>)], values: &[f64]) -> Vec<f64> {
    let mut totals: BTreeMap<Label, f64> = BTreeMap::new();
    for ((p, _), v) in keys.iter().zip(values) {
        *totals.entry(*p).or_default() += v;
    }
    keys.iter()
        .zip(values)
        .map(|((p, _), v)| if totals[p] > 0.0 { v / totals[p] } else { 0.0 })
        .collect()
}
