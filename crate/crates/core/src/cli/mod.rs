//! The `ptforge` command line. Each subcommand reads module file formats,
//! calls one library operation and writes new files.

mod demo;

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::channel::{
    best_string, decode_pt, merge_transcripts, parse_bundles, train_channel_em, ChannelModel, ConfusionNetwork,
    DecodeOptions, EmConfig, PtLattice,
};
use crate::constraints::{
    constrain_phoneme_inventory, g2p_to_fst, grapheme_table, parse_g2p_rules, G2PRuleSet, LexiconConstraint,
    PhoneInventory, PronDict, WordList,
};
use crate::eval::{pair_utterances, parse_utterances, phone_error_rate, score_report, SystemScore};
use crate::exec::{self, Execution};
use crate::fst::{parse_att, write_att, Semiring, SymbolTable, Wfst};
use crate::lm::{parse_corpus, train_bigram, words_to_phones, BigramModel, Smoothing};
use crate::seq2seq::{
    adapt, beam_decode_with_lm, init_params, output_distributions_to_fst, parse_checkpoint, parse_dataset, train,
    write_checkpoint, BeamConfig, FusionLm, ModelConfig, TrainingConfig, Vocab,
};
use crate::textfmt::data_lines;
use crate::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(
    name = "ptforge",
    version,
    about = "Probabilistic phone transcriptions from mismatched transcripts"
)]
pub struct Cli {
    /// Random seed (falls back to PTFORGE_SEED, then 0).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for data-parallel steps (0 = one per core).
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Run every data-parallel step sequentially.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// JSON config file; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Merge annotator transcripts into confusion networks.
    Merge(MergeArgs),
    /// Train the phone-to-letter channel by EM.
    TrainChannel(TrainChannelArgs),
    /// Decode confusion networks into phone lattices.
    DecodePt(DecodePtArgs),
    /// Apply a language constraint to phone lattices.
    Constrain(ConstrainArgs),
    /// Train a bigram language model.
    LmTrain(LmTrainArgs),
    /// Compile G2P rules into a transducer.
    G2pCompile(G2pCompileArgs),
    /// Train the encoder-decoder.
    Seq2seqTrain(Seq2seqTrainArgs),
    /// Adapt a trained encoder-decoder to new pairs.
    Seq2seqAdapt(Seq2seqAdaptArgs),
    /// Beam-decode transcripts with the encoder-decoder.
    Seq2seqDecode(Seq2seqDecodeArgs),
    /// Phone error rate of one or more hypothesis files.
    Score(ScoreArgs),
    /// End-to-end run on bundled synthetic fixtures.
    Demo(DemoArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Merge(_) => "merge",
            Command::TrainChannel(_) => "train-channel",
            Command::DecodePt(_) => "decode-pt",
            Command::Constrain(_) => "constrain",
            Command::LmTrain(_) => "lm-train",
            Command::G2pCompile(_) => "g2p-compile",
            Command::Seq2seqTrain(_) => "seq2seq-train",
            Command::Seq2seqAdapt(_) => "seq2seq-adapt",
            Command::Seq2seqDecode(_) => "seq2seq-decode",
            Command::Score(_) => "score",
            Command::Demo(_) => "demo",
        }
    }
}

#[derive(Debug, Args, Clone)]
pub struct MergeArgs {
    /// Transcript bundles: one transcript per line, blank line between utterances.
    #[arg(long)]
    pub transcripts: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub prune_mass: f64,
    /// Letter table to use instead of the letters seen in the transcripts.
    #[arg(long)]
    pub letters: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct TrainChannelArgs {
    /// Training pairs, `letters<TAB>phones`.
    #[arg(long)]
    pub pairs: PathBuf,
    /// Output channel TSV.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 25)]
    pub iterations: usize,
    /// Emissions below this probability are dropped after training.
    #[arg(long, default_value_t = 1e-6)]
    pub min_prob: f64,
}

#[derive(Debug, Args, Clone)]
pub struct DecodePtArgs {
    /// Directory written by `merge`.
    #[arg(long)]
    pub confnets: PathBuf,
    #[arg(long)]
    pub channel: PathBuf,
    /// Phone bigram model; its vocabulary is the phone table.
    #[arg(long)]
    pub phone_lm: PathBuf,
    /// Letter bigram model dividing out the letter prior.
    #[arg(long)]
    pub letter_lm: Option<PathBuf>,
    /// Longest phone string kept (default: twice the longest transcript).
    #[arg(long)]
    pub max_phones: Option<usize>,
    #[arg(long, default_value = "tropical")]
    pub semiring: Semiring,
    /// Distinct strings rescored when picking the log-semiring 1-best.
    #[arg(long, default_value_t = 20)]
    pub candidates: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConstraintKind {
    Inventory,
    G2p,
    #[value(name = "g2p+dict")]
    G2pDict,
    Wlm,
}

#[derive(Debug, Args, Clone)]
pub struct ConstrainArgs {
    /// Directory written by `decode-pt` or `constrain`.
    #[arg(long)]
    pub lattices: PathBuf,
    #[arg(long, value_enum)]
    pub constraint: ConstraintKind,
    /// Phone inventory, one phone per line (default: phones of --rules).
    #[arg(long)]
    pub inventory: Option<PathBuf>,
    #[arg(long)]
    pub rules: Option<PathBuf>,
    #[arg(long)]
    pub words: Option<PathBuf>,
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Word bigram model for `wlm`.
    #[arg(long)]
    pub word_lm: Option<PathBuf>,
    /// Treat the word LM as an unweighted filter.
    #[arg(long)]
    pub discount_lm: bool,
    /// Copy the input lattice when the constraint removes every path.
    #[arg(long)]
    pub keep_on_empty: bool,
    #[arg(long, default_value = "tropical")]
    pub semiring: Semiring,
    #[arg(long, default_value_t = 20)]
    pub candidates: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct LmTrainArgs {
    /// One sequence per line, space-separated symbols.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// `witten-bell` or `add-k:<k>`.
    #[arg(long, default_value = "witten-bell")]
    pub smoothing: String,
    /// Symbol table or one symbol per line; defaults to the corpus symbols.
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Pronounce a word corpus with this dictionary before training.
    #[arg(long)]
    pub dict: Option<PathBuf>,
    /// Rules pronouncing words missing from --dict.
    #[arg(long)]
    pub rules: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct G2pCompileArgs {
    #[arg(long)]
    pub rules: PathBuf,
    /// Phone table (default: phones used by the rules).
    #[arg(long)]
    pub phones: Option<PathBuf>,
    /// Words whose characters extend the grapheme table.
    #[arg(long)]
    pub words: Option<PathBuf>,
    /// Output AT&T file; symbol tables go next to it as .isyms/.osyms.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Clone)]
pub struct Seq2seqTrainArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub dev: PathBuf,
    /// Output checkpoint.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 50)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.4)]
    pub lr: f64,
    /// Last epoch at --lr.
    #[arg(long, default_value_t = 8)]
    pub lr_decay_epoch: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lr_decayed: f64,
    #[arg(long, default_value_t = 100)]
    pub hidden: usize,
    #[arg(long, default_value_t = 2)]
    pub layers: usize,
    #[arg(long, default_value_t = 0.1)]
    pub init_range: f64,
    /// Gradient norm cap; 0 disables clipping.
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub convergence: f64,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
}

#[derive(Debug, Args, Clone)]
pub struct Seq2seqAdaptArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Target-language pairs.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub epochs: usize,
    #[arg(long, default_value_t = 128)]
    pub batch: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lr: f64,
    #[arg(long, default_value_t = 5.0)]
    pub clip: f64,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
}

#[derive(Debug, Args, Clone)]
pub struct Seq2seqDecodeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// One transcript per line.
    #[arg(long)]
    pub input: PathBuf,
    /// Output phone strings, one per line.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub beam: usize,
    /// Phone bigram model fused at every step.
    #[arg(long)]
    pub lm: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    pub lm_weight: f64,
    #[arg(long, default_value_t = 64)]
    pub max_len: usize,
    /// Also write each line's output distributions as a sausage lattice here.
    #[arg(long)]
    pub lattices: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct ScoreArgs {
    /// Hypothesis file; repeat to compare systems (the first is the baseline).
    #[arg(long, required = true)]
    pub hyp: Vec<PathBuf>,
    #[arg(long = "ref")]
    pub reference: PathBuf,
    /// System names, in --hyp order.
    #[arg(long)]
    pub name: Vec<String>,
    /// Also write the report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Clone)]
pub struct DemoArgs {
    /// Working directory for fixtures and intermediate files.
    #[arg(long, default_value = "ptforge-demo")]
    pub out: PathBuf,
}

/// Per-invocation state shared by the subcommands.
pub struct Context {
    pub seed: u64,
    pub exec: Execution,
    subcommand: &'static str,
    inputs: BTreeSet<PathBuf>,
}

impl Context {
    pub fn new(seed: u64, exec: Execution) -> Self {
        Context {
            seed,
            exec,
            subcommand: "",
            inputs: BTreeSet::new(),
        }
    }

    fn header(&self) -> String {
        format!(
            "# ptforge {VERSION} subcommand={} seed={}\n",
            self.subcommand, self.seed
        )
    }

    fn read(&mut self, path: &Path) -> Result<String> {
        self.inputs.insert(canonical(path));
        fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))
    }

    fn check_output(&self, path: &Path) -> Result<()> {
        if self.inputs.contains(&canonical(path)) {
            return Err(Error::contract(format!(
                "refusing to overwrite input {}",
                path.display()
            )));
        }
        Ok(())
    }

    /// Writes `body` after the provenance header.
    fn write(&self, path: &Path, body: &str) -> Result<()> {
        self.check_output(path)?;
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        }
        let text = format!("{}{body}", self.header());
        fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
    }

    fn make_dir(&self, dir: &Path) -> Result<()> {
        self.check_output(dir)?;
        fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
    }
}

fn canonical(p: &Path) -> PathBuf {
    if let Ok(c) = fs::canonicalize(p) {
        return c;
    }
    // Not created yet: resolve the parent instead.
    match (p.parent(), p.file_name()) {
        (Some(dir), Some(name)) if !dir.as_os_str().is_empty() => fs::canonicalize(dir)
            .map(|d| d.join(name))
            .unwrap_or_else(|_| p.to_path_buf()),
        _ => std::env::current_dir()
            .map(|d| d.join(p))
            .unwrap_or_else(|_| p.to_path_buf()),
    }
}

fn name(p: &Path) -> String {
    p.display().to_string()
}

/// Reads a symbol table file, or a plain list with one symbol per line.
fn load_symbols(ctx: &mut Context, path: &Path) -> Result<Arc<SymbolTable>> {
    let text = ctx.read(path)?;
    if data_lines(&text).any(|(_, l)| l.contains('\t')) {
        return Ok(SymbolTable::parse(&text, &name(path))?.shared());
    }
    Ok(SymbolTable::from_symbols(data_lines(&text).map(|(_, l)| l.trim()).filter(|l| !l.is_empty())).shared())
}

fn sorted_table<'a>(symbols: impl IntoIterator<Item = &'a str>) -> Arc<SymbolTable> {
    let set: BTreeSet<&str> = symbols.into_iter().collect();
    SymbolTable::from_symbols(set).shared()
}

/// Phones named on the right-hand side of a rules or dictionary file.
fn phones_in_tsv(text: &str) -> Arc<SymbolTable> {
    sorted_table(
        data_lines(text)
            .filter_map(|(_, l)| l.split_once('\t'))
            .flat_map(|(_, p)| p.split_whitespace()),
    )
}

/// A lattice directory: symbol table, `index.tsv` and one `<id>.fst` each.
struct LatticeDir {
    symbols: Arc<SymbolTable>,
    entries: Vec<(String, usize)>,
}

const INDEX: &str = "index.tsv";

fn read_index(ctx: &mut Context, dir: &Path) -> Result<Vec<(String, usize)>> {
    let path = dir.join(INDEX);
    let text = ctx.read(&path)?;
    data_lines(&text)
        .map(|(no, l)| {
            let (id, len) = l
                .split_once('\t')
                .ok_or_else(|| Error::parse(name(&path), no, "expected 'id<TAB>length'"))?;
            let len = len
                .trim()
                .parse()
                .map_err(|_| Error::parse(name(&path), no, format!("bad length '{len}'")))?;
            Ok((id.to_string(), len))
        })
        .collect()
}

fn write_index(ctx: &Context, dir: &Path, entries: &[(String, usize)]) -> Result<()> {
    let body: String = entries.iter().map(|(id, n)| format!("{id}\t{n}\n")).collect();
    ctx.write(&dir.join(INDEX), &body)
}

fn read_lattice_dir(ctx: &mut Context, dir: &Path, syms_file: &str) -> Result<LatticeDir> {
    let symbols = load_symbols(ctx, &dir.join(syms_file))?;
    let entries = read_index(ctx, dir)?;
    Ok(LatticeDir { symbols, entries })
}

fn read_fst(ctx: &mut Context, path: &Path, isyms: &Arc<SymbolTable>, osyms: &Arc<SymbolTable>) -> Result<Wfst> {
    let text = ctx.read(path)?;
    parse_att(&text, isyms.clone(), osyms.clone(), &name(path))
}

pub const LETTER_SYMS: &str = "letters.syms";
pub const PHONE_SYMS: &str = "phones.syms";
pub const ONE_BEST: &str = "1best.txt";

fn merge(ctx: &mut Context, a: &MergeArgs) -> Result<()> {
    let bundles = parse_bundles(&ctx.read(&a.transcripts)?);
    if bundles.is_empty() {
        return Err(Error::contract(format!(
            "{} holds no transcripts",
            name(&a.transcripts)
        )));
    }
    let letters = match &a.letters {
        Some(p) => load_symbols(ctx, p)?,
        None => {
            let all: Vec<String> = bundles
                .iter()
                .flat_map(|b| b.transcripts.iter().flat_map(|t| crate::channel::letter_tokens(t)))
                .collect();
            sorted_table(all.iter().map(String::as_str))
        }
    };
    let nets = exec::map(&bundles, ctx.exec, |b| {
        merge_transcripts(b, letters.clone(), a.prune_mass)
    });
    ctx.make_dir(&a.out)?;
    ctx.write(&a.out.join(LETTER_SYMS), &letters.to_text())?;
    let mut index = Vec::new();
    for (b, cn) in bundles.iter().zip(nets) {
        let cn = cn?;
        ctx.write(&a.out.join(format!("{}.fst", b.utterance_id)), &write_att(&cn.to_fst()))?;
        index.push((b.utterance_id.clone(), b.longest_len()));
    }
    write_index(ctx, &a.out, &index)
}

fn train_channel(ctx: &mut Context, a: &TrainChannelArgs) -> Result<()> {
    let data = parse_dataset(&ctx.read(&a.pairs)?, &name(&a.pairs))?;
    let phones = sorted_table(data.iter().flat_map(|e| e.phones.iter().map(String::as_str)));
    let letters = sorted_table(data.iter().flat_map(|e| e.letters.iter().map(String::as_str)));
    let pairs = data
        .iter()
        .map(|e| Ok((phones.encode(&e.phones)?, letters.encode(&e.letters)?)))
        .collect::<Result<Vec<_>>>()?;
    let cfg = EmConfig {
        iterations: a.iterations,
        seed: ctx.seed,
        exec: ctx.exec,
    };
    let outcome = train_channel_em(phones, letters, &pairs, &cfg)?;
    let mut body = String::new();
    for (k, ll) in outcome.log_likelihoods.iter().enumerate() {
        body.push_str(&format!(
            "# iteration {k} log-likelihood {}\n",
            crate::textfmt::format_sig9(*ll)
        ));
    }
    body.push_str(&outcome.model.pruned(a.min_prob)?.to_tsv());
    ctx.write(&a.out, &body)
}

fn load_lm(ctx: &mut Context, path: &Path) -> Result<BigramModel> {
    let text = ctx.read(path)?;
    BigramModel::parse(&text, &name(path))
}

fn decode(ctx: &mut Context, a: &DecodePtArgs) -> Result<()> {
    let cn_dir = read_lattice_dir(ctx, &a.confnets, LETTER_SYMS)?;
    let phone_lm = load_lm(ctx, &a.phone_lm)?;
    let phones = phone_lm.vocab().clone();
    let letters = cn_dir.symbols.clone();
    let channel_text = ctx.read(&a.channel)?;
    let channel = ChannelModel::parse_tsv(&channel_text, phones.clone(), letters.clone(), &name(&a.channel))?;
    let letter_lm = match &a.letter_lm {
        Some(p) => Some(load_lm(ctx, p)?),
        None => None,
    };
    let longest = cn_dir.entries.iter().map(|e| e.1).max().unwrap_or(0);
    let max_phones = a.max_phones.unwrap_or(2 * longest);
    let mut nets = Vec::with_capacity(cn_dir.entries.len());
    for (id, _) in &cn_dir.entries {
        let fst = read_fst(ctx, &a.confnets.join(format!("{id}.fst")), &letters, &letters)?;
        nets.push(ConfusionNetwork::from_fst(&fst)?);
    }
    let options = DecodeOptions {
        max_phones: Some(max_phones),
    };
    let lattices = exec::map(&nets, ctx.exec, |cn| {
        let pt = decode_pt(cn, &channel, letter_lm.as_ref(), &phone_lm, options)?;
        let best = best_string(&pt, a.semiring, a.candidates)?;
        Ok((pt, best))
    });
    write_lattices(ctx, &a.out, &phones, &cn_dir.entries, lattices)
}

fn write_lattices(
    ctx: &Context,
    out: &Path,
    phones: &Arc<SymbolTable>,
    entries: &[(String, usize)],
    lattices: Vec<Result<(PtLattice, crate::fst::ScoredSequence)>>,
) -> Result<()> {
    ctx.make_dir(out)?;
    ctx.write(&out.join(PHONE_SYMS), &phones.to_text())?;
    let mut one_best = String::new();
    for ((id, _), r) in entries.iter().zip(lattices) {
        let (pt, best) = r.map_err(|e| with_utterance(e, id))?;
        ctx.write(&out.join(format!("{id}.fst")), &write_att(pt.fst()))?;
        one_best.push_str(&phones.render(&best.labels));
        one_best.push('\n');
    }
    write_index(ctx, out, entries)?;
    ctx.write(&out.join(ONE_BEST), &one_best)
}

fn with_utterance(e: Error, id: &str) -> Error {
    match e {
        Error::EmptyLattice(m) => Error::EmptyLattice(format!("utterance {id}: {m}")),
        Error::NoPath => Error::EmptyLattice(format!("utterance {id}: no accepting path")),
        other => other,
    }
}

fn load_rules(ctx: &mut Context, path: &Path, phones: &Arc<SymbolTable>) -> Result<G2PRuleSet> {
    let text = ctx.read(path)?;
    parse_g2p_rules(&text, phones, &name(path))
}

fn load_words(ctx: &mut Context, path: &Path) -> Result<WordList> {
    WordList::parse(&ctx.read(path)?)
}

fn load_dict(ctx: &mut Context, path: &Path, phones: &Arc<SymbolTable>) -> Result<PronDict> {
    let text = ctx.read(path)?;
    PronDict::parse(&text, phones, &name(path))
}

fn lexicon(ctx: &mut Context, a: &ConstrainArgs, phones: &Arc<SymbolTable>) -> Result<LexiconConstraint> {
    let rules = match &a.rules {
        Some(p) => Some(load_rules(ctx, p, phones)?),
        None => None,
    };
    let words = match &a.words {
        Some(p) => Some(load_words(ctx, p)?),
        None => None,
    };
    let dict = match &a.dict {
        Some(p) => Some(load_dict(ctx, p, phones)?),
        None => None,
    };
    let lexicon = match a.constraint {
        ConstraintKind::G2p => LexiconConstraint::g2p(
            rules
                .as_ref()
                .ok_or_else(|| Error::contract("--constraint g2p needs --rules"))?,
            words
                .as_ref()
                .ok_or_else(|| Error::contract("--constraint g2p needs --words"))?,
            phones.clone(),
        )?,
        ConstraintKind::G2pDict => LexiconConstraint::g2p_dict(
            dict.as_ref()
                .ok_or_else(|| Error::contract("--constraint g2p+dict needs --dict"))?,
            rules.as_ref(),
            words.as_ref(),
            phones.clone(),
        )?,
        ConstraintKind::Wlm => {
            let path = a
                .word_lm
                .as_ref()
                .ok_or_else(|| Error::contract("--constraint wlm needs --word-lm"))?;
            let lm = load_lm(ctx, path)?;
            LexiconConstraint::wlm(&lm, rules.as_ref(), dict.as_ref(), phones.clone())?
        }
        ConstraintKind::Inventory => unreachable!("inventory is not a lexicon constraint"),
    };
    if !lexicon.excluded.is_empty() {
        eprintln!("ptforge: no pronunciation for: {}", lexicon.excluded.join(" "));
    }
    Ok(lexicon)
}

fn constrain(ctx: &mut Context, a: &ConstrainArgs) -> Result<()> {
    let dir = read_lattice_dir(ctx, &a.lattices, PHONE_SYMS)?;
    let phones = dir.symbols.clone();
    let mut lattices = Vec::with_capacity(dir.entries.len());
    for (id, _) in &dir.entries {
        let fst = read_fst(ctx, &a.lattices.join(format!("{id}.fst")), &phones, &phones)?;
        lattices.push(PtLattice::new(fst)?);
    }
    enum Filter {
        Inventory(PhoneInventory),
        Lexicon(LexiconConstraint),
    }
    let filter = if a.constraint == ConstraintKind::Inventory {
        let inv = match (&a.inventory, &a.rules) {
            (Some(p), _) => {
                let text = ctx.read(p)?;
                PhoneInventory::parse(&text, &phones)?
            }
            (None, Some(p)) => PhoneInventory::from_rules(&load_rules(ctx, p, &phones)?, &phones)?,
            (None, None) => return Err(Error::contract("--constraint inventory needs --inventory or --rules")),
        };
        Filter::Inventory(inv)
    } else {
        Filter::Lexicon(lexicon(ctx, a, &phones)?)
    };
    let kept = std::sync::atomic::AtomicUsize::new(0);
    let results = exec::map(&lattices, ctx.exec, |pt| {
        let constrained = match &filter {
            Filter::Inventory(inv) => constrain_phoneme_inventory(pt, inv),
            Filter::Lexicon(lex) => lex.apply(pt, a.discount_lm),
        };
        let constrained = match constrained {
            Err(Error::EmptyLattice(_)) if a.keep_on_empty => {
                kept.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                Ok(pt.clone())
            }
            other => other,
        }?;
        let best = best_string(&constrained, a.semiring, a.candidates)?;
        Ok((constrained, best))
    });
    let kept = kept.into_inner();
    if kept > 0 {
        eprintln!("ptforge: constraint removed every path in {kept} lattice(s); kept them unconstrained");
    }
    write_lattices(ctx, &a.out, &phones, &dir.entries, results)
}

fn lm_train(ctx: &mut Context, a: &LmTrainArgs) -> Result<()> {
    let smoothing: Smoothing = a.smoothing.parse()?;
    let mut corpus = parse_corpus(&ctx.read(&a.corpus)?);
    if a.dict.is_some() || a.rules.is_some() {
        let mut phone_text = String::new();
        for p in a.dict.iter().chain(a.rules.iter()) {
            phone_text.push_str(&ctx.read(p)?);
            phone_text.push('\n');
        }
        let phones = match &a.vocab {
            Some(p) => load_symbols(ctx, p)?,
            None => phones_in_tsv(&phone_text),
        };
        let dict = match &a.dict {
            Some(p) => load_dict(ctx, p, &phones)?,
            None => PronDict::new(),
        };
        let rules = match &a.rules {
            Some(p) => Some(load_rules(ctx, p, &phones)?),
            None => None,
        };
        corpus = words_to_phones(&corpus, &dict, rules.as_ref())?;
    }
    let vocab = match &a.vocab {
        Some(p) => load_symbols(ctx, p)?,
        None => sorted_table(corpus.iter().flatten().map(String::as_str)),
    };
    let model = train_bigram(vocab, &corpus, smoothing)?;
    ctx.write(&a.out, &model.to_text())
}

fn g2p_compile(ctx: &mut Context, a: &G2pCompileArgs) -> Result<()> {
    let text = ctx.read(&a.rules)?;
    let phones = match &a.phones {
        Some(p) => load_symbols(ctx, p)?,
        None => phones_in_tsv(&text),
    };
    let rules = parse_g2p_rules(&text, &phones, &name(&a.rules))?;
    let words = match &a.words {
        Some(p) => Some(load_words(ctx, p)?),
        None => None,
    };
    let graphemes = grapheme_table(&rules, words.iter().flat_map(|w| w.iter())).shared();
    let fst = g2p_to_fst(&rules, graphemes.clone(), phones.clone())?;
    ctx.write(&a.out, &write_att(&fst))?;
    ctx.write(&a.out.with_extension("isyms"), &graphemes.to_text())?;
    ctx.write(&a.out.with_extension("osyms"), &phones.to_text())
}

fn clip(c: f64) -> Option<f64> {
    (c > 0.0).then_some(c)
}

fn seq2seq_train(ctx: &mut Context, a: &Seq2seqTrainArgs) -> Result<()> {
    let data = parse_dataset(&ctx.read(&a.train)?, &name(&a.train))?;
    let dev = parse_dataset(&ctx.read(&a.dev)?, &name(&a.dev))?;
    let input_vocab = Vocab::from_sequences(data.iter().map(|e| &e.letters))?;
    let output_vocab = Vocab::from_sequences(data.iter().map(|e| &e.phones))?;
    let model = ModelConfig {
        hidden: a.hidden,
        layers: a.layers,
        init_range: a.init_range,
        ..ModelConfig::default()
    };
    let params = init_params(input_vocab, output_vocab, &model, ctx.seed);
    let cfg = TrainingConfig {
        learning_rate: a.lr,
        decay_after: a.lr_decay_epoch,
        decayed_rate: a.lr_decayed,
        batch_size: a.batch,
        convergence: a.convergence,
        max_epochs: a.epochs,
        clip_norm: clip(a.clip),
        max_len: a.max_len,
        seed: ctx.seed,
        exec: ctx.exec,
    };
    let outcome = train(params, &data, &dev, &cfg)?;
    let mut body = String::new();
    for r in &outcome.history {
        body.push_str(&format!(
            "# epoch {} lr {} train_loss {} dev_loss {}\n",
            r.epoch,
            r.learning_rate,
            crate::textfmt::format_sig9(r.train_loss),
            r.dev_loss.map_or("-".to_string(), crate::textfmt::format_sig9)
        ));
    }
    body.push_str(&write_checkpoint(&outcome.params));
    ctx.write(&a.out, &body)
}

fn load_model(ctx: &mut Context, path: &Path) -> Result<crate::seq2seq::Seq2SeqParams> {
    let text = ctx.read(path)?;
    parse_checkpoint(&text, &name(path))
}

fn seq2seq_adapt(ctx: &mut Context, a: &Seq2seqAdaptArgs) -> Result<()> {
    let params = load_model(ctx, &a.model)?;
    let data = parse_dataset(&ctx.read(&a.data)?, &name(&a.data))?;
    let cfg = TrainingConfig {
        decayed_rate: a.lr,
        batch_size: a.batch,
        clip_norm: clip(a.clip),
        max_len: a.max_len,
        seed: ctx.seed,
        exec: ctx.exec,
        ..TrainingConfig::default()
    };
    let outcome = adapt(params, &data, &cfg, a.epochs)?;
    ctx.write(&a.out, &write_checkpoint(&outcome.params))
}

fn seq2seq_decode(ctx: &mut Context, a: &Seq2seqDecodeArgs) -> Result<()> {
    let params = load_model(ctx, &a.model)?;
    let text = ctx.read(&a.input)?;
    let inputs: Vec<Vec<String>> = data_lines(&text)
        .map(|(_, l)| crate::channel::letter_tokens(l))
        .collect();
    let lm = match &a.lm {
        Some(p) => Some(load_lm(ctx, p)?),
        None => None,
    };
    let fusion = lm.as_ref().map_or(FusionLm::Uniform, FusionLm::Bigram);
    let cfg = BeamConfig {
        beam: a.beam,
        max_len: a.max_len,
        lm_weight: a.lm_weight,
        ..BeamConfig::default()
    };
    let results = exec::map(&inputs, ctx.exec, |x| beam_decode_with_lm(&params, x, fusion, &cfg));
    let mut body = String::new();
    for r in results {
        body.push_str(&r?.phones.join(" "));
        body.push('\n');
    }
    if let Some(dir) = &a.lattices {
        let phones = sorted_table(params.output_vocab().symbols().iter().map(String::as_str));
        ctx.make_dir(dir)?;
        ctx.write(&dir.join(PHONE_SYMS), &phones.to_text())?;
        let mut index = Vec::new();
        for (k, x) in inputs.iter().enumerate() {
            let id = (k + 1).to_string();
            let fst = output_distributions_to_fst(&params, x, a.max_len, &phones)?;
            ctx.write(&dir.join(format!("{id}.fst")), &write_att(&fst))?;
            index.push((id, x.len()));
        }
        write_index(ctx, dir, &index)?;
    }
    ctx.write(&a.out, &body)
}

/// Scores and returns the report.
fn score(ctx: &mut Context, a: &ScoreArgs) -> Result<String> {
    if !a.name.is_empty() && a.name.len() != a.hyp.len() {
        return Err(Error::contract("give one --name per --hyp"));
    }
    let reference = parse_utterances(&ctx.read(&a.reference)?);
    let mut rows = Vec::new();
    for (k, h) in a.hyp.iter().enumerate() {
        let hyp = parse_utterances(&ctx.read(h)?);
        let pairs = pair_utterances(hyp, reference.clone())?;
        let per = phone_error_rate(&pairs, ctx.exec)?;
        let system = a.name.get(k).cloned().unwrap_or_else(|| name(h));
        rows.push(SystemScore { system, per });
    }
    let report = score_report(&rows)?;
    if let Some(out) = &a.out {
        ctx.write(out, &report)?;
    }
    Ok(report)
}

/// Runs one parsed command.
pub fn run_command(ctx: &mut Context, command: &Command) -> Result<()> {
    ctx.subcommand = command.name();
    match command {
        Command::Merge(a) => merge(ctx, a),
        Command::TrainChannel(a) => train_channel(ctx, a),
        Command::DecodePt(a) => decode(ctx, a),
        Command::Constrain(a) => constrain(ctx, a),
        Command::LmTrain(a) => lm_train(ctx, a),
        Command::G2pCompile(a) => g2p_compile(ctx, a),
        Command::Seq2seqTrain(a) => seq2seq_train(ctx, a),
        Command::Seq2seqAdapt(a) => seq2seq_adapt(ctx, a),
        Command::Seq2seqDecode(a) => seq2seq_decode(ctx, a),
        Command::Score(a) => {
            print!("{}", score(ctx, a)?);
            Ok(())
        }
        Command::Demo(a) => {
            print!("{}", demo::run(ctx, a)?);
            Ok(())
        }
    }
}

/// Appends config-file settings for flags not already on the command line.
/// Top-level keys apply to every subcommand; an object keyed by the
/// subcommand name applies to that subcommand only.
fn apply_config(argv: Vec<OsString>) -> std::result::Result<Vec<OsString>, String> {
    let strs: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    let mut path = None;
    for (i, a) in strs.iter().enumerate() {
        if a == "--config" {
            path = strs.get(i + 1).cloned();
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let text = fs::read_to_string(&path).map_err(|e| format!("{path}: {e}"))?;
    let json: serde_json::Value = serde_json::from_str(&text).map_err(|e| format!("{path}: {e}"))?;
    let obj = json
        .as_object()
        .ok_or_else(|| format!("{path}: expected a JSON object"))?;
    let subcommand = strs
        .iter()
        .skip(1)
        .find(|a| !a.starts_with('-') && Command::is_name(a))
        .cloned();
    let present: BTreeSet<String> = strs
        .iter()
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut extra = Vec::new();
    let mut push = |key: &str, v: &serde_json::Value| -> std::result::Result<(), String> {
        let flag = key.replace('_', "-");
        if present.contains(&flag) || flag == "config" {
            return Ok(());
        }
        let values = match v {
            serde_json::Value::Array(items) => items.clone(),
            other => vec![other.clone()],
        };
        for v in values {
            match v {
                serde_json::Value::Bool(true) => extra.push(format!("--{flag}")),
                serde_json::Value::Bool(false) | serde_json::Value::Null => {}
                serde_json::Value::String(s) => extra.extend([format!("--{flag}"), s]),
                serde_json::Value::Number(n) => extra.extend([format!("--{flag}"), n.to_string()]),
                _ => return Err(format!("{path}: unsupported value for '{key}'")),
            }
        }
        Ok(())
    };
    for (k, v) in obj {
        if Command::is_name(k) {
            if Some(k) == subcommand.as_ref() {
                for (k2, v2) in v
                    .as_object()
                    .ok_or_else(|| format!("{path}: section '{k}' must be an object"))?
                {
                    push(k2, v2)?;
                }
            }
        } else {
            push(k, v)?;
        }
    }
    if subcommand.is_none() {
        return Ok(argv);
    }
    let mut out = argv;
    out.extend(extra.into_iter().map(OsString::from));
    Ok(out)
}

impl Command {
    fn is_name(s: &str) -> bool {
        use clap::CommandFactory;
        Cli::command().get_subcommands().any(|c| c.get_name() == s)
    }
}

fn report_error(e: &Error) -> i32 {
    let json = serde_json::json!({ "error": e.kind(), "message": e.to_string() });
    eprintln!("{json}");
    e.exit_code()
}

/// Parses `argv` and runs it, returning the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let argv = match apply_config(argv) {
        Ok(a) => a,
        Err(msg) => {
            eprintln!("{}", serde_json::json!({ "error": "config", "message": msg }));
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let seed = match cli.seed {
        Some(s) => s,
        None => match std::env::var("PTFORGE_SEED") {
            Ok(v) => match v.trim().parse() {
                Ok(s) => s,
                Err(_) => {
                    eprintln!(
                        "{}",
                        serde_json::json!({ "error": "usage", "message": format!("PTFORGE_SEED '{v}' is not an integer") })
                    );
                    return 2;
                }
            },
            Err(_) => 0,
        },
    };
    if let Err(e) = exec::set_threads(cli.threads) {
        return report_error(&e);
    }
    let exec = if cli.deterministic {
        Execution::Sequential
    } else {
        Execution::Parallel
    };
    let mut ctx = Context::new(seed, exec);
    match run_command(&mut ctx, &cli.command) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}
