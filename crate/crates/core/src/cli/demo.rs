//! Synthetic end-to-end run. A toy language with a fixed lexicon is spoken
//! as random word sequences; simulated annotators write what they hear
//! through a known channel. Both pipelines are trained and scored on the
//! generated data.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

const RULES: &str = include_str!("../../fixtures/demo/rules.tsv");
const WORDS: &str = include_str!("../../fixtures/demo/words.txt");
const CHANNEL: &str = include_str!("../../fixtures/demo/channel.tsv");

const TRAIN_PAIRS: usize = 800;
const DEV_PAIRS: usize = 40;
const LM_UTTERANCES: usize = 150;
const TEST_UTTERANCES: usize = 20;
const ANNOTATORS: usize = 5;

struct Speaker {
    words: Vec<(String, Vec<String>)>,
    /// Per phone: cumulative emission table.
    channel: BTreeMap<String, Vec<(f64, String)>>,
}

use std::collections::BTreeMap;

impl Speaker {
    fn load() -> Result<Self> {
        let phones = phones_in_tsv(RULES);
        let rules = parse_g2p_rules(RULES, &phones, "rules.tsv")?;
        let mut words = Vec::new();
        for w in WordList::parse(WORDS)?.iter() {
            let pron = rules
                .smallest_pronunciation(w)
                .ok_or_else(|| Error::contract(format!("demo word '{w}' has no pronunciation")))?;
            words.push((w.to_string(), pron));
        }
        let mut channel: BTreeMap<String, Vec<(f64, String)>> = BTreeMap::new();
        for (no, line) in data_lines(CHANNEL) {
            let f: Vec<&str> = line.split('\t').collect();
            let [phone, chunk, p] = f.as_slice() else {
                return Err(Error::parse("channel.tsv", no, "expected phone<TAB>letters<TAB>prob"));
            };
            let p = crate::textfmt::parse_f64(p).ok_or_else(|| Error::parse("channel.tsv", no, "bad probability"))?;
            let table = channel.entry(phone.to_string()).or_default();
            let acc = table.last().map_or(0.0, |e| e.0) + p;
            table.push((acc, chunk.split_whitespace().collect()));
        }
        Ok(Speaker { words, channel })
    }

    /// 2 or 3 random words: the spelled words and their phones.
    fn utterance(&self, rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<String>) {
        let n = rng.gen_range(2..=3);
        let mut spelled = Vec::new();
        let mut phones = Vec::new();
        for _ in 0..n {
            let (w, p) = &self.words[rng.gen_range(0..self.words.len())];
            spelled.push(w.clone());
            phones.extend(p.iter().cloned());
        }
        (spelled, phones)
    }

    /// Random phone strings, standing in for transcribed speech from other
    /// languages.
    fn babble(&self, rng: &mut ChaCha8Rng) -> Vec<String> {
        let phones: Vec<&String> = self.channel.keys().collect();
        (0..rng.gen_range(1..=12))
            .map(|_| phones[rng.gen_range(0..phones.len())].clone())
            .collect()
    }

    fn hear(&self, phones: &[String], rng: &mut ChaCha8Rng) -> String {
        let mut out = String::new();
        for p in phones {
            let table = &self.channel[p];
            let u = rng.gen::<f64>() * table.last().map_or(1.0, |e| e.0);
            let (_, chunk) = table.iter().find(|e| u < e.0).unwrap_or(&table[table.len() - 1]);
            out.push_str(chunk);
        }
        out
    }
}

fn lines(rows: impl IntoIterator<Item = String>) -> String {
    rows.into_iter().map(|r| r + "\n").collect()
}

fn step(ctx: &Context, command: Command) -> Result<()> {
    let mut c = Context::new(ctx.seed, ctx.exec);
    run_command(&mut c, &command)
}

pub fn run(ctx: &mut Context, a: &DemoArgs) -> Result<String> {
    let dir = &a.out;
    let f = |name: &str| -> PathBuf { dir.join(name) };
    ctx.make_dir(dir)?;
    let speaker = Speaker::load()?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.seed);

    // Channel training pairs are other-language babble with one
    // annotator each; the phone LM sees target-language text; test
    // utterances get the full crowd.
    let mut pairs = Vec::new();
    for _ in 0..TRAIN_PAIRS {
        let phones = speaker.babble(&mut rng);
        pairs.push(format!("{}\t{}", speaker.hear(&phones, &mut rng), phones.join(" ")));
    }
    let mut dev = Vec::new();
    for _ in 0..DEV_PAIRS {
        let phones = speaker.babble(&mut rng);
        dev.push(format!("{}\t{}", speaker.hear(&phones, &mut rng), phones.join(" ")));
    }
    let corpus: Vec<String> = (0..LM_UTTERANCES)
        .map(|_| speaker.utterance(&mut rng).1.join(" "))
        .collect();
    let mut bundles = Vec::new();
    let mut first = Vec::new();
    let mut refs = Vec::new();
    for u in 0..TEST_UTTERANCES {
        let (_, phones) = speaker.utterance(&mut rng);
        let transcripts: Vec<String> = (0..ANNOTATORS).map(|_| speaker.hear(&phones, &mut rng)).collect();
        first.push(transcripts[0].clone());
        bundles.push(crate::channel::TranscriptBundle {
            utterance_id: format!("u{:02}", u + 1),
            transcripts,
        });
        refs.push(phones.join(" "));
    }
    let phone_list = lines(phones_in_tsv(RULES).iter().map(|(_, s)| s.to_string()));
    ctx.write(&f("rules.tsv"), RULES)?;
    ctx.write(&f("words.txt"), WORDS)?;
    ctx.write(&f("phones.txt"), &phone_list)?;
    ctx.write(&f("train.tsv"), &lines(pairs))?;
    ctx.write(&f("dev.tsv"), &lines(dev))?;
    ctx.write(&f("phone_corpus.txt"), &lines(corpus))?;
    ctx.write(&f("transcripts.txt"), &crate::channel::write_bundles(&bundles))?;
    ctx.write(&f("test_letters.txt"), &lines(first))?;
    ctx.write(&f("test_ref.txt"), &lines(refs))?;

    run_pipelines(ctx, dir)?;

    let mut c = Context::new(ctx.seed, ctx.exec);
    c.subcommand = "score";
    score(
        &mut c,
        &ScoreArgs {
            hyp: vec![f("pt").join(ONE_BEST), f("pt_g2p").join(ONE_BEST), f("seq2seq.txt")],
            reference: f("test_ref.txt"),
            name: vec!["pt-fst".into(), "pt-fst+g2p".into(), "seq2seq+lm".into()],
            out: Some(f("report.tsv")),
        },
    )
}

fn run_pipelines(ctx: &Context, dir: &Path) -> Result<()> {
    let f = |name: &str| -> PathBuf { dir.join(name) };
    step(
        ctx,
        Command::Merge(MergeArgs {
            transcripts: f("transcripts.txt"),
            out: f("confnets"),
            prune_mass: 1.0,
            letters: None,
        }),
    )?;
    step(
        ctx,
        Command::TrainChannel(TrainChannelArgs {
            pairs: f("train.tsv"),
            out: f("channel.tsv"),
            iterations: 25,
            min_prob: 1e-3,
        }),
    )?;
    step(
        ctx,
        Command::LmTrain(LmTrainArgs {
            corpus: f("phone_corpus.txt"),
            out: f("phone.lm"),
            smoothing: "witten-bell".into(),
            vocab: Some(f("phones.txt")),
            dict: None,
            rules: None,
        }),
    )?;
    step(
        ctx,
        Command::DecodePt(DecodePtArgs {
            confnets: f("confnets"),
            channel: f("channel.tsv"),
            phone_lm: f("phone.lm"),
            letter_lm: None,
            max_phones: None,
            semiring: Semiring::Tropical,
            candidates: 20,
            out: f("pt"),
        }),
    )?;
    step(
        ctx,
        Command::Constrain(ConstrainArgs {
            lattices: f("pt"),
            constraint: ConstraintKind::G2p,
            inventory: None,
            rules: Some(f("rules.tsv")),
            words: Some(f("words.txt")),
            dict: None,
            word_lm: None,
            discount_lm: false,
            keep_on_empty: true,
            semiring: Semiring::Tropical,
            candidates: 20,
            out: f("pt_g2p"),
        }),
    )?;
    step(
        ctx,
        Command::Seq2seqTrain(Seq2seqTrainArgs {
            train: f("train.tsv"),
            dev: f("dev.tsv"),
            out: f("seq2seq.ckpt"),
            epochs: 40,
            batch: 8,
            lr: 0.4,
            lr_decay_epoch: 8,
            lr_decayed: 0.2,
            hidden: 32,
            layers: 2,
            init_range: 0.1,
            clip: 5.0,
            convergence: 1e-7,
            max_len: 64,
        }),
    )?;
    step(
        ctx,
        Command::Seq2seqDecode(Seq2seqDecodeArgs {
            model: f("seq2seq.ckpt"),
            input: f("test_letters.txt"),
            out: f("seq2seq.txt"),
            beam: 8,
            lm: Some(f("phone.lm")),
            lm_weight: 1.0,
            max_len: 64,
            lattices: None,
        }),
    )
}
