mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use common::fixture;

fn fixtures(rel: &str) -> String {
    format!("{}/fixtures/{rel}", env!("CARGO_MANIFEST_DIR"))
}

fn ptforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ptforge"))
        .args(args)
        .env_remove("PTFORGE_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn identical_files_score_zero() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("h.txt");
    fs::write(&f, "a b c\nd e\n").unwrap();
    let o = ptforge(&["score", "--hyp", p(&f), "--ref", p(&f)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("\t0.00\t"), "{}", stdout(&o));
}

#[test]
fn unknown_flag_prints_usage() {
    let o = ptforge(&["score", "--no-such-flag"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn data_errors_are_json_with_status_3() {
    let dir = tempfile::tempdir().unwrap();
    let r = dir.path().join("r.txt");
    fs::write(&r, "a\n").unwrap();
    let o = ptforge(&["score", "--hyp", p(&dir.path().join("missing.txt")), "--ref", p(&r)]);
    assert_eq!(o.status.code(), Some(3));
    let line = stderr(&o);
    let json: serde_json::Value = serde_json::from_str(line.trim()).expect("machine-readable error");
    assert_eq!(json["error"], "io");

    let bad = dir.path().join("bad.tsv");
    fs::write(&bad, "abc\n").unwrap();
    let o = ptforge(&[
        "train-channel",
        "--pairs",
        p(&bad),
        "--out",
        p(&dir.path().join("c.tsv")),
    ]);
    assert_eq!(o.status.code(), Some(3));
    let json: serde_json::Value = serde_json::from_str(stderr(&o).trim()).unwrap();
    assert_eq!(json["error"], "parse");
}

#[test]
fn numeric_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.tsv");
    fs::write(&data, "ab\tp t\nba\tt p\n").unwrap();
    let o = ptforge(&[
        "seq2seq-train",
        "--train",
        p(&data),
        "--dev",
        p(&data),
        "--out",
        p(&dir.path().join("m.ckpt")),
        "--hidden",
        "4",
        "--init-range",
        "1e200",
        "--epochs",
        "2",
        "--clip",
        "0",
    ]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn outputs_carry_header_and_refuse_to_overwrite_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, "a b\nb a a\n").unwrap();
    let out = dir.path().join("c.lm");
    let o = ptforge(&["lm-train", "--corpus", p(&corpus), "--out", p(&out), "--seed", "11"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(&out).unwrap();
    let first = text.lines().next().unwrap();
    assert!(first.starts_with("# ptforge ") && first.contains("subcommand=lm-train") && first.ends_with("seed=11"));
    let model = ptforge::lm::BigramModel::parse(&text, "c.lm").unwrap();
    assert_eq!(model.vocab().len(), 3);

    let o = ptforge(&["lm-train", "--corpus", p(&corpus), "--out", p(&corpus)]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(fs::read_to_string(&corpus).unwrap(), "a b\nb a a\n");
}

#[test]
fn seed_precedence_flag_config_env() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("c.txt");
    fs::write(&corpus, "a b\n").unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"seed": 5, "lm-train": {"smoothing": "add-k:1"}}"#).unwrap();
    let out = dir.path().join("o.lm");
    let header = |args: &[&str], env: Option<&str>| {
        let mut c = Command::new(env!("CARGO_BIN_EXE_ptforge"));
        c.args(args);
        match env {
            Some(v) => c.env("PTFORGE_SEED", v),
            None => c.env_remove("PTFORGE_SEED"),
        };
        let o = c.output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        fs::read_to_string(&out).unwrap()
    };
    let base = ["lm-train", "--corpus", p(&corpus), "--out", p(&out)];
    assert!(header(&base, None).lines().next().unwrap().ends_with("seed=0"));
    assert!(header(&base, Some("9")).lines().next().unwrap().ends_with("seed=9"));
    let with_cfg: Vec<&str> = base.iter().copied().chain(["--config", p(&cfg)]).collect();
    let text = header(&with_cfg, Some("9"));
    assert!(text.lines().next().unwrap().ends_with("seed=5"));
    assert!(text.contains("smoothing\tadd-k 1"));
    let flagged: Vec<&str> = with_cfg
        .iter()
        .copied()
        .chain(["--seed", "3", "--smoothing", "witten-bell"])
        .collect();
    let text = header(&flagged, Some("9"));
    assert!(text.lines().next().unwrap().ends_with("seed=3"));
    assert!(text.contains("smoothing\twitten-bell"));
}

#[test]
fn inventory_constraint_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = ptforge(&[
        "constrain",
        "--lattices",
        &fixtures("inventory"),
        "--constraint",
        "inventory",
        "--inventory",
        &fixtures("inventory/inventory.txt"),
        "--out",
        p(&out),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let best = fs::read_to_string(out.join("1best.txt")).unwrap();
    assert_eq!(best.lines().nth(1), Some("q p"));
}

#[test]
fn lexicon_constraints_on_toy_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let expected = fixture("toy/expected.tsv");
    for line in expected.lines().filter(|l| !l.starts_with('#')) {
        let f: Vec<&str> = line.split('\t').collect();
        let out = dir.path().join(f[0].replace('+', "_"));
        let mut args = vec![
            "constrain".to_string(),
            "--lattices".into(),
            fixtures("toy"),
            "--constraint".into(),
            f[0].into(),
            "--rules".into(),
            fixtures("toy/rules.tsv"),
            "--out".into(),
            p(&out).into(),
        ];
        match f[0] {
            "g2p" => args.extend(["--words".into(), fixtures("toy/words.txt")]),
            "g2p+dict" => args.extend(["--dict".into(), fixtures("toy/dict.tsv"), "--discount-lm".into()]),
            _ => args.extend(["--word-lm".into(), fixtures("toy/word.lm")]),
        }
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        let o = ptforge(&args);
        assert_eq!(o.status.code(), Some(0), "{}: {}", f[0], stderr(&o));
        let best = fs::read_to_string(out.join("1best.txt")).unwrap();
        assert_eq!(best.lines().nth(1), Some(f[1]), "{}", f[0]);
    }
}

#[test]
fn noisy_channel_pipeline_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("t.txt"), "# utt one\nab\nab\nb\n\n# utt two\nba\nbb\n").unwrap();
    fs::write(d.join("pairs.tsv"), "ab\tp q\nba\tq p\naab\tp p q\nb\tq\n").unwrap();
    fs::write(d.join("phones.txt"), "p q q p\np q\nq p\n").unwrap();
    let run = |args: &[&str]| {
        let o = ptforge(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    };
    run(&["merge", "--transcripts", p(&d.join("t.txt")), "--out", p(&d.join("cn"))]);
    let index = fs::read_to_string(d.join("cn/index.tsv")).unwrap();
    assert!(index.contains("one\t2") && index.contains("two\t2"), "{index}");
    run(&[
        "train-channel",
        "--pairs",
        p(&d.join("pairs.tsv")),
        "--out",
        p(&d.join("ch.tsv")),
        "--iterations",
        "10",
    ]);
    run(&[
        "lm-train",
        "--corpus",
        p(&d.join("phones.txt")),
        "--out",
        p(&d.join("ph.lm")),
    ]);
    run(&[
        "decode-pt",
        "--confnets",
        p(&d.join("cn")),
        "--channel",
        p(&d.join("ch.tsv")),
        "--phone-lm",
        p(&d.join("ph.lm")),
        "--semiring",
        "log",
        "--out",
        p(&d.join("pt")),
    ]);
    let best = fs::read_to_string(d.join("pt/1best.txt")).unwrap();
    let lines: Vec<&str> = best.lines().skip(1).collect();
    assert_eq!(lines, vec!["p q", "q p"]);
    assert!(d.join("pt/one.fst").exists() && d.join("pt/phones.syms").exists());
}

#[test]
fn seq2seq_commands_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("train.tsv"), "ab\tp q\nba\tq p\na\tp\nb\tq\n").unwrap();
    fs::write(d.join("in.txt"), "ab\nb\n").unwrap();
    let run = |args: &[&str]| {
        let o = ptforge(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", stderr(&o));
    };
    let train_path = d.join("train.tsv");
    let train = p(&train_path);
    run(&[
        "seq2seq-train",
        "--train",
        train,
        "--dev",
        train,
        "--out",
        p(&d.join("m.ckpt")),
        "--hidden",
        "8",
        "--epochs",
        "3",
        "--batch",
        "2",
        "--seed",
        "4",
    ]);
    run(&[
        "seq2seq-adapt",
        "--model",
        p(&d.join("m.ckpt")),
        "--data",
        train,
        "--out",
        p(&d.join("a.ckpt")),
    ]);
    run(&[
        "seq2seq-decode",
        "--model",
        p(&d.join("a.ckpt")),
        "--input",
        p(&d.join("in.txt")),
        "--out",
        p(&d.join("out.txt")),
        "--beam",
        "3",
        "--lattices",
        p(&d.join("sausages")),
    ]);
    let out = fs::read_to_string(d.join("out.txt")).unwrap();
    assert_eq!(out.lines().count(), 3);
    assert!(d.join("sausages/1.fst").exists());
    let ckpt = fs::read_to_string(d.join("m.ckpt")).unwrap();
    assert!(ckpt.contains("# epoch 3 "));
    ptforge::seq2seq::parse_checkpoint(&ckpt, "m.ckpt").unwrap();
}

#[test]
fn g2p_compile_writes_machine_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g2p.fst");
    let o = ptforge(&["g2p-compile", "--rules", &fixtures("demo/rules.tsv"), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let isyms = fs::read_to_string(out.with_extension("isyms")).unwrap();
    let osyms = fs::read_to_string(out.with_extension("osyms")).unwrap();
    let isyms = ptforge::fst::SymbolTable::parse(&isyms, "i").unwrap().shared();
    let osyms = ptforge::fst::SymbolTable::parse(&osyms, "o").unwrap().shared();
    assert!(isyms.id("#").is_some() && isyms.id("c").is_some());
    let fst = ptforge::fst::parse_att(&fs::read_to_string(&out).unwrap(), isyms, osyms, "g2p").unwrap();
    assert!(fst.num_arcs() >= 12);
}
