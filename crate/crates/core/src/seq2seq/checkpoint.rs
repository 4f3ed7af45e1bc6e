//! Text checkpoints: a header, both vocabularies, then every tensor with
//! its name and shape. Values use the shortest decimal form that parses
//! back to the same `f64`.

use std::fmt::Write as _;

use super::{Seq2SeqParams, Vocab};
use crate::{Error, Result};

const MAGIC: &str = "ptforge-seq2seq 1";

pub fn write_checkpoint(p: &Seq2SeqParams) -> String {
    let lay = p.layout();
    let mut out = String::new();
    writeln!(out, "{MAGIC}").unwrap();
    writeln!(out, "hidden {}", lay.hidden).unwrap();
    writeln!(out, "layers {}", lay.layers).unwrap();
    writeln!(out, "input_vocab {}", p.input_vocab().symbols().join(" ")).unwrap();
    writeln!(out, "output_vocab {}", p.output_vocab().symbols().join(" ")).unwrap();
    for (name, rows, cols, off) in lay.tensors() {
        writeln!(out, "tensor {name} {rows} {cols}").unwrap();
        for r in 0..rows {
            let row = &p.weights()[off + r * cols..off + (r + 1) * cols];
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(" ")).unwrap();
        }
    }
    out.push_str("end\n");
    out
}

struct Reader<'a> {
    lines: Vec<(usize, &'a str)>,
    pos: usize,
    source: &'a str,
}

impl<'a> Reader<'a> {
    fn line(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let l = self
            .lines
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::parse(self.source, 0, format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(l)
    }

    /// Reads `key rest` and returns `rest`.
    fn field(&mut self, key: &str) -> Result<(usize, &'a str)> {
        let (no, line) = self.line(key)?;
        let (k, rest) = line.split_once(' ').unwrap_or((line, ""));
        if k != key {
            return Err(Error::parse(self.source, no, format!("expected '{key}'")));
        }
        Ok((no, rest))
    }

    fn number(&mut self, key: &str) -> Result<usize> {
        let (no, s) = self.field(key)?;
        s.trim()
            .parse()
            .map_err(|_| Error::parse(self.source, no, "expected an integer"))
    }

    fn vocab(&mut self, key: &str) -> Result<Vocab> {
        let (no, s) = self.field(key)?;
        Vocab::new(s.split_whitespace()).map_err(|e| Error::parse(self.source, no, e.to_string()))
    }
}

pub fn parse_checkpoint(text: &str, source_name: &str) -> Result<Seq2SeqParams> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !crate::textfmt::is_comment(l))
        .collect();
    let mut rd = Reader {
        lines,
        pos: 0,
        source: source_name,
    };
    let (no, magic) = rd.line("header")?;
    if magic != MAGIC {
        return Err(Error::parse(source_name, no, format!("expected '{MAGIC}'")));
    }
    let hidden = rd.number("hidden")?;
    let layers = rd.number("layers")?;
    if hidden == 0 || layers == 0 {
        return Err(Error::parse(
            source_name,
            no,
            "hidden size and layer count must be positive",
        ));
    }
    let input_vocab = rd.vocab("input_vocab")?;
    let output_vocab = rd.vocab("output_vocab")?;

    let layout = super::Layout::new(input_vocab.len(), output_vocab.len(), hidden, layers);
    let mut weights = Vec::with_capacity(layout.len());
    for (name, rows, cols, _) in layout.tensors() {
        let (no, header) = rd.field("tensor")?;
        if header != format!("{name} {rows} {cols}") {
            return Err(Error::parse(
                source_name,
                no,
                format!("expected tensor '{name} {rows} {cols}', found '{header}'"),
            ));
        }
        for _ in 0..rows {
            let (no, line) = rd.line("tensor values")?;
            let before = weights.len();
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::parse(source_name, no, format!("bad number '{tok}'")))?;
                weights.push(v);
            }
            if weights.len() - before != cols {
                return Err(Error::parse(source_name, no, format!("expected {cols} values")));
            }
        }
    }
    let (no, end) = rd.line("end")?;
    if end != "end" {
        return Err(Error::parse(source_name, no, "expected 'end'"));
    }
    Seq2SeqParams::from_weights(input_vocab, output_vocab, hidden, layers, weights)
}
