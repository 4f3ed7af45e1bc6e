//! AT&T-style text serialization.
//!
//! Arc lines are `src dst ilabel olabel [weight]`, final lines are
//! `state [weight]`; an omitted weight means `One`. Labels are written as
//! symbols from the machine's tables. The first line's source state is the
//! start state.

use std::fmt::Write as _;
use std::sync::Arc;

use super::{StateId, SymbolTable, Weight, Wfst};
use crate::textfmt::{data_lines, format_sig9, parse_f64};
use crate::{Error, Result};

pub fn write_att(fst: &Wfst) -> String {
    let mut out = String::new();
    let Some(start) = fst.start() else {
        return out;
    };
    let isyms = fst.input_symbols();
    let osyms = fst.output_symbols();
    let order = std::iter::once(start).chain((0..fst.num_states()).filter(|&s| s != start));
    for s in order {
        for a in fst.arcs(s) {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}",
                s,
                a.next,
                isyms.symbol(a.ilabel).expect("valid label"),
                osyms.symbol(a.olabel).expect("valid label")
            );
            if !a.weight.is_one() {
                let _ = write!(out, "\t{}", format_sig9(a.weight.value()));
            }
            out.push('\n');
        }
        let fw = fst.final_weight(s);
        if fst.is_final(s) || (s == start && fst.arcs(s).is_empty()) {
            if fw.is_one() {
                let _ = writeln!(out, "{s}");
            } else {
                let _ = writeln!(out, "{s}\t{}", format_sig9(fw.value()));
            }
        }
    }
    out
}

pub fn parse_att(text: &str, isyms: Arc<SymbolTable>, osyms: Arc<SymbolTable>, source_name: &str) -> Result<Wfst> {
    enum Line {
        Arc(StateId, StateId, u32, u32, Weight),
        Final(StateId, Weight),
    }
    let err = |line: usize, msg: String| Error::parse(source_name, line, msg);
    let state =
        |line: usize, s: &str| -> Result<StateId> { s.parse().map_err(|_| err(line, format!("bad state id '{s}'"))) };
    let weight = |line: usize, s: &str| -> Result<Weight> {
        parse_f64(s)
            .map(Weight::new)
            .ok_or_else(|| err(line, format!("bad weight '{s}'")))
    };
    let label = |line: usize, table: &SymbolTable, s: &str| -> Result<u32> {
        table.id(s).ok_or_else(|| err(line, format!("unknown symbol '{s}'")))
    };

    let mut lines = Vec::new();
    let mut max_state = None::<StateId>;
    for (no, raw) in data_lines(text) {
        let f: Vec<&str> = raw.split_whitespace().collect();
        let parsed = match f.len() {
            1 => Line::Final(state(no, f[0])?, Weight::ONE),
            2 => Line::Final(state(no, f[0])?, weight(no, f[1])?),
            3 => {
                let l = label(no, &isyms, f[2])?;
                let o = label(no, &osyms, f[2])?;
                Line::Arc(state(no, f[0])?, state(no, f[1])?, l, o, Weight::ONE)
            }
            4 | 5 => Line::Arc(
                state(no, f[0])?,
                state(no, f[1])?,
                label(no, &isyms, f[2])?,
                label(no, &osyms, f[3])?,
                if f.len() == 5 { weight(no, f[4])? } else { Weight::ONE },
            ),
            k => return Err(err(no, format!("expected 1-5 fields, found {k}"))),
        };
        let hi = match parsed {
            Line::Arc(s, d, ..) => s.max(d),
            Line::Final(s, _) => s,
        };
        max_state = Some(max_state.map_or(hi, |m| m.max(hi)));
        lines.push(parsed);
    }

    let mut fst = Wfst::new(isyms, osyms);
    let Some(max_state) = max_state else {
        return Ok(fst);
    };
    fst.add_states(max_state + 1);
    let start = match lines[0] {
        Line::Arc(s, ..) | Line::Final(s, _) => s,
    };
    fst.set_start(start);
    for l in lines {
        match l {
            Line::Arc(s, d, i, o, w) => fst.add_arc(s, i, o, w, d),
            Line::Final(s, w) => fst.set_final(s, w),
        }
    }
    Ok(fst)
}
