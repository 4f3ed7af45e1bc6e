use std::collections::HashMap;
use std::sync::Arc;

use crate::textfmt::data_lines;
use crate::{Error, Result};

/// Label identifier. `0` is always epsilon.
pub type Label = u32;

pub const EPSILON: Label = 0;
pub const EPSILON_SYMBOL: &str = "<eps>";

/// Bijective map between label ids and UTF-8 symbols, with contiguous ids
/// starting at the reserved epsilon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolTable {
    symbols: Vec<String>,
    ids: HashMap<String, Label>,
}

impl Default for SymbolTable {
    fn default() -> Self {
        Self::new()
    }
}

impl SymbolTable {
    pub fn new() -> Self {
        let mut ids = HashMap::new();
        ids.insert(EPSILON_SYMBOL.to_string(), EPSILON);
        SymbolTable {
            symbols: vec![EPSILON_SYMBOL.to_string()],
            ids,
        }
    }

    /// Builds a table from symbols in order; duplicates are ignored.
    pub fn from_symbols<I, S>(symbols: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut table = SymbolTable::new();
        for s in symbols {
            table.add(s.as_ref());
        }
        table
    }

    /// Returns the id of `symbol`, inserting it if absent.
    pub fn add(&mut self, symbol: &str) -> Label {
        if let Some(&id) = self.ids.get(symbol) {
            return id;
        }
        let id = self.symbols.len() as Label;
        self.symbols.push(symbol.to_string());
        self.ids.insert(symbol.to_string(), id);
        id
    }

    pub fn id(&self, symbol: &str) -> Option<Label> {
        self.ids.get(symbol).copied()
    }

    pub fn symbol(&self, id: Label) -> Option<&str> {
        self.symbols.get(id as usize).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    /// True when only epsilon is present.
    pub fn is_empty(&self) -> bool {
        self.symbols.len() == 1
    }

    pub fn contains(&self, id: Label) -> bool {
        (id as usize) < self.symbols.len()
    }

    /// Non-epsilon `(id, symbol)` pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (Label, &str)> {
        self.symbols
            .iter()
            .enumerate()
            .skip(1)
            .map(|(i, s)| (i as Label, s.as_str()))
    }

    /// Maps symbols to ids, collecting every unknown symbol into the error.
    pub fn encode<S: AsRef<str>>(&self, symbols: &[S]) -> Result<Vec<Label>> {
        let mut unknown = Vec::new();
        let ids: Vec<Label> = symbols
            .iter()
            .map(|s| {
                self.id(s.as_ref()).unwrap_or_else(|| {
                    unknown.push(s.as_ref().to_string());
                    EPSILON
                })
            })
            .collect();
        if unknown.is_empty() {
            Ok(ids)
        } else {
            unknown.sort();
            unknown.dedup();
            Err(Error::UnknownSymbols(unknown))
        }
    }

    pub fn decode(&self, labels: &[Label]) -> Vec<String> {
        labels
            .iter()
            .map(|&l| self.symbol(l).unwrap_or("<?>").to_string())
            .collect()
    }

    /// Space-joined rendering of a label sequence.
    pub fn render(&self, labels: &[Label]) -> String {
        self.decode(labels).join(" ")
    }

    /// Serializes as `symbol<TAB>id` lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, s) in self.symbols.iter().enumerate() {
            out.push_str(s);
            out.push('\t');
            out.push_str(&i.to_string());
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (line_no, line) in data_lines(text) {
            let (sym, id) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source_name, line_no, "expected 'symbol<TAB>id'"))?;
            let id: usize = id
                .trim()
                .parse()
                .map_err(|_| Error::parse(source_name, line_no, format!("bad id '{id}'")))?;
            entries.push((id, sym.to_string(), line_no));
        }
        entries.sort_by_key(|e| e.0);
        let mut table = SymbolTable::new();
        for (expected, (id, sym, line_no)) in entries.into_iter().enumerate() {
            if id != expected {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("ids must be contiguous from 0; expected {expected}, found {id}"),
                ));
            }
            if id == 0 {
                if sym != EPSILON_SYMBOL {
                    return Err(Error::parse(source_name, line_no, "id 0 must be <eps>"));
                }
                continue;
            }
            if table.ids.contains_key(&sym) {
                return Err(Error::parse(source_name, line_no, format!("duplicate symbol '{sym}'")));
            }
            table.add(&sym);
        }
        Ok(table)
    }

    pub fn shared(self) -> Arc<SymbolTable> {
        Arc::new(self)
    }
}

/// Checks that two tables describe the same alphabet.
pub fn same_table(a: &Arc<SymbolTable>, b: &Arc<SymbolTable>) -> bool {
    Arc::ptr_eq(a, b) || a == b
}
