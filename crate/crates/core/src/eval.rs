//! Phone error rate scoring.

use std::fmt::Write as _;

use crate::exec::{self, Execution};
use crate::textfmt::is_comment;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match {
        hyp: usize,
        reference: usize,
    },
    Substitution {
        hyp: usize,
        reference: usize,
    },
    /// A reference symbol missing from the hypothesis.
    Deletion {
        reference: usize,
    },
    /// A hypothesis symbol with no reference counterpart.
    Insertion {
        hyp: usize,
    },
}

/// Edit counts, additive over utterances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ErrorCounts {
    pub matches: usize,
    pub substitutions: usize,
    pub insertions: usize,
    pub deletions: usize,
    pub reference_len: usize,
}

impl ErrorCounts {
    pub fn edits(&self) -> usize {
        self.substitutions + self.insertions + self.deletions
    }

    /// Unrounded percentage; `None` for an empty reference.
    pub fn percent(&self) -> Option<f64> {
        (self.reference_len > 0).then(|| 100.0 * self.edits() as f64 / self.reference_len as f64)
    }
}

impl std::ops::Add for ErrorCounts {
    type Output = ErrorCounts;
    fn add(self, o: ErrorCounts) -> ErrorCounts {
        ErrorCounts {
            matches: self.matches + o.matches,
            substitutions: self.substitutions + o.substitutions,
            insertions: self.insertions + o.insertions,
            deletions: self.deletions + o.deletions,
            reference_len: self.reference_len + o.reference_len,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EditAlignment {
    pub ops: Vec<EditOp>,
    pub counts: ErrorCounts,
}

impl EditAlignment {
    pub fn cost(&self) -> usize {
        self.counts.edits()
    }
}

/// Minimal unit-cost alignment. On ties the backtrace prefers a match, then
/// a substitution, then a deletion, then an insertion.
pub fn align<T: PartialEq>(hyp: &[T], reference: &[T]) -> EditAlignment {
    let (n, m) = (hyp.len(), reference.len());
    // d[i][j]: cost of aligning hyp[..i] with reference[..j].
    let mut d = vec![vec![0usize; m + 1]; n + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for j in 0..=m {
        d[0][j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let diag = d[i - 1][j - 1] + usize::from(hyp[i - 1] != reference[j - 1]);
            d[i][j] = diag.min(d[i][j - 1] + 1).min(d[i - 1][j] + 1);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let mut counts = ErrorCounts {
        reference_len: m,
        ..ErrorCounts::default()
    };
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        if i > 0 && j > 0 {
            let same = hyp[i - 1] == reference[j - 1];
            if d[i][j] == d[i - 1][j - 1] + usize::from(!same) {
                i -= 1;
                j -= 1;
                if same {
                    counts.matches += 1;
                    ops.push(EditOp::Match { hyp: i, reference: j });
                } else {
                    counts.substitutions += 1;
                    ops.push(EditOp::Substitution { hyp: i, reference: j });
                }
                continue;
            }
        }
        if j > 0 && d[i][j] == d[i][j - 1] + 1 {
            j -= 1;
            counts.deletions += 1;
            ops.push(EditOp::Deletion { reference: j });
        } else {
            i -= 1;
            counts.insertions += 1;
            ops.push(EditOp::Insertion { hyp: i });
        }
    }
    ops.reverse();
    EditAlignment { ops, counts }
}

/// Rounds half away from zero to `decimals` places. The tiny relative nudge
/// absorbs binary representation error so that decimal ties such as 0.125
/// computed as 0.12499999 still round outward.
pub fn round_half_away(x: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (x * scale * (1.0 + 1e-12)).round() / scale
}

/// Pooled counts over a corpus of `(hyp, ref)` pairs.
pub fn corpus_counts<T: PartialEq + Sync>(pairs: &[(Vec<T>, Vec<T>)], exec: Execution) -> ErrorCounts {
    exec::map(pairs, exec, |(h, r)| align(h, r).counts)
        .into_iter()
        .fold(ErrorCounts::default(), |a, b| a + b)
}

/// Corpus PER as a percentage rounded to two decimals: total edits over
/// total reference length.
pub fn phone_error_rate<T: PartialEq + Sync>(pairs: &[(Vec<T>, Vec<T>)], exec: Execution) -> Result<f64> {
    let counts = corpus_counts(pairs, exec);
    let pct = counts
        .percent()
        .ok_or_else(|| Error::contract("phone error rate is undefined when every reference is empty"))?;
    Ok(round_half_away(pct, 2))
}

/// Relative reduction of `improved` against `baseline`, in percent,
/// rounded to one decimal.
pub fn relative_reduction(baseline: f64, improved: f64) -> Result<f64> {
    if !(baseline > 0.0) || !improved.is_finite() {
        return Err(Error::contract(format!(
            "relative reduction needs a positive baseline, got {baseline}"
        )));
    }
    Ok(round_half_away(100.0 * (baseline - improved) / baseline, 1))
}

/// Reads one utterance per line, phones separated by spaces. Comment lines
/// are skipped; blank lines are empty utterances.
pub fn parse_utterances(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.trim_end_matches('\r'))
        .filter(|l| !is_comment(l))
        .map(|l| l.split_whitespace().map(str::to_string).collect())
        .collect()
}

/// Pairs hypothesis and reference utterances by position.
pub fn pair_utterances(hyp: Vec<Vec<String>>, reference: Vec<Vec<String>>) -> Result<Vec<(Vec<String>, Vec<String>)>> {
    if hyp.len() != reference.len() {
        return Err(Error::contract(format!(
            "{} hypothesis utterances but {} reference utterances",
            hyp.len(),
            reference.len()
        )));
    }
    Ok(hyp.into_iter().zip(reference).collect())
}

/// One row of a score report.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemScore {
    pub system: String,
    pub per: f64,
}

/// `system<TAB>PER<TAB>rel_reduction_vs_baseline`; the first row is the
/// baseline and its reduction column reads `-`.
pub fn score_report(rows: &[SystemScore]) -> Result<String> {
    let mut out = String::from("system\tPER\trel_reduction_vs_baseline\n");
    let baseline = rows.first().map(|r| r.per);
    for (k, row) in rows.iter().enumerate() {
        let rel = match (k, baseline) {
            (0, _) | (_, None) => "-".to_string(),
            (_, Some(b)) => format!("{:.1}", relative_reduction(b, row.per)?),
        };
        writeln!(out, "{}\t{:.2}\t{}", row.system, row.per, rel).unwrap();
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<&str> {
        s.split_whitespace().collect()
    }

    // Plain recursive edit distance, exponential but obviously correct.
    fn naive_distance(a: &[u8], b: &[u8]) -> usize {
        match (a.split_first(), b.split_first()) {
            (None, _) => b.len(),
            (_, None) => a.len(),
            (Some((x, ar)), Some((y, br))) => {
                let sub = naive_distance(ar, br) + usize::from(x != y);
                sub.min(naive_distance(ar, b) + 1).min(naive_distance(a, br) + 1)
            }
        }
    }

    #[test]
    fn identical_is_all_matches() {
        let a = align(&toks("a b c"), &toks("a b c"));
        assert_eq!(a.cost(), 0);
        assert_eq!(a.counts.matches, 3);
    }

    #[test]
    fn single_deletion() {
        let a = align(&toks("a c"), &toks("a b c"));
        assert_eq!(a.counts.deletions, 1);
        assert_eq!(a.cost(), 1);
        assert_eq!(a.ops[1], EditOp::Deletion { reference: 1 });
        let per = phone_error_rate(&[(toks("a c"), toks("a b c"))], Execution::Sequential).unwrap();
        assert_eq!(per, 33.33);
    }

    #[test]
    fn ties_prefer_substitution_over_indels() {
        let a = align(&toks("x"), &toks("y"));
        assert_eq!(a.counts.substitutions, 1);
        assert_eq!(a.ops.len(), 1);
    }

    #[test]
    fn pooled_not_averaged() {
        // 1/1 and 0/9 average to 50%, pooled they give 10%.
        let pairs = vec![
            (toks("x"), toks("a")),
            (toks("a b c d e f g h i"), toks("a b c d e f g h i")),
        ];
        assert_eq!(phone_error_rate(&pairs, Execution::Parallel).unwrap(), 10.0);
    }

    #[test]
    fn insertions_can_exceed_hundred_percent() {
        let per = phone_error_rate(&[(toks("a b c"), toks("a"))], Execution::Sequential).unwrap();
        assert_eq!(per, 200.0);
        assert!(phone_error_rate::<&str>(&[(toks("a"), vec![])], Execution::Sequential).is_err());
    }

    #[test]
    fn reductions_from_tables() {
        assert_eq!(relative_reduction(66.2, 60.9).unwrap(), 8.0);
        assert_eq!(relative_reduction(44.31, 41.21).unwrap(), 7.0);
        assert_eq!(relative_reduction(50.0, 50.0).unwrap(), 0.0);
        assert!(relative_reduction(0.0, 1.0).is_err());
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(round_half_away(0.125, 2), 0.13);
        assert_eq!(round_half_away(-0.125, 2), -0.13);
        assert_eq!(round_half_away(8.05, 1), 8.1);
        assert_eq!(round_half_away(2.675, 2), 2.68);
    }

    #[test]
    fn utterance_files() {
        let u = parse_utterances("# ptforge header\na b\n\nc\n");
        assert_eq!(u, vec![vec!["a", "b"], vec![], vec!["c"]]);
    }

    #[test]
    fn report_layout() {
        let rows = [
            SystemScore {
                system: "fst".into(),
                per: 66.2,
            },
            SystemScore {
                system: "rnn".into(),
                per: 60.9,
            },
        ];
        assert_eq!(
            score_report(&rows).unwrap(),
            "system\tPER\trel_reduction_vs_baseline\nfst\t66.20\t-\nrnn\t60.90\t8.0\n"
        );
    }

    proptest! {
        #[test]
        fn cost_matches_naive_and_is_symmetric(
            a in prop::collection::vec(0u8..3, 0..7),
            b in prop::collection::vec(0u8..3, 0..7),
        ) {
            let ab = align(&a, &b);
            prop_assert_eq!(ab.cost(), naive_distance(&a, &b));
            prop_assert_eq!(ab.cost(), align(&b, &a).cost());
            let c = ab.counts;
            prop_assert_eq!(c.substitutions + c.deletions + c.matches, b.len());
            prop_assert_eq!(c.substitutions + c.insertions + c.matches, a.len());
        }
    }
}
