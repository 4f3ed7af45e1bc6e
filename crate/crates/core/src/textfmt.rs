//! Shared helpers for the line-oriented text formats.

/// Formats `v` with 9 significant digits, in the style of C's `%.9g`.
pub fn format_sig9(v: f64) -> String {
    if v.is_infinite() {
        return if v > 0.0 { "Infinity".into() } else { "-Infinity".into() };
    }
    if v == 0.0 {
        return "0".into();
    }
    let sci = format!("{v:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..9).contains(&exp) {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_fraction(mantissa), sign, exp.abs())
    } else {
        let decimals = (8 - exp) as usize;
        trim_fraction(&format!("{v:.decimals$}")).to_string()
    }
}

fn trim_fraction(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Parses a number written by [`format_sig9`] (or any float literal).
pub fn parse_f64(s: &str) -> Option<f64> {
    match s {
        "Infinity" | "inf" | "+inf" | "INF" => Some(f64::INFINITY),
        "-Infinity" | "-inf" | "-INF" => Some(f64::NEG_INFINITY),
        _ => s.parse::<f64>().ok().filter(|v| !v.is_nan()),
    }
}

/// Header and comment lines start with `"# "` or consist of a lone `#`.
/// A bare `#` followed by a tab is data (the word-boundary symbol).
pub fn is_comment(line: &str) -> bool {
    line == "#" || line.starts_with("# ")
}

/// Yields `(line_number, line)` for lines that are neither blank nor
/// comments. Line numbers are 1-based.
pub fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !is_comment(l))
}
