//! Text query files.
//!
//! ```text
//! #holofactor v1 d=4 f=2
//! 1 -1 -1 1 | 0 3
//! 1 1 -1 -1
//! ```
//!
//! One query per line with `d` entries, optionally followed by `|` and `f`
//! ground-truth indices. Entries other than exactly ±1 are read as reals and
//! bipolarized by sign; exact zeros are broken with a recorded seed.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::seed::{split_seed, stream_rng, Stream};
use crate::vsa::{bipolarize, Hypervector};

const MAGIC: &str = "#holofactor";

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledQuery {
    pub product: Hypervector,
    pub truth: Option<Vec<usize>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryFile {
    pub d: usize,
    pub f: usize,
    pub queries: Vec<LabeledQuery>,
    /// One entry per line that needed bipolarization.
    pub warnings: Vec<String>,
    pub tie_break_seed: u64,
}

pub fn ingest_queries(path: impl AsRef<Path>, tie_break_seed: u64) -> Result<QueryFile> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading queries {}", path.display()), e))?;
    parse_queries(&text, path, tie_break_seed)
}

pub fn parse_queries(text: &str, source: &Path, tie_break_seed: u64) -> Result<QueryFile> {
    let err = |line: usize, message: String| Error::Parse {
        path: PathBuf::from(source),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    let (d, f) = loop {
        match lines.next() {
            Some((_, "")) => continue,
            Some((n, l)) => break parse_header(l).map_err(|m| err(n, m))?,
            None => return Err(err(1, "missing header line".into())),
        }
    };

    let mut queries = Vec::new();
    let mut warnings = Vec::new();
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (body, truth) = match line.split_once('|') {
            Some((b, t)) => (b, Some(t)),
            None => (line, None),
        };
        let values = body
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| err(n, format!("not a finite number: {tok:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.len() != d {
            return Err(err(n, format!("dimension mismatch: expected {d} entries, got {}", values.len())));
        }
        let product = if values.iter().all(|&v| v == 1.0 || v == -1.0) {
            Hypervector::from_fn(d, |i| values[i] < 0.0)
        } else {
            let seed = split_seed(tie_break_seed, n as u64);
            let zeros = values.iter().filter(|&&v| v == 0.0).count();
            warnings.push(format!(
                "line {n}: real-valued entries bipolarized by sign ({zeros} zero entries broken with tie-break seed {tie_break_seed})"
            ));
            bipolarize(&values, &mut stream_rng(seed, Stream::TieBreak))
        };
        let truth = truth
            .map(|t| {
                let idx = t
                    .split_whitespace()
                    .map(|tok| tok.parse::<usize>().map_err(|_| err(n, format!("bad truth index {tok:?}"))))
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() != f {
                    return Err(err(n, format!("expected {f} truth indices, got {}", idx.len())));
                }
                Ok(idx)
            })
            .transpose()?;
        queries.push(LabeledQuery { product, truth });
    }
    Ok(QueryFile { d, f, queries, warnings, tie_break_seed })
}

fn parse_header(line: &str) -> std::result::Result<(usize, usize), String> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(MAGIC) || parts.next() != Some("v1") {
        return Err(format!("expected header `{MAGIC} v1 d=<D> f=<F>`, got {line:?}"));
    }
    let (mut d, mut f) = (None, None);
    for kv in parts {
        match kv.split_once('=') {
            Some(("d", v)) => d = v.parse().ok(),
            Some(("f", v)) => f = v.parse().ok(),
            _ => return Err(format!("unknown header field {kv:?}")),
        }
    }
    match (d, f) {
        (Some(d), Some(f)) if d > 0 && f > 0 => Ok((d, f)),
        _ => Err("header needs positive d= and f=".into()),
    }
}

pub fn format_queries(d: usize, f: usize, queries: &[LabeledQuery]) -> String {
    let mut out = format!("{MAGIC} v1 d={d} f={f}\n");
    for q in queries {
        let entries: Vec<String> = q.product.iter().map(|v| v.to_string()).collect();
        out.push_str(&entries.join(" "));
        if let Some(t) = &q.truth {
            out.push_str(" |");
            for i in t {
                let _ = write!(out, " {i}");
            }
        }
        out.push('\n');
    }
    out
}

pub fn write_queries(path: impl AsRef<Path>, d: usize, f: usize, queries: &[LabeledQuery]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, format_queries(d, f, queries))
        .map_err(|e| Error::io(format!("writing queries {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<QueryFile> {
        parse_queries(text, Path::new("q.txt"), 9)
    }

    #[test]
    fn parses_bipolar_lines_with_and_without_truth() {
        let f = parse("#holofactor v1 d=4 f=2\n1 -1 -1 1 | 0 3\n\n1 1 -1 -1\n").unwrap();
        assert_eq!((f.d, f.f, f.queries.len()), (4, 2, 2));
        assert_eq!(f.queries[0].product.to_bipolar(), vec![1, -1, -1, 1]);
        assert_eq!(f.queries[0].truth, Some(vec![0, 3]));
        assert_eq!(f.queries[1].truth, None);
        assert!(f.warnings.is_empty());
    }

    #[test]
    fn reals_are_bipolarized_with_a_warning() {
        let text = "#holofactor v1 d=3 f=2\n0.3 -2 0\n";
        let a = parse(text).unwrap();
        assert_eq!(a.warnings.len(), 1);
        assert!(a.warnings[0].contains("line 2") && a.warnings[0].contains("1 zero"));
        let v = a.queries[0].product.to_bipolar();
        assert_eq!(&v[..2], &[1, -1]);
        assert_eq!(parse(text).unwrap(), a);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let cases = [
            ("#holofactor v1 d=3 f=2\n1 1 1\n1 1\n", 3),
            ("#holofactor v1 d=3 f=2\n1 x 1\n", 2),
            ("#holofactor v1 d=3 f=2\n1 1 1 | 0\n", 2),
            ("#holofactor v1 d=3 f=2\n1 1 1 | 0 -1\n", 2),
            ("#holofactor v2 d=3 f=2\n", 1),
            ("\n\n#holofactor v1 d=3\n", 3),
            ("", 1),
        ];
        for (text, want) in cases {
            match parse(text) {
                Err(Error::Parse { line, .. }) => assert_eq!(line, want, "{text:?}"),
                other => panic!("{text:?}: {other:?}"),
            }
        }
    }

    #[test]
    fn format_round_trips() {
        let queries = vec![
            LabeledQuery { product: Hypervector::from_bipolar(&[1, -1, 1]).unwrap(), truth: Some(vec![2, 0]) },
            LabeledQuery { product: Hypervector::from_bipolar(&[-1, -1, 1]).unwrap(), truth: None },
        ];
        let text = format_queries(3, 2, &queries);
        assert_eq!(parse(&text).unwrap().queries, queries);
    }
}
