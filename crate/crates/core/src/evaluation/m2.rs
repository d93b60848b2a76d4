//! M2-style gold edit files.
//!
//! ```text
//! S He go home .
//! A 1 2|||R|||goes|||REQUIRED|||-NONE-|||0
//!
//! ```
//!
//! The type field is carried through but never interpreted. `-NONE-` or an empty
//! replacement marks a deletion; `A -1 -1|||noop|||...` declares an annotator with
//! no edits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::GoldAnnotation;
use crate::error::{Error, Result};
use crate::textcore::{tokenize, Edit, EditKind, TokenSeq};

const NONE: &str = "-NONE-";

pub fn read_m2(path: impl AsRef<Path>) -> Result<Vec<GoldAnnotation>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_m2(&text, path)
}

pub fn write_m2(path: impl AsRef<Path>, golds: &[GoldAnnotation]) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, render_m2(golds)).map_err(|e| Error::io(path, e))
}

/// Parses M2 text; `origin` is only used in error messages.
pub fn parse_m2(text: &str, origin: &Path) -> Result<Vec<GoldAnnotation>> {
    let mut out = Vec::new();
    let mut current: Option<(TokenSeq, BTreeMap<usize, Vec<Edit>>)> = None;

    let finish = |cur: Option<(TokenSeq, BTreeMap<usize, Vec<Edit>>)>,
                  out: &mut Vec<GoldAnnotation>,
                  line: usize|
     -> Result<()> {
        if let Some((source, by_annotator)) = cur {
            let count = by_annotator.keys().next_back().map_or(1, |&m| m + 1);
            let mut annotators = vec![Vec::new(); count];
            for (id, mut edits) in by_annotator {
                edits.sort();
                annotators[id] = edits;
            }
            let gold =
                GoldAnnotation::new(source, annotators).map_err(|e| Error::parse(origin, line, e.to_string()))?;
            out.push(gold);
        }
        Ok(())
    };

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.trim_end();
        if line.is_empty() {
            finish(current.take(), &mut out, lineno)?;
            continue;
        }
        if let Some(rest) = line.strip_prefix("S") {
            if !(rest.is_empty() || rest.starts_with(' ')) {
                return Err(Error::parse(origin, lineno, "expected 'S <tokens>'"));
            }
            finish(current.take(), &mut out, lineno)?;
            current = Some((tokenize(rest), BTreeMap::new()));
        } else if let Some(rest) = line.strip_prefix("A ") {
            let Some((_, by_annotator)) = current.as_mut() else {
                return Err(Error::parse(origin, lineno, "'A' line before any 'S' line"));
            };
            let fields: Vec<&str> = rest.split("|||").collect();
            if fields.len() < 3 {
                return Err(Error::parse(origin, lineno, "malformed 'A' line"));
            }
            let span: Vec<&str> = fields[0].split_whitespace().collect();
            if span.len() != 2 {
                return Err(Error::parse(origin, lineno, "expected '<start> <end>' span"));
            }
            let annotator = match fields.last() {
                Some(id) if fields.len() >= 6 => id
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(origin, lineno, "bad annotator id"))?,
                _ => 0,
            };
            let edits = by_annotator.entry(annotator).or_default();
            if span == ["-1", "-1"] {
                continue;
            }
            let parse_idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| Error::parse(origin, lineno, format!("bad span index {s:?}")))
            };
            let (start, end) = (parse_idx(span[0])?, parse_idx(span[1])?);
            let rep = fields[2].trim();
            let replacement = if rep == NONE {
                Vec::new()
            } else {
                tokenize(rep).into_inner()
            };
            edits.push(Edit::new(start, end, replacement));
        } else {
            return Err(Error::parse(origin, lineno, "expected an 'S' or 'A' line"));
        }
    }
    finish(current.take(), &mut out, text.lines().count() + 1)?;
    Ok(out)
}

fn type_tag(e: &Edit) -> &'static str {
    match e.kind() {
        EditKind::Insert => "M",
        EditKind::Delete => "U",
        EditKind::Substitute => "R",
    }
}

pub fn render_m2(golds: &[GoldAnnotation]) -> String {
    let mut s = String::new();
    for gold in golds {
        if gold.source.is_empty() {
            s.push_str("S\n");
        } else {
            writeln!(s, "S {}", gold.source).unwrap();
        }
        for (id, edits) in gold.annotators().iter().enumerate() {
            if edits.is_empty() {
                writeln!(s, "A -1 -1|||noop|||{NONE}|||REQUIRED|||{NONE}|||{id}").unwrap();
            }
            for e in edits {
                let rep = if e.replacement.is_empty() {
                    NONE.to_string()
                } else {
                    e.replacement.join(" ")
                };
                writeln!(
                    s,
                    "A {} {}|||{}|||{}|||REQUIRED|||{NONE}|||{id}",
                    e.start,
                    e.end,
                    type_tag(e),
                    rep
                )
                .unwrap();
            }
        }
        s.push('\n');
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = "S He go home\nA 1 2|||R:VERB:SVA|||goes|||REQUIRED|||-NONE-|||0\nA 3 3|||M:PUNCT|||.|||REQUIRED|||-NONE-|||1\n\nS fine .\nA -1 -1|||noop|||-NONE-|||REQUIRED|||-NONE-|||0\n\nS the the cat\nA 0 1|||U:DET||||||REQUIRED|||-NONE-|||0\n";

    #[test]
    fn parses_sample() {
        let golds = parse_m2(SAMPLE, Path::new("sample.m2")).unwrap();
        assert_eq!(golds.len(), 3);
        assert_eq!(golds[0].annotators().len(), 2);
        assert_eq!(golds[0].annotators()[0], vec![Edit::new(1, 2, vec!["goes".into()])]);
        assert_eq!(golds[0].annotators()[1], vec![Edit::new(3, 3, vec![".".into()])]);
        assert_eq!(golds[1].annotators(), &[Vec::<Edit>::new()]);
        assert_eq!(golds[2].annotators()[0], vec![Edit::new(0, 1, vec![])]);
    }

    #[test]
    fn render_then_parse() {
        let golds = parse_m2(SAMPLE, Path::new("sample.m2")).unwrap();
        let text = render_m2(&golds);
        assert_eq!(parse_m2(&text, Path::new("x")).unwrap(), golds);
    }

    #[test]
    fn malformed_lines_name_the_line() {
        let err = parse_m2("S a b\nA 0|||R|||x\n", Path::new("bad.m2")).unwrap_err();
        assert!(err.to_string().starts_with("bad.m2:2:"), "{err}");
        assert!(parse_m2("A 0 1|||R|||x|||REQUIRED|||-NONE-|||0\n", Path::new("x")).is_err());
        assert!(parse_m2("S a b\nA 0 5|||R|||x|||REQUIRED|||-NONE-|||0\n", Path::new("x")).is_err());
        assert!(parse_m2("X junk\n", Path::new("x")).is_err());
    }
}
