//! Tokens, token-level edit distance, canonical edit scripts and n-gram counts.

use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A whitespace-tokenized sentence. Tokens are never empty and never contain whitespace.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TokenSeq(Vec<String>);

impl TokenSeq {
    /// Builds a sequence from explicit tokens, rejecting empty tokens or tokens with whitespace.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if let Some(bad) = tokens
            .iter()
            .find(|t| t.is_empty() || t.chars().any(char::is_whitespace))
        {
            return Err(Error::invalid(format!("invalid token {bad:?}")));
        }
        Ok(TokenSeq(tokens))
    }

    pub fn empty() -> Self {
        TokenSeq(Vec::new())
    }

    pub fn tokens(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, String> {
        self.0.iter()
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl fmt::Display for TokenSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.join(" "))
    }
}

impl FromStr for TokenSeq {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(tokenize(s))
    }
}

impl<'a> IntoIterator for &'a TokenSeq {
    type Item = &'a String;
    type IntoIter = std::slice::Iter<'a, String>;

    fn into_iter(self) -> Self::IntoIter {
        self.0.iter()
    }
}

/// Splits on runs of whitespace.
pub fn tokenize(line: &str) -> TokenSeq {
    TokenSeq(line.split_whitespace().map(str::to_owned).collect())
}

/// Token-level Levenshtein distance with unit costs.
pub fn edit_distance(a: &TokenSeq, b: &TokenSeq) -> usize {
    let (a, b) = (a.tokens(), b.tokens());
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EditKind {
    Insert,
    Delete,
    Substitute,
}

/// Replace source tokens `[start, end)` with `replacement`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Edit {
    pub start: usize,
    pub end: usize,
    pub replacement: Vec<String>,
}

impl Edit {
    pub fn new(start: usize, end: usize, replacement: Vec<String>) -> Self {
        Edit {
            start,
            end,
            replacement,
        }
    }

    pub fn kind(&self) -> EditKind {
        if self.start == self.end {
            EditKind::Insert
        } else if self.replacement.is_empty() {
            EditKind::Delete
        } else {
            EditKind::Substitute
        }
    }

    /// Single-token operations this edit stands for: `max(k, l)` for an
    /// `l`-token span replaced by `k` tokens.
    pub fn op_count(&self) -> usize {
        (self.end - self.start).max(self.replacement.len())
    }
}

/// Position-sorted, non-overlapping span edits.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EditScript {
    pub edits: Vec<Edit>,
}

impl EditScript {
    /// Validates ordering and non-overlap against a source of length `source_len`.
    pub fn new(edits: Vec<Edit>, source_len: usize) -> Result<Self> {
        check_edits(&edits, source_len)?;
        Ok(EditScript { edits })
    }

    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }

    pub fn op_count(&self) -> usize {
        self.edits.iter().map(Edit::op_count).sum()
    }

    pub fn apply(&self, source: &TokenSeq) -> Result<TokenSeq> {
        apply_edits(&self.edits, source)
    }
}

pub(crate) fn check_edits(edits: &[Edit], source_len: usize) -> Result<()> {
    let mut last_end = 0;
    for (k, e) in edits.iter().enumerate() {
        if e.start > e.end || e.end > source_len {
            return Err(Error::invalid(format!(
                "edit span [{}, {}) outside source of length {source_len}",
                e.start, e.end
            )));
        }
        // Two insertions at one position would be ambiguous, so the bound is strict for them.
        let overlaps = e.start < last_end
            || (k > 0 && e.start == e.end && edits[k - 1].start == e.start && edits[k - 1].end == e.start);
        if overlaps {
            return Err(Error::invalid(format!(
                "edit [{}, {}) overlaps or is out of order",
                e.start, e.end
            )));
        }
        if e.replacement.iter().any(|t| t.is_empty()) {
            return Err(Error::invalid("empty replacement token"));
        }
        last_end = e.end;
    }
    Ok(())
}

pub(crate) fn apply_edits(edits: &[Edit], source: &TokenSeq) -> Result<TokenSeq> {
    check_edits(edits, source.len())?;
    let src = source.tokens();
    let mut out = Vec::with_capacity(src.len());
    let mut pos = 0;
    for e in edits {
        out.extend_from_slice(&src[pos..e.start]);
        out.extend(e.replacement.iter().cloned());
        pos = e.end;
    }
    out.extend_from_slice(&src[pos..]);
    TokenSeq::new(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Op {
    Match,
    Sub,
    Del,
    Ins,
}

/// Minimal edit script from `a` to `b`.
///
/// The DP is backtraced from the bottom-right cell; at equal cost a match is
/// preferred, then substitution, deletion, insertion. Runs of consecutive
/// non-match operations are merged into one span edit.
pub fn edit_script(a: &TokenSeq, b: &TokenSeq) -> EditScript {
    let (sa, sb) = (a.tokens(), b.tokens());
    let (n, m) = (sa.len(), sb.len());
    let w = m + 1;
    let mut d = vec![0usize; (n + 1) * w];
    for i in 0..=n {
        d[i * w] = i;
    }
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        for j in 1..=m {
            let sub = d[(i - 1) * w + j - 1] + usize::from(sa[i - 1] != sb[j - 1]);
            d[i * w + j] = sub.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }

    let mut ops = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        let op = if i > 0 && j > 0 && sa[i - 1] == sb[j - 1] && d[(i - 1) * w + j - 1] == here {
            Op::Match
        } else if i > 0 && j > 0 && d[(i - 1) * w + j - 1] + 1 == here {
            Op::Sub
        } else if i > 0 && d[(i - 1) * w + j] + 1 == here {
            Op::Del
        } else {
            Op::Ins
        };
        match op {
            Op::Match | Op::Sub => {
                i -= 1;
                j -= 1;
            }
            Op::Del => i -= 1,
            Op::Ins => j -= 1,
        }
        ops.push(op);
    }
    ops.reverse();

    let mut edits = Vec::new();
    let (mut i, mut j) = (0, 0);
    let mut open: Option<Edit> = None;
    for op in ops {
        if op == Op::Match {
            edits.extend(open.take());
            i += 1;
            j += 1;
            continue;
        }
        let e = open.get_or_insert_with(|| Edit::new(i, i, Vec::new()));
        match op {
            Op::Sub => {
                e.replacement.push(sb[j].clone());
                i += 1;
                j += 1;
            }
            Op::Del => i += 1,
            Op::Ins => {
                e.replacement.push(sb[j].clone());
                j += 1;
            }
            Op::Match => unreachable!(),
        }
        e.end = i;
    }
    edits.extend(open);
    EditScript { edits }
}

/// All contiguous `n`-grams of `s` with multiplicity.
pub fn ngram_counts(s: &TokenSeq, n: usize) -> Result<HashMap<&[String], usize>> {
    if n == 0 {
        return Err(Error::invalid("n-gram order must be at least 1"));
    }
    let mut counts = HashMap::new();
    for gram in s.tokens().windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Reads a one-sentence-per-line file.
pub fn read_sentences(path: impl AsRef<Path>) -> Result<Vec<TokenSeq>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(tokenize).collect())
}

/// Writes sentences one per line, tokens joined by single spaces.
pub fn write_sentences(path: impl AsRef<Path>, sentences: &[TokenSeq]) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    for s in sentences {
        writeln!(buf, "{s}").expect("write to Vec");
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}
