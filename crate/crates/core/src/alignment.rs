//! Staged one-to-one word alignment between two hypotheses.
//!
//! Matching runs in three passes: exact string equality, equality after
//! lowercasing, then a light suffix-stripping stem match. Each pass only sees
//! tokens left unmatched by the earlier passes. Within a pass we take a
//! maximum-cardinality matching, and among those the one with the fewest
//! crossings against every pair chosen so far, then the smallest total
//! position offset `sum |i - j|`; remaining ties go to the matching a
//! left-to-right search meets first (lower `i` paired with lower `j`).
//!
//! The search is an exact branch-and-bound. Sentences longer than
//! [`MAX_EXACT_TOKENS`], or searches exceeding a node budget, fall back to a
//! greedy nearest-position matching.

use std::collections::BTreeMap;
use std::fmt;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::textcore::TokenSeq;

/// Longest sentence aligned by exact search.
pub const MAX_EXACT_TOKENS: usize = 128;

const NODE_BUDGET: usize = 2_000_000;

const SUFFIXES: [&str; 4] = ["s", "es", "ed", "ing"];

/// Minimum length of what remains after stripping a suffix.
const MIN_STEM_LEN: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Exact,
    Lowercase,
    Stem,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Exact, Stage::Lowercase, Stage::Stem];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Exact => "exact",
            Stage::Lowercase => "lowercase",
            Stage::Stem => "stem",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The lowercased token plus every suffix-stripped form whose remainder is
/// long enough.
pub fn stem_forms(token: &str) -> Vec<String> {
    let lower = token.to_lowercase();
    let mut out = vec![lower.clone()];
    for suf in SUFFIXES {
        if let Some(rest) = lower.strip_suffix(suf) {
            if rest.chars().count() >= MIN_STEM_LEN && !out.iter().any(|s| s == rest) {
                out.push(rest.to_string());
            }
        }
    }
    out
}

fn related(stage: Stage, a: &str, b: &str) -> bool {
    match stage {
        Stage::Exact => a == b,
        Stage::Lowercase => a.to_lowercase() == b.to_lowercase(),
        Stage::Stem => {
            let fa = stem_forms(a);
            stem_forms(b).iter().any(|f| fa.contains(f))
        }
    }
}

/// A one-to-one partial matching between the tokens of two sentences.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Alignment {
    len_a: usize,
    len_b: usize,
    /// `(i, j, stage)`, sorted by `i`.
    pairs: Vec<(usize, usize, Stage)>,
}

impl Alignment {
    /// Validates ranges and one-to-one use of indices.
    pub fn new(len_a: usize, len_b: usize, mut pairs: Vec<(usize, usize, Stage)>) -> Result<Self> {
        let mut used_a = vec![false; len_a];
        let mut used_b = vec![false; len_b];
        for &(i, j, _) in &pairs {
            if i >= len_a || j >= len_b {
                return Err(Error::invalid(format!("alignment pair {i}-{j} out of range")));
            }
            if std::mem::replace(&mut used_a[i], true) || std::mem::replace(&mut used_b[j], true) {
                return Err(Error::invalid(format!("alignment pair {i}-{j} reuses a token")));
            }
        }
        pairs.sort();
        Ok(Alignment { len_a, len_b, pairs })
    }

    pub fn len_a(&self) -> usize {
        self.len_a
    }

    pub fn len_b(&self) -> usize {
        self.len_b
    }

    pub fn pairs(&self) -> &[(usize, usize, Stage)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Partner in B of token `i` of A.
    pub fn partner_of_a(&self, i: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.0 == i).map(|p| p.1)
    }

    /// Partner in A of token `j` of B.
    pub fn partner_of_b(&self, j: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == j).map(|p| p.0)
    }

    /// The same alignment seen from B's side.
    pub fn mirrored(&self) -> Alignment {
        let mut pairs: Vec<_> = self.pairs.iter().map(|&(i, j, s)| (j, i, s)).collect();
        pairs.sort();
        Alignment {
            len_a: self.len_b,
            len_b: self.len_a,
            pairs,
        }
    }

    pub fn crossings(&self) -> usize {
        let p = &self.pairs;
        let mut n = 0;
        for x in 0..p.len() {
            for y in x + 1..p.len() {
                if crosses((p[x].0, p[x].1), (p[y].0, p[y].1)) {
                    n += 1;
                }
            }
        }
        n
    }

    /// `i-j:stage` pairs separated by spaces.
    pub fn render(&self) -> String {
        self.pairs
            .iter()
            .map(|(i, j, s)| format!("{i}-{j}:{s}"))
            .collect::<Vec<_>>()
            .join(" ")
    }
}

fn crosses(p: (usize, usize), q: (usize, usize)) -> bool {
    (p.0 < q.0 && p.1 > q.1) || (p.0 > q.0 && p.1 < q.1)
}

/// Size of a maximum matching, by augmenting paths.
fn max_matching(cand: &[Vec<usize>], len_b: usize) -> usize {
    fn augment(u: usize, cand: &[Vec<usize>], seen: &mut [bool], owner: &mut [Option<usize>]) -> bool {
        for &v in &cand[u] {
            if !seen[v] {
                seen[v] = true;
                if owner[v].is_none_or(|w| augment(w, cand, seen, owner)) {
                    owner[v] = Some(u);
                    return true;
                }
            }
        }
        false
    }
    let mut owner = vec![None; len_b];
    (0..cand.len())
        .filter(|&u| augment(u, cand, &mut vec![false; len_b], &mut owner))
        .count()
}

struct Search<'a> {
    rows: &'a [usize],
    cand: &'a [Vec<usize>],
    /// Rows at or after position `p` that have any candidate.
    live_after: Vec<usize>,
    fixed: &'a [(usize, usize)],
    target: usize,
    cur: Vec<(usize, usize)>,
    used_b: Vec<bool>,
    best: Option<((usize, usize), Vec<(usize, usize)>)>,
    nodes: usize,
    aborted: bool,
}

impl Search<'_> {
    fn dfs(&mut self, pos: usize, cost: (usize, usize)) {
        if self.cur.len() + self.live_after[pos] < self.target {
            return;
        }
        if let Some((best, _)) = &self.best {
            if cost >= *best {
                return;
            }
        }
        if self.cur.len() == self.target {
            self.best = Some((cost, self.cur.clone()));
            return;
        }
        if pos == self.rows.len() || self.aborted {
            return;
        }
        self.nodes += 1;
        if self.nodes > NODE_BUDGET {
            self.aborted = true;
            return;
        }
        let i = self.rows[pos];
        for idx in 0..self.cand[pos].len() {
            let j = self.cand[pos][idx];
            if self.used_b[j] {
                continue;
            }
            let extra = self
                .fixed
                .iter()
                .chain(&self.cur)
                .filter(|&&q| crosses((i, j), q))
                .count();
            self.used_b[j] = true;
            self.cur.push((i, j));
            self.dfs(pos + 1, (cost.0 + extra, cost.1 + i.abs_diff(j)));
            self.cur.pop();
            self.used_b[j] = false;
        }
        self.dfs(pos + 1, cost);
    }
}

fn greedy_stage(rows: &[usize], cand: &[Vec<usize>], len_b: usize) -> Vec<(usize, usize)> {
    let mut used = vec![false; len_b];
    let mut out = Vec::new();
    for (pos, &i) in rows.iter().enumerate() {
        if let Some(&j) = cand[pos]
            .iter()
            .filter(|&&j| !used[j])
            .min_by_key(|&&j| (i.abs_diff(j), j))
        {
            used[j] = true;
            out.push((i, j));
        }
    }
    out
}

fn run_stage(
    stage: Stage,
    a: &TokenSeq,
    b: &TokenSeq,
    used_a: &[bool],
    used_b: &[bool],
    fixed: &[(usize, usize)],
) -> Vec<(usize, usize)> {
    let mut rows = Vec::new();
    let mut cand = Vec::new();
    for (i, ta) in a.iter().enumerate() {
        if used_a[i] {
            continue;
        }
        let js: Vec<usize> = b
            .iter()
            .enumerate()
            .filter(|&(j, tb)| !used_b[j] && related(stage, ta, tb))
            .map(|(j, _)| j)
            .collect();
        if !js.is_empty() {
            rows.push(i);
            cand.push(js);
        }
    }
    if rows.is_empty() {
        return Vec::new();
    }
    if a.len() > MAX_EXACT_TOKENS || b.len() > MAX_EXACT_TOKENS {
        return greedy_stage(&rows, &cand, b.len());
    }
    let target = max_matching(&cand, b.len());
    let mut live_after = vec![0; rows.len() + 1];
    for p in (0..rows.len()).rev() {
        live_after[p] = live_after[p + 1] + 1;
    }
    let mut search = Search {
        rows: &rows,
        cand: &cand,
        live_after,
        fixed,
        target,
        cur: Vec::new(),
        used_b: vec![false; b.len()],
        best: None,
        nodes: 0,
        aborted: false,
    };
    search.dfs(0, (0, 0));
    match search.best {
        Some((_, pairs)) => pairs,
        None => greedy_stage(&rows, &cand, b.len()),
    }
}

fn align_ordered(a: &TokenSeq, b: &TokenSeq, stages: &[Stage]) -> Alignment {
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut fixed: Vec<(usize, usize)> = Vec::new();
    let mut pairs = Vec::new();
    for &stage in stages {
        for (i, j) in run_stage(stage, a, b, &used_a, &used_b, &fixed) {
            used_a[i] = true;
            used_b[j] = true;
            fixed.push((i, j));
            pairs.push((i, j, stage));
        }
    }
    Alignment::new(a.len(), b.len(), pairs).expect("stage matchings are one-to-one")
}

/// Aligns with an explicit stage list, in the given order.
///
/// The pair set does not depend on argument order: the search always runs
/// from the smaller sentence (by length, then tokens) and is mirrored back.
pub fn align_pair_stages(a: &TokenSeq, b: &TokenSeq, stages: &[Stage]) -> Alignment {
    let key = |s: &TokenSeq| (s.len(), s.tokens().to_vec());
    if key(a) <= key(b) {
        align_ordered(a, b, stages)
    } else {
        align_ordered(b, a, stages).mirrored()
    }
}

/// Exact, lowercase and stem passes.
pub fn align_pair(a: &TokenSeq, b: &TokenSeq) -> Alignment {
    align_pair_stages(a, b, &Stage::ALL)
}

/// Alignments for every unordered pair `(s, t)` with `s < t`.
pub fn align_all(hyps: &[TokenSeq]) -> Result<BTreeMap<(usize, usize), Alignment>> {
    if hyps.len() < 2 {
        return Err(Error::invalid("alignment needs at least two hypotheses"));
    }
    let keys: Vec<(usize, usize)> = (0..hyps.len())
        .flat_map(|s| (s + 1..hyps.len()).map(move |t| (s, t)))
        .collect();
    Ok(keys
        .par_iter()
        .map(|&(s, t)| ((s, t), align_pair(&hyps[s], &hyps[t])))
        .collect::<Vec<_>>()
        .into_iter()
        .collect())
}
