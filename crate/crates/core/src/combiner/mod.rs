//! Multi-hypothesis combination over aligned words.
//!
//! Hypotheses from several systems are aligned pairwise. A combined sentence
//! is built left to right: each step emits the first unused word of some
//! system and consumes it together with every word aligned to it. Partial
//! sentences are scored by a linear model over per-system match counts,
//! length and an n-gram LM, and explored with beam search.

mod lm;
mod search;
mod space;
mod weights;

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

pub use lm::{push_context, LmId, NGramLM, BACKOFF, UNIGRAM_ADD};
pub use search::{beam_search, recombine};
pub use space::{build_space, SearchSpace, SearchState, Successor};
pub use weights::{feature_names, WeightVector};

use crate::alignment::align_all;
use crate::error::{Error, Result};
use crate::textcore::{tokenize, TokenSeq};

pub const DEFAULT_BEAM: usize = 64;
pub const DEFAULT_KBEST: usize = 50;

/// One combined output with its features and model score.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub tokens: TokenSeq,
    pub features: Vec<f64>,
    pub score: f64,
}

/// Anything that turns one hypothesis per system into ranked candidates.
pub trait Combiner: Send + Sync {
    fn name(&self) -> &str;

    /// Up to `k` candidates, best first.
    fn kbest(&self, hyps: &[TokenSeq], k: usize) -> Result<Vec<Candidate>>;

    fn combine(&self, hyps: &[TokenSeq]) -> Result<TokenSeq> {
        let best = self.kbest(hyps, 1)?;
        Ok(best.into_iter().next().map(|c| c.tokens).unwrap_or_default())
    }
}

/// Alignment-lattice beam search with a tuned linear model.
#[derive(Clone, Debug)]
pub struct Memt {
    pub lm: Arc<NGramLM>,
    pub weights: WeightVector,
    pub beam: usize,
}

impl Combiner for Memt {
    fn name(&self) -> &str {
        "memt"
    }

    fn kbest(&self, hyps: &[TokenSeq], k: usize) -> Result<Vec<Candidate>> {
        let alignments = align_all(hyps)?;
        let space = build_space(hyps, &alignments)?;
        beam_search(&space, &self.weights, &self.lm, self.beam, k)
    }
}

/// Picks whole hypotheses by per-token LM log-probability. Serves as the
/// simple reference combiner; its features use the same layout as [`Memt`].
#[derive(Clone, Debug)]
pub struct LmPick {
    pub lm: Arc<NGramLM>,
}

impl Combiner for LmPick {
    fn name(&self) -> &str {
        "lmpick"
    }

    fn kbest(&self, hyps: &[TokenSeq], k: usize) -> Result<Vec<Candidate>> {
        if hyps.is_empty() {
            return Err(Error::invalid("combination needs at least one hypothesis"));
        }
        let n = hyps.len();
        let mut out: Vec<Candidate> = Vec::new();
        for h in hyps {
            if out.iter().any(|c| c.tokens == *h) {
                continue;
            }
            let mut features: Vec<f64> = hyps.iter().map(|o| f64::from(o == h)).collect();
            let lp = self.lm.sentence_log_prob(h);
            features.extend([h.len() as f64, lp]);
            out.push(Candidate {
                tokens: h.clone(),
                features,
                score: lp / (h.len() + 1) as f64,
            });
        }
        debug_assert_eq!(out[0].features.len(), n + 2);
        out.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| a.tokens.cmp(&b.tokens))
        });
        out.truncate(k);
        Ok(out)
    }
}

/// Turns line-aligned system outputs into per-sentence hypothesis lists.
pub fn transpose(systems: &[Vec<TokenSeq>]) -> Result<Vec<Vec<TokenSeq>>> {
    let n = systems.first().map_or(0, Vec::len);
    if let Some(bad) = systems.iter().position(|s| s.len() != n) {
        return Err(Error::LengthMismatch(format!(
            "system {bad} has {} lines, system 0 has {n}",
            systems[bad].len()
        )));
    }
    Ok((0..n).map(|i| systems.iter().map(|s| s[i].clone()).collect()).collect())
}

/// k-best lists for every sentence, computed in parallel, in input order.
pub fn kbest_corpus(combiner: &dyn Combiner, systems: &[Vec<TokenSeq>], k: usize) -> Result<Vec<Vec<Candidate>>> {
    transpose(systems)?
        .par_iter()
        .map(|hyps| combiner.kbest(hyps, k))
        .collect()
}

/// 1-best outputs for every sentence.
pub fn combine_corpus(combiner: &dyn Combiner, systems: &[Vec<TokenSeq>]) -> Result<Vec<TokenSeq>> {
    Ok(kbest_corpus(combiner, systems, 1)?
        .into_iter()
        .map(|c| c.into_iter().next().map(|c| c.tokens).unwrap_or_default())
        .collect())
}

/// `index ||| tokens ||| name:value ... ||| score` lines.
pub fn render_kbest(lists: &[Vec<Candidate>], names: &[String]) -> String {
    let mut out = String::new();
    for (i, list) in lists.iter().enumerate() {
        for c in list {
            let feats: Vec<String> = names.iter().zip(&c.features).map(|(n, v)| format!("{n}:{v}")).collect();
            writeln!(out, "{i} ||| {} ||| {} ||| {}", c.tokens, feats.join(" "), c.score).unwrap();
        }
    }
    out
}

/// Parses [`render_kbest`] output into `num_sentences` lists and the feature names.
pub fn parse_kbest(text: &str, num_sentences: usize, origin: &Path) -> Result<(Vec<Vec<Candidate>>, Vec<String>)> {
    let mut lists = vec![Vec::new(); num_sentences];
    let mut names: Option<Vec<String>> = None;
    for (no, line) in text.lines().enumerate() {
        let err = |m: String| Error::parse(origin, no + 1, m);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(" ||| ").collect();
        if fields.len() != 4 {
            return Err(err("expected 4 fields separated by |||".into()));
        }
        let idx: usize = fields[0].trim().parse().map_err(|_| err("bad sentence index".into()))?;
        if idx >= num_sentences {
            return Err(err(format!("sentence index {idx} out of range")));
        }
        let mut line_names = Vec::new();
        let mut features = Vec::new();
        for f in fields[2].split_whitespace() {
            let (n, v) = f.rsplit_once(':').ok_or_else(|| err(format!("bad feature {f:?}")))?;
            line_names.push(n.to_string());
            features.push(v.parse::<f64>().map_err(|_| err(format!("bad feature value {f:?}")))?);
        }
        match &names {
            None => names = Some(line_names),
            Some(n) if *n != line_names => return Err(err("feature names differ from earlier lines".into())),
            _ => {}
        }
        let score = fields[3].trim().parse().map_err(|_| err("bad score".into()))?;
        lists[idx].push(Candidate {
            tokens: tokenize(fields[1]),
            features,
            score,
        });
    }
    Ok((lists, names.unwrap_or_default()))
}
