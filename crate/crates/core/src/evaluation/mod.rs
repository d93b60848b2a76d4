//! Span-based correction scoring, BLEU, cross-system diversity and significance testing.
//!
//! Hypothesis edits are extracted with [`edit_script`] and matched against gold
//! edits on exact `(span, replacement)` identity. Edit types are not compared.

mod bleu;
mod m2;
mod significance;

use std::collections::HashSet;
use std::iter::Sum;
use std::ops::{Add, AddAssign};

pub use bleu::{bleu, diversity, pairwise_diversity};
pub use m2::{parse_m2, read_m2, render_m2, write_m2};
pub use significance::{binomial_upper_tail, sign_test_bootstrap, Outcome};

use crate::error::{Error, Result};
use crate::textcore::{check_edits, edit_script, Edit, TokenSeq};

/// Precision is weighted twice as much as recall.
pub const BETA: f64 = 0.5;

/// Sufficient statistics for span-based P/R/F.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct ScoreStats {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ScoreStats {
    pub fn new(tp: u64, fp: u64, fn_: u64) -> Self {
        ScoreStats { tp, fp, fn_ }
    }

    pub fn precision(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> f64 {
        ratio_or_one(self.tp, self.tp + self.fn_)
    }

    pub fn f_beta(&self, beta: f64) -> f64 {
        f_beta(self.tp, self.fp, self.fn_, beta)
    }

    pub fn f05(&self) -> f64 {
        self.f_beta(BETA)
    }
}

impl Add for ScoreStats {
    type Output = ScoreStats;

    fn add(self, o: ScoreStats) -> ScoreStats {
        ScoreStats::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_)
    }
}

impl AddAssign for ScoreStats {
    fn add_assign(&mut self, o: ScoreStats) {
        *self = *self + o;
    }
}

impl Sum for ScoreStats {
    fn sum<I: Iterator<Item = ScoreStats>>(iter: I) -> Self {
        iter.fold(ScoreStats::default(), Add::add)
    }
}

impl<'a> Sum<&'a ScoreStats> for ScoreStats {
    fn sum<I: Iterator<Item = &'a ScoreStats>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

fn ratio_or_one(num: u64, den: u64) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

/// F-measure from raw counts.
///
/// A system that proposes no edits has precision 1; a gold standard with no
/// edits gives recall 1. Hence `(0, 0, 0)` scores 1 (a perfect no-op) while any
/// other count triple with `tp = 0` scores 0.
pub fn f_beta(tp: u64, fp: u64, fn_: u64, beta: f64) -> f64 {
    f_beta_from_pr(ratio_or_one(tp, tp + fp), ratio_or_one(tp, tp + fn_), beta)
}

/// Weighted harmonic mean of precision and recall; 0 when both are 0.
pub fn f_beta_from_pr(p: f64, r: f64, beta: f64) -> f64 {
    let b2 = beta * beta;
    let den = b2 * p + r;
    if den == 0.0 {
        0.0
    } else {
        (1.0 + b2) * p * r / den
    }
}

/// Gold corrections for one source sentence, one edit set per annotator.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GoldAnnotation {
    pub source: TokenSeq,
    annotators: Vec<Vec<Edit>>,
}

impl GoldAnnotation {
    pub fn new(source: TokenSeq, annotators: Vec<Vec<Edit>>) -> Result<Self> {
        if annotators.is_empty() {
            return Err(Error::invalid("gold annotation needs at least one annotator"));
        }
        for edits in &annotators {
            check_edits(edits, source.len())?;
        }
        Ok(GoldAnnotation { source, annotators })
    }

    /// A single annotator whose edits turn `source` into `target`.
    pub fn from_target(source: TokenSeq, target: &TokenSeq) -> Self {
        let edits = edit_script(&source, target).edits;
        GoldAnnotation {
            source,
            annotators: vec![edits],
        }
    }

    pub fn annotators(&self) -> &[Vec<Edit>] {
        &self.annotators
    }
}

fn stats_against(hyp_edits: &[Edit], gold: &[Edit]) -> ScoreStats {
    let gold_set: HashSet<&Edit> = gold.iter().collect();
    let tp = hyp_edits.iter().filter(|e| gold_set.contains(e)).count() as u64;
    ScoreStats::new(tp, hyp_edits.len() as u64 - tp, gold.len() as u64 - tp)
}

/// Scores one hypothesis against the best-matching annotator (highest sentence
/// F0.5, ties to the lowest annotator index).
pub fn score_sentence(source: &TokenSeq, hyp: &TokenSeq, gold: &GoldAnnotation) -> Result<ScoreStats> {
    if *source != gold.source {
        return Err(Error::invalid(format!(
            "source sentence does not match gold source: {source:?} vs {:?}",
            gold.source
        )));
    }
    let hyp_edits = edit_script(source, hyp).edits;
    let mut best: Option<(f64, ScoreStats)> = None;
    for edits in &gold.annotators {
        let stats = stats_against(&hyp_edits, edits);
        let f = stats.f05();
        if best.is_none_or(|(bf, _)| f > bf) {
            best = Some((f, stats));
        }
    }
    Ok(best.expect("at least one annotator").1)
}

/// Scores a whole corpus; returns per-sentence statistics.
pub fn score_corpus(hyps: &[TokenSeq], golds: &[GoldAnnotation]) -> Result<Vec<ScoreStats>> {
    if hyps.len() != golds.len() {
        return Err(Error::LengthMismatch(format!(
            "{} hypotheses for {} gold sentences",
            hyps.len(),
            golds.len()
        )));
    }
    hyps.iter()
        .zip(golds)
        .map(|(h, g)| score_sentence(&g.source, h, g))
        .collect()
}
