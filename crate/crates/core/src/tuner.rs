//! Minimum-error-rate tuning of the combiner's linear model.
//!
//! Candidates from repeated k-best decoding are merged into a pool. Along a
//! search direction every candidate's model score is a line in the step size
//! `gamma`, so the 1-best of each sentence changes only at the breakpoints of
//! its upper envelope. Sweeping the merged breakpoints while updating summed
//! [`ScoreStats`] gives the exact corpus F0.5 on every interval.

use std::cmp::Ordering;
use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::combiner::{kbest_corpus, Candidate, Memt, NGramLM, WeightVector};
use crate::error::{Error, Result};
use crate::evaluation::{score_sentence, GoldAnnotation, ScoreStats};
use crate::textcore::TokenSeq;

/// A pooled candidate with its statistics against the gold annotation.
#[derive(Clone, Debug, PartialEq)]
pub struct PoolEntry {
    pub tokens: TokenSeq,
    pub features: Vec<f64>,
    pub stats: ScoreStats,
}

/// Accumulated, per-sentence deduplicated k-best candidates.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct KBestPool {
    sentences: Vec<Vec<PoolEntry>>,
}

impl KBestPool {
    pub fn new(num_sentences: usize) -> Self {
        KBestPool {
            sentences: vec![Vec::new(); num_sentences],
        }
    }

    pub fn from_entries(sentences: Vec<Vec<PoolEntry>>) -> Self {
        KBestPool { sentences }
    }

    pub fn sentences(&self) -> &[Vec<PoolEntry>] {
        &self.sentences
    }

    pub fn num_sentences(&self) -> usize {
        self.sentences.len()
    }

    /// Total candidates over all sentences.
    pub fn size(&self) -> usize {
        self.sentences.iter().map(Vec::len).sum()
    }

    /// Adds unseen candidates, scoring each once against its gold annotation.
    /// Returns how many were new.
    pub fn merge(&mut self, lists: &[Vec<Candidate>], golds: &[GoldAnnotation]) -> Result<usize> {
        if lists.len() != self.sentences.len() || golds.len() != self.sentences.len() {
            return Err(Error::LengthMismatch(format!(
                "pool has {} sentences, got {} k-best lists and {} gold annotations",
                self.sentences.len(),
                lists.len(),
                golds.len()
            )));
        }
        let mut added = 0;
        for ((entries, list), gold) in self.sentences.iter_mut().zip(lists).zip(golds) {
            let mut seen: HashSet<TokenSeq> = entries.iter().map(|e| e.tokens.clone()).collect();
            for c in list {
                if seen.insert(c.tokens.clone()) {
                    entries.push(PoolEntry {
                        tokens: c.tokens.clone(),
                        features: c.features.clone(),
                        stats: score_sentence(&gold.source, &c.tokens, gold)?,
                    });
                    added += 1;
                }
            }
        }
        Ok(added)
    }

    /// Index of each sentence's 1-best under `weights`; ties go to the
    /// lexicographically smaller tokens.
    pub fn one_best(&self, weights: &[f64]) -> Vec<usize> {
        self.sentences
            .iter()
            .map(|entries| {
                let mut best = 0;
                let mut best_score = f64::NEG_INFINITY;
                for (i, e) in entries.iter().enumerate() {
                    let s = dot(weights, &e.features);
                    if s > best_score || (s == best_score && e.tokens < entries[best].tokens) {
                        best = i;
                        best_score = s;
                    }
                }
                best
            })
            .collect()
    }

    /// Summed statistics of the 1-best candidates.
    pub fn stats_at(&self, weights: &[f64]) -> ScoreStats {
        self.one_best(weights)
            .iter()
            .zip(&self.sentences)
            .filter(|(_, e)| !e.is_empty())
            .map(|(&i, e)| e[i].stats)
            .sum()
    }

    /// Corpus F0.5 of the 1-best candidates under `weights`.
    pub fn f_at(&self, weights: &[f64]) -> f64 {
        self.stats_at(weights).f05()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Line<'a> {
    slope: f64,
    intercept: f64,
    entry: &'a PoolEntry,
}

/// Upper envelope as `(start of segment, entry)`, leftmost first; the first
/// segment starts at minus infinity.
fn upper_envelope<'a>(entries: &'a [PoolEntry], w: &[f64], d: &[f64]) -> Vec<(f64, &'a PoolEntry)> {
    let mut lines: Vec<Line> = entries
        .iter()
        .map(|e| Line {
            slope: dot(d, &e.features),
            intercept: dot(w, &e.features),
            entry: e,
        })
        .collect();
    // slope ascending; among equal slopes the winner goes first
    lines.sort_by(|a, b| {
        a.slope
            .partial_cmp(&b.slope)
            .unwrap_or(Ordering::Equal)
            .then(b.intercept.partial_cmp(&a.intercept).unwrap_or(Ordering::Equal))
            .then_with(|| a.entry.tokens.cmp(&b.entry.tokens))
    });
    lines.dedup_by(|later, first| later.slope == first.slope);
    let mut hull: Vec<(f64, Line)> = Vec::new();
    for line in lines {
        let mut start = f64::NEG_INFINITY;
        while let Some((top_start, top)) = hull.last() {
            let x = (top.intercept - line.intercept) / (line.slope - top.slope);
            if x <= *top_start {
                hull.pop();
            } else {
                start = x;
                break;
            }
        }
        hull.push((start, line));
    }
    hull.into_iter().map(|(s, l)| (s, l.entry)).collect()
}

fn stats_delta(from: ScoreStats, to: ScoreStats) -> [i64; 3] {
    [
        to.tp as i64 - from.tp as i64,
        to.fp as i64 - from.fp as i64,
        to.fn_ as i64 - from.fn_ as i64,
    ]
}

/// Exact line search from `weights` along `direction`.
///
/// Returns `(gamma, F0.5)` for the best interval. Inside an interval the
/// representative step is 0 if the interval contains it, the midpoint if
/// bounded, and one unit beyond the outermost breakpoint otherwise. Ties go
/// to the smallest `|gamma|`; the current point itself is always a
/// contender, so the result is never worse than `gamma = 0`.
pub fn line_search(pool: &KBestPool, weights: &[f64], direction: &[f64]) -> Result<(f64, f64)> {
    if pool.size() == 0 {
        return Err(Error::invalid("line search needs a non-empty pool"));
    }
    if direction.len() != weights.len() {
        return Err(Error::LengthMismatch(format!(
            "direction has {} entries, weights {}",
            direction.len(),
            weights.len()
        )));
    }
    if direction.iter().all(|&v| v == 0.0) || direction.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("line search direction must be finite and non-zero"));
    }
    let envelopes: Vec<Vec<(f64, &PoolEntry)>> = pool
        .sentences
        .par_iter()
        .map(|e| upper_envelope(e, weights, direction))
        .collect();

    let mut totals = [0i64; 3];
    let mut events: Vec<(f64, [i64; 3])> = Vec::new();
    for env in &envelopes {
        if let Some(&(_, first)) = env.first() {
            totals[0] += first.stats.tp as i64;
            totals[1] += first.stats.fp as i64;
            totals[2] += first.stats.fn_ as i64;
        }
        for pair in env.windows(2) {
            events.push((pair[1].0, stats_delta(pair[0].1.stats, pair[1].1.stats)));
        }
    }
    events.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(Ordering::Equal));

    let f_of = |t: &[i64; 3]| ScoreStats::new(t[0] as u64, t[1] as u64, t[2] as u64).f05();
    let mut best = (0.0, pool.f_at(weights));
    let consider = |gamma: f64, f: f64, best: &mut (f64, f64)| {
        if f > best.1 || (f == best.1 && gamma.abs() < best.0.abs()) {
            *best = (gamma, f);
        }
    };

    let mut lo = f64::NEG_INFINITY;
    let mut k = 0;
    loop {
        let hi = events.get(k).map_or(f64::INFINITY, |e| e.0);
        if lo < hi {
            let gamma = if lo < 0.0 && 0.0 < hi {
                0.0
            } else if lo == f64::NEG_INFINITY {
                hi - 1.0
            } else if hi == f64::INFINITY {
                lo + 1.0
            } else {
                0.5 * (lo + hi)
            };
            consider(gamma, f_of(&totals), &mut best);
        }
        if k == events.len() {
            break;
        }
        let x = events[k].0;
        while k < events.len() && events[k].0 == x {
            for (t, d) in totals.iter_mut().zip(events[k].1) {
                *t += d;
            }
            k += 1;
        }
        lo = x;
    }
    Ok(best)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MertConfig {
    /// Passes over all directions.
    pub iters: usize,
    /// Random Gaussian directions per pass, on top of the coordinate axes.
    pub random_directions: usize,
    /// Extra climbs from uniform random points in `[-1, 1]^d`.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MertConfig {
    fn default() -> Self {
        MertConfig {
            iters: 5,
            random_directions: 8,
            restarts: 0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MertResult {
    pub weights: WeightVector,
    /// Pool F0.5 at the start and after every pass.
    pub history: Vec<f64>,
}

/// Coordinate axes then `r` normalised Gaussian directions.
fn directions(dim: usize, r: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = (0..dim)
        .map(|i| (0..dim).map(|j| f64::from(i == j)).collect())
        .collect();
    while out.len() < dim + r {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            out.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    out
}

/// Hill-climbs from `w` until a pass brings no gain. Returns the final
/// weights and the pool F0.5 at the start and after every pass.
fn climb(
    pool: &KBestPool,
    mut w: WeightVector,
    cfg: &MertConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(WeightVector, Vec<f64>)> {
    let mut f = pool.f_at(w.values());
    let mut history = vec![f];
    for _ in 0..cfg.iters {
        let before = f;
        for d in directions(w.len(), cfg.random_directions, rng) {
            let (gamma, predicted) = line_search(pool, w.values(), &d)?;
            if gamma == 0.0 || predicted <= f {
                continue;
            }
            let candidate = w.stepped(&d, gamma);
            let measured = pool.f_at(candidate.values());
            if measured > f {
                w = candidate;
                f = measured;
            }
        }
        history.push(f);
        if f <= before {
            break;
        }
    }
    Ok((w, history))
}

/// Line searches over every direction, accepting only steps that raise pool
/// F0.5 as re-measured at the new weights. After the climb from `w0`, each
/// restart climbs from a random point and replaces the result only if it
/// ends strictly higher; its final score is then appended to the history.
pub fn mert(pool: &KBestPool, w0: &WeightVector, cfg: &MertConfig) -> Result<MertResult> {
    if cfg.iters == 0 {
        return Err(Error::invalid("mert needs at least one iteration"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let (mut weights, mut history) = climb(pool, w0.clone(), cfg, &mut rng)?;
    for _ in 0..cfg.restarts {
        let start: Vec<f64> = (0..w0.len()).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let start = WeightVector::new(w0.names().to_vec(), start)?;
        let (w, h) = climb(pool, start, cfg, &mut rng)?;
        let f = *h.last().unwrap();
        if f > *history.last().unwrap() {
            weights = w;
            history.push(f);
        }
    }
    Ok(MertResult { weights, history })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneConfig {
    pub rounds: usize,
    pub beam: usize,
    pub kbest: usize,
    pub mert: MertConfig,
}

impl Default for TuneConfig {
    fn default() -> Self {
        TuneConfig {
            rounds: 5,
            beam: crate::combiner::DEFAULT_BEAM,
            kbest: crate::combiner::DEFAULT_KBEST,
            mert: MertConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RoundReport {
    pub round: usize,
    pub added: usize,
    pub pool_size: usize,
    /// Pool F0.5 after tuning in this round.
    pub pool_f: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TuneResult {
    pub weights: WeightVector,
    pub rounds: Vec<RoundReport>,
    pub pool: KBestPool,
}

/// Decode, merge, optimise; stops once a round adds nothing to the pool.
pub fn tune_loop(
    systems: &[Vec<TokenSeq>],
    golds: &[GoldAnnotation],
    lm: std::sync::Arc<NGramLM>,
    w0: &WeightVector,
    cfg: &TuneConfig,
) -> Result<TuneResult> {
    if cfg.rounds == 0 {
        return Err(Error::invalid("tuning needs at least one round"));
    }
    for (s, sys) in systems.iter().enumerate() {
        if sys.len() != golds.len() {
            return Err(Error::LengthMismatch(format!(
                "system {s} has {} lines, gold has {} sentences",
                sys.len(),
                golds.len()
            )));
        }
    }
    w0.check_layout(systems.len())?;
    let mut pool = KBestPool::new(golds.len());
    let mut weights = w0.clone();
    let mut rounds = Vec::new();
    for round in 0..cfg.rounds {
        let memt = Memt {
            lm: lm.clone(),
            weights: weights.clone(),
            beam: cfg.beam,
        };
        let lists = kbest_corpus(&memt, systems, cfg.kbest)?;
        let added = pool.merge(&lists, golds)?;
        if added == 0 {
            break;
        }
        let result = mert(
            &pool,
            &weights,
            &MertConfig {
                seed: cfg.mert.seed.wrapping_add(round as u64),
                ..cfg.mert
            },
        )?;
        weights = result.weights;
        rounds.push(RoundReport {
            round,
            added,
            pool_size: pool.size(),
            pool_f: *result.history.last().unwrap(),
        });
    }
    Ok(TuneResult { weights, rounds, pool })
}
