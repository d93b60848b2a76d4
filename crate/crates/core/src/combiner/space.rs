use std::collections::BTreeMap;

use super::lm::{push_context, LmId, NGramLM};
use super::weights::WeightVector;
use crate::alignment::Alignment;
use crate::error::{Error, Result};
use crate::textcore::TokenSeq;

/// Hypotheses, their pairwise alignments and every word's aligned group.
#[derive(Clone, Debug)]
pub struct SearchSpace {
    hyps: Vec<TokenSeq>,
    /// `groups[s][i]`: word `i` of system `s` plus its direct partners, sorted.
    groups: Vec<Vec<Vec<(usize, usize)>>>,
    /// Offset of each system in the flat used-word bitset.
    offsets: Vec<usize>,
    total_words: usize,
}

/// Builds the aligned groups from alignments keyed by `(s, t)`, `s < t`.
pub fn build_space(hyps: &[TokenSeq], alignments: &BTreeMap<(usize, usize), Alignment>) -> Result<SearchSpace> {
    if hyps.len() < 2 {
        return Err(Error::invalid("combination needs at least two hypotheses"));
    }
    let mut groups: Vec<Vec<Vec<(usize, usize)>>> = hyps
        .iter()
        .enumerate()
        .map(|(s, h)| (0..h.len()).map(|i| vec![(s, i)]).collect())
        .collect();
    for s in 0..hyps.len() {
        for t in s + 1..hyps.len() {
            let al = alignments
                .get(&(s, t))
                .ok_or_else(|| Error::invalid(format!("missing alignment between systems {s} and {t}")))?;
            if al.len_a() != hyps[s].len() || al.len_b() != hyps[t].len() {
                return Err(Error::invalid(format!(
                    "alignment between systems {s} and {t} does not fit the hypotheses"
                )));
            }
            for &(i, j, _) in al.pairs() {
                groups[s][i].push((t, j));
                groups[t][j].push((s, i));
            }
        }
    }
    for g in groups.iter_mut().flatten() {
        g.sort_unstable();
    }
    let mut offsets = Vec::with_capacity(hyps.len());
    let mut total = 0;
    for h in hyps {
        offsets.push(total);
        total += h.len();
    }
    Ok(SearchSpace {
        hyps: hyps.to_vec(),
        groups,
        offsets,
        total_words: total,
    })
}

/// A partial combined sentence.
#[derive(Clone, Debug, PartialEq)]
pub struct SearchState {
    /// Flat bitset over every word of every system.
    pub used: Vec<u64>,
    /// First unused index per system.
    pub frontier: Vec<usize>,
    pub output: Vec<String>,
    pub lm_context: Vec<LmId>,
    pub features: Vec<f64>,
    pub score: f64,
}

/// What an action produced.
#[derive(Clone, Debug, PartialEq)]
pub enum Successor {
    Open(SearchState),
    /// The end-of-sentence action closed the hypothesis.
    Complete(SearchState),
}

impl SearchSpace {
    pub fn num_systems(&self) -> usize {
        self.hyps.len()
    }

    pub fn hyps(&self) -> &[TokenSeq] {
        &self.hyps
    }

    pub fn group(&self, system: usize, index: usize) -> &[(usize, usize)] {
        &self.groups[system][index]
    }

    /// Total number of words over all systems.
    pub fn total_words(&self) -> usize {
        self.total_words
    }

    /// `match_s` for each system, then `length`, then `lm`.
    pub fn num_features(&self) -> usize {
        self.hyps.len() + 2
    }

    pub fn initial_state(&self, lm: &NGramLM) -> SearchState {
        SearchState {
            used: vec![0; self.total_words.div_ceil(64)],
            frontier: vec![0; self.hyps.len()],
            output: Vec::new(),
            lm_context: lm.start_context(),
            features: vec![0.0; self.num_features()],
            score: 0.0,
        }
    }

    fn bit(&self, s: usize, i: usize) -> usize {
        self.offsets[s] + i
    }

    pub fn is_used(&self, state: &SearchState, s: usize, i: usize) -> bool {
        let b = self.bit(s, i);
        state.used[b / 64] >> (b % 64) & 1 == 1
    }

    fn mark(&self, state: &mut SearchState, s: usize, i: usize) {
        let b = self.bit(s, i);
        state.used[b / 64] |= 1 << (b % 64);
    }

    /// Whether the end-of-sentence action is available.
    pub fn can_end(&self, state: &SearchState) -> bool {
        state.frontier.iter().zip(&self.hyps).any(|(&f, h)| f == h.len())
    }

    /// Every successor of `state`: one per system whose frontier word is
    /// unused, then the end action when some system is exhausted.
    pub fn extensions(&self, state: &SearchState, weights: &WeightVector, lm: &NGramLM) -> Vec<Successor> {
        let n = self.hyps.len();
        let mut out = Vec::with_capacity(n + 1);
        for s in 0..n {
            let i = state.frontier[s];
            if i >= self.hyps[s].len() {
                continue;
            }
            let word = &self.hyps[s].tokens()[i];
            let mut next = state.clone();
            for &(t, j) in self.group(s, i) {
                self.mark(&mut next, t, j);
                next.features[t] += 1.0;
            }
            for t in 0..n {
                while next.frontier[t] < self.hyps[t].len() && self.is_used(&next, t, next.frontier[t]) {
                    next.frontier[t] += 1;
                }
            }
            let w = lm.id(word);
            next.features[n] += 1.0;
            next.features[n + 1] += lm.log_prob_ids(&state.lm_context, w);
            push_context(&mut next.lm_context, w, lm.order());
            next.output.push(word.clone());
            next.score = weights.dot(&next.features);
            out.push(Successor::Open(next));
        }
        if self.can_end(state) {
            let mut done = state.clone();
            done.features[n + 1] += lm.log_prob_ids(&state.lm_context, lm.eos());
            done.score = weights.dot(&done.features);
            out.push(Successor::Complete(done));
        }
        out
    }
}
