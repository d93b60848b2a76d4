use std::cmp::Ordering;
use std::collections::BTreeMap;

use super::lm::{LmId, NGramLM};
use super::space::{SearchSpace, SearchState, Successor};
use super::weights::WeightVector;
use super::Candidate;
use crate::error::{Error, Result};
use crate::textcore::TokenSeq;

/// Higher score first, then the lexicographically smaller output.
fn better(a: &SearchState, b: &SearchState) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.output.cmp(&b.output))
}

/// Keeps one state per `(used words, LM context)`: the better one by [`better`].
pub fn recombine(states: impl IntoIterator<Item = SearchState>) -> Vec<SearchState> {
    let mut merged: BTreeMap<(Vec<u64>, Vec<LmId>), SearchState> = BTreeMap::new();
    for s in states {
        let key = (s.used.clone(), s.lm_context.clone());
        match merged.get(&key) {
            Some(old) if better(old, &s) != Ordering::Greater => {}
            _ => {
                merged.insert(key, s);
            }
        }
    }
    merged.into_values().collect()
}

/// Layer-synchronous beam search over emitted length.
///
/// Every layer expands all open states, recombines, sorts by score (ties to
/// the smaller output) and keeps `beam`. Completed hypotheses are
/// deduplicated by token sequence; the best `k` are returned sorted by score,
/// ties lexicographic.
pub fn beam_search(
    space: &SearchSpace,
    weights: &WeightVector,
    lm: &NGramLM,
    beam: usize,
    k: usize,
) -> Result<Vec<Candidate>> {
    if beam == 0 || k == 0 {
        return Err(Error::invalid("beam and k must be at least 1"));
    }
    if weights.len() != space.num_features() {
        return Err(Error::invalid(format!(
            "{} weights for {} features",
            weights.len(),
            space.num_features()
        )));
    }
    let mut layer = vec![space.initial_state(lm)];
    let mut done: BTreeMap<Vec<String>, SearchState> = BTreeMap::new();
    while !layer.is_empty() {
        let mut open = Vec::new();
        for state in &layer {
            for succ in space.extensions(state, weights, lm) {
                match succ {
                    Successor::Open(s) => open.push(s),
                    Successor::Complete(s) => {
                        let keep = done.get(&s.output).is_none_or(|old| s.score > old.score);
                        if keep {
                            done.insert(s.output.clone(), s);
                        }
                    }
                }
            }
        }
        let mut next = recombine(open);
        next.sort_by(better);
        next.truncate(beam);
        layer = next;
    }
    let mut finished: Vec<SearchState> = done.into_values().collect();
    assert!(!finished.is_empty(), "the end action is always reachable");
    finished.sort_by(better);
    finished.truncate(k);
    Ok(finished
        .into_iter()
        .map(|s| Candidate {
            tokens: TokenSeq::new(s.output).expect("hypothesis tokens are valid"),
            score: weights.dot(&s.features),
            features: s.features,
        })
        .collect())
}
