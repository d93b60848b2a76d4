//! Sentence-level rewards measuring how far a backbone output is from fixed peers.
//!
//! Every variant is a sum over peers of a pairwise difference `g(peer, y)`.
//! Differences between two peers never enter: only the trainable output is scored.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::evaluation::bleu;
use crate::textcore::{edit_distance, TokenSeq};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum RewardKind {
    /// Token-level Levenshtein distance.
    MinEditDistance,
    /// `1 - BLEU(y, peer)`.
    BleuBased,
    /// Size of the symmetric difference of the unigram multisets.
    TokenDiff,
}

impl RewardKind {
    pub const ALL: [RewardKind; 3] = [
        RewardKind::MinEditDistance,
        RewardKind::BleuBased,
        RewardKind::TokenDiff,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RewardKind::MinEditDistance => "edit",
            RewardKind::BleuBased => "bleu",
            RewardKind::TokenDiff => "tokendiff",
        }
    }
}

impl fmt::Display for RewardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "edit" => Ok(RewardKind::MinEditDistance),
            "bleu" => Ok(RewardKind::BleuBased),
            "tokendiff" => Ok(RewardKind::TokenDiff),
            other => Err(Error::invalid(format!(
                "unknown reward {other:?} (expected edit, bleu or tokendiff)"
            ))),
        }
    }
}

fn unigram_symmetric_difference(a: &TokenSeq, b: &TokenSeq) -> usize {
    let mut counts: HashMap<&str, i64> = HashMap::new();
    for t in a {
        *counts.entry(t).or_default() += 1;
    }
    for t in b {
        *counts.entry(t).or_default() -= 1;
    }
    counts.values().map(|c| c.unsigned_abs() as usize).sum()
}

fn pairwise(kind: RewardKind, peer: &TokenSeq, y: &TokenSeq) -> f64 {
    match kind {
        RewardKind::MinEditDistance => edit_distance(peer, y) as f64,
        RewardKind::BleuBased => 1.0 - bleu(y, peer, 4),
        RewardKind::TokenDiff => unigram_symmetric_difference(peer, y) as f64,
    }
}

/// Summed difference between `y` and every peer output.
pub fn reward(kind: RewardKind, peer_outputs: &[TokenSeq], y: &TokenSeq) -> Result<f64> {
    RewardSpec::new(kind).score(peer_outputs, y)
}

/// A reward variant plus its optional per-peer length normalisation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RewardSpec {
    pub kind: RewardKind,
    /// Divide each pairwise term by the longer sentence's length.
    pub normalize: bool,
}

impl RewardSpec {
    pub fn new(kind: RewardKind) -> Self {
        RewardSpec { kind, normalize: false }
    }

    pub fn score(&self, peer_outputs: &[TokenSeq], y: &TokenSeq) -> Result<f64> {
        if peer_outputs.is_empty() {
            return Err(Error::invalid("reward needs at least one peer output"));
        }
        Ok(peer_outputs
            .iter()
            .map(|peer| {
                let g = pairwise(self.kind, peer, y);
                if self.normalize {
                    g / peer.len().max(y.len()).max(1) as f64
                } else {
                    g
                }
            })
            .sum())
    }
}
