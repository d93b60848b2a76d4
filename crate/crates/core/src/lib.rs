//! Diversity-driven system combination for text correction.
//!
//! The crate is organised bottom-up:
//!
//! - [`textcore`]: tokens, Levenshtein distance, edit scripts, n-grams.
//! - [`evaluation`]: span-based P/R/F0.5, BLEU, diversity, bootstrap sign test.
//! - [`rewards`]: sentence-level diversity rewards.
//! - [`policy`]: a small recurrent encoder-decoder with exact gradients.
//! - [`ddt`]: REINFORCE-with-baseline training towards diverse outputs.
//! - [`alignment`]: staged monolingual word alignment.
//! - [`combiner`]: alignment-lattice beam search with a linear feature model.
//! - [`tuner`]: exact line-search MERT over merged k-best pools.
//! - [`toydata`]: synthetic corruption corpora with gold edits.

pub mod alignment;
pub mod combiner;
pub mod ddt;
pub mod error;
pub mod evaluation;
pub mod policy;
pub mod rewards;
pub mod textcore;
pub mod toydata;
pub mod tuner;

pub use error::{Error, Result};
pub use textcore::{Edit, EditKind, EditScript, TokenSeq};
