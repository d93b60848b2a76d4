//! A small n-gram language model: stupid backoff over raw counts, an add-0.1
//! unigram floor, and per-context renormalisation so every conditional is a
//! proper distribution.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::textcore::TokenSeq;

pub const BACKOFF: f64 = 0.4;
pub const UNIGRAM_ADD: f64 = 0.1;

const BOS: &str = "<s>";
const EOS: &str = "</s>";
const UNK: &str = "<unk>";

pub type LmId = u32;

#[derive(Clone, Debug)]
pub struct NGramLM {
    order: usize,
    words: Vec<String>,
    index: HashMap<String, LmId>,
    bos: LmId,
    eos: LmId,
    unk: LmId,
    /// Counts of every n-gram, `1 <= n <= order`, keyed by id sequence.
    ngrams: HashMap<Vec<LmId>, u64>,
    /// How often each context (length `1..order`) is followed by a word.
    histories: HashMap<Vec<LmId>, u64>,
    unigram_total: u64,
    /// Normaliser of every seen context, plus the empty one.
    z: HashMap<Vec<LmId>, f64>,
}

impl NGramLM {
    /// Counts n-grams over `corpus`, each sentence padded with `order - 1`
    /// leading `<s>` and one trailing `</s>`.
    pub fn train(corpus: &[TokenSeq], order: usize) -> Result<Self> {
        if corpus.is_empty() {
            return Err(Error::invalid("language model corpus is empty"));
        }
        if order == 0 {
            return Err(Error::invalid("language model order must be at least 1"));
        }
        let mut lm = NGramLM {
            order,
            words: Vec::new(),
            index: HashMap::new(),
            bos: 0,
            eos: 0,
            unk: 0,
            ngrams: HashMap::new(),
            histories: HashMap::new(),
            unigram_total: 0,
            z: HashMap::new(),
        };
        lm.bos = lm.intern(BOS);
        lm.eos = lm.intern(EOS);
        lm.unk = lm.intern(UNK);
        let mut sorted: Vec<&str> = corpus.iter().flat_map(|s| s.iter().map(String::as_str)).collect();
        sorted.sort_unstable();
        sorted.dedup();
        for w in sorted {
            lm.intern(w);
        }
        for s in corpus {
            let mut ids = vec![lm.bos; order - 1];
            ids.extend(s.iter().map(|t| lm.index[t.as_str()]));
            ids.push(lm.eos);
            for end in order - 1..ids.len() {
                lm.unigram_total += 1;
                for n in 1..=order {
                    let gram = &ids[end + 1 - n..=end];
                    *lm.ngrams.entry(gram.to_vec()).or_default() += 1;
                    if n > 1 {
                        *lm.histories.entry(gram[..n - 1].to_vec()).or_default() += 1;
                    }
                }
            }
        }
        let contexts: Vec<Vec<LmId>> = std::iter::once(Vec::new())
            .chain(lm.histories.keys().cloned())
            .collect();
        for ctx in contexts {
            let z: f64 = lm.predictable().map(|w| lm.raw_score(&ctx, w)).sum();
            lm.z.insert(ctx, z);
        }
        Ok(lm)
    }

    fn intern(&mut self, w: &str) -> LmId {
        if let Some(&id) = self.index.get(w) {
            return id;
        }
        let id = self.words.len() as LmId;
        self.words.push(w.to_string());
        self.index.insert(w.to_string(), id);
        id
    }

    /// Every id that can be predicted (all except `<s>`).
    fn predictable(&self) -> impl Iterator<Item = LmId> + '_ {
        (0..self.words.len() as LmId).filter(move |&w| w != self.bos)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Vocabulary size over predictable symbols, including `</s>` and `<unk>`.
    pub fn vocab_size(&self) -> usize {
        self.words.len() - 1
    }

    pub fn id(&self, w: &str) -> LmId {
        self.index.get(w).copied().unwrap_or(self.unk)
    }

    pub fn bos(&self) -> LmId {
        self.bos
    }

    pub fn eos(&self) -> LmId {
        self.eos
    }

    /// The all-`<s>` context that starts a sentence.
    pub fn start_context(&self) -> Vec<LmId> {
        vec![self.bos; self.order - 1]
    }

    fn unigram(&self, w: LmId) -> f64 {
        let c = self.ngrams.get(&vec![w]).copied().unwrap_or(0) as f64;
        (c + UNIGRAM_ADD) / (self.unigram_total as f64 + UNIGRAM_ADD * self.vocab_size() as f64)
    }

    fn raw_score(&self, ctx: &[LmId], w: LmId) -> f64 {
        let mut factor = 1.0;
        for k in 0..ctx.len() {
            let h = &ctx[k..];
            if let Some(&hc) = self.histories.get(h) {
                let mut gram = h.to_vec();
                gram.push(w);
                if let Some(&c) = self.ngrams.get(&gram) {
                    return factor * c as f64 / hc as f64;
                }
            }
            factor *= BACKOFF;
        }
        factor * self.unigram(w)
    }

    /// Longest suffix of `ctx` (at most `order - 1` ids) seen as a history.
    fn effective_context<'c>(&self, ctx: &'c [LmId]) -> &'c [LmId] {
        let start = ctx.len().saturating_sub(self.order - 1);
        let ctx = &ctx[start..];
        (0..ctx.len())
            .map(|k| &ctx[k..])
            .find(|h| self.z.contains_key(*h))
            .unwrap_or(&ctx[ctx.len()..])
    }

    /// `p(w | ctx)` over ids.
    pub fn prob_ids(&self, ctx: &[LmId], w: LmId) -> f64 {
        let ctx = self.effective_context(ctx);
        self.raw_score(ctx, w) / self.z[ctx]
    }

    pub fn log_prob_ids(&self, ctx: &[LmId], w: LmId) -> f64 {
        self.prob_ids(ctx, w).ln()
    }

    /// `p(word | context)`; unknown words map to `<unk>`.
    pub fn prob<S: AsRef<str>>(&self, context: &[S], word: &str) -> f64 {
        let ids: Vec<LmId> = context.iter().map(|t| self.id(t.as_ref())).collect();
        self.prob_ids(&ids, self.id(word))
    }

    /// Natural-log probability of a whole sentence including `</s>`.
    pub fn sentence_log_prob(&self, s: &TokenSeq) -> f64 {
        let mut ctx = self.start_context();
        let mut total = 0.0;
        for t in s {
            let w = self.id(t);
            total += self.log_prob_ids(&ctx, w);
            push_context(&mut ctx, w, self.order);
        }
        total + self.log_prob_ids(&ctx, self.eos)
    }

    /// Every predictable word string, `</s>` and `<unk>` included.
    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.predictable().map(|w| self.words[w as usize].as_str())
    }
}

/// Slides `w` into a context window of `order - 1` ids.
pub fn push_context(ctx: &mut Vec<LmId>, w: LmId, order: usize) {
    if order <= 1 {
        return;
    }
    ctx.push(w);
    if ctx.len() > order - 1 {
        ctx.remove(0);
    }
}
