use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::textcore::TokenSeq;

pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";
pub const UNK: &str = "<unk>";

pub const BOS_ID: usize = 0;
pub const EOS_ID: usize = 1;
pub const UNK_ID: usize = 2;

/// Ordered token list; reserved symbols occupy ids 0..3.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Reserved symbols followed by `tokens` in the given order.
    pub fn with_tokens<S: AsRef<str>>(tokens: &[S]) -> Result<Self> {
        let mut all: Vec<String> = vec![BOS.into(), EOS.into(), UNK.into()];
        all.extend(tokens.iter().map(|t| t.as_ref().to_string()));
        Self::from_list(all)
    }

    /// A full ordered list; the first three entries must be `<s> </s> <unk>`.
    pub fn from_list(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != BOS || tokens[1] != EOS || tokens[2] != UNK {
            return Err(Error::invalid("vocabulary must start with <s> </s> <unk>"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("invalid vocabulary token {t:?}")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::invalid(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    /// Tokens seen at least `min_count` times, most frequent first (ties lexicographic).
    pub fn from_corpus<'a>(sentences: impl IntoIterator<Item = &'a TokenSeq>, min_count: usize) -> Result<Self> {
        let mut counts: HashMap<&str, usize> = HashMap::new();
        for s in sentences {
            for t in s {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut items: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(t, c)| c >= min_count && ![BOS, EOS, UNK].contains(&t))
            .collect();
        items.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens: Vec<&str> = items.into_iter().map(|(t, _)| t).collect();
        Self::with_tokens(&tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id of `token`, or the `<unk>` id.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn ids(&self, s: &TokenSeq) -> Vec<usize> {
        s.iter().map(|t| self.id(t)).collect()
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_list(text.lines().map(str::to_owned).collect()).map_err(|e| Error::parse(path, 1, e.to_string()))
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = self.tokens.join("\n");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
