//! Plain-text checkpoints.
//!
//! ```text
//! divcomb-policy 1 vocab_size=40 emb=8 hidden=16 max_len=20 init_seed=7 params=2345
//! 0.0123...
//! ...
//! ```
//!
//! Values use Rust's shortest round-trip decimal form, so loading restores
//! bit-identical parameters. The vocabulary lives next to the checkpoint in
//! `<path>.vocab`, one token per line.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{Architecture, PolicyModel, Vocabulary};
use crate::error::{Error, Result};

const MAGIC: &str = "divcomb-policy";
const VERSION: &str = "1";

/// Path of the vocabulary file that accompanies a checkpoint.
pub fn vocab_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.as_os_str().to_owned();
    name.push(".vocab");
    PathBuf::from(name)
}

impl PolicyModel {
    pub fn to_checkpoint_string(&self) -> String {
        let a = self.arch;
        let mut out = format!(
            "{MAGIC} {VERSION} vocab_size={} emb={} hidden={} max_len={} init_seed={} params={}\n",
            a.vocab_size,
            a.emb,
            a.hidden,
            a.max_len,
            self.init_seed,
            self.params.len()
        );
        for p in &self.params {
            writeln!(out, "{p}").unwrap();
        }
        out
    }

    pub fn from_checkpoint_str(text: &str, vocab: Vocabulary, origin: &Path) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(origin, 1, "empty checkpoint"))?;
        let mut fields = header.split_whitespace();
        if fields.next() != Some(MAGIC) || fields.next() != Some(VERSION) {
            return Err(Error::parse(
                origin,
                1,
                format!("expected header \"{MAGIC} {VERSION} ...\""),
            ));
        }
        let mut meta = std::collections::HashMap::new();
        for f in fields {
            let (k, v) = f
                .split_once('=')
                .ok_or_else(|| Error::parse(origin, 1, format!("malformed field {f:?}")))?;
            let v: u64 = v
                .parse()
                .map_err(|_| Error::parse(origin, 1, format!("non-integer value in {f:?}")))?;
            meta.insert(k, v);
        }
        let get = |k: &str| {
            meta.get(k)
                .copied()
                .ok_or_else(|| Error::parse(origin, 1, format!("missing header field {k}")))
        };
        let arch = Architecture {
            vocab_size: get("vocab_size")? as usize,
            emb: get("emb")? as usize,
            hidden: get("hidden")? as usize,
            max_len: get("max_len")? as usize,
        };
        let init_seed = get("init_seed")?;
        let expected = get("params")? as usize;
        let params = lines
            .enumerate()
            .map(|(i, l)| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(origin, i + 2, format!("not a number: {l:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if params.len() != expected {
            return Err(Error::parse(
                origin,
                params.len() + 1,
                format!("header announces {expected} parameters, found {}", params.len()),
            ));
        }
        Self::from_parts(arch, vocab, params, init_seed).map_err(|e| Error::parse(origin, 1, e.to_string()))
    }

    /// Writes the checkpoint to `path` and the vocabulary to `path.vocab`.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_checkpoint_string()).map_err(|e| Error::io(path, e))?;
        self.vocab.write(vocab_path(path))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let vocab = Vocabulary::read(vocab_path(path))?;
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint_str(&text, vocab, path)
    }
}
