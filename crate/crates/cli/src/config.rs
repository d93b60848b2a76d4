//! Experiment configuration.
//!
//! A TOML file with flat dotted keys such as `policy.hidden = 48`. DDT
//! settings live at the top level (`alpha`, `k_samples`, `reward`, `lr`,
//! `epochs`, `seed`, `stages`). Any key can be overridden from the
//! environment: `DIVCOMB_POLICY__HIDDEN=64` sets `policy.hidden`, with `__`
//! standing for the dot. Unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use divcomb_core::ddt::DdtConfig;
use divcomb_core::rewards::{RewardKind, RewardSpec};
use divcomb_core::toydata::{CorruptionRule, RuleKind};
use divcomb_core::tuner::MertConfig;
use sha2::{Digest, Sha256};
use toml::Value;

use crate::error::{CliError, CliResult};

pub const ENV_PREFIX: &str = "DIVCOMB_";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Dev, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }
}

/// Source, reference and gold edit files of one split.
#[derive(Clone, Debug, PartialEq)]
pub struct SplitPaths {
    pub source: PathBuf,
    pub reference: PathBuf,
    pub gold: PathBuf,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Paths {
    pub workdir: PathBuf,
    pub grammar: Option<PathBuf>,
    pub splits: [SplitPaths; 3],
    /// Fixed black-box peer outputs for DDT, line-aligned with the training source.
    pub peers: Vec<PathBuf>,
    pub lm_corpus: PathBuf,
    pub weights: PathBuf,
    pub report: PathBuf,
}

impl Paths {
    pub fn split(&self, s: Split) -> &SplitPaths {
        &self.splits[s as usize]
    }

    pub fn model(&self, i: usize) -> PathBuf {
        self.workdir.join(format!("model{i}.ckpt"))
    }

    pub fn hyp(&self, split: Split, system: &str) -> PathBuf {
        self.workdir.join(format!("hyp.{}.{system}", split.name()))
    }

    pub fn combined(&self, split: Split) -> PathBuf {
        self.workdir.join(format!("comb.{}", split.name()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GenSettings {
    pub sizes: [usize; 3],
    pub seed: u64,
    pub rules: Vec<CorruptionRule>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PolicySettings {
    pub components: usize,
    pub emb: usize,
    pub hidden: usize,
    pub max_len: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub max_grad_norm: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DdtSettings {
    pub core: DdtConfig,
    pub stages: usize,
    /// Leading training pairs used for DDT.
    pub data_size: usize,
    pub backbone: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CombinerSettings {
    pub beam: usize,
    pub kbest: usize,
    pub lm_order: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TunerSettings {
    pub rounds: usize,
    pub mert: MertConfig,
    /// Starting weights: every match feature, length, lm.
    pub init: (f64, f64, f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalSettings {
    pub resamples: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub gen: GenSettings,
    pub policy: PolicySettings,
    pub train: TrainSettings,
    pub ddt: DdtSettings,
    pub combiner: CombinerSettings,
    pub tuner: TunerSettings,
    pub eval: EvalSettings,
    hash: String,
}

/// Flattens nested tables into dotted keys.
fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, Value>) -> CliResult<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Table(t) => flatten(&key, t, out)?,
            other => {
                if out.insert(key.clone(), other.clone()).is_some() {
                    return Err(CliError::usage(format!("config key {key} given twice")));
                }
            }
        }
    }
    Ok(())
}

/// Parses an override value as a TOML literal, falling back to a bare string.
fn parse_override(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

/// Raw key/value settings with typed, consuming accessors.
#[derive(Clone, Debug, Default)]
pub struct Settings {
    values: BTreeMap<String, Value>,
}

impl Settings {
    pub fn parse(text: &str, origin: &Path) -> CliResult<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::usage(format!("{}: {e}", origin.display())))?;
        let mut values = BTreeMap::new();
        flatten("", &table, &mut values)?;
        Ok(Settings { values })
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, path)
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    /// Applies `DIVCOMB_A__B=value` pairs as `a.b = value`.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) {
        for (name, raw) in vars {
            if let Some(rest) = name.strip_prefix(ENV_PREFIX) {
                let key = rest.to_ascii_lowercase().replace("__", ".");
                self.set(&key, parse_override(&raw));
            }
        }
    }

    fn take(&mut self, key: &str) -> Option<Value> {
        self.values.remove(key)
    }

    fn bad(key: &str, want: &str, v: &Value) -> CliError {
        CliError::usage(format!("config key {key}: expected {want}, got {v}"))
    }

    fn float(&mut self, key: &str, default: f64) -> CliResult<f64> {
        Ok(self.opt_float(key)?.unwrap_or(default))
    }

    fn opt_float(&mut self, key: &str) -> CliResult<Option<f64>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::Float(f)) => Ok(Some(f)),
            Some(Value::Integer(i)) => Ok(Some(i as f64)),
            Some(v) => Err(Self::bad(key, "a number", &v)),
        }
    }

    fn uint(&mut self, key: &str, default: u64) -> CliResult<u64> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Integer(i)) if i >= 0 => Ok(i as u64),
            Some(v) => Err(Self::bad(key, "a non-negative integer", &v)),
        }
    }

    fn size(&mut self, key: &str, default: usize) -> CliResult<usize> {
        Ok(self.uint(key, default as u64)? as usize)
    }

    fn boolean(&mut self, key: &str, default: bool) -> CliResult<bool> {
        match self.take(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(b),
            Some(v) => Err(Self::bad(key, "true or false", &v)),
        }
    }

    fn string(&mut self, key: &str) -> CliResult<Option<String>> {
        match self.take(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(v) => Err(Self::bad(key, "a string", &v)),
        }
    }

    fn path_list(&mut self, key: &str) -> CliResult<Vec<PathBuf>> {
        match self.take(key) {
            None => Ok(Vec::new()),
            Some(Value::Array(items)) => items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => Ok(PathBuf::from(s)),
                    other => Err(Self::bad(key, "an array of strings", &other)),
                })
                .collect(),
            Some(Value::String(s)) => Ok(s.split(',').map(|p| PathBuf::from(p.trim())).collect()),
            Some(v) => Err(Self::bad(key, "an array of strings", &v)),
        }
    }
}

fn positive(key: &str, v: usize) -> CliResult<usize> {
    if v == 0 {
        return Err(CliError::usage(format!("config key {key} must be at least 1")));
    }
    Ok(v)
}

impl ExperimentConfig {
    /// Reads `path` (or starts empty), then applies environment overrides and
    /// an optional seed override.
    pub fn load(path: Option<&Path>, seed: Option<u64>) -> CliResult<Self> {
        let mut s = match path {
            Some(p) => Settings::read(p)?,
            None => Settings::default(),
        };
        s.apply_env(std::env::vars());
        if let Some(seed) = seed {
            s.set("seed", Value::Integer(seed as i64));
        }
        Self::from_settings(s)
    }

    pub fn from_settings(mut s: Settings) -> CliResult<Self> {
        let workdir = PathBuf::from(s.string("paths.workdir")?.unwrap_or_else(|| "work".into()));
        let mut split_paths = Vec::new();
        for split in Split::ALL {
            let n = split.name();
            let mut p = |suffix: &str, ext: &str| -> CliResult<PathBuf> {
                Ok(s.string(&format!("paths.{n}_{suffix}"))?
                    .map(PathBuf::from)
                    .unwrap_or_else(|| workdir.join(format!("{n}.{ext}"))))
            };
            split_paths.push(SplitPaths {
                source: p("src", "src")?,
                reference: p("ref", "ref")?,
                gold: p("gold", "m2")?,
            });
        }
        let splits: [SplitPaths; 3] = split_paths.try_into().expect("three splits");
        let paths = Paths {
            grammar: s.string("paths.grammar")?.map(PathBuf::from),
            peers: s.path_list("paths.peers")?,
            lm_corpus: s
                .string("paths.lm_corpus")?
                .map(PathBuf::from)
                .unwrap_or_else(|| splits[0].reference.clone()),
            weights: s
                .string("paths.weights")?
                .map(PathBuf::from)
                .unwrap_or_else(|| workdir.join("weights.txt")),
            report: s
                .string("paths.report")?
                .map(PathBuf::from)
                .unwrap_or_else(|| workdir.join("report.txt")),
            splits,
            workdir,
        };

        let default_prob = s.float("gen.prob", 0.15)?;
        let mut rules = Vec::new();
        for kind in RuleKind::ALL {
            let p = s.float(&format!("gen.{kind}"), default_prob)?;
            rules.push(CorruptionRule::new(kind, p)?);
        }
        let gen = GenSettings {
            sizes: [
                positive("gen.train_size", s.size("gen.train_size", 2000)?)?,
                positive("gen.dev_size", s.size("gen.dev_size", 400)?)?,
                positive("gen.test_size", s.size("gen.test_size", 400)?)?,
            ],
            seed: s.uint("gen.seed", 1)?,
            rules,
        };

        let policy = PolicySettings {
            components: positive("policy.components", s.size("policy.components", 3)?)?,
            emb: positive("policy.emb", s.size("policy.emb", 24)?)?,
            hidden: positive("policy.hidden", s.size("policy.hidden", 48)?)?,
            max_len: positive("policy.max_len", s.size("policy.max_len", 24)?)?,
            seed: s.uint("policy.seed", 10)?,
        };

        let train = TrainSettings {
            epochs: positive("train.epochs", s.size("train.epochs", 200)?)?,
            lr: s.float("train.lr", 0.01)?,
            batch_size: positive("train.batch_size", s.size("train.batch_size", 16)?)?,
            seed: s.uint("train.seed", 100)?,
            max_grad_norm: s.opt_float("train.max_grad_norm")?,
        };

        let reward_kind: RewardKind = s.string("reward")?.as_deref().unwrap_or("edit").parse()?;
        let core = DdtConfig {
            alpha: s.float("alpha", 0.5)?,
            k_samples: s.size("k_samples", 4)?,
            reward: RewardSpec {
                kind: reward_kind,
                normalize: s.boolean("ddt.normalize", false)?,
            },
            learning_rate: s.float("lr", 0.05)?,
            epochs: s.size("epochs", 1)?,
            seed: s.uint("seed", 0)?,
            batch_size: s.size("ddt.batch_size", 16)?,
            clip: s.opt_float("ddt.clip")?,
            max_grad_norm: s.opt_float("ddt.max_grad_norm")?,
        };
        core.validate()?;
        let ddt = DdtSettings {
            core,
            stages: s.size("stages", 3)?,
            data_size: positive("ddt.data_size", s.size("ddt.data_size", 1000)?)?,
            backbone: s.size("ddt.backbone", 0)?,
        };
        if ddt.backbone >= policy.components {
            return Err(CliError::usage("ddt.backbone must index one of the policy components"));
        }

        let combiner = CombinerSettings {
            beam: positive("combiner.beam", s.size("combiner.beam", 16)?)?,
            kbest: positive("combiner.kbest", s.size("combiner.kbest", 20)?)?,
            lm_order: positive("combiner.lm_order", s.size("combiner.lm_order", 3)?)?,
        };

        let defaults = MertConfig::default();
        let tuner = TunerSettings {
            rounds: positive("tuner.rounds", s.size("tuner.rounds", 3)?)?,
            mert: MertConfig {
                iters: positive("tuner.iters", s.size("tuner.iters", defaults.iters)?)?,
                random_directions: s.size("tuner.random_directions", defaults.random_directions)?,
                restarts: s.size("tuner.restarts", 8)?,
                seed: s.uint("tuner.seed", defaults.seed)?,
            },
            init: (
                s.float("tuner.init_match", 1.0)?,
                s.float("tuner.init_length", 0.0)?,
                s.float("tuner.init_lm", 0.1)?,
            ),
        };

        let eval = EvalSettings {
            resamples: positive("eval.resamples", s.size("eval.resamples", 1000)?)?,
            seed: s.uint("eval.seed", 0)?,
        };

        if let Some(key) = s.values.keys().next() {
            return Err(CliError::usage(format!("unknown config key {key}")));
        }
        let mut cfg = ExperimentConfig {
            paths,
            gen,
            policy,
            train,
            ddt,
            combiner,
            tuner,
            eval,
            hash: String::new(),
        };
        let digest = Sha256::digest(cfg.canonical().as_bytes());
        cfg.hash = hex::encode(digest)[..16].to_string();
        Ok(cfg)
    }

    /// Every resolved setting except file locations, one `key=value` per line.
    pub fn canonical(&self) -> String {
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let mut out = String::new();
        let mut line = |k: &str, v: String| writeln!(out, "{k}={v}").unwrap();
        let d = &self.ddt.core;
        line("alpha", d.alpha.to_string());
        line("k_samples", d.k_samples.to_string());
        line("reward", d.reward.kind.to_string());
        line("lr", d.learning_rate.to_string());
        line("epochs", d.epochs.to_string());
        line("seed", d.seed.to_string());
        line("stages", self.ddt.stages.to_string());
        line("ddt.normalize", d.reward.normalize.to_string());
        line("ddt.batch_size", d.batch_size.to_string());
        line("ddt.clip", opt(d.clip));
        line("ddt.max_grad_norm", opt(d.max_grad_norm));
        line("ddt.data_size", self.ddt.data_size.to_string());
        line("ddt.backbone", self.ddt.backbone.to_string());
        for (split, n) in Split::ALL.iter().zip(self.gen.sizes) {
            line(&format!("gen.{}_size", split.name()), n.to_string());
        }
        line("gen.seed", self.gen.seed.to_string());
        for r in &self.gen.rules {
            line(&format!("gen.{}", r.kind), r.prob.to_string());
        }
        let p = &self.policy;
        line("policy.components", p.components.to_string());
        line("policy.emb", p.emb.to_string());
        line("policy.hidden", p.hidden.to_string());
        line("policy.max_len", p.max_len.to_string());
        line("policy.seed", p.seed.to_string());
        let t = &self.train;
        line("train.epochs", t.epochs.to_string());
        line("train.lr", t.lr.to_string());
        line("train.batch_size", t.batch_size.to_string());
        line("train.seed", t.seed.to_string());
        line("train.max_grad_norm", opt(t.max_grad_norm));
        let c = &self.combiner;
        line("combiner.beam", c.beam.to_string());
        line("combiner.kbest", c.kbest.to_string());
        line("combiner.lm_order", c.lm_order.to_string());
        let u = &self.tuner;
        line("tuner.rounds", u.rounds.to_string());
        line("tuner.iters", u.mert.iters.to_string());
        line("tuner.random_directions", u.mert.random_directions.to_string());
        line("tuner.restarts", u.mert.restarts.to_string());
        line("tuner.seed", u.mert.seed.to_string());
        line("tuner.init_match", u.init.0.to_string());
        line("tuner.init_length", u.init.1.to_string());
        line("tuner.init_lm", u.init.2.to_string());
        line("eval.resamples", self.eval.resamples.to_string());
        line("eval.seed", self.eval.seed.to_string());
        out
    }

    /// First 16 hex digits of the SHA-256 of [`Self::canonical`].
    pub fn hash(&self) -> &str {
        &self.hash
    }

    /// DDT settings for training component `i` from scratch by likelihood only.
    pub fn mle_config(&self, i: usize) -> DdtConfig {
        DdtConfig {
            alpha: 0.0,
            learning_rate: self.train.lr,
            epochs: self.train.epochs,
            seed: self.train.seed.wrapping_add(i as u64),
            batch_size: self.train.batch_size,
            max_grad_norm: self.train.max_grad_norm,
            ..self.ddt.core
        }
    }
}
