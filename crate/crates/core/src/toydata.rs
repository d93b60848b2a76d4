//! Synthetic (erroneous, correct) sentence pairs.
//!
//! Correct sentences come from a small template grammar. Each corruption
//! rule fires independently with its probability at one random eligible
//! position. Gold edits are the canonical edit script from the corrupted
//! sentence back to the correct one.
//!
//! Word classes are disjoint by role (subjects, objects, places) and each
//! place takes one fixed preposition, so most corruptions can be undone from
//! the set of source words alone.
//!
//! Template files hold one template per line; `#` starts a comment. Slot
//! symbols are `NP`, `NP_SG`, `NP_PL` (subject noun phrases), `OBJ`, `PP`,
//! `IV_SG`, `IV_PL`, `TV_SG` and `TV_PL`; any other token is copied
//! literally. A template must agree in number by itself, e.g.
//! `NP_SG IV_SG PP .`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::textcore::{edit_script, EditScript, TokenSeq};

const SUBJ_DET_SG: &[&str] = &["this", "every", "my"];
const SUBJ_DET_PL: &[&str] = &["these", "many", "my"];
const OBJ_DET_SG: &str = "a";
const OBJ_DET_PL: &str = "some";
const PLACE_DET: &str = "the";
const ADJ: &[&str] = &["big", "old", "happy", "tired"];
/// Subjects, as (singular, plural).
const NOUNS: &[(&str, &str)] = &[
    ("cat", "cats"),
    ("dog", "dogs"),
    ("student", "students"),
    ("teacher", "teachers"),
    ("child", "children"),
    ("man", "men"),
];
const OBJECTS: &[(&str, &str)] = &[
    ("book", "books"),
    ("ball", "balls"),
    ("apple", "apples"),
    ("song", "songs"),
];
/// Places as (singular, plural, preposition).
const PLACES: &[(&str, &str, &str)] = &[
    ("park", "parks", "in"),
    ("table", "tables", "on"),
    ("school", "schools", "at"),
    ("river", "rivers", "near"),
    ("bridge", "bridges", "under"),
];
const PREP: &[&str] = &["in", "on", "at", "near", "under", "with"];
/// (third person singular, plural)
const INTRANSITIVE: &[(&str, &str)] = &[
    ("sleeps", "sleep"),
    ("runs", "run"),
    ("laughs", "laugh"),
    ("sings", "sing"),
];
const TRANSITIVE: &[(&str, &str)] = &[("likes", "like"), ("sees", "see"), ("wants", "want"), ("finds", "find")];

const DEFAULT_TEMPLATES: &str = "\
NP_SG IV_SG PP .
NP_PL IV_PL PP .
NP_SG TV_SG OBJ PP .
NP_PL TV_PL OBJ PP .
PP , NP_SG IV_SG .
PP , NP_PL TV_PL OBJ .
";

const ADJ_PROB: f64 = 0.3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum RuleKind {
    DropDeterminer,
    VerbAgreementSwap,
    PrepositionSwap,
    NounNumberSwap,
    TokenDuplicate,
}

impl RuleKind {
    pub const ALL: [RuleKind; 5] = [
        RuleKind::DropDeterminer,
        RuleKind::VerbAgreementSwap,
        RuleKind::PrepositionSwap,
        RuleKind::NounNumberSwap,
        RuleKind::TokenDuplicate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::DropDeterminer => "drop_determiner",
            RuleKind::VerbAgreementSwap => "verb_agreement_swap",
            RuleKind::PrepositionSwap => "preposition_swap",
            RuleKind::NounNumberSwap => "noun_number_swap",
            RuleKind::TokenDuplicate => "token_duplicate",
        }
    }
}

impl fmt::Display for RuleKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RuleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        RuleKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown corruption rule {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CorruptionRule {
    pub kind: RuleKind,
    pub prob: f64,
}

impl CorruptionRule {
    pub fn new(kind: RuleKind, prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&prob) {
            return Err(Error::invalid(format!("probability of {kind} must lie in [0, 1]")));
        }
        Ok(CorruptionRule { kind, prob })
    }
}

/// Every rule with the same probability.
pub fn uniform_rules(prob: f64) -> Result<Vec<CorruptionRule>> {
    RuleKind::ALL.iter().map(|&k| CorruptionRule::new(k, prob)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Tag {
    Det,
    Adj,
    /// Noun with its (singular, plural) pair and current number.
    Noun(&'static str, &'static str, bool),
    Verb(&'static str, &'static str, bool),
    Prep,
    Other,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Slot {
    /// Subject noun phrase; `None` picks the number at random.
    Subject(Option<bool>),
    Object,
    Place,
    Intransitive(bool),
    Transitive(bool),
    Literal(String),
}

impl Slot {
    fn parse(sym: &str) -> Slot {
        match sym {
            "NP" => Slot::Subject(None),
            "NP_SG" => Slot::Subject(Some(false)),
            "NP_PL" => Slot::Subject(Some(true)),
            "OBJ" => Slot::Object,
            "PP" => Slot::Place,
            "IV_SG" => Slot::Intransitive(false),
            "IV_PL" => Slot::Intransitive(true),
            "TV_SG" => Slot::Transitive(false),
            "TV_PL" => Slot::Transitive(true),
            other => Slot::Literal(other.to_string()),
        }
    }
}

fn push_noun(out: &mut Vec<(String, Tag)>, sg: &'static str, pl: &'static str, plural: bool) {
    out.push(((if plural { pl } else { sg }).to_string(), Tag::Noun(sg, pl, plural)));
}

/// Sentence templates over the built-in lexicon.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Grammar {
    templates: Vec<Vec<Slot>>,
}

impl Default for Grammar {
    fn default() -> Self {
        Grammar::from_template_text(DEFAULT_TEMPLATES, Path::new("<builtin>")).expect("builtin templates parse")
    }
}

impl Grammar {
    pub fn from_template_text(text: &str, origin: &Path) -> Result<Self> {
        let mut templates = Vec::new();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let slots: Vec<Slot> = line.split_whitespace().map(Slot::parse).collect();
            if slots.iter().all(|s| matches!(s, Slot::Literal(_))) {
                return Err(Error::parse(origin, no + 1, "template has no slot symbols"));
            }
            templates.push(slots);
        }
        if templates.is_empty() {
            return Err(Error::parse(origin, 1, "no templates"));
        }
        Ok(Grammar { templates })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_template_text(&text, path)
    }

    /// Every token the grammar and the corruption rules can produce.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<&str> = SUBJ_DET_SG
            .iter()
            .chain(SUBJ_DET_PL)
            .chain(ADJ)
            .chain(PREP)
            .copied()
            .collect();
        v.extend([OBJ_DET_SG, OBJ_DET_PL, PLACE_DET]);
        for &(a, b) in NOUNS.iter().chain(OBJECTS).chain(INTRANSITIVE).chain(TRANSITIVE) {
            v.extend([a, b]);
        }
        for &(a, b, _) in PLACES {
            v.extend([a, b]);
        }
        for t in &self.templates {
            for s in t {
                if let Slot::Literal(l) = s {
                    v.push(l);
                }
            }
        }
        let mut out: Vec<String> = v.into_iter().map(String::from).collect();
        out.sort();
        out.dedup();
        out
    }

    fn sample(&self, rng: &mut impl Rng) -> Vec<(String, Tag)> {
        let template = self.templates.choose(rng).unwrap();
        let mut out = Vec::new();
        for slot in template {
            match slot {
                Slot::Subject(number) => {
                    let pl = number.unwrap_or_else(|| rng.random_bool(0.5));
                    let dets = if pl { SUBJ_DET_PL } else { SUBJ_DET_SG };
                    out.push((dets.choose(rng).unwrap().to_string(), Tag::Det));
                    if rng.random_bool(ADJ_PROB) {
                        out.push((ADJ.choose(rng).unwrap().to_string(), Tag::Adj));
                    }
                    let &(sg, p) = NOUNS.choose(rng).unwrap();
                    push_noun(&mut out, sg, p, pl);
                }
                Slot::Object => {
                    let pl = rng.random_bool(0.5);
                    out.push(((if pl { OBJ_DET_PL } else { OBJ_DET_SG }).to_string(), Tag::Det));
                    let &(sg, p) = OBJECTS.choose(rng).unwrap();
                    push_noun(&mut out, sg, p, pl);
                }
                Slot::Place => {
                    let &(sg, p, prep) = PLACES.choose(rng).unwrap();
                    out.push((prep.to_string(), Tag::Prep));
                    out.push((PLACE_DET.to_string(), Tag::Det));
                    push_noun(&mut out, sg, p, false);
                }
                Slot::Intransitive(pl) | Slot::Transitive(pl) => {
                    let table = if matches!(slot, Slot::Intransitive(_)) {
                        INTRANSITIVE
                    } else {
                        TRANSITIVE
                    };
                    let &(sg, p) = table.choose(rng).unwrap();
                    out.push(((if *pl { p } else { sg }).to_string(), Tag::Verb(sg, p, *pl)));
                }
                Slot::Literal(l) => out.push((l.clone(), Tag::Other)),
            }
        }
        out
    }
}

/// Position of a random token satisfying `pred`, if any.
fn pick(tokens: &[(String, Tag)], rng: &mut impl Rng, pred: impl Fn(&Tag) -> bool) -> Option<usize> {
    let idx: Vec<usize> = (0..tokens.len()).filter(|&i| pred(&tokens[i].1)).collect();
    idx.choose(rng).copied()
}

/// Applies `kind` at one eligible position; returns whether anything changed.
fn apply_rule(kind: RuleKind, tokens: &mut Vec<(String, Tag)>, rng: &mut impl Rng) -> bool {
    match kind {
        RuleKind::DropDeterminer => match pick(tokens, rng, |t| *t == Tag::Det) {
            Some(i) => {
                tokens.remove(i);
                true
            }
            None => false,
        },
        RuleKind::VerbAgreementSwap | RuleKind::NounNumberSwap => {
            let want_verb = kind == RuleKind::VerbAgreementSwap;
            let pos = pick(tokens, rng, |t| match t {
                Tag::Verb(..) => want_verb,
                Tag::Noun(..) => !want_verb,
                _ => false,
            });
            let Some(i) = pos else { return false };
            let (sg, pl, plural, verb) = match tokens[i].1 {
                Tag::Verb(s, p, n) => (s, p, n, true),
                Tag::Noun(s, p, n) => (s, p, n, false),
                _ => unreachable!(),
            };
            let flipped = !plural;
            tokens[i].0 = (if flipped { pl } else { sg }).to_string();
            tokens[i].1 = if verb {
                Tag::Verb(sg, pl, flipped)
            } else {
                Tag::Noun(sg, pl, flipped)
            };
            true
        }
        RuleKind::PrepositionSwap => match pick(tokens, rng, |t| *t == Tag::Prep) {
            Some(i) => {
                let others: Vec<&&str> = PREP.iter().filter(|p| **p != tokens[i].0).collect();
                tokens[i].0 = others.choose(rng).unwrap().to_string();
                true
            }
            None => false,
        },
        RuleKind::TokenDuplicate => match pick(tokens, rng, |t| *t != Tag::Other) {
            Some(i) => {
                let copy = tokens[i].clone();
                tokens.insert(i + 1, copy);
                true
            }
            None => false,
        },
    }
}

/// One generated example.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CorpusPair {
    /// The corrupted sentence.
    pub source: TokenSeq,
    /// The correct sentence.
    pub target: TokenSeq,
    /// Edits turning `source` into `target`.
    pub gold: EditScript,
    /// Rules that fired, in application order.
    pub applied: Vec<RuleKind>,
}

fn stream_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn to_seq(tokens: &[(String, Tag)]) -> TokenSeq {
    TokenSeq::new(tokens.iter().map(|(t, _)| t.clone()).collect()).expect("lexicon tokens are valid")
}

/// Generates `n` pairs. Sentence `i` draws its correct form from stream `i`
/// of `grammar_seed` and its corruptions from stream `i` of `rng_seed`.
pub fn generate_corpus(
    grammar: &Grammar,
    grammar_seed: u64,
    n: usize,
    rules: &[CorruptionRule],
    rng_seed: u64,
) -> Result<Vec<CorpusPair>> {
    if n == 0 {
        return Err(Error::invalid("corpus size must be at least 1"));
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut g = stream_rng(grammar_seed, i);
            let correct = grammar.sample(&mut g);
            let mut r = stream_rng(rng_seed, i);
            let mut tokens = correct.clone();
            let mut applied = Vec::new();
            for rule in rules {
                if r.random_bool(rule.prob) && apply_rule(rule.kind, &mut tokens, &mut r) {
                    applied.push(rule.kind);
                }
            }
            let source = to_seq(&tokens);
            let target = to_seq(&correct);
            let gold = edit_script(&source, &target);
            CorpusPair {
                source,
                target,
                gold,
                applied,
            }
        })
        .collect())
}
