//! Acceptance suite: one test per criterion, each printing a single
//! `criterion N ... PASS|FAIL` line (written straight to stdout so it shows
//! even when the harness captures output).
//!
//! The toy pipeline (criteria 7, 8 and the golden report) runs once and is
//! shared. Set `UPDATE_GOLDEN=1` to rewrite the committed golden report.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use divcomb_cli::report::parse_blocks;
use divcomb_core::alignment::align_all;
use divcomb_core::combiner::{
    beam_search, build_space, feature_names, Combiner, Memt, NGramLM, SearchSpace, SearchState, Successor, WeightVector,
};
use divcomb_core::ddt::rl_estimate_from_samples;
use divcomb_core::evaluation::{f_beta_from_pr, ScoreStats};
use divcomb_core::policy::{PolicyModel, Vocabulary};
use divcomb_core::rewards::{RewardKind, RewardSpec};
use divcomb_core::tuner::{line_search, mert, KBestPool, MertConfig, PoolEntry};
use divcomb_core::TokenSeq;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report_line(id: u32, name: &str, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {id} {name}: {verdict} ({detail})").unwrap();
}

fn seq(tokens: &[&str]) -> TokenSeq {
    TokenSeq::new(tokens.iter().map(|t| t.to_string()).collect()).unwrap()
}

fn words(rng: &mut ChaCha8Rng, alphabet: &[&str], max: usize) -> TokenSeq {
    let n = rng.random_range(0..=max);
    seq(&(0..n)
        .map(|_| alphabet[rng.random_range(0..alphabet.len())])
        .collect::<Vec<_>>())
}

// ---------------------------------------------------------------- criterion 1

/// Published (precision, recall, F0.5) triples, as printed.
const PUBLISHED: [(&str, &str, &str); 28] = [
    ("75.19", "51.91", "69.00"),
    ("72.28", "60.12", "69.47"),
    ("72.1", "61.8", "69.8"),
    ("73.89", "57.52", "69.91"),
    ("73.3", "44.2", "64.7"),
    ("72.6", "46.4", "65.2"),
    ("78.2", "41.5", "66.5"),
    ("70.96", "43.24", "62.89"),
    ("70.4", "55.9", "66.9"),
    ("62.73", "33.23", "53.27"),
    ("59.1", "36.8", "53"),
    ("74.7", "56.7", "70.2"),
    ("78.31", "58", "73.18"),
    ("78.9", "58.2", "73.6"),
    ("65.26", "38.68", "57.38"),
    ("78.13", "60.11", "73.71"),
    ("66.54", "37.90", "57.81"),
    ("80.25", "58.91", "74.83"),
    ("62.9", "39.9", "56.4"),
    ("74.76", "34.05", "60.33"),
    ("66.7", "43.9", "60.4"),
    ("72.6", "37.2", "61.0"),
    ("68.3", "43.2", "61.2"),
    ("72.4", "46.1", "65.0"),
    ("76.39", "43.12", "66.18"),
    ("76.43", "45.54", "67.30"),
    ("78.62", "59.74", "73.95"),
    ("79.71", "59.87", "74.76"),
];

/// The one published triple whose F0.5 cannot come from its P and R.
const KNOWN_INCONSISTENT: (&str, &str, &str) = ("59.1", "36.8", "53");

/// Half a unit in the last printed digit.
fn half_ulp(printed: &str) -> f64 {
    let decimals = printed.split_once('.').map_or(0, |(_, d)| d.len());
    0.5 * 10f64.powi(-(decimals as i32))
}

#[test]
fn criterion_1_metric_fidelity() {
    let start = Instant::now();
    let mut failing = Vec::new();
    let mut strict_failures = 0;
    for row @ (p, r, f) in PUBLISHED {
        let (pv, rv, fv): (f64, f64, f64) = (p.parse().unwrap(), r.parse().unwrap(), f.parse().unwrap());
        let computed = f_beta_from_pr(pv, rv, 0.5);
        if (computed - fv).abs() > 0.05 {
            strict_failures += 1;
        }
        // F is increasing in both P and R, so the corners bound it
        let lo = f_beta_from_pr(pv - half_ulp(p), rv - half_ulp(r), 0.5);
        let hi = f_beta_from_pr(pv + half_ulp(p), rv + half_ulp(r), 0.5);
        if fv < lo - 0.05 || fv > hi + 0.05 {
            failing.push((row, computed));
        }
    }
    let elapsed = start.elapsed();
    let pass = failing.is_empty() && elapsed < Duration::from_secs(1);
    let detail = format!(
        "{} rows, {} outside +-0.05 once P/R rounding is allowed for {:?}, {} outside with P/R taken literally, {:?}",
        PUBLISHED.len(),
        failing.len(),
        failing
            .iter()
            .map(|((p, r, f), c)| format!("P={p} R={r} F={f} computes {c:.3}"))
            .collect::<Vec<_>>(),
        strict_failures,
        elapsed
    );
    report_line(1, "metric fidelity", pass, &detail);
    // the criterion itself fails on one inconsistent published triple; anything
    // beyond that row is a regression
    assert_eq!(
        failing.iter().map(|(row, _)| *row).collect::<Vec<_>>(),
        [KNOWN_INCONSISTENT],
        "{detail}"
    );
    assert!(elapsed < Duration::from_secs(1));
}

// ---------------------------------------------------------- criteria 2 and 4

/// Output classes {</s>, <unk>, a}, max length 2.
fn tiny_policy(seed: u64) -> PolicyModel {
    let vocab = Vocabulary::with_tokens(&["a"]).unwrap();
    PolicyModel::with_init_range(vocab, 3, 3, 2, seed, 1.0).unwrap()
}

fn tiny_space() -> Vec<TokenSeq> {
    let w = ["<unk>", "a"];
    let mut out = vec![seq(&[])];
    out.extend(w.iter().map(|a| seq(&[a])));
    for a in w {
        for b in w {
            out.push(seq(&[a, b]));
        }
    }
    out
}

#[test]
fn criterion_2_reinforce_exactness() {
    let start = Instant::now();
    let space = tiny_space();
    let x = seq(&["a", "<unk>"]);
    let peers = [seq(&["a"]), seq(&["a", "a"])];
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for kind in RewardKind::ALL {
        let spec = RewardSpec::new(kind);
        let rewards: Vec<f64> = space.iter().map(|y| spec.score(&peers, y).unwrap()).collect();
        for seed in 0..2 {
            let m = tiny_policy(seed);
            let n = m.params().len();
            let probs: Vec<f64> = space
                .iter()
                .map(|y| m.sample_logprob(&x, y, 2).unwrap().exp())
                .collect();
            assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // grad E[R] = sum_y R(y) p(y) grad ln p(y)
            let mut exact = vec![0.0; n];
            for ((y, p), r) in space.iter().zip(&probs).zip(&rewards) {
                m.accumulate_sample_grad(&x, y, 2, p * r, &mut exact).unwrap();
            }
            for (baseline, k) in [(true, 2), (true, 3), (false, 2)] {
                let mut mean = vec![0.0; n];
                let s = space.len();
                for idx in 0..s.pow(k as u32) {
                    let picks: Vec<usize> = (0..k).map(|j| idx / s.pow(j as u32) % s).collect();
                    let weight: f64 = picks.iter().map(|&i| probs[i]).product();
                    let samples: Vec<TokenSeq> = picks.iter().map(|&i| space[i].clone()).collect();
                    let rs: Vec<f64> = picks.iter().map(|&i| rewards[i]).collect();
                    let g = rl_estimate_from_samples(&m, &x, &samples, &rs, baseline).unwrap();
                    for (a, b) in mean.iter_mut().zip(&g) {
                        *a += weight * b;
                    }
                }
                for (a, b) in mean.iter().zip(&exact) {
                    worst = worst.max((a - b).abs());
                }
                checked += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 1e-6 && elapsed < Duration::from_secs(10);
    report_line(
        2,
        "REINFORCE exactness",
        pass,
        &format!("{checked} estimator settings, max coordinate error {worst:.2e}, {elapsed:?}"),
    );
    assert!(pass);
}

#[test]
fn criterion_4_baseline_variance() {
    let m = tiny_policy(11);
    let x = seq(&["a"]);
    let peers = [seq(&["a", "a"]), seq(&["a"])];
    let spec = RewardSpec::new(RewardKind::MinEditDistance);
    let trials = 10_000;
    let n = m.params().len();
    // (sum, sum of squares) per coordinate, with and without the baseline
    let mut acc = [(vec![0.0; n], vec![0.0; n]), (vec![0.0; n], vec![0.0; n])];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..trials {
        let samples: Vec<TokenSeq> = (0..4).map(|_| m.sample(&x, &mut rng, 2)).collect();
        let rs: Vec<f64> = samples.iter().map(|y| spec.score(&peers, y).unwrap()).collect();
        for (slot, baseline) in acc.iter_mut().zip([true, false]) {
            let g = rl_estimate_from_samples(&m, &x, &samples, &rs, baseline).unwrap();
            for p in 0..n {
                slot.0[p] += g[p];
                slot.1[p] += g[p] * g[p];
            }
        }
    }
    let var = |s: &(Vec<f64>, Vec<f64>), p: usize| {
        let mean = s.0[p] / trials as f64;
        s.1[p] / trials as f64 - mean * mean
    };
    let better = (0..n).filter(|&p| var(&acc[0], p) <= var(&acc[1], p)).count();
    let share = better as f64 / n as f64;
    let pass = share >= 0.95;
    report_line(
        4,
        "baseline variance",
        pass,
        &format!(
            "{trials} trials, baseline variance no larger in {better} of {n} coordinates ({:.1}%)",
            100.0 * share
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 3

#[test]
fn criterion_3_gradient_checks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let alphabet = ["a", "b", "c", "d", "e"];
    let models = 24;
    let mut worst: f64 = 0.0;
    let mut coords = 0;
    for seed in 0..models {
        let v = rng.random_range(1..=alphabet.len());
        let vocab = Vocabulary::with_tokens(&alphabet[..v]).unwrap();
        let emb = rng.random_range(1..=4);
        let hidden = rng.random_range(1..=5);
        let mut m = PolicyModel::with_init_range(vocab, emb, hidden, 6, seed, 0.8).unwrap();
        let x = words(&mut rng, &alphabet, 4);
        let y = words(&mut rng, &alphabet[..v], 4);
        let (_, grad) = m.logprob_grad(&x, &y).unwrap();
        let h = 1e-5;
        for p in 0..m.params().len() {
            let orig = m.params()[p];
            m.params_mut()[p] = orig + h;
            let up = m.logprob(&x, &y).unwrap();
            m.params_mut()[p] = orig - h;
            let down = m.logprob(&x, &y).unwrap();
            m.params_mut()[p] = orig;
            let numeric = (up - down) / (2.0 * h);
            let scale = grad[p].abs().max(numeric.abs());
            // coordinates that barely move the objective are compared absolutely
            let err = if scale < 1e-6 {
                (grad[p] - numeric).abs()
            } else {
                (grad[p] - numeric).abs() / scale
            };
            worst = worst.max(err);
            coords += 1;
        }
    }
    let pass = worst < 1e-4;
    report_line(
        3,
        "gradient checks",
        pass,
        &format!("{models} models, {coords} coordinates, max relative error {worst:.2e}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 5

fn exhaustive_best(sp: &SearchSpace, w: &WeightVector, lm: &NGramLM) -> (f64, Vec<String>) {
    fn go(sp: &SearchSpace, w: &WeightVector, lm: &NGramLM, s: &SearchState, best: &mut Option<(f64, Vec<String>)>) {
        for succ in sp.extensions(s, w, lm) {
            match succ {
                Successor::Open(next) => go(sp, w, lm, &next, best),
                Successor::Complete(done) => {
                    let score = w.dot(&done.features);
                    let better = match best {
                        None => true,
                        Some((b, out)) => score > *b || (score == *b && done.output < *out),
                    };
                    if better {
                        *best = Some((score, done.output));
                    }
                }
            }
        }
    }
    let mut best = None;
    go(sp, w, lm, &sp.initial_state(lm), &mut best);
    best.expect("the end action is always reachable")
}

#[test]
fn criterion_5_beam_search_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let alphabet = ["a", "b", "c", "d", "the", "cat"];
    let lm_corpus: Vec<TokenSeq> = (0..40).map(|_| words(&mut rng, &alphabet, 6)).collect();
    let lm = NGramLM::train(&lm_corpus, 3).unwrap();
    let instances = 240;
    let mut mismatches = 0;
    for _ in 0..instances {
        let n = rng.random_range(2..=3);
        let hyps: Vec<TokenSeq> = (0..n).map(|_| words(&mut rng, &alphabet, 5)).collect();
        let mut values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        values.push(rng.random_range(-2.0..2.0));
        values.push(rng.random_range(-2.0..2.0));
        let w = WeightVector::new(feature_names(n), values).unwrap();
        let sp = build_space(&hyps, &align_all(&hyps).unwrap()).unwrap();
        let (score, out) = exhaustive_best(&sp, &w, &lm);
        let got = beam_search(&sp, &w, &lm, usize::MAX, 1).unwrap();
        if (got[0].score - score).abs() > 1e-9 || got[0].tokens.tokens() != &out[..] {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && elapsed < Duration::from_secs(30);
    report_line(
        5,
        "beam-search oracle",
        pass,
        &format!("{instances} instances, {mismatches} mismatches, {elapsed:?}"),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 6

/// Integer features and weights keep distinct breakpoints at least 1/324 apart.
fn random_pool(rng: &mut ChaCha8Rng, dims: usize) -> KBestPool {
    let sentences = rng.random_range(1..=6);
    KBestPool::from_entries(
        (0..sentences)
            .map(|s| {
                (0..rng.random_range(1..=6))
                    .map(|c| PoolEntry {
                        tokens: seq(&[&format!("s{s}c{c}")]),
                        features: (0..dims).map(|_| rng.random_range(-3i32..=3) as f64).collect(),
                        stats: ScoreStats::new(rng.random_range(0..4), rng.random_range(0..4), rng.random_range(0..4)),
                    })
                    .collect()
            })
            .collect(),
    )
}

/// Corpus F0.5 at step `num / den` computed in integers, so exactly tied
/// candidates go to the smaller tokens as in the tuner.
fn exact_f(pool: &KBestPool, w: &[i64], d: &[i64], num: i128, den: i128) -> f64 {
    pool.sentences()
        .iter()
        .filter(|s| !s.is_empty())
        .map(|entries| {
            let score = |e: &PoolEntry| -> i128 {
                e.features
                    .iter()
                    .zip(w.iter().zip(d))
                    .map(|(&f, (&a, &b))| f as i128 * (a as i128 * den + b as i128 * num))
                    .sum()
            };
            entries
                .iter()
                .max_by(|a, b| score(a).cmp(&score(b)).then_with(|| b.tokens.cmp(&a.tokens)))
                .unwrap()
                .stats
        })
        .sum::<ScoreStats>()
        .f05()
}

/// `g` as an exact fraction with a power-of-two denominator.
fn dyadic(g: f64) -> (i128, i128) {
    let (mut num, mut den) = (g, 1i128);
    while num.fract() != 0.0 {
        num *= 2.0;
        den *= 2;
    }
    (num as i128, den)
}

#[test]
fn criterion_6_mert_line_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let pools = 120;
    let grid = 100_000;
    let dims = 3;
    let mut line_mismatches = 0;
    let mut decreasing_runs = 0;
    for _ in 0..pools {
        let pool = random_pool(&mut rng, dims);
        let w: Vec<f64> = (0..dims).map(|_| rng.random_range(-2i32..=2) as f64).collect();
        let mut d: Vec<f64> = (0..dims).map(|_| rng.random_range(-1i32..=1) as f64).collect();
        if d.iter().all(|&v| v == 0.0) {
            d[0] = 1.0;
        }
        let (gamma, f) = line_search(&pool, &w, &d).unwrap();
        let (wi, di): (Vec<i64>, Vec<i64>) = (
            w.iter().map(|&v| v as i64).collect(),
            d.iter().map(|&v| v as i64).collect(),
        );
        // every breakpoint lies in [-36, 36]; the offset keeps grid points off them
        let grid_best = (0..grid as i128)
            .map(|i| exact_f(&pool, &wi, &di, 100 * i + 37 - 5_000_000, grid as i128))
            .fold(f64::NEG_INFINITY, f64::max);
        let (num, den) = dyadic(gamma);
        if (grid_best - f).abs() > 1e-12 || (exact_f(&pool, &wi, &di, num, den) - f).abs() > 1e-12 {
            line_mismatches += 1;
        }
        let w0 = WeightVector::new(feature_names(dims - 2), w.clone()).unwrap();
        let result = mert(
            &pool,
            &w0,
            &MertConfig {
                iters: 4,
                ..MertConfig::default()
            },
        )
        .unwrap();
        if result.history.windows(2).any(|h| h[1] < h[0]) {
            decreasing_runs += 1;
        }
    }
    let pass = line_mismatches == 0 && decreasing_runs == 0;
    report_line(
        6,
        "MERT line-search exactness",
        pass,
        &format!(
            "{pools} pools against a {grid}-point grid, {line_mismatches} mismatches, {decreasing_runs} runs with a decreasing F0.5"
        ),
    );
    assert!(pass);
}

// ----------------------------------------------------- shared pipeline runs

fn config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/toy.toml")
}

fn golden_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/toy_report.txt")
}

/// Runs the CLI with `workdir` as `paths.workdir`, clearing inherited overrides.
fn divcomb(config: &Path, workdir: &Path, args: &[&str], extra_env: &[(&str, &str)]) {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_divcomb"));
    for (k, _) in std::env::vars() {
        if k.starts_with("DIVCOMB_") {
            cmd.env_remove(k);
        }
    }
    cmd.env("DIVCOMB_PATHS__WORKDIR", workdir)
        .arg("--config")
        .arg(config)
        .args(args);
    for (k, v) in extra_env {
        cmd.env(k, v);
    }
    let out = cmd.output().expect("binary runs");
    assert!(
        out.status.success(),
        "divcomb {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

struct Pipeline {
    report: String,
    /// gen + train + stages wall time.
    stages_time: Duration,
    workdir: PathBuf,
}

fn fresh_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// The toy experiment end to end, run once per test process.
fn pipeline() -> &'static Pipeline {
    static RUN: OnceLock<Pipeline> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = fresh_dir("toy-pipeline");
        let cfg = config_path();
        let start = Instant::now();
        for cmd in ["gen", "train", "stages"] {
            divcomb(&cfg, &dir, &[cmd], &[]);
        }
        let stages_time = start.elapsed();
        divcomb(&cfg, &dir, &["ddt", "--ablation"], &[]);
        divcomb(&cfg, &dir, &["tune"], &[]);
        divcomb(&cfg, &dir, &["combine"], &[]);
        let base = dir.join("hyp.test.0");
        divcomb(&cfg, &dir, &["eval", "--baseline", base.to_str().unwrap()], &[]);
        divcomb(&cfg, &dir, &["diversity"], &[]);
        Pipeline {
            report: std::fs::read_to_string(dir.join("report.txt")).unwrap(),
            stages_time,
            workdir: dir,
        }
    })
}

fn block(report: &str, cmd: &str) -> BTreeMap<String, String> {
    parse_blocks(report)
        .into_iter()
        .find(|(c, _)| c == cmd)
        .unwrap_or_else(|| panic!("no {cmd} block"))
        .1
        .into_iter()
        .collect()
}

fn num(kv: &BTreeMap<String, String>, key: &str) -> f64 {
    kv.get(key).unwrap_or_else(|| panic!("missing {key}")).parse().unwrap()
}

// ---------------------------------------------------------------- criterion 7

#[test]
fn criterion_7_stage_trend() {
    let run = pipeline();
    let kv = block(&run.report, "stages");
    let stages = num(&kv, "stages") as usize;
    let series = |what: &str| -> Vec<f64> { (0..=stages).map(|s| num(&kv, &format!("stage{s}.{what}"))).collect() };
    let div_test = series("diversity_test");
    let div_dev = series("diversity_dev");
    let comb = series("comb.test_f05");
    let increasing = |v: &[f64]| v.windows(2).all(|p| p[1] > p[0]);
    let best = num(&kv, "best_stage") as usize;
    let best_component = kv
        .iter()
        .filter(|(k, _)| k.contains(".component") && k.ends_with("test_f05"))
        .map(|(_, v)| v.parse::<f64>().unwrap())
        .fold(f64::NEG_INFINITY, f64::max);
    let diversity_ok = stages >= 3 && increasing(&div_test) && increasing(&div_dev);
    let combination_ok = comb[best] > comb[0] && comb[best] > best_component;
    let fast = run.stages_time < Duration::from_secs(600);
    let pass = diversity_ok && combination_ok && fast;
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(" < ");
    report_line(
        7,
        "stage trend",
        pass,
        &format!(
            "test diversity {}, dev diversity {}, combined F0.5 at best stage {best} {:.4} vs stage 0 {:.4} and best component {:.4}, {:?}",
            fmt(&div_test),
            fmt(&div_dev),
            comb[best],
            comb[0],
            best_component,
            run.stages_time
        ),
    );
    assert!(pass);
}

// ---------------------------------------------------------------- criterion 8

#[test]
fn criterion_8_reward_ablation() {
    let kv = block(&pipeline().report, "ddt");
    let scores: Vec<(RewardKind, f64)> = RewardKind::ALL
        .iter()
        .map(|k| (*k, num(&kv, &format!("{k}.dev_f05"))))
        .collect();
    let pass = scores.iter().all(|(_, f)| f.is_finite() && (0.0..=1.0).contains(f));
    report_line(
        8,
        "reward ablation",
        pass,
        &scores
            .iter()
            .map(|(k, f)| format!("{k} dev F0.5 {f:.4}"))
            .collect::<Vec<_>>()
            .join(", "),
    );
    assert!(pass);
}

#[test]
fn golden_report_matches() {
    let run = pipeline();
    let path = golden_path();
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, &run.report).unwrap();
    }
    let golden = std::fs::read_to_string(&path).expect("golden report is committed");
    let same = golden == run.report;
    let mut out = std::io::stdout().lock();
    writeln!(out, "golden report: {}", if same { "PASS" } else { "FAIL" }).unwrap();
    assert!(same, "report differs from {}", path.display());
}

// ---------------------------------------------------------------- criterion 9

/// A config small enough to run every command twice in seconds.
const TINY: &str = r#"
alpha = 0.5
stages = 2
seed = 3
[ddt]
normalize = true
data_size = 30
[gen]
train_size = 60
dev_size = 20
test_size = 20
[policy]
emb = 4
hidden = 6
max_len = 12
[train]
epochs = 2
max_grad_norm = 50.0
[tuner]
rounds = 2
iters = 2
restarts = 1
[eval]
resamples = 50
"#;

const TINY_COMMANDS: [&[&str]; 8] = [
    &["gen"],
    &["train"],
    &["ddt", "--ablation"],
    &["stages"],
    &["tune"],
    &["combine"],
    &["eval"],
    &["diversity"],
];

fn dir_contents(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect()
}

#[test]
fn criterion_9_idempotence_and_determinism() {
    // identical inputs combine to themselves, whatever the weights
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let alphabet = ["he", "likes", "tea", ".", "a", "the"];
    let lm_corpus: Vec<TokenSeq> = (0..30).map(|_| words(&mut rng, &alphabet, 6)).collect();
    let lm = Arc::new(NGramLM::train(&lm_corpus, 3).unwrap());
    let cases = 150;
    let mut not_idempotent = 0;
    for _ in 0..cases {
        let n = rng.random_range(2..=4);
        let s = words(&mut rng, &alphabet, 8);
        let values: Vec<f64> = (0..n + 2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let memt = Memt {
            lm: lm.clone(),
            weights: WeightVector::new(feature_names(n), values).unwrap(),
            beam: 8,
        };
        if memt.combine(&vec![s.clone(); n]).unwrap() != s {
            not_idempotent += 1;
        }
    }

    // on the shipped toy data, through the CLI
    let run = pipeline();
    let hyp = run.workdir.join("hyp.test.1");
    let out = fresh_dir("idempotence-out").join("combined");
    let weights = run.workdir.join("stage0.weights");
    let h = hyp.to_str().unwrap();
    let scratch = fresh_dir("idempotence");
    let lm_corpus = run.workdir.join("train.ref");
    let scratch_report = scratch.join("report.txt");
    divcomb(
        &config_path(),
        &scratch,
        &[
            "combine",
            "--inputs",
            h,
            h,
            h,
            "--weights",
            weights.to_str().unwrap(),
            "--output",
            out.to_str().unwrap(),
        ],
        &[
            ("DIVCOMB_PATHS__LM_CORPUS", lm_corpus.to_str().unwrap()),
            ("DIVCOMB_PATHS__REPORT", scratch_report.to_str().unwrap()),
        ],
    );
    let cli_idempotent = std::fs::read(&out).unwrap() == std::fs::read(&hyp).unwrap();

    // every command twice, the second time on two threads
    let cfg_dir = fresh_dir("tiny-config");
    let cfg = cfg_dir.join("tiny.toml");
    std::fs::write(&cfg, TINY).unwrap();
    let (a, b) = (fresh_dir("tiny-a"), fresh_dir("tiny-b"));
    for args in TINY_COMMANDS {
        divcomb(&cfg, &a, args, &[]);
        let mut two = vec!["--jobs", "2"];
        two.extend_from_slice(args);
        divcomb(&cfg, &b, &two, &[]);
    }
    let (ca, cb) = (dir_contents(&a), dir_contents(&b));
    let differing: Vec<&String> = ca.keys().filter(|k| ca.get(*k) != cb.get(*k)).collect();
    let deterministic = differing.is_empty() && ca.len() == cb.len();

    let pass = not_idempotent == 0 && cli_idempotent && deterministic;
    report_line(
        9,
        "combiner idempotence and determinism",
        pass,
        &format!(
            "{cases} random identical inputs with {not_idempotent} changed, CLI combine of 3 identical files {}, {} artifacts from {} commands with {} differing",
            if cli_idempotent { "unchanged" } else { "changed" },
            ca.len(),
            TINY_COMMANDS.len(),
            differing.len()
        ),
    );
    assert!(pass, "differing artifacts: {differing:?}");
}
