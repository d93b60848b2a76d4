//! One function per subcommand. Each returns the report it produced.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use divcomb_core::combiner::{combine_corpus, Memt, NGramLM, WeightVector};
use divcomb_core::ddt::{self, decode_models, round_robin, DdtConfig, DdtExample, EpochStats};
use divcomb_core::evaluation::{
    pairwise_diversity, read_m2, score_corpus, sign_test_bootstrap, write_m2, GoldAnnotation, Outcome, ScoreStats,
};
use divcomb_core::policy::{PolicyModel, Vocabulary};
use divcomb_core::rewards::{RewardKind, RewardSpec};
use divcomb_core::textcore::{read_sentences, write_sentences};
use divcomb_core::toydata::{generate_corpus, Grammar, RuleKind};
use divcomb_core::tuner::{tune_loop, TuneConfig};
use divcomb_core::TokenSeq;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Split};
use crate::error::{CliError, CliResult};
use crate::report::{io_error, Report};

fn require(path: &Path) -> CliResult<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(CliError::data(format!("missing input file {}", path.display())))
    }
}

fn prepare(path: &Path) -> CliResult<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| io_error(dir, e)),
        None => Ok(()),
    }
}

fn read_text(path: &Path) -> CliResult<Vec<TokenSeq>> {
    require(path)?;
    Ok(read_sentences(path)?)
}

fn read_gold(path: &Path) -> CliResult<Vec<GoldAnnotation>> {
    require(path)?;
    Ok(read_m2(path)?)
}

fn write_text(path: &Path, lines: &[TokenSeq]) -> CliResult<()> {
    prepare(path)?;
    Ok(write_sentences(path, lines)?)
}

fn same_length(path: &Path, got: usize, other: &Path, want: usize) -> CliResult<()> {
    if got == want {
        Ok(())
    } else {
        Err(CliError::data(format!(
            "{} has {got} lines but {} has {want}",
            path.display(),
            other.display()
        )))
    }
}

/// Reads line-aligned files, all checked against `anchor`'s length.
fn read_aligned(paths: &[PathBuf], anchor: &Path, want: usize) -> CliResult<Vec<Vec<TokenSeq>>> {
    paths
        .iter()
        .map(|p| {
            let lines = read_text(p)?;
            same_length(p, lines.len(), anchor, want)?;
            Ok(lines)
        })
        .collect()
}

fn corpus_stats(hyps: &[TokenSeq], golds: &[GoldAnnotation]) -> CliResult<ScoreStats> {
    Ok(score_corpus(hyps, golds)?.into_iter().sum())
}

fn put_scores(report: &mut Report, prefix: &str, s: ScoreStats) {
    report.num(format!("{prefix}f05"), s.f05());
    report.num(format!("{prefix}precision"), s.precision());
    report.num(format!("{prefix}recall"), s.recall());
}

/// Sources and gold annotations of a dev or test split.
struct EvalSplit {
    sources: Vec<TokenSeq>,
    golds: Vec<GoldAnnotation>,
}

fn eval_split(cfg: &ExperimentConfig, split: Split) -> CliResult<EvalSplit> {
    let p = cfg.paths.split(split);
    let golds = read_gold(&p.gold)?;
    let sources = read_text(&p.source)?;
    same_length(&p.source, sources.len(), &p.gold, golds.len())?;
    if let Some(i) = (0..golds.len()).find(|&i| sources[i] != golds[i].source) {
        return Err(CliError::data(format!(
            "line {} of {} differs from the source in {}",
            i + 1,
            p.source.display(),
            p.gold.display()
        )));
    }
    Ok(EvalSplit { sources, golds })
}

type Pairs = Vec<(TokenSeq, TokenSeq)>;

fn train_pairs(cfg: &ExperimentConfig) -> CliResult<Pairs> {
    let p = cfg.paths.split(Split::Train);
    let sources = read_text(&p.source)?;
    let targets = read_text(&p.reference)?;
    same_length(&p.reference, targets.len(), &p.source, sources.len())?;
    Ok(sources.into_iter().zip(targets).collect())
}

/// The leading training pairs used for DDT, plus the fixed peer outputs on them.
fn ddt_data(cfg: &ExperimentConfig) -> CliResult<(Pairs, Vec<Vec<TokenSeq>>)> {
    let mut data = train_pairs(cfg)?;
    let train_src = &cfg.paths.split(Split::Train).source;
    let mut peers = read_aligned(&cfg.paths.peers, train_src, data.len())?;
    let n = cfg.ddt.data_size.min(data.len());
    data.truncate(n);
    for p in &mut peers {
        p.truncate(n);
    }
    Ok((data, peers))
}

fn load_lm(cfg: &ExperimentConfig) -> CliResult<Arc<NGramLM>> {
    let corpus = read_text(&cfg.paths.lm_corpus)?;
    Ok(Arc::new(NGramLM::train(&corpus, cfg.combiner.lm_order)?))
}

fn load_components(cfg: &ExperimentConfig) -> CliResult<Vec<PolicyModel>> {
    (0..cfg.policy.components)
        .map(|i| {
            let path = cfg.paths.model(i);
            if !path.exists() {
                return Err(CliError::data(format!(
                    "missing checkpoint {} (run the train command first)",
                    path.display()
                )));
            }
            Ok(PolicyModel::load(&path)?)
        })
        .collect()
}

fn save_model(model: &PolicyModel, path: &Path) -> CliResult<()> {
    prepare(path)?;
    Ok(model.save(path)?)
}

fn component_inputs(cfg: &ExperimentConfig, split: Split) -> Vec<PathBuf> {
    (0..cfg.policy.components)
        .map(|i| cfg.paths.hyp(split, &i.to_string()))
        .collect()
}

fn initial_weights(cfg: &ExperimentConfig, systems: usize) -> WeightVector {
    let (m, l, lm) = cfg.tuner.init;
    WeightVector::for_systems(systems, m, l, lm)
}

fn tune_config(cfg: &ExperimentConfig) -> TuneConfig {
    TuneConfig {
        rounds: cfg.tuner.rounds,
        beam: cfg.combiner.beam,
        kbest: cfg.combiner.kbest,
        mert: cfg.tuner.mert,
    }
}

fn last_reward(epochs: &[EpochStats]) -> Option<f64> {
    epochs.last().and_then(|e| e.mean_reward)
}

pub fn gen(cfg: &ExperimentConfig) -> CliResult<Report> {
    let grammar = match &cfg.paths.grammar {
        Some(p) => {
            require(p)?;
            Grammar::read(p)?
        }
        None => Grammar::default(),
    };
    let mut report = Report::new("gen", cfg.hash());
    report.put("vocabulary", grammar.vocabulary().len());
    for (k, split) in Split::ALL.into_iter().enumerate() {
        let seed = cfg.gen.seed.wrapping_add(2 * k as u64);
        let pairs = generate_corpus(&grammar, seed, cfg.gen.sizes[k], &cfg.gen.rules, seed.wrapping_add(1))?;
        let p = cfg.paths.split(split);
        let sources: Vec<TokenSeq> = pairs.iter().map(|x| x.source.clone()).collect();
        let targets: Vec<TokenSeq> = pairs.iter().map(|x| x.target.clone()).collect();
        let golds = pairs
            .iter()
            .map(|x| GoldAnnotation::new(x.source.clone(), vec![x.gold.edits.clone()]))
            .collect::<Result<Vec<_>, _>>()?;
        write_text(&p.source, &sources)?;
        write_text(&p.reference, &targets)?;
        prepare(&p.gold)?;
        write_m2(&p.gold, &golds)?;

        let name = split.name();
        report.put(format!("{name}.sentences"), pairs.len());
        report.put(
            format!("{name}.corrupted"),
            pairs.iter().filter(|x| !x.gold.is_empty()).count(),
        );
        for kind in RuleKind::ALL {
            let fired = pairs.iter().filter(|x| x.applied.contains(&kind)).count();
            report.put(format!("{name}.{kind}"), fired);
        }
        report.put(
            format!("{name}.edits"),
            pairs.iter().map(|x| x.gold.edits.len()).sum::<usize>(),
        );
    }
    Ok(report)
}

pub fn train(cfg: &ExperimentConfig) -> CliResult<Report> {
    let pairs = train_pairs(cfg)?;
    let dev = eval_split(cfg, Split::Dev)?;
    let test = eval_split(cfg, Split::Test)?;
    let vocab = Vocabulary::from_corpus(pairs.iter().flat_map(|(x, y)| [x, y]), 1)?;
    let examples: Vec<DdtExample> = pairs
        .into_iter()
        .map(|(source, reference)| DdtExample {
            source,
            reference,
            peers: Vec::new(),
        })
        .collect();
    let p = &cfg.policy;
    let trained = (0..p.components)
        .into_par_iter()
        .map(|i| {
            let seed = p.seed.wrapping_add(i as u64);
            let mut model = PolicyModel::new(vocab.clone(), p.emb, p.hidden, p.max_len, seed)?;
            let epochs = ddt::train(&mut model, &examples, &cfg.mle_config(i))?;
            Ok((model, epochs))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut report = Report::new("train", cfg.hash());
    report.put("vocabulary", vocab.len());
    report.put("parameters", trained[0].0.params().len());
    let mut outputs = [Vec::new(), Vec::new()];
    for (i, (model, epochs)) in trained.iter().enumerate() {
        save_model(model, &cfg.paths.model(i))?;
        if let Some(loss) = epochs.last().and_then(|e| e.mle_loss) {
            report.num(format!("component{i}.final_loss"), loss);
        }
        for (k, (split, data)) in [(Split::Dev, &dev), (Split::Test, &test)].into_iter().enumerate() {
            let hyps = model.decode_all(&data.sources);
            write_text(&cfg.paths.hyp(split, &i.to_string()), &hyps)?;
            put_scores(
                &mut report,
                &format!("component{i}.{}_", split.name()),
                corpus_stats(&hyps, &data.golds)?,
            );
            outputs[k].push(hyps);
        }
    }
    if outputs[0].len() > 1 {
        report.num("diversity.dev", pairwise_diversity(&outputs[0])?);
        report.num("diversity.test", pairwise_diversity(&outputs[1])?);
    }
    Ok(report)
}

/// Single-stage DDT of the backbone against the other components.
///
/// With `ablation` every reward kind is run from the same starting point.
pub fn ddt(cfg: &ExperimentConfig, ablation: bool) -> CliResult<Report> {
    let models = load_components(cfg)?;
    let (data, fixed) = ddt_data(cfg)?;
    let dev = eval_split(cfg, Split::Dev)?;
    let b = cfg.ddt.backbone;
    let sources: Vec<TokenSeq> = data.iter().map(|(x, _)| x.clone()).collect();
    let peer_outputs: Vec<Vec<TokenSeq>> = models
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != b)
        .map(|(_, m)| m.decode_all(&sources))
        .chain(fixed)
        .collect();
    if peer_outputs.is_empty() {
        return Err(CliError::usage(
            "ddt needs at least one peer: another component or paths.peers",
        ));
    }
    let examples: Vec<DdtExample> = data
        .iter()
        .enumerate()
        .map(|(n, (x, y))| DdtExample {
            source: x.clone(),
            reference: y.clone(),
            peers: peer_outputs.iter().map(|o| o[n].clone()).collect(),
        })
        .collect();
    let mut dev_outputs = decode_models(&models, &dev.sources);

    let mut report = Report::new("ddt", cfg.hash());
    report.put("backbone", b);
    report.put("examples", examples.len());
    report.put("peers", peer_outputs.len());
    put_scores(&mut report, "start.dev_", corpus_stats(&dev_outputs[b], &dev.golds)?);
    if dev_outputs.len() > 1 {
        report.num("start.diversity_dev", pairwise_diversity(&dev_outputs)?);
    }
    let kinds = if ablation {
        RewardKind::ALL.to_vec()
    } else {
        vec![cfg.ddt.core.reward.kind]
    };
    for kind in kinds {
        let run_cfg = DdtConfig {
            reward: RewardSpec {
                kind,
                ..cfg.ddt.core.reward
            },
            ..cfg.ddt.core
        };
        let mut model = models[b].clone();
        let epochs = ddt::train(&mut model, &examples, &run_cfg)?;
        save_model(&model, &cfg.paths.workdir.join(format!("model{b}.ddt.{kind}.ckpt")))?;
        let hyps = model.decode_all(&dev.sources);
        write_text(&cfg.paths.hyp(Split::Dev, &format!("ddt.{kind}")), &hyps)?;
        put_scores(&mut report, &format!("{kind}.dev_"), corpus_stats(&hyps, &dev.golds)?);
        if let Some(r) = last_reward(&epochs) {
            report.num(format!("{kind}.mean_reward"), r);
        }
        if let Some(l) = epochs.last().and_then(|e| e.mle_loss) {
            report.num(format!("{kind}.mle_loss"), l);
        }
        if dev_outputs.len() > 1 {
            let previous = std::mem::replace(&mut dev_outputs[b], hyps);
            report.num(format!("{kind}.diversity_dev"), pairwise_diversity(&dev_outputs)?);
            dev_outputs[b] = previous;
        }
    }
    Ok(report)
}

struct StageRow {
    stage: usize,
    backbone: Option<usize>,
    mean_reward: Option<f64>,
    diversity: [f64; 3],
    components: Vec<[ScoreStats; 2]>,
    comb: [ScoreStats; 2],
    pool_f: f64,
    tune_rounds: usize,
}

/// Round-robin DDT with a tuned combination after every stage.
pub fn stages(cfg: &ExperimentConfig) -> CliResult<Report> {
    let models = load_components(cfg)?;
    let (data, fixed) = ddt_data(cfg)?;
    let dev = eval_split(cfg, Split::Dev)?;
    let test = eval_split(cfg, Split::Test)?;
    let lm = load_lm(cfg)?;
    let w0 = initial_weights(cfg, models.len());
    let tc = tune_config(cfg);
    let work = &cfg.paths.workdir;
    std::fs::create_dir_all(work).map_err(|e| io_error(work, e))?;

    let mut rows = Vec::new();
    let (models, _) = round_robin(models, &fixed, &data, &cfg.ddt.core, cfg.ddt.stages, |rep, ms| {
        let od = decode_models(ms, &dev.sources);
        let ot = decode_models(ms, &test.sources);
        let mut components = Vec::new();
        for (d, t) in od.iter().zip(&ot) {
            let sd: ScoreStats = score_corpus(d, &dev.golds)?.into_iter().sum();
            let st: ScoreStats = score_corpus(t, &test.golds)?.into_iter().sum();
            components.push([sd, st]);
        }
        let tuned = tune_loop(&od, &dev.golds, lm.clone(), &w0, &tc)?;
        let memt = Memt {
            lm: lm.clone(),
            weights: tuned.weights.clone(),
            beam: cfg.combiner.beam,
        };
        let cd = combine_corpus(&memt, &od)?;
        let ct = combine_corpus(&memt, &ot)?;
        tuned.weights.write(work.join(format!("stage{}.weights", rep.stage)))?;
        write_sentences(work.join(format!("comb.dev.stage{}", rep.stage)), &cd)?;
        write_sentences(work.join(format!("comb.test.stage{}", rep.stage)), &ct)?;
        rows.push(StageRow {
            stage: rep.stage,
            backbone: rep.backbone,
            mean_reward: last_reward(&rep.epochs),
            diversity: [rep.diversity, pairwise_diversity(&od)?, pairwise_diversity(&ot)?],
            components,
            comb: [
                score_corpus(&cd, &dev.golds)?.into_iter().sum(),
                score_corpus(&ct, &test.golds)?.into_iter().sum(),
            ],
            pool_f: tuned.rounds.last().map_or(0.0, |r| r.pool_f),
            tune_rounds: tuned.rounds.len(),
        });
        Ok(())
    })?;
    for (i, m) in models.iter().enumerate() {
        save_model(m, &work.join(format!("model{i}.stage{}.ckpt", cfg.ddt.stages)))?;
    }

    let mut report = Report::new("stages", cfg.hash());
    report.put("stages", cfg.ddt.stages);
    report.put("examples", data.len());
    for row in &rows {
        let s = format!("stage{}.", row.stage);
        report.put(
            format!("{s}backbone"),
            row.backbone.map_or("none".to_string(), |b| b.to_string()),
        );
        if let Some(r) = row.mean_reward {
            report.num(format!("{s}mean_reward"), r);
        }
        report.num(format!("{s}diversity_ddt"), row.diversity[0]);
        report.num(format!("{s}diversity_dev"), row.diversity[1]);
        report.num(format!("{s}diversity_test"), row.diversity[2]);
        for (i, c) in row.components.iter().enumerate() {
            report.num(format!("{s}component{i}.dev_f05"), c[0].f05());
            report.num(format!("{s}component{i}.test_f05"), c[1].f05());
        }
        report.put(format!("{s}tune_rounds"), row.tune_rounds);
        report.num(format!("{s}pool_f05"), row.pool_f);
        report.num(format!("{s}comb.dev_f05"), row.comb[0].f05());
        put_scores(&mut report, &format!("{s}comb.test_"), row.comb[1]);
    }
    // the first stage wins ties
    let best = rows
        .iter()
        .fold(&rows[0], |b, r| if r.comb[0].f05() > b.comb[0].f05() { r } else { b });
    report.put("best_stage", best.stage);
    report.num("best.comb.test_f05", best.comb[1].f05());
    Ok(report)
}

pub fn tune(
    cfg: &ExperimentConfig,
    inputs: &[PathBuf],
    gold: Option<&Path>,
    output: Option<&Path>,
) -> CliResult<Report> {
    let inputs = if inputs.is_empty() {
        component_inputs(cfg, Split::Dev)
    } else {
        inputs.to_vec()
    };
    let gold = gold.unwrap_or(&cfg.paths.split(Split::Dev).gold);
    let output = output.unwrap_or(&cfg.paths.weights);
    let golds = read_gold(gold)?;
    let systems = read_aligned(&inputs, gold, golds.len())?;
    let lm = load_lm(cfg)?;
    let result = tune_loop(
        &systems,
        &golds,
        lm.clone(),
        &initial_weights(cfg, systems.len()),
        &tune_config(cfg),
    )?;
    prepare(output)?;
    result.weights.write(output)?;
    let memt = Memt {
        lm,
        weights: result.weights,
        beam: cfg.combiner.beam,
    };
    let combined = combine_corpus(&memt, &systems)?;

    let mut report = Report::new("tune", cfg.hash());
    report.put("systems", systems.len());
    report.put("sentences", golds.len());
    for r in &result.rounds {
        report.put(format!("round{}.added", r.round), r.added);
        report.put(format!("round{}.pool_size", r.round), r.pool_size);
        report.num(format!("round{}.pool_f05", r.round), r.pool_f);
    }
    put_scores(&mut report, "comb.", corpus_stats(&combined, &golds)?);
    for (i, w) in memt.weights.names().iter().zip(memt.weights.values()) {
        report.num(format!("weight.{i}"), *w);
    }
    Ok(report)
}

pub fn combine(
    cfg: &ExperimentConfig,
    inputs: &[PathBuf],
    weights: Option<&Path>,
    output: Option<&Path>,
) -> CliResult<Report> {
    let inputs = if inputs.is_empty() {
        component_inputs(cfg, Split::Test)
    } else {
        inputs.to_vec()
    };
    let weights_path = weights.unwrap_or(&cfg.paths.weights);
    let default_out = cfg.paths.combined(Split::Test);
    let output = output.unwrap_or(&default_out);
    require(weights_path)?;
    let weights = WeightVector::read(weights_path)?;
    weights
        .check_layout(inputs.len())
        .map_err(|e| CliError::data(format!("{}: {e}", weights_path.display())))?;
    let first = read_text(&inputs[0])?;
    let systems = read_aligned(&inputs, &inputs[0], first.len())?;
    let memt = Memt {
        lm: load_lm(cfg)?,
        weights,
        beam: cfg.combiner.beam,
    };
    let combined = combine_corpus(&memt, &systems)?;
    write_text(output, &combined)?;

    let mut report = Report::new("combine", cfg.hash());
    report.put("systems", systems.len());
    report.put("sentences", combined.len());
    for (i, sys) in systems.iter().enumerate() {
        let same = sys.iter().zip(&combined).filter(|(a, b)| a == b).count();
        report.put(format!("system{i}.identical_lines"), same);
    }
    Ok(report)
}

fn sentence_f(source: &TokenSeq, hyp: &TokenSeq, gold: &GoldAnnotation) -> CliResult<f64> {
    Ok(divcomb_core::evaluation::score_sentence(source, hyp, gold)?.f05())
}

pub fn eval(
    cfg: &ExperimentConfig,
    hyp: Option<&Path>,
    gold: Option<&Path>,
    baseline: Option<&Path>,
) -> CliResult<Report> {
    let default_hyp = cfg.paths.combined(Split::Test);
    let hyp = hyp.unwrap_or(&default_hyp);
    let gold = gold.unwrap_or(&cfg.paths.split(Split::Test).gold);
    let golds = read_gold(gold)?;
    let hyps = read_aligned(&[hyp.to_path_buf()], gold, golds.len())?.remove(0);

    let mut report = Report::new("eval", cfg.hash());
    report.put("sentences", golds.len());
    put_scores(&mut report, "", corpus_stats(&hyps, &golds)?);
    if let Some(base) = baseline {
        let base_hyps = read_aligned(&[base.to_path_buf()], gold, golds.len())?.remove(0);
        put_scores(&mut report, "baseline.", corpus_stats(&base_hyps, &golds)?);
        let outcomes = golds
            .iter()
            .zip(hyps.iter().zip(&base_hyps))
            .map(|(g, (a, b))| {
                let (fa, fb) = (sentence_f(&g.source, a, g)?, sentence_f(&g.source, b, g)?);
                Ok(if fa > fb {
                    Outcome::A
                } else if fb > fa {
                    Outcome::B
                } else {
                    Outcome::Tie
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let count = |o: Outcome| outcomes.iter().filter(|&&x| x == o).count();
        report.put("wins", count(Outcome::A));
        report.put("losses", count(Outcome::B));
        report.put("ties", count(Outcome::Tie));
        report.num(
            "p_value",
            sign_test_bootstrap(&outcomes, cfg.eval.resamples, cfg.eval.seed)?,
        );
    }
    Ok(report)
}

pub fn diversity(cfg: &ExperimentConfig, inputs: &[PathBuf]) -> CliResult<Report> {
    let inputs = if inputs.is_empty() {
        component_inputs(cfg, Split::Test)
    } else {
        inputs.to_vec()
    };
    if inputs.len() < 2 {
        return Err(CliError::usage("diversity needs at least two input files"));
    }
    let first = read_text(&inputs[0])?;
    let systems = read_aligned(&inputs, &inputs[0], first.len())?;
    let mut report = Report::new("diversity", cfg.hash());
    report.put("systems", systems.len());
    report.put("sentences", first.len());
    for a in 0..systems.len() {
        for b in a + 1..systems.len() {
            let d = divcomb_core::evaluation::diversity(&systems[a], &systems[b])?;
            report.num(format!("pair{a}_{b}"), d);
        }
    }
    report.num("diversity", pairwise_diversity(&systems)?);
    Ok(report)
}
