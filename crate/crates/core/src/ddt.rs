//! Diversity-driven training.
//!
//! The backbone maximises `(1 - alpha) * J_mle + alpha * J_rl`, where `J_rl` is
//! the expected diversity reward of its own samples against frozen peer
//! outputs. The RL gradient is estimated with REINFORCE over `k` multinomial
//! samples per input, centred by the mean reward of those samples.
//!
//! Centring uses the leave-one-out form: sample `j` is compared with the mean
//! of the other `k - 1` rewards, which keeps the estimator exactly unbiased.
//! Summed over samples this equals `1/(k-1) * sum_j (R_j - R_bar) grad ln p(y_j)`.

use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::pairwise_diversity;
use crate::policy::PolicyModel;
use crate::rewards::{RewardKind, RewardSpec};
use crate::textcore::TokenSeq;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DdtConfig {
    /// Weight of the RL term in `[0, 1]`.
    pub alpha: f64,
    /// Samples per input; the baseline needs at least two.
    pub k_samples: usize,
    pub reward: RewardSpec,
    pub learning_rate: f64,
    pub epochs: usize,
    pub seed: u64,
    pub batch_size: usize,
    /// Optional upper clip applied to each sampled reward.
    pub clip: Option<f64>,
    /// Rescales an update direction whose L2 norm exceeds this value.
    pub max_grad_norm: Option<f64>,
}

impl Default for DdtConfig {
    fn default() -> Self {
        DdtConfig {
            alpha: 0.5,
            k_samples: 4,
            reward: RewardSpec::new(RewardKind::MinEditDistance),
            learning_rate: crate::policy::DEFAULT_LEARNING_RATE,
            epochs: 1,
            seed: 0,
            batch_size: 16,
            clip: None,
            max_grad_norm: None,
        }
    }
}

impl DdtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::invalid(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if self.k_samples < 2 {
            return Err(Error::invalid("k_samples must be at least 2"));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if self.max_grad_norm.is_some_and(|c| !c.is_finite() || c <= 0.0) {
            return Err(Error::invalid("max_grad_norm must be positive"));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch_size must be at least 1"));
        }
        Ok(())
    }
}

/// One training input: source, reference and the frozen peer outputs.
#[derive(Clone, Debug, PartialEq)]
pub struct DdtExample {
    pub source: TokenSeq,
    pub reference: TokenSeq,
    pub peers: Vec<TokenSeq>,
}

fn sampled_reward(cfg: &DdtConfig, peers: &[TokenSeq], y: &TokenSeq) -> Result<f64> {
    let r = cfg.reward.score(peers, y)?;
    Ok(match cfg.clip {
        Some(c) => r.min(c),
        None => r,
    })
}

/// REINFORCE estimate from already drawn samples and their rewards.
///
/// With `baseline`, returns `1/(k-1) * sum_j (R_j - R_bar) grad ln p(y_j)`;
/// without, `1/k * sum_j R_j grad ln p(y_j)`. Both are unbiased for
/// `grad E[R]`.
pub fn rl_estimate_from_samples(
    model: &PolicyModel,
    x: &TokenSeq,
    samples: &[TokenSeq],
    rewards: &[f64],
    baseline: bool,
) -> Result<Vec<f64>> {
    let k = samples.len();
    if k != rewards.len() {
        return Err(Error::LengthMismatch(format!(
            "{k} samples for {} rewards",
            rewards.len()
        )));
    }
    if k == 0 || (baseline && k < 2) {
        return Err(Error::invalid("not enough samples for the estimator"));
    }
    let mean = rewards.iter().sum::<f64>() / k as f64;
    let mut grad = vec![0.0; model.params().len()];
    for (y, &r) in samples.iter().zip(rewards) {
        let scale = if baseline {
            (r - mean) / (k - 1) as f64
        } else {
            r / k as f64
        };
        if scale != 0.0 {
            model.accumulate_sample_grad(x, y, model.max_len(), scale, &mut grad)?;
        }
    }
    Ok(grad)
}

/// Draws `k` samples for `x`, scores them against `peers` and returns the
/// baseline-centred gradient estimate with the mean sampled reward.
pub fn rl_gradient<R: Rng + ?Sized>(
    model: &PolicyModel,
    x: &TokenSeq,
    peers: &[TokenSeq],
    cfg: &DdtConfig,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    if cfg.k_samples < 2 {
        return Err(Error::invalid("k_samples must be at least 2"));
    }
    let samples: Vec<TokenSeq> = (0..cfg.k_samples)
        .map(|_| model.sample(x, rng, model.max_len()))
        .collect();
    let rewards = samples
        .iter()
        .map(|y| sampled_reward(cfg, peers, y))
        .collect::<Result<Vec<f64>>>()?;
    let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let grad = rl_estimate_from_samples(model, x, &samples, &rewards, true)?;
    Ok((grad, mean))
}

/// The two halves of a mixed update, each summed over the batch.
#[derive(Clone, Debug, PartialEq)]
pub struct DdtGradients {
    /// `grad sum ln P(y* | x)`, absent when `alpha == 1`.
    pub mle: Option<Vec<f64>>,
    /// Summed RL estimate, absent when `alpha == 0`.
    pub rl: Option<Vec<f64>>,
    pub mle_loss: Option<f64>,
    pub mean_reward: Option<f64>,
}

impl DdtGradients {
    /// `(1 - alpha) * mle + alpha * rl`.
    pub fn mix(&self, alpha: f64, len: usize) -> Vec<f64> {
        match (&self.mle, &self.rl) {
            (Some(m), None) => m.clone(),
            (None, Some(r)) => r.clone(),
            (Some(m), Some(r)) => m.iter().zip(r).map(|(a, b)| (1.0 - alpha) * a + alpha * b).collect(),
            (None, None) => vec![0.0; len],
        }
    }
}

/// Computes both gradient terms for `batch`. Each example's samples come from
/// its own generator seeded by one draw from `rng`, in batch order.
pub fn ddt_gradients<R: RngCore + ?Sized>(
    model: &PolicyModel,
    batch: &[DdtExample],
    cfg: &DdtConfig,
    rng: &mut R,
) -> Result<DdtGradients> {
    if batch.is_empty() {
        return Err(Error::invalid("ddt step needs a non-empty batch"));
    }
    let (mle, mle_loss) = if cfg.alpha < 1.0 {
        let pairs: Vec<(TokenSeq, TokenSeq)> = batch.iter().map(|e| (e.source.clone(), e.reference.clone())).collect();
        let (total, g) = model.batch_mle_gradient(&pairs)?;
        (Some(g), Some(-total / batch.len() as f64))
    } else {
        (None, None)
    };
    let (rl, mean_reward) = if cfg.alpha > 0.0 {
        let seeds: Vec<u64> = batch.iter().map(|_| rng.next_u64()).collect();
        let parts = batch
            .par_iter()
            .zip(&seeds)
            .map(|(e, &s)| {
                let mut r = ChaCha8Rng::seed_from_u64(s);
                rl_gradient(model, &e.source, &e.peers, cfg, &mut r)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut g = vec![0.0; model.params().len()];
        let mut reward = 0.0;
        for (pg, r) in parts {
            reward += r;
            for (a, b) in g.iter_mut().zip(&pg) {
                *a += b;
            }
        }
        (Some(g), Some(reward / batch.len() as f64))
    } else {
        (None, None)
    };
    Ok(DdtGradients {
        mle,
        rl,
        mle_loss,
        mean_reward,
    })
}

/// Statistics of one mixed step, measured before the update.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepStats {
    pub mle_loss: Option<f64>,
    pub mean_reward: Option<f64>,
}

/// One ascent step on the mixed objective. With `alpha == 0` and no norm cap
/// this is exactly [`PolicyModel::mle_step`]; `alpha == 0` never draws from `rng`.
pub fn ddt_step<R: RngCore + ?Sized>(
    model: &mut PolicyModel,
    batch: &[DdtExample],
    cfg: &DdtConfig,
    rng: &mut R,
) -> Result<StepStats> {
    let g = ddt_gradients(model, batch, cfg, rng)?;
    let mut direction = g.mix(cfg.alpha, model.params().len());
    if let Some(max) = cfg.max_grad_norm {
        let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > max {
            direction.iter_mut().for_each(|v| *v *= max / norm);
        }
    }
    model.ascend(&direction, cfg.learning_rate)?;
    Ok(StepStats {
        mle_loss: g.mle_loss,
        mean_reward: g.mean_reward,
    })
}

/// Per-epoch averages reported by [`train`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mle_loss: Option<f64>,
    pub mean_reward: Option<f64>,
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Runs `cfg.epochs` shuffled passes of [`ddt_step`] over `data`.
pub fn train(model: &mut PolicyModel, data: &[DdtExample], cfg: &DdtConfig) -> Result<Vec<EpochStats>> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::invalid("ddt training data is empty"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut out = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut stats = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<DdtExample> = chunk.iter().map(|&i| data[i].clone()).collect();
            stats.push(ddt_step(model, &batch, cfg, &mut rng)?);
        }
        out.push(EpochStats {
            epoch,
            mle_loss: mean_of(stats.iter().map(|s| s.mle_loss)),
            mean_reward: mean_of(stats.iter().map(|s| s.mean_reward)),
        });
    }
    Ok(out)
}

/// What happened in one round-robin stage. Stage 0 is the untouched start.
#[derive(Clone, Debug, PartialEq)]
pub struct StageReport {
    pub stage: usize,
    /// Index of the model trained in this stage.
    pub backbone: Option<usize>,
    /// Pairwise `1 - BLEU` diversity of the models' greedy outputs on the
    /// training sources after the stage.
    pub diversity: f64,
    pub epochs: Vec<EpochStats>,
}

/// Greedy outputs of every model on `sources`.
pub fn decode_models(models: &[PolicyModel], sources: &[TokenSeq]) -> Vec<Vec<TokenSeq>> {
    models.iter().map(|m| m.decode_all(sources)).collect()
}

/// Round-robin diversity-driven training.
///
/// In stage `s >= 1` model `(s - 1) % n` is the backbone. Its peers are the
/// other models' greedy outputs, recomputed at the stage boundary and frozen
/// for the stage, plus any `fixed_peers` (one output list per black-box
/// system, aligned with `data`). `on_stage` runs after stage 0 and after every
/// later stage.
pub fn round_robin(
    mut models: Vec<PolicyModel>,
    fixed_peers: &[Vec<TokenSeq>],
    data: &[(TokenSeq, TokenSeq)],
    cfg: &DdtConfig,
    stages: usize,
    mut on_stage: impl FnMut(&StageReport, &[PolicyModel]) -> Result<()>,
) -> Result<(Vec<PolicyModel>, Vec<StageReport>)> {
    if models.len() < 2 {
        return Err(Error::invalid("round-robin training needs at least two models"));
    }
    cfg.validate()?;
    for f in fixed_peers {
        if f.len() != data.len() {
            return Err(Error::LengthMismatch(format!(
                "fixed peer file has {} lines, ddt data has {}",
                f.len(),
                data.len()
            )));
        }
    }
    let sources: Vec<TokenSeq> = data.iter().map(|(x, _)| x.clone()).collect();
    let mut outputs = decode_models(&models, &sources);
    let mut reports = Vec::with_capacity(stages + 1);
    let first = StageReport {
        stage: 0,
        backbone: None,
        diversity: pairwise_diversity(&outputs)?,
        epochs: Vec::new(),
    };
    on_stage(&first, &models)?;
    reports.push(first);

    for stage in 1..=stages {
        let b = (stage - 1) % models.len();
        let examples: Vec<DdtExample> = data
            .iter()
            .enumerate()
            .map(|(i, (x, y))| {
                let peers = outputs
                    .iter()
                    .enumerate()
                    .filter(|&(m, _)| m != b)
                    .map(|(_, o)| o[i].clone())
                    .chain(fixed_peers.iter().map(|f| f[i].clone()))
                    .collect();
                DdtExample {
                    source: x.clone(),
                    reference: y.clone(),
                    peers,
                }
            })
            .collect();
        let stage_cfg = DdtConfig {
            seed: cfg.seed.wrapping_add(stage as u64),
            ..*cfg
        };
        let epochs = train(&mut models[b], &examples, &stage_cfg)?;
        outputs[b] = models[b].decode_all(&sources);
        let report = StageReport {
            stage,
            backbone: Some(b),
            diversity: pairwise_diversity(&outputs)?,
            epochs,
        };
        on_stage(&report, &models)?;
        reports.push(report);
    }
    Ok((models, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Vocabulary;

    fn seq(tokens: &[&str]) -> TokenSeq {
        TokenSeq::new(tokens.iter().map(|t| t.to_string()).collect()).unwrap()
    }

    fn tiny_model(seed: u64) -> PolicyModel {
        let vocab = Vocabulary::with_tokens(&["a"]).unwrap();
        PolicyModel::with_init_range(vocab, 2, 2, 2, seed, 1.0).unwrap()
    }

    fn cfg(alpha: f64) -> DdtConfig {
        DdtConfig {
            alpha,
            k_samples: 3,
            learning_rate: 0.1,
            batch_size: 2,
            ..DdtConfig::default()
        }
    }

    #[test]
    fn identical_samples_give_zero_gradient() {
        let mut m = tiny_model(0);
        let lay = m.arch().layout();
        m.params_mut()[lay.out_b] = 60.0;
        let (g, mean) = rl_gradient(
            &m,
            &seq(&["a"]),
            &[seq(&["a"])],
            &cfg(1.0),
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        assert_eq!(mean, 1.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(cfg(0.5).validate().is_ok());
        assert!(cfg(1.5).validate().is_err());
        assert!(DdtConfig {
            k_samples: 1,
            ..cfg(0.5)
        }
        .validate()
        .is_err());
        assert!(DdtConfig {
            learning_rate: 0.0,
            ..cfg(0.5)
        }
        .validate()
        .is_err());
    }

    #[test]
    fn clip_caps_rewards() {
        let m = tiny_model(3);
        let c = DdtConfig {
            clip: Some(0.5),
            ..cfg(1.0)
        };
        let (_, mean) = rl_gradient(
            &m,
            &seq(&["a"]),
            &[seq(&["a", "a", "a", "a"])],
            &c,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        assert!(mean <= 0.5);
    }

    #[test]
    fn norm_cap_rescales_large_steps() {
        let data = vec![(seq(&["a"]), seq(&["a", "a"]))];
        let ex = [DdtExample {
            source: seq(&["a"]),
            reference: seq(&["a", "a"]),
            peers: vec![],
        }];
        let base = tiny_model(4);
        let (_, g) = base.batch_mle_gradient(&data).unwrap();
        let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        let c = DdtConfig {
            max_grad_norm: Some(norm / 4.0),
            ..cfg(0.0)
        };
        let mut m = base.clone();
        ddt_step(&mut m, &ex, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let moved: f64 = m
            .params()
            .iter()
            .zip(base.params())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        assert!((moved - c.learning_rate * norm / 4.0).abs() < 1e-12);
        // a cap above the norm changes nothing
        let mut loose = base.clone();
        let c = DdtConfig {
            max_grad_norm: Some(norm * 2.0),
            ..cfg(0.0)
        };
        ddt_step(&mut loose, &ex, &c, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let mut plain = base.clone();
        plain.mle_step(&data, c.learning_rate).unwrap();
        assert_eq!(loose.params(), plain.params());
        assert!(DdtConfig {
            max_grad_norm: Some(0.0),
            ..cfg(0.5)
        }
        .validate()
        .is_err());
    }

    fn batch() -> Vec<DdtExample> {
        vec![
            DdtExample {
                source: seq(&["a"]),
                reference: seq(&["a"]),
                peers: vec![seq(&["a"]), seq(&[])],
            },
            DdtExample {
                source: seq(&["a", "a"]),
                reference: seq(&[]),
                peers: vec![seq(&["a", "a"])],
            },
        ]
    }

    #[test]
    fn alpha_zero_is_mle_step() {
        let mut a = tiny_model(5);
        let mut b = a.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let stats = ddt_step(&mut a, &batch(), &cfg(0.0), &mut rng).unwrap();
        let pairs: Vec<_> = batch().into_iter().map(|e| (e.source, e.reference)).collect();
        let loss = b.mle_step(&pairs, 0.1).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(stats.mle_loss, Some(loss));
        assert_eq!(stats.mean_reward, None);
        // no randomness consumed
        assert_eq!(rng.next_u64(), ChaCha8Rng::seed_from_u64(9).next_u64());
    }

    #[test]
    fn update_interpolates_the_two_terms() {
        for alpha in [0.25, 0.5, 0.9] {
            let m = tiny_model(6);
            let c = cfg(alpha);
            let g = ddt_gradients(&m, &batch(), &c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let mut stepped = m.clone();
            ddt_step(&mut stepped, &batch(), &c, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
            let (mle, rl) = (g.mle.unwrap(), g.rl.unwrap());
            for i in 0..m.params().len() {
                let expected = m.params()[i] + c.learning_rate * ((1.0 - alpha) * mle[i] + alpha * rl[i]);
                assert!((stepped.params()[i] - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn alpha_one_ignores_references() {
        let m = tiny_model(7);
        let c = cfg(1.0);
        let mut other = batch();
        for e in &mut other {
            e.reference = seq(&["a", "a"]);
        }
        let mut a = m.clone();
        let mut b = m.clone();
        let sa = ddt_step(&mut a, &batch(), &c, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        ddt_step(&mut b, &other, &c, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(a.params(), b.params());
        assert_eq!(sa.mle_loss, None);
    }

    #[test]
    fn alpha_one_with_constant_reward_leaves_model_unchanged() {
        let mut m = tiny_model(8);
        let lay = m.arch().layout();
        // the only reachable output is the empty sentence
        m.params_mut()[lay.out_b] = 60.0;
        let before = m.clone();
        let data = vec![DdtExample {
            source: seq(&["a"]),
            reference: seq(&["a"]),
            peers: vec![seq(&[])],
        }];
        ddt_step(&mut m, &data, &cfg(1.0), &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn empty_batch_rejected() {
        let mut m = tiny_model(0);
        assert!(ddt_step(&mut m, &[], &cfg(0.5), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn round_robin_stage_contract() {
        let models = vec![tiny_model(1), tiny_model(2), tiny_model(3)];
        let data = vec![(seq(&["a"]), seq(&["a"])), (seq(&["a", "a"]), seq(&["a"]))];
        let c = cfg(0.5);
        let (same, reports) = round_robin(models.clone(), &[], &data, &c, 0, |_, _| Ok(())).unwrap();
        assert_eq!(same, models);
        assert_eq!(reports.len(), 1);

        let mut seen = Vec::new();
        let (after, reports) = round_robin(models.clone(), &[], &data, &c, 1, |r, _| {
            seen.push(r.stage);
            Ok(())
        })
        .unwrap();
        assert_eq!(seen, [0, 1]);
        assert_eq!(reports[1].backbone, Some(0));
        assert_ne!(after[0], models[0]);
        assert_eq!(after[1], models[1]);
        assert_eq!(after[2], models[2]);

        assert!(round_robin(vec![tiny_model(1)], &[], &data, &c, 1, |_, _| Ok(())).is_err());
        assert!(round_robin(models, &[vec![]], &data, &c, 1, |_, _| Ok(())).is_err());
    }
}
