//! The trainable correction policy: a small recurrent encoder-decoder with
//! exact log-likelihoods, multinomial sampling and analytic gradients.

mod checkpoint;
mod network;
mod vocab;

use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use checkpoint::vocab_path;
pub use network::{Architecture, DecoderState, PROB_FLOOR};
pub use vocab::{Vocabulary, BOS, BOS_ID, EOS, EOS_ID, UNK, UNK_ID};

use crate::error::{Error, Result};
use crate::textcore::TokenSeq;
use network::Net;

/// Plain gradient-ascent step size used when none is configured.
pub const DEFAULT_LEARNING_RATE: f64 = 0.05;

/// Parameters plus the architecture and vocabulary they belong to.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyModel {
    arch: Architecture,
    vocab: Vocabulary,
    params: Vec<f64>,
    init_seed: u64,
}

impl PolicyModel {
    /// Parameters drawn uniformly from `[-0.1, 0.1]`.
    pub fn new(vocab: Vocabulary, emb: usize, hidden: usize, max_len: usize, seed: u64) -> Result<Self> {
        Self::with_init_range(vocab, emb, hidden, max_len, seed, 0.1)
    }

    pub fn with_init_range(
        vocab: Vocabulary,
        emb: usize,
        hidden: usize,
        max_len: usize,
        seed: u64,
        range: f64,
    ) -> Result<Self> {
        if emb == 0 || hidden == 0 || max_len == 0 {
            return Err(Error::invalid("emb, hidden and max_len must be positive"));
        }
        let arch = Architecture {
            vocab_size: vocab.len(),
            emb,
            hidden,
            max_len,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let params = (0..arch.num_params())
            .map(|_| rng.random_range(-range..=range))
            .collect();
        Ok(PolicyModel {
            arch,
            vocab,
            params,
            init_seed: seed,
        })
    }

    pub fn from_parts(arch: Architecture, vocab: Vocabulary, params: Vec<f64>, init_seed: u64) -> Result<Self> {
        if arch.vocab_size != vocab.len() {
            return Err(Error::invalid(format!(
                "architecture expects {} vocabulary entries, vocabulary has {}",
                arch.vocab_size,
                vocab.len()
            )));
        }
        if params.len() != arch.num_params() {
            return Err(Error::invalid(format!(
                "expected {} parameters, got {}",
                arch.num_params(),
                params.len()
            )));
        }
        Ok(PolicyModel {
            arch,
            vocab,
            params,
            init_seed,
        })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn init_seed(&self) -> u64 {
        self.init_seed
    }

    pub fn max_len(&self) -> usize {
        self.arch.max_len
    }

    fn net(&self) -> Net<'_> {
        Net::new(self.arch, &self.params)
    }

    fn target_classes(&self, y: &TokenSeq, with_eos: bool) -> Result<Vec<usize>> {
        if y.len() > self.arch.max_len {
            return Err(Error::invalid(format!(
                "output of length {} exceeds max decode length {}",
                y.len(),
                self.arch.max_len
            )));
        }
        let mut t: Vec<usize> = y.iter().map(|tok| self.vocab.id(tok) - 1).collect();
        if with_eos {
            t.push(EOS_ID - 1);
        }
        Ok(t)
    }

    /// `sum_t ln P(y_t | y_<t, x) + ln P(</s> | y, x)`.
    pub fn logprob(&self, x: &TokenSeq, y: &TokenSeq) -> Result<f64> {
        let t = self.target_classes(y, true)?;
        Ok(self.net().sequence_logprob(&self.vocab.ids(x), &t, None))
    }

    /// Log-probability and its gradient with respect to the flat parameters.
    pub fn logprob_grad(&self, x: &TokenSeq, y: &TokenSeq) -> Result<(f64, Vec<f64>)> {
        let mut g = vec![0.0; self.params.len()];
        let lp = self.accumulate_logprob_grad(x, y, true, 1.0, &mut g)?;
        Ok((lp, g))
    }

    /// Log-probability of `y` under [`PolicyModel::sample`] with `max_len`: a
    /// sample that reaches `max_len` tokens stops without drawing `</s>`.
    pub fn sample_logprob(&self, x: &TokenSeq, y: &TokenSeq, max_len: usize) -> Result<f64> {
        let t = self.target_classes(y, y.len() < self.decode_cap(max_len))?;
        Ok(self.net().sequence_logprob(&self.vocab.ids(x), &t, None))
    }

    /// Adds `scale * grad ln P(y | x)` into `grad`; `with_eos` selects whether the
    /// closing `</s>` is part of the event.
    pub fn accumulate_logprob_grad(
        &self,
        x: &TokenSeq,
        y: &TokenSeq,
        with_eos: bool,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let t = self.target_classes(y, with_eos)?;
        Ok(self.net().sequence_logprob(&self.vocab.ids(x), &t, Some((grad, scale))))
    }

    /// Same as [`Self::accumulate_logprob_grad`] for a sample drawn with `max_len`.
    pub fn accumulate_sample_grad(
        &self,
        x: &TokenSeq,
        y: &TokenSeq,
        max_len: usize,
        scale: f64,
        grad: &mut [f64],
    ) -> Result<f64> {
        let with_eos = y.len() < self.decode_cap(max_len);
        self.accumulate_logprob_grad(x, y, with_eos, scale, grad)
    }

    fn decode_cap(&self, max_len: usize) -> usize {
        max_len.min(self.arch.max_len)
    }

    /// Encodes `x` for incremental decoding.
    pub fn start(&self, x: &TokenSeq) -> DecoderState {
        self.net().start(&self.vocab.ids(x))
    }

    /// Feeds `prev` (a vocabulary id) and returns the distribution over output
    /// classes; class `k` is vocabulary id `k + 1`.
    pub fn step(&self, state: &mut DecoderState, prev: usize) -> Vec<f64> {
        self.net().step(state, prev)
    }

    fn decode_with(&self, x: &TokenSeq, max_len: usize, mut choose: impl FnMut(&[f64]) -> usize) -> TokenSeq {
        let net = self.net();
        let mut state = net.start(&self.vocab.ids(x));
        let mut prev = BOS_ID;
        let mut out = Vec::new();
        for _ in 0..self.decode_cap(max_len) {
            let probs = net.step(&mut state, prev);
            let class = choose(&probs);
            if class == EOS_ID - 1 {
                break;
            }
            prev = class + 1;
            out.push(self.vocab.token(prev).to_string());
        }
        TokenSeq::new(out).expect("vocabulary tokens are valid")
    }

    /// Draws tokens from the softmax until `</s>` or `max_len` tokens.
    pub fn sample<R: Rng + ?Sized>(&self, x: &TokenSeq, rng: &mut R, max_len: usize) -> TokenSeq {
        self.decode_with(x, max_len, |p| {
            WeightedIndex::new(p)
                .expect("softmax is a valid distribution")
                .sample(rng)
        })
    }

    /// Argmax decoding; ties go to the lowest vocabulary id.
    pub fn greedy_decode(&self, x: &TokenSeq, max_len: usize) -> TokenSeq {
        self.decode_with(x, max_len, |p| {
            let mut best = 0;
            for (k, &v) in p.iter().enumerate() {
                if v > p[best] {
                    best = k;
                }
            }
            best
        })
    }

    /// Gradient of `sum ln P(y* | x)` over a batch, reduced in batch order.
    pub fn batch_mle_gradient(&self, batch: &[(TokenSeq, TokenSeq)]) -> Result<(f64, Vec<f64>)> {
        let parts: Vec<(f64, Vec<f64>)> = batch
            .par_iter()
            .map(|(x, y)| self.logprob_grad(x, y))
            .collect::<Result<_>>()?;
        let mut grad = vec![0.0; self.params.len()];
        let mut total = 0.0;
        for (lp, g) in parts {
            total += lp;
            for (a, b) in grad.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok((total, grad))
    }

    /// `params += lr * direction`; rejects non-finite results.
    pub fn ascend(&mut self, direction: &[f64], lr: f64) -> Result<()> {
        if lr == 0.0 {
            return Ok(());
        }
        if direction.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite gradient".into()));
        }
        for (p, d) in self.params.iter_mut().zip(direction) {
            *p += lr * d;
        }
        Ok(())
    }

    /// One ascent step on `sum ln P(y* | x)`; returns the pre-step mean NLL.
    pub fn mle_step(&mut self, batch: &[(TokenSeq, TokenSeq)], learning_rate: f64) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::invalid("mle_step needs a non-empty batch"));
        }
        let (total, grad) = self.batch_mle_gradient(batch)?;
        self.ascend(&grad, learning_rate)?;
        Ok(-total / batch.len() as f64)
    }

    /// Greedy outputs for many inputs in parallel, order preserved.
    pub fn decode_all(&self, inputs: &[TokenSeq]) -> Vec<TokenSeq> {
        inputs
            .par_iter()
            .map(|x| self.greedy_decode(x, self.arch.max_len))
            .collect()
    }
}
