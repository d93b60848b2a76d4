//! Forward and backward passes of the recurrent encoder-decoder.
//!
//! ```text
//! encoder   h_t = tanh(Wex e(x_t) + Weh h_{t-1} + be),  h_0 = 0
//! context   c   = mean_t e(x_t)
//! decoder   s_0 = h_n
//!           s_t = tanh(Wdx (e(y_{t-1}) + c) + Wdh s_{t-1} + bd),  y_0 = <s>
//! output    P(. | y_<t, x) = softmax(Wo s_t + bo)   over every id except <s>
//! ```
//!
//! Output class `k` is vocabulary id `k + 1`; class 0 is `</s>`.

use super::vocab::BOS_ID;

/// Floor applied to probabilities inside `ln`.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Architecture {
    pub vocab_size: usize,
    pub emb: usize,
    pub hidden: usize,
    pub max_len: usize,
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Layout {
    pub emb: usize,
    pub enc_wx: usize,
    pub enc_wh: usize,
    pub enc_b: usize,
    pub dec_wx: usize,
    pub dec_wh: usize,
    pub dec_b: usize,
    pub out_w: usize,
    pub out_b: usize,
    pub total: usize,
}

impl Architecture {
    pub fn num_classes(&self) -> usize {
        self.vocab_size - 1
    }

    pub(crate) fn layout(&self) -> Layout {
        let (v, d, h, o) = (self.vocab_size, self.emb, self.hidden, self.num_classes());
        let emb = 0;
        let enc_wx = emb + v * d;
        let enc_wh = enc_wx + h * d;
        let enc_b = enc_wh + h * h;
        let dec_wx = enc_b + h;
        let dec_wh = dec_wx + h * d;
        let dec_b = dec_wh + h * h;
        let out_w = dec_b + h;
        let out_b = out_w + o * h;
        let total = out_b + o;
        Layout {
            emb,
            enc_wx,
            enc_wh,
            enc_b,
            dec_wx,
            dec_wh,
            dec_b,
            out_w,
            out_b,
            total,
        }
    }

    pub fn num_params(&self) -> usize {
        self.layout().total
    }
}

/// `out += W x` with `W` row-major `rows x cols`.
fn matvec_add(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    for (row, o) in w.chunks_exact(cols).zip(out.iter_mut()) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T y`.
fn matvec_t_add(w: &[f64], cols: usize, y: &[f64], out: &mut [f64]) {
    for (row, &yr) in w.chunks_exact(cols).zip(y) {
        if yr != 0.0 {
            for (o, a) in out.iter_mut().zip(row) {
                *o += a * yr;
            }
        }
    }
}

/// `g += a b^T`.
fn outer_add(g: &mut [f64], cols: usize, a: &[f64], b: &[f64]) {
    for (row, &ar) in g.chunks_exact_mut(cols).zip(a) {
        if ar != 0.0 {
            for (gi, bi) in row.iter_mut().zip(b) {
                *gi += ar * bi;
            }
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub(crate) struct Net<'a> {
    pub arch: Architecture,
    pub lay: Layout,
    pub p: &'a [f64],
}

/// Decoder state after encoding a source sentence.
#[derive(Clone, Debug)]
pub struct DecoderState {
    pub(crate) s: Vec<f64>,
    pub(crate) ctx: Vec<f64>,
}

struct Encoded {
    /// `h_0 .. h_n`
    hs: Vec<Vec<f64>>,
    ctx: Vec<f64>,
}

impl<'a> Net<'a> {
    pub fn new(arch: Architecture, p: &'a [f64]) -> Self {
        Net {
            arch,
            lay: arch.layout(),
            p,
        }
    }

    fn embedding(&self, id: usize) -> &[f64] {
        let d = self.arch.emb;
        &self.p[self.lay.emb + id * d..self.lay.emb + (id + 1) * d]
    }

    fn slice(&self, start: usize, len: usize) -> &[f64] {
        &self.p[start..start + len]
    }

    fn encode(&self, x: &[usize]) -> Encoded {
        let (d, h) = (self.arch.emb, self.arch.hidden);
        let wx = self.slice(self.lay.enc_wx, h * d);
        let wh = self.slice(self.lay.enc_wh, h * h);
        let b = self.slice(self.lay.enc_b, h);
        let mut hs = Vec::with_capacity(x.len() + 1);
        hs.push(vec![0.0; h]);
        let mut ctx = vec![0.0; d];
        for &id in x {
            let e = self.embedding(id);
            add_into(&mut ctx, e);
            let mut pre = b.to_vec();
            matvec_add(wx, d, e, &mut pre);
            matvec_add(wh, h, hs.last().unwrap(), &mut pre);
            pre.iter_mut().for_each(|v| *v = v.tanh());
            hs.push(pre);
        }
        if !x.is_empty() {
            let inv = 1.0 / x.len() as f64;
            ctx.iter_mut().for_each(|v| *v *= inv);
        }
        Encoded { hs, ctx }
    }

    pub fn start(&self, x: &[usize]) -> DecoderState {
        let enc = self.encode(x);
        DecoderState {
            s: enc.hs.last().unwrap().clone(),
            ctx: enc.ctx,
        }
    }

    /// Decoder input `e(prev) + c` and the next hidden state.
    fn dec_cell(&self, s_prev: &[f64], prev: usize, ctx: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, h) = (self.arch.emb, self.arch.hidden);
        let mut u = self.embedding(prev).to_vec();
        add_into(&mut u, ctx);
        let mut s = self.slice(self.lay.dec_b, h).to_vec();
        matvec_add(self.slice(self.lay.dec_wx, h * d), d, &u, &mut s);
        matvec_add(self.slice(self.lay.dec_wh, h * h), h, s_prev, &mut s);
        s.iter_mut().for_each(|v| *v = v.tanh());
        (u, s)
    }

    fn output_probs(&self, s: &[f64]) -> Vec<f64> {
        let (h, o) = (self.arch.hidden, self.arch.num_classes());
        let mut z = self.slice(self.lay.out_b, o).to_vec();
        matvec_add(self.slice(self.lay.out_w, o * h), h, s, &mut z);
        softmax_in_place(&mut z);
        z
    }

    /// Advances the state by feeding `prev` and returns the next-class distribution.
    pub fn step(&self, state: &mut DecoderState, prev: usize) -> Vec<f64> {
        let (_, s) = self.dec_cell(&state.s, prev, &state.ctx);
        let probs = self.output_probs(&s);
        state.s = s;
        probs
    }

    /// Log-probability of emitting `targets` (output classes) after feeding
    /// `<s>, targets[0], ...`. When `grad` is given, adds `scale * d/dparams`.
    pub fn sequence_logprob(&self, x: &[usize], targets: &[usize], grad: Option<(&mut [f64], f64)>) -> f64 {
        let enc = self.encode(x);
        let steps = targets.len();
        let mut states = Vec::with_capacity(steps + 1);
        let mut inputs = Vec::with_capacity(steps);
        let mut probs = Vec::with_capacity(steps);
        let mut prevs = Vec::with_capacity(steps);
        states.push(enc.hs.last().unwrap().clone());
        let mut total = 0.0;
        let mut prev = BOS_ID;
        for &target in targets {
            let (u, s) = self.dec_cell(states.last().unwrap(), prev, &enc.ctx);
            let pr = self.output_probs(&s);
            total += pr[target].max(PROB_FLOOR).ln();
            prevs.push(prev);
            inputs.push(u);
            states.push(s);
            probs.push(pr);
            prev = target + 1;
        }
        if let Some((g, scale)) = grad {
            if scale != 0.0 {
                self.backward(x, &enc, targets, &prevs, &inputs, &states, &probs, g, scale);
            }
        }
        total
    }

    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        x: &[usize],
        enc: &Encoded,
        targets: &[usize],
        prevs: &[usize],
        inputs: &[Vec<f64>],
        states: &[Vec<f64>],
        probs: &[Vec<f64>],
        g: &mut [f64],
        scale: f64,
    ) {
        let (d, h, o) = (self.arch.emb, self.arch.hidden, self.arch.num_classes());
        let lay = self.lay;
        let out_w = self.slice(lay.out_w, o * h);
        let dec_wx = self.slice(lay.dec_wx, h * d);
        let dec_wh = self.slice(lay.dec_wh, h * h);

        let mut ds_next = vec![0.0; h];
        let mut dctx = vec![0.0; d];
        for t in (0..targets.len()).rev() {
            let s = &states[t + 1];
            let s_prev = &states[t];
            let mut dlogits: Vec<f64> = probs[t].iter().map(|p| -scale * p).collect();
            if probs[t][targets[t]] >= PROB_FLOOR {
                dlogits[targets[t]] += scale;
            } else {
                dlogits.iter_mut().for_each(|v| *v = 0.0);
            }
            outer_add(&mut g[lay.out_w..lay.out_w + o * h], h, &dlogits, s);
            add_into(&mut g[lay.out_b..lay.out_b + o], &dlogits);

            let mut ds = ds_next;
            matvec_t_add(out_w, h, &dlogits, &mut ds);
            let dpre: Vec<f64> = ds.iter().zip(s).map(|(g, s)| g * (1.0 - s * s)).collect();
            outer_add(&mut g[lay.dec_wx..lay.dec_wx + h * d], d, &dpre, &inputs[t]);
            outer_add(&mut g[lay.dec_wh..lay.dec_wh + h * h], h, &dpre, s_prev);
            add_into(&mut g[lay.dec_b..lay.dec_b + h], &dpre);

            let mut du = vec![0.0; d];
            matvec_t_add(dec_wx, d, &dpre, &mut du);
            let e = lay.emb + prevs[t] * d;
            add_into(&mut g[e..e + d], &du);
            add_into(&mut dctx, &du);

            ds_next = vec![0.0; h];
            matvec_t_add(dec_wh, h, &dpre, &mut ds_next);
        }

        if x.is_empty() {
            return;
        }
        let enc_wx = self.slice(lay.enc_wx, h * d);
        let enc_wh = self.slice(lay.enc_wh, h * h);
        let inv = 1.0 / x.len() as f64;
        let mut dh = ds_next;
        for t in (0..x.len()).rev() {
            let ht = &enc.hs[t + 1];
            let dpre: Vec<f64> = dh.iter().zip(ht).map(|(g, v)| g * (1.0 - v * v)).collect();
            let e_off = lay.emb + x[t] * d;
            let emb = self.embedding(x[t]);
            outer_add(&mut g[lay.enc_wx..lay.enc_wx + h * d], d, &dpre, emb);
            outer_add(&mut g[lay.enc_wh..lay.enc_wh + h * h], h, &dpre, &enc.hs[t]);
            add_into(&mut g[lay.enc_b..lay.enc_b + h], &dpre);
            let mut de: Vec<f64> = dctx.iter().map(|v| v * inv).collect();
            matvec_t_add(enc_wx, d, &dpre, &mut de);
            add_into(&mut g[e_off..e_off + d], &de);
            dh = vec![0.0; h];
            matvec_t_add(enc_wh, h, &dpre, &mut dh);
        }
    }
}
