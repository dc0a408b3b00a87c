//! Decoder-only transformer over gate tokens with hand-written reverse mode.
//!
//! Every weight lives in one flat `Vec<f64>`; [`Layout`] maps tensor names to
//! offsets. Matrices are row-major `in × out` and act on row vectors, so a
//! linear layer is `y = x W + b`.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const LN_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyConfig {
    pub vocab: usize,
    /// Longest sequence the policy is trained on; contexts hold at most
    /// `max_len - 1` tokens.
    pub max_len: usize,
    pub embed_dim: usize,
    pub layers: usize,
    pub heads: usize,
    pub ff_dim: usize,
}

impl PolicyConfig {
    /// Defaults for a vocabulary and sequence length.
    pub fn new(vocab: usize, max_len: usize) -> Self {
        Self {
            vocab,
            max_len,
            embed_dim: 64,
            layers: 2,
            heads: 4,
            ff_dim: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidArgument(msg.into()));
        if self.vocab == 0 {
            return bad("policy vocabulary is empty");
        }
        if self.max_len < 2 {
            return bad("policy max_len must be at least 2");
        }
        if self.embed_dim == 0 || self.heads == 0 || self.ff_dim == 0 {
            return bad("policy dimensions must be positive");
        }
        if self.embed_dim % self.heads != 0 {
            return Err(Error::InvalidArgument(alloc::format!(
                "embed_dim {} is not divisible by {} heads",
                self.embed_dim,
                self.heads
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct LayerOffsets {
    ln1_g: usize,
    ln1_b: usize,
    wq: usize,
    bq: usize,
    wk: usize,
    bk: usize,
    wv: usize,
    bv: usize,
    wo: usize,
    bo: usize,
    ln2_g: usize,
    ln2_b: usize,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
}

/// Offsets of every tensor in the flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Layout {
    token: usize,
    position: usize,
    layers: Vec<LayerOffsets>,
    lnf_g: usize,
    lnf_b: usize,
    head_w: usize,
    head_b: usize,
    total: usize,
}

impl Layout {
    fn new(c: &PolicyConfig) -> Self {
        let d = c.embed_dim;
        let mut at = 0;
        let mut take = |len: usize| {
            let start = at;
            at += len;
            start
        };
        let token = take(c.vocab * d);
        let position = take(c.max_len * d);
        let layers = (0..c.layers)
            .map(|_| LayerOffsets {
                ln1_g: take(d),
                ln1_b: take(d),
                wq: take(d * d),
                bq: take(d),
                wk: take(d * d),
                bk: take(d),
                wv: take(d * d),
                bv: take(d),
                wo: take(d * d),
                bo: take(d),
                ln2_g: take(d),
                ln2_b: take(d),
                w1: take(d * c.ff_dim),
                b1: take(c.ff_dim),
                w2: take(c.ff_dim * d),
                b2: take(d),
            })
            .collect();
        let lnf_g = take(d);
        let lnf_b = take(d);
        let head_w = take(d * c.vocab);
        let head_b = take(c.vocab);
        Self {
            token,
            position,
            layers,
            lnf_g,
            lnf_b,
            head_w,
            head_b,
            total: at,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }
}

/// Transformer weights.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    config: PolicyConfig,
    layout: Layout,
    params: Vec<f64>,
}

fn xavier(rng: &mut ChaCha8Rng, out: &mut [f64], fan_in: usize, fan_out: usize) {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    for w in out {
        *w = rng.random_range(-a..a);
    }
}

impl Policy {
    /// Xavier-uniform matrices, zero biases and unit norm gains.
    pub fn new(config: PolicyConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let mut params = vec![0.0; layout.total];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (d, v, ff) = (config.embed_dim, config.vocab, config.ff_dim);
        xavier(&mut rng, &mut params[layout.token..layout.token + v * d], v, d);
        let pos = layout.position;
        xavier(&mut rng, &mut params[pos..pos + config.max_len * d], config.max_len, d);
        for l in &layout.layers {
            for g in [l.ln1_g, l.ln2_g] {
                params[g..g + d].fill(1.0);
            }
            for w in [l.wq, l.wk, l.wv, l.wo] {
                xavier(&mut rng, &mut params[w..w + d * d], d, d);
            }
            xavier(&mut rng, &mut params[l.w1..l.w1 + d * ff], d, ff);
            xavier(&mut rng, &mut params[l.w2..l.w2 + ff * d], ff, d);
        }
        params[layout.lnf_g..layout.lnf_g + d].fill(1.0);
        xavier(&mut rng, &mut params[layout.head_w..layout.head_w + d * v], d, v);
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    /// Rebuilds a policy from saved weights.
    pub fn from_params(config: PolicyConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(Error::ParamLength {
                expected: layout.total,
                found: params.len(),
            });
        }
        if let Some(i) = params.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(alloc::format!("policy weight {i} is not finite")));
        }
        Ok(Self {
            config,
            layout,
            params,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }

    fn check_context(&self, tokens: &[usize]) -> Result<()> {
        if tokens.is_empty() || tokens.len() >= self.config.max_len {
            return Err(Error::InvalidArgument(alloc::format!(
                "context length {} outside 1..{}",
                tokens.len(),
                self.config.max_len
            )));
        }
        if let Some((position, &token)) = tokens.iter().enumerate().find(|(_, &t)| t >= self.config.vocab) {
            return Err(Error::InvalidArgument(alloc::format!(
                "token {token} at position {position} exceeds vocabulary {}",
                self.config.vocab
            )));
        }
        Ok(())
    }

    /// Next-token logits after `prefix`.
    pub fn logits(&self, prefix: &[usize]) -> Result<Vec<f64>> {
        self.check_context(prefix)?;
        let t = prefix.len();
        let v = self.config.vocab;
        let fwd = self.forward(prefix);
        Ok(fwd.logits[(t - 1) * v..t * v].to_vec())
    }

    /// Logits at every position of `context`, row-major `len × vocab`.
    pub fn all_logits(&self, context: &[usize]) -> Result<Vec<f64>> {
        self.check_context(context)?;
        Ok(self.forward(context).logits)
    }

    /// Policy-gradient loss over a batch and its gradient.
    ///
    /// `loss = -(1/(N·L)) Σ_s Σ_l R_{s,l} log P(a_{s,l} | a_{s,<l})` with `l`
    /// ranging over positions 2..=L of each length-`L` sequence, and
    /// `rewards[s][l - 2]` the reward of position `l`.
    pub fn policy_loss(&self, batch: &[(&[usize], &[f64])]) -> Result<(f64, Vec<f64>)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("policy loss needs a non-empty batch".into()));
        }
        let len = batch[0].0.len();
        for (seq, rewards) in batch {
            if seq.len() != len {
                return Err(Error::InvalidArgument(
                    "sequences in a batch must share one length".into(),
                ));
            }
            if rewards.len() + 1 != seq.len() {
                return Err(Error::DimensionMismatch {
                    expected: seq.len() - 1,
                    found: rewards.len(),
                });
            }
            self.check_context(&seq[..seq.len() - 1])?;
            if let Some((position, &token)) =
                seq.iter().enumerate().find(|(_, &t)| t >= self.config.vocab)
            {
                return Err(Error::InvalidArgument(alloc::format!(
                    "token {token} at position {position} exceeds vocabulary {}",
                    self.config.vocab
                )));
            }
        }
        let v = self.config.vocab;
        let norm = 1.0 / (batch.len() * len) as f64;
        let mut loss = 0.0;
        let mut grad = vec![0.0; self.layout.total];
        for (seq, rewards) in batch {
            if rewards.iter().all(|&r| r == 0.0) {
                continue;
            }
            let context = &seq[..seq.len() - 1];
            let fwd = self.forward(context);
            let mut dlogits = vec![0.0; context.len() * v];
            for (pos, (&target, &r)) in seq[1..].iter().zip(rewards.iter()).enumerate() {
                let row = &fwd.logits[pos * v..(pos + 1) * v];
                let probs = softmax(row);
                let logp = log_softmax_at(row, target);
                loss -= norm * r * logp;
                let drow = &mut dlogits[pos * v..(pos + 1) * v];
                for (k, (d, p)) in drow.iter_mut().zip(&probs).enumerate() {
                    let onehot = if k == target { 1.0 } else { 0.0 };
                    *d = norm * r * (p - onehot);
                }
            }
            self.backward(context, &fwd, &dlogits, &mut grad);
        }
        Ok((loss, grad))
    }

    fn forward(&self, tokens: &[usize]) -> Forward {
        let c = &self.config;
        let (t, d, v, ff) = (tokens.len(), c.embed_dim, c.vocab, c.ff_dim);
        let p = &self.params;
        let mut h = vec![0.0; t * d];
        for (pos, &tok) in tokens.iter().enumerate() {
            let e = &p[self.layout.token + tok * d..self.layout.token + (tok + 1) * d];
            let q = &p[self.layout.position + pos * d..self.layout.position + (pos + 1) * d];
            for ((h, e), q) in h[pos * d..(pos + 1) * d].iter_mut().zip(e).zip(q) {
                *h = e + q;
            }
        }
        let mut layers = Vec::with_capacity(c.layers);
        for l in &self.layout.layers {
            let input = h.clone();
            let ln1 = layer_norm(&input, t, d, &p[l.ln1_g..l.ln1_g + d], &p[l.ln1_b..l.ln1_b + d]);
            let q = linear(&ln1.out, t, d, d, &p[l.wq..], &p[l.bq..l.bq + d]);
            let k = linear(&ln1.out, t, d, d, &p[l.wk..], &p[l.bk..l.bk + d]);
            let vv = linear(&ln1.out, t, d, d, &p[l.wv..], &p[l.bv..l.bv + d]);
            let (attn, probs) = attention(&q, &k, &vv, t, d, c.heads);
            let proj = linear(&attn, t, d, d, &p[l.wo..], &p[l.bo..l.bo + d]);
            for (h, a) in h.iter_mut().zip(&proj) {
                *h += a;
            }
            let mid = h.clone();
            let ln2 = layer_norm(&mid, t, d, &p[l.ln2_g..l.ln2_g + d], &p[l.ln2_b..l.ln2_b + d]);
            let pre = linear(&ln2.out, t, d, ff, &p[l.w1..], &p[l.b1..l.b1 + ff]);
            let act: Vec<f64> = pre.iter().map(|&x| gelu(x)).collect();
            let out = linear(&act, t, ff, d, &p[l.w2..], &p[l.b2..l.b2 + d]);
            for (h, o) in h.iter_mut().zip(&out) {
                *h += o;
            }
            layers.push(LayerCache {
                ln1,
                q,
                k,
                v: vv,
                probs,
                attn,
                ln2,
                pre,
                act,
            });
        }
        let lnf = layer_norm(
            &h,
            t,
            d,
            &p[self.layout.lnf_g..self.layout.lnf_g + d],
            &p[self.layout.lnf_b..self.layout.lnf_b + d],
        );
        let logits = linear(
            &lnf.out,
            t,
            d,
            v,
            &p[self.layout.head_w..],
            &p[self.layout.head_b..self.layout.head_b + v],
        );
        Forward { layers, lnf, logits }
    }

    fn backward(&self, tokens: &[usize], fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let c = &self.config;
        let (t, d, v, ff) = (tokens.len(), c.embed_dim, c.vocab, c.ff_dim);
        let p = &self.params;
        let lay = &self.layout;

        let dz = linear_backward(&fwd.lnf.out, dlogits, t, d, v, &p[lay.head_w..], grad, lay.head_w, lay.head_b);
        let mut dh = layer_norm_backward(&fwd.lnf, &dz, t, d, &p[lay.lnf_g..lay.lnf_g + d], grad, lay.lnf_g, lay.lnf_b);

        for (l, cache) in lay.layers.iter().zip(&fwd.layers).rev() {
            // Feed-forward branch.
            let dact = linear_backward(&cache.act, &dh, t, ff, d, &p[l.w2..], grad, l.w2, l.b2);
            let dpre: Vec<f64> = dact
                .iter()
                .zip(&cache.pre)
                .map(|(g, &x)| g * gelu_grad(x))
                .collect();
            let dln2 = linear_backward(&cache.ln2.out, &dpre, t, d, ff, &p[l.w1..], grad, l.w1, l.b1);
            let dmid = layer_norm_backward(&cache.ln2, &dln2, t, d, &p[l.ln2_g..l.ln2_g + d], grad, l.ln2_g, l.ln2_b);
            for (a, b) in dh.iter_mut().zip(&dmid) {
                *a += b;
            }
            // Attention branch.
            let dattn = linear_backward(&cache.attn, &dh, t, d, d, &p[l.wo..], grad, l.wo, l.bo);
            let (dq, dk, dv) = attention_backward(&cache.q, &cache.k, &cache.v, &cache.probs, &dattn, t, d, c.heads);
            let mut dln1 = linear_backward(&cache.ln1.out, &dq, t, d, d, &p[l.wq..], grad, l.wq, l.bq);
            let dk_in = linear_backward(&cache.ln1.out, &dk, t, d, d, &p[l.wk..], grad, l.wk, l.bk);
            let dv_in = linear_backward(&cache.ln1.out, &dv, t, d, d, &p[l.wv..], grad, l.wv, l.bv);
            for ((a, b), c) in dln1.iter_mut().zip(&dk_in).zip(&dv_in) {
                *a += b + c;
            }
            let din = layer_norm_backward(&cache.ln1, &dln1, t, d, &p[l.ln1_g..l.ln1_g + d], grad, l.ln1_g, l.ln1_b);
            for (a, b) in dh.iter_mut().zip(&din) {
                *a += b;
            }
        }

        for (pos, &tok) in tokens.iter().enumerate() {
            let row = &dh[pos * d..(pos + 1) * d];
            let te = lay.token + tok * d;
            let pe = lay.position + pos * d;
            for (k, &g) in row.iter().enumerate() {
                grad[te + k] += g;
                grad[pe + k] += g;
            }
        }
    }
}

struct NormCache {
    out: Vec<f64>,
    xhat: Vec<f64>,
    rstd: Vec<f64>,
}

struct LayerCache {
    ln1: NormCache,
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    /// `heads × t × t`, zero above the diagonal.
    probs: Vec<f64>,
    attn: Vec<f64>,
    ln2: NormCache,
    pre: Vec<f64>,
    act: Vec<f64>,
}

struct Forward {
    layers: Vec<LayerCache>,
    lnf: NormCache,
    logits: Vec<f64>,
}

/// Numerically stable softmax; `-inf` entries get probability 0.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = out.iter().sum();
    for p in &mut out {
        *p /= sum;
    }
    out
}

fn log_softmax_at(logits: &[f64], k: usize) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|&z| (z - max).exp()).sum();
    logits[k] - max - sum.ln()
}

fn linear(x: &[f64], t: usize, din: usize, dout: usize, w: &[f64], b: &[f64]) -> Vec<f64> {
    let mut y = Vec::with_capacity(t * dout);
    for _ in 0..t {
        y.extend_from_slice(b);
    }
    for r in 0..t {
        let xr = &x[r * din..(r + 1) * din];
        let yr = &mut y[r * dout..(r + 1) * dout];
        for (i, &xi) in xr.iter().enumerate() {
            let wr = &w[i * dout..(i + 1) * dout];
            for (y, &w) in yr.iter_mut().zip(wr) {
                *y += xi * w;
            }
        }
    }
    y
}

/// Accumulates weight and bias gradients into `grad`; returns `dL/dx`.
#[allow(clippy::too_many_arguments)]
fn linear_backward(
    x: &[f64],
    dy: &[f64],
    t: usize,
    din: usize,
    dout: usize,
    w: &[f64],
    grad: &mut [f64],
    w_at: usize,
    b_at: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; t * din];
    for r in 0..t {
        let xr = &x[r * din..(r + 1) * din];
        let dyr = &dy[r * dout..(r + 1) * dout];
        for (gb, &g) in grad[b_at..b_at + dout].iter_mut().zip(dyr) {
            *gb += g;
        }
        let dxr = &mut dx[r * din..(r + 1) * din];
        for i in 0..din {
            let wr = &w[i * dout..(i + 1) * dout];
            let gw = &mut grad[w_at + i * dout..w_at + (i + 1) * dout];
            let xi = xr[i];
            let mut acc = 0.0;
            for ((gw, &wv), &g) in gw.iter_mut().zip(wr).zip(dyr) {
                *gw += xi * g;
                acc += wv * g;
            }
            dxr[i] = acc;
        }
    }
    dx
}

fn layer_norm(x: &[f64], t: usize, d: usize, gain: &[f64], bias: &[f64]) -> NormCache {
    let mut out = vec![0.0; t * d];
    let mut xhat = vec![0.0; t * d];
    let mut rstd = vec![0.0; t];
    for r in 0..t {
        let row = &x[r * d..(r + 1) * d];
        let mean = row.iter().sum::<f64>() / d as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
        let s = 1.0 / (var + LN_EPS).sqrt();
        rstd[r] = s;
        for k in 0..d {
            let xh = (row[k] - mean) * s;
            xhat[r * d + k] = xh;
            out[r * d + k] = xh * gain[k] + bias[k];
        }
    }
    NormCache { out, xhat, rstd }
}

#[allow(clippy::too_many_arguments)]
fn layer_norm_backward(
    cache: &NormCache,
    dy: &[f64],
    t: usize,
    d: usize,
    gain: &[f64],
    grad: &mut [f64],
    g_at: usize,
    b_at: usize,
) -> Vec<f64> {
    let mut dx = vec![0.0; t * d];
    let mut dxhat = vec![0.0; d];
    for r in 0..t {
        let xh = &cache.xhat[r * d..(r + 1) * d];
        let dyr = &dy[r * d..(r + 1) * d];
        for k in 0..d {
            grad[g_at + k] += dyr[k] * xh[k];
            grad[b_at + k] += dyr[k];
            dxhat[k] = dyr[k] * gain[k];
        }
        let mean_d = dxhat.iter().sum::<f64>() / d as f64;
        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / d as f64;
        let s = cache.rstd[r];
        for k in 0..d {
            dx[r * d + k] = s * (dxhat[k] - mean_d - xh[k] * mean_dx);
        }
    }
    dx
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/π)

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let u = GELU_C * (x + 0.044715 * x * x * x);
    let th = u.tanh();
    let du = GELU_C * (1.0 + 3.0 * 0.044715 * x * x);
    0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du
}

/// Causal multi-head attention; returns the concatenated head outputs and
/// the attention weights.
fn attention(q: &[f64], k: &[f64], v: &[f64], t: usize, d: usize, heads: usize) -> (Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; t * d];
    let mut probs = vec![0.0; heads * t * t];
    let mut scores = vec![0.0; t];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..t {
            let qi = &q[i * d + off..i * d + off + dh];
            let mut max = f64::NEG_INFINITY;
            for j in 0..=i {
                let kj = &k[j * d + off..j * d + off + dh];
                let s = scale * qi.iter().zip(kj).map(|(a, b)| a * b).sum::<f64>();
                scores[j] = s;
                max = max.max(s);
            }
            let mut sum = 0.0;
            for s in &mut scores[..=i] {
                *s = (*s - max).exp();
                sum += *s;
            }
            let prow = &mut probs[(h * t + i) * t..(h * t + i + 1) * t];
            let orow = &mut out[i * d + off..i * d + off + dh];
            for j in 0..=i {
                let pj = scores[j] / sum;
                prow[j] = pj;
                let vj = &v[j * d + off..j * d + off + dh];
                for (o, &x) in orow.iter_mut().zip(vj) {
                    *o += pj * x;
                }
            }
        }
    }
    (out, probs)
}

#[allow(clippy::too_many_arguments)]
fn attention_backward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    dout: &[f64],
    t: usize,
    d: usize,
    heads: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut dq = vec![0.0; t * d];
    let mut dk = vec![0.0; t * d];
    let mut dv = vec![0.0; t * d];
    let mut dp = vec![0.0; t];
    for h in 0..heads {
        let off = h * dh;
        for i in 0..t {
            let prow = &probs[(h * t + i) * t..(h * t + i + 1) * t];
            let doi = &dout[i * d + off..i * d + off + dh];
            let mut dot = 0.0;
            for j in 0..=i {
                let vj = &v[j * d + off..j * d + off + dh];
                dp[j] = doi.iter().zip(vj).map(|(a, b)| a * b).sum();
                dot += prow[j] * dp[j];
                let dvj = &mut dv[j * d + off..j * d + off + dh];
                for (g, &o) in dvj.iter_mut().zip(doi) {
                    *g += prow[j] * o;
                }
            }
            for j in 0..=i {
                let ds = prow[j] * (dp[j] - dot) * scale;
                if ds == 0.0 {
                    continue;
                }
                for x in 0..dh {
                    dq[i * d + off + x] += ds * k[j * d + off + x];
                    dk[j * d + off + x] += ds * q[i * d + off + x];
                }
            }
        }
    }
    (dq, dk, dv)
}
