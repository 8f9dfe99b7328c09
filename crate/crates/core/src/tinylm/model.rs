//! Forward and backward passes of the pre-LN transformer encoder.

use std::sync::atomic::{AtomicU64, Ordering};

use ndarray::{s, Array1, Array2, ArrayView2, Axis};

use super::{ModelConfig, Params};
use crate::{Error, Result};

const LN_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

/// A small masked language model: token + learned positional embeddings,
/// `n_layers` pre-LN encoder blocks, a final layer norm producing the hidden
/// states `h_i`, and an untied LM head `W_lm`.
#[derive(Debug)]
pub struct TinyMlm {
    pub config: ModelConfig,
    pub params: Params,
    forward_calls: AtomicU64,
}

impl Clone for TinyMlm {
    /// The clone starts with a fresh forward-pass counter.
    fn clone(&self) -> Self {
        TinyMlm::from_params(self.config.clone(), self.params.clone())
    }
}

impl PartialEq for TinyMlm {
    fn eq(&self, other: &Self) -> bool {
        self.config == other.config && self.params == other.params
    }
}

pub struct ForwardOutput {
    /// `n × hidden_dim`
    pub hidden: Array2<f64>,
    /// `n × vocab_size`
    pub logits: Array2<f64>,
}

struct LnCache {
    xhat: Array2<f64>,
    rstd: Array1<f64>,
}

struct LayerCache {
    ln1: LnCache,
    a: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    probs: Vec<Array2<f64>>,
    ctx: Array2<f64>,
    ln2: LnCache,
    b: Array2<f64>,
    f_pre: Array2<f64>,
    f_act: Array2<f64>,
}

/// Activations kept from [`TinyMlm::encode`] for the backward pass.
pub struct ForwardCache {
    ids: Vec<usize>,
    layers: Vec<LayerCache>,
    lnf: LnCache,
}

fn layer_norm(x: &Array2<f64>, gain: &Array2<f64>, bias: &Array2<f64>) -> (Array2<f64>, LnCache) {
    let d = x.ncols() as f64;
    let mut xhat = x.clone();
    let mut rstd = Array1::zeros(x.nrows());
    for (mut row, r) in xhat.rows_mut().into_iter().zip(rstd.iter_mut()) {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        *r = 1.0 / (var + LN_EPS).sqrt();
        let rs = *r;
        row.mapv_inplace(|v| (v - mean) * rs);
    }
    let y = &xhat * gain + bias;
    (y, LnCache { xhat, rstd })
}

/// Returns dx and accumulates the gain/bias gradients.
fn layer_norm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    gain: &Array2<f64>,
    dgain: &mut Array2<f64>,
    dbias: &mut Array2<f64>,
) -> Array2<f64> {
    *dgain += &(dy * &cache.xhat).sum_axis(Axis(0)).insert_axis(Axis(0));
    *dbias += &dy.sum_axis(Axis(0)).insert_axis(Axis(0));
    let d = dy.ncols() as f64;
    let mut dx = dy * gain;
    for ((mut row, xh), &r) in dx.rows_mut().into_iter().zip(cache.xhat.rows()).zip(&cache.rstd) {
        let mean_d = row.sum() / d;
        let mean_dx = row.iter().zip(xh.iter()).map(|(a, b)| a * b).sum::<f64>() / d;
        for (v, &x) in row.iter_mut().zip(xh.iter()) {
            *v = r * (*v - mean_d - x * mean_dx);
        }
    }
    dx
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + 0.044715 * x * x * x)).tanh())
}

fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + 0.044715 * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * 0.044715 * x * x)
}

fn softmax_rows_inplace(m: &mut Array2<f64>) {
    for mut row in m.rows_mut() {
        let max = row.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
}

fn sum_rows(m: &Array2<f64>) -> Array2<f64> {
    m.sum_axis(Axis(0)).insert_axis(Axis(0))
}

impl TinyMlm {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let params = Params::init(&config);
        Ok(Self::from_params(config, params))
    }

    pub(crate) fn from_params(config: ModelConfig, params: Params) -> Self {
        TinyMlm {
            config,
            params,
            forward_calls: AtomicU64::new(0),
        }
    }

    /// Number of encoder passes since construction or the last reset.
    pub fn forward_calls(&self) -> u64 {
        self.forward_calls.load(Ordering::Relaxed)
    }

    pub fn reset_forward_calls(&self) {
        self.forward_calls.store(0, Ordering::Relaxed);
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_parameters()
    }

    fn check_input(&self, ids: &[usize]) -> Result<()> {
        if ids.len() > self.config.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max: self.config.max_seq_len,
            });
        }
        if let Some(&id) = ids.iter().find(|&&id| id >= self.config.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: self.config.vocab_size,
            });
        }
        Ok(())
    }

    /// Full forward pass: hidden states and LM logits.
    pub fn forward(&self, ids: &[usize]) -> Result<ForwardOutput> {
        let (hidden, _) = self.encode(ids)?;
        let logits = self.logits(&hidden);
        Ok(ForwardOutput { hidden, logits })
    }

    /// `h · W_lmᵀ`
    pub fn logits(&self, hidden: &Array2<f64>) -> Array2<f64> {
        hidden.dot(&self.params.lm_head.t())
    }

    /// Runs the encoder, returning hidden states and the backward cache.
    /// Every model pass goes through here and is counted.
    pub fn encode(&self, ids: &[usize]) -> Result<(Array2<f64>, ForwardCache)> {
        self.check_input(ids)?;
        self.forward_calls.fetch_add(1, Ordering::Relaxed);
        let p = &self.params;
        let n = ids.len();
        let d = self.config.hidden_dim;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut x = Array2::zeros((n, d));
        for (i, &id) in ids.iter().enumerate() {
            let mut row = x.row_mut(i);
            row += &p.tok_emb.row(id);
            row += &p.pos_emb.row(i);
        }

        let mut layers = Vec::with_capacity(p.layers.len());
        for lp in &p.layers {
            let (a, ln1) = layer_norm(&x, &lp.ln1_gain, &lp.ln1_bias);
            let q = a.dot(&lp.wq) + &lp.bq;
            let k = a.dot(&lp.wk) + &lp.bk;
            let v = a.dot(&lp.wv) + &lp.bv;
            let mut ctx = Array2::zeros((n, d));
            let mut probs = Vec::with_capacity(heads);
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let qh = q.slice(cols);
                let kh = k.slice(cols);
                let vh = v.slice(cols);
                let mut scores = qh.dot(&kh.t()) * scale;
                softmax_rows_inplace(&mut scores);
                ctx.slice_mut(cols).assign(&scores.dot(&vh));
                probs.push(scores);
            }
            x = x + ctx.dot(&lp.wo) + &lp.bo;
            let (b, ln2) = layer_norm(&x, &lp.ln2_gain, &lp.ln2_bias);
            let f_pre = b.dot(&lp.w1) + &lp.b1;
            let f_act = f_pre.mapv(gelu);
            x = x + f_act.dot(&lp.w2) + &lp.b2;
            layers.push(LayerCache {
                ln1,
                a,
                q,
                k,
                v,
                probs,
                ctx,
                ln2,
                b,
                f_pre,
                f_act,
            });
        }
        let (hidden, lnf) = layer_norm(&x, &p.lnf_gain, &p.lnf_bias);
        Ok((
            hidden,
            ForwardCache {
                ids: ids.to_vec(),
                layers,
                lnf,
            },
        ))
    }

    /// Backward through the LM head. Accumulates into `grads.lm_head` and
    /// returns the gradient with respect to the hidden states.
    pub fn lm_head_backward(&self, hidden: &Array2<f64>, dlogits: &Array2<f64>, grads: &mut Params) -> Array2<f64> {
        grads.lm_head += &dlogits.t().dot(hidden);
        dlogits.dot(&self.params.lm_head)
    }

    /// Backward through the encoder given `dL/dh`, accumulating into `grads`.
    pub fn encoder_backward(&self, cache: &ForwardCache, dhidden: &Array2<f64>, grads: &mut Params) {
        let p = &self.params;
        let d = self.config.hidden_dim;
        let heads = self.config.n_heads;
        let dh = d / heads;
        let scale = 1.0 / (dh as f64).sqrt();

        let mut dx = layer_norm_backward(dhidden, &cache.lnf, &p.lnf_gain, &mut grads.lnf_gain, &mut grads.lnf_bias);

        for (li, lc) in cache.layers.iter().enumerate().rev() {
            let lp = &p.layers[li];
            let g = &mut grads.layers[li];

            // feed-forward sublayer
            g.w2 += &lc.f_act.t().dot(&dx);
            g.b2 += &sum_rows(&dx);
            let mut d_f = dx.dot(&lp.w2.t());
            d_f.zip_mut_with(&lc.f_pre, |df, &pre| *df *= gelu_grad(pre));
            g.w1 += &lc.b.t().dot(&d_f);
            g.b1 += &sum_rows(&d_f);
            let d_b = d_f.dot(&lp.w1.t());
            dx += &layer_norm_backward(&d_b, &lc.ln2, &lp.ln2_gain, &mut g.ln2_gain, &mut g.ln2_bias);

            // attention sublayer
            g.wo += &lc.ctx.t().dot(&dx);
            g.bo += &sum_rows(&dx);
            let d_ctx = dx.dot(&lp.wo.t());
            let n = d_ctx.nrows();
            let mut dq = Array2::zeros((n, d));
            let mut dk = Array2::zeros((n, d));
            let mut dv = Array2::zeros((n, d));
            for h in 0..heads {
                let cols = s![.., h * dh..(h + 1) * dh];
                let a = &lc.probs[h];
                let dctx_h = d_ctx.slice(cols);
                let vh: ArrayView2<f64> = lc.v.slice(cols);
                dv.slice_mut(cols).assign(&a.t().dot(&dctx_h));
                let mut ds = dctx_h.dot(&vh.t());
                for (mut drow, arow) in ds.rows_mut().into_iter().zip(a.rows()) {
                    let dot: f64 = drow.iter().zip(arow.iter()).map(|(x, y)| x * y).sum();
                    drow.zip_mut_with(&arow, |x, &y| *x = y * (*x - dot));
                }
                ds.mapv_inplace(|x| x * scale);
                dq.slice_mut(cols).assign(&ds.dot(&lc.k.slice(cols)));
                dk.slice_mut(cols).assign(&ds.t().dot(&lc.q.slice(cols)));
            }
            g.wq += &lc.a.t().dot(&dq);
            g.bq += &sum_rows(&dq);
            g.wk += &lc.a.t().dot(&dk);
            g.bk += &sum_rows(&dk);
            g.wv += &lc.a.t().dot(&dv);
            g.bv += &sum_rows(&dv);
            let d_a = dq.dot(&lp.wq.t()) + dk.dot(&lp.wk.t()) + dv.dot(&lp.wv.t());
            dx += &layer_norm_backward(&d_a, &lc.ln1, &lp.ln1_gain, &mut g.ln1_gain, &mut g.ln1_bias);
        }

        for (i, &id) in cache.ids.iter().enumerate() {
            let row = dx.row(i);
            let mut t = grads.tok_emb.row_mut(id);
            t += &row;
            let mut pr = grads.pos_emb.row_mut(i);
            pr += &row;
        }
    }
}
