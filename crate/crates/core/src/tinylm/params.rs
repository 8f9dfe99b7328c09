use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::ModelConfig;

/// Parameters of one pre-LN encoder block. Linear weights are stored
/// `(in, out)` so that `y = x · W + b`; biases and norm gains are `1 × n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub ln1_gain: Array2<f64>,
    pub ln1_bias: Array2<f64>,
    pub wq: Array2<f64>,
    pub bq: Array2<f64>,
    pub wk: Array2<f64>,
    pub bk: Array2<f64>,
    pub wv: Array2<f64>,
    pub bv: Array2<f64>,
    pub wo: Array2<f64>,
    pub bo: Array2<f64>,
    pub ln2_gain: Array2<f64>,
    pub ln2_bias: Array2<f64>,
    pub w1: Array2<f64>,
    pub b1: Array2<f64>,
    pub w2: Array2<f64>,
    pub b2: Array2<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params {
    /// `vocab_size × hidden_dim`
    pub tok_emb: Array2<f64>,
    /// `max_seq_len × hidden_dim`
    pub pos_emb: Array2<f64>,
    pub layers: Vec<LayerParams>,
    pub lnf_gain: Array2<f64>,
    pub lnf_bias: Array2<f64>,
    /// Output embedding `W_lm`, `vocab_size × hidden_dim`; logits are `h · W_lmᵀ`.
    pub lm_head: Array2<f64>,
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let dist = Normal::new(0.0, std).expect("finite std");
    Array2::from_shape_simple_fn((rows, cols), || dist.sample(rng))
}

impl Params {
    /// Scaled-normal initialisation from `config.seed`:
    /// embeddings `N(0, 1)`, linear weights `N(0, 1/fan_in)` with the two
    /// residual output projections further scaled by `1/sqrt(2·n_layers)`,
    /// `W_lm` `N(0, 1/hidden_dim)`, biases 0, norm gains 1.
    pub fn init(config: &ModelConfig) -> Params {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.hidden_dim;
        let f = config.ffn_dim;
        let inv = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let resid = 1.0 / ((2 * config.n_layers) as f64).sqrt();
        let zeros = |n: usize| Array2::zeros((1, n));
        let ones = |n: usize| Array2::ones((1, n));

        let tok_emb = normal(config.vocab_size, d, 1.0, &mut rng);
        let pos_emb = normal(config.max_seq_len, d, 1.0, &mut rng);
        let layers = (0..config.n_layers)
            .map(|_| LayerParams {
                ln1_gain: ones(d),
                ln1_bias: zeros(d),
                wq: normal(d, d, inv(d), &mut rng),
                bq: zeros(d),
                wk: normal(d, d, inv(d), &mut rng),
                bk: zeros(d),
                wv: normal(d, d, inv(d), &mut rng),
                bv: zeros(d),
                wo: normal(d, d, inv(d) * resid, &mut rng),
                bo: zeros(d),
                ln2_gain: ones(d),
                ln2_bias: zeros(d),
                w1: normal(d, f, inv(d), &mut rng),
                b1: zeros(f),
                w2: normal(f, d, inv(f) * resid, &mut rng),
                b2: zeros(d),
            })
            .collect();
        let lm_head = normal(config.vocab_size, d, inv(d), &mut rng);
        Params {
            tok_emb,
            pos_emb,
            layers,
            lnf_gain: ones(d),
            lnf_bias: zeros(d),
            lm_head,
        }
    }

    pub fn zeros_like(&self) -> Params {
        let mut p = self.clone();
        for t in p.tensors_mut() {
            t.fill(0.0);
        }
        p
    }

    /// All tensors in the fixed order used by checkpoints and optimisers.
    pub fn tensors(&self) -> Vec<&Array2<f64>> {
        let mut out = vec![&self.tok_emb, &self.pos_emb];
        for l in &self.layers {
            out.extend([
                &l.ln1_gain, &l.ln1_bias, &l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo,
                &l.ln2_gain, &l.ln2_bias, &l.w1, &l.b1, &l.w2, &l.b2,
            ]);
        }
        out.extend([&self.lnf_gain, &self.lnf_bias, &self.lm_head]);
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Array2<f64>> {
        let mut out = vec![&mut self.tok_emb, &mut self.pos_emb];
        for l in &mut self.layers {
            out.extend([
                &mut l.ln1_gain,
                &mut l.ln1_bias,
                &mut l.wq,
                &mut l.bq,
                &mut l.wk,
                &mut l.bk,
                &mut l.wv,
                &mut l.bv,
                &mut l.wo,
                &mut l.bo,
                &mut l.ln2_gain,
                &mut l.ln2_bias,
                &mut l.w1,
                &mut l.b1,
                &mut l.w2,
                &mut l.b2,
            ]);
        }
        out.extend([&mut self.lnf_gain, &mut self.lnf_bias, &mut self.lm_head]);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn add_assign(&mut self, other: &Params) {
        for (a, b) in self.tensors_mut().into_iter().zip(other.tensors()) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for t in self.tensors_mut() {
            t.mapv_inplace(|x| x * factor);
        }
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }
}
