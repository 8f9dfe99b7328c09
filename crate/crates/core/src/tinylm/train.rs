use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::cross_entropy_sum;
use super::{OptimizerState, Params, TinyMlm};
use crate::corpus::Vocabulary;
use crate::exec::{self, Strategy};
use crate::sampler::shuffled_indices;
use crate::{Error, Result};

/// One LM-head training example: model input, per-position targets and the
/// positions that contribute to the loss.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmExample {
    pub input: Vec<usize>,
    pub targets: Vec<usize>,
    pub mask: Vec<bool>,
}

impl LmExample {
    /// Supervises every position.
    pub fn dense(input: Vec<usize>, targets: Vec<usize>) -> Self {
        let mask = vec![true; input.len()];
        LmExample { input, targets, mask }
    }
}

/// Summed loss, supervised-position count and gradients of the summed loss.
pub fn example_gradients(model: &TinyMlm, ex: &LmExample) -> Result<(f64, usize, Params)> {
    let (hidden, cache) = model.encode(&ex.input)?;
    let logits = model.logits(&hidden);
    let (loss, count, dlogits) = cross_entropy_sum(&logits, &ex.targets, &ex.mask)?;
    let mut grads = model.params.zeros_like();
    let dh = model.lm_head_backward(&hidden, &dlogits, &mut grads);
    model.encoder_backward(&cache, &dh, &mut grads);
    Ok((loss, count, grads))
}

/// Token-averaged loss over a batch and its gradient. Per-example work may
/// run in parallel; the reduction is sequential in batch order.
pub fn batch_gradients(model: &TinyMlm, batch: &[LmExample], strategy: Strategy) -> Result<(f64, Params)> {
    let parts = exec::try_map(strategy, batch, |ex| example_gradients(model, ex))?;
    let mut total = 0.0;
    let mut count = 0;
    let mut grads = model.params.zeros_like();
    for (loss, n, g) in parts {
        total += loss;
        count += n;
        grads.add_assign(&g);
    }
    if count == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    grads.scale(1.0 / count as f64);
    Ok((total / count as f64, grads))
}

/// Token-averaged loss over a batch without gradients.
pub fn batch_loss(model: &TinyMlm, batch: &[LmExample]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for ex in batch {
        let out = model.forward(&ex.input)?;
        let (loss, n, _) = cross_entropy_sum(&out.logits, &ex.targets, &ex.mask)?;
        total += loss;
        count += n;
    }
    if count == 0 {
        return Err(Error::NoSupervisedPositions);
    }
    Ok(total / count as f64)
}

/// Applies one AdamW step to `params` at the scheduled learning rate,
/// leaving `state.frozen_lm_rows` untouched.
pub(crate) fn apply_step(
    state: &mut OptimizerState,
    params: &mut Params,
    grads: &Params,
    extra: Vec<(&mut ndarray::Array2<f64>, &ndarray::Array2<f64>)>,
) -> Result<()> {
    if !grads.all_finite() || extra.iter().any(|(_, g)| g.iter().any(|x| !x.is_finite())) {
        return Err(Error::NonFinite {
            what: "gradient".into(),
            step: state.step,
        });
    }
    let lr = state.current_lr();
    let frozen: Vec<(usize, ndarray::Array1<f64>)> = state
        .frozen_lm_rows
        .iter()
        .map(|&r| (r, params.lm_head.row(r).to_owned()))
        .collect();
    let mut ps = params.tensors_mut();
    let mut gs = grads.tensors();
    for (p, g) in extra {
        ps.push(p);
        gs.push(g);
    }
    state.adam.update(ps, gs, lr);
    for (r, row) in frozen {
        params.lm_head.row_mut(r).assign(&row);
    }
    state.step += 1;
    Ok(())
}

/// Computes exact gradients for `batch`, then takes one AdamW step with
/// learning rate `lr₀ · (1 − step/total_steps)`. Returns the batch loss.
pub fn backward_and_step(model: &mut TinyMlm, batch: &[LmExample], state: &mut OptimizerState) -> Result<f64> {
    let (loss, grads) = batch_gradients(model, batch, Strategy::default())?;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            what: format!("loss ({loss})"),
            step: state.step,
        });
    }
    apply_step(state, &mut model.params, &grads, Vec::new())?;
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub mask_prob: f64,
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 2000,
            batch_size: 16,
            mask_prob: 0.15,
            learning_rate: 1e-3,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

/// Builds a masked-LM example. Each position is selected with `mask_prob`
/// (at least one position per sentence); selected positions become MASK
/// (80%), a random word (10%) or stay unchanged (10%), and only they are
/// supervised with the original token.
pub fn mask_sentence(ids: &[usize], mask_prob: f64, vocab_size: usize, rng: &mut impl Rng) -> LmExample {
    let mut mask: Vec<bool> = ids.iter().map(|_| rng.random_bool(mask_prob)).collect();
    if !ids.is_empty() && !mask.iter().any(|&m| m) {
        mask[rng.random_range(0..ids.len())] = true;
    }
    let first_word = Vocabulary::first_word_id();
    let input = ids
        .iter()
        .zip(&mask)
        .map(|(&id, &m)| {
            if !m {
                return id;
            }
            let r: f64 = rng.random();
            if r < 0.8 {
                Vocabulary::MASK
            } else if r < 0.9 && vocab_size > first_word {
                rng.random_range(first_word..vocab_size)
            } else {
                id
            }
        })
        .collect();
    LmExample {
        input,
        targets: ids.to_vec(),
        mask,
    }
}

/// Further MLM pre-training on encoded sentences. Returns the per-step loss.
pub fn mlm_pretrain(model: &mut TinyMlm, corpus: &[Vec<usize>], cfg: &PretrainConfig) -> Result<Vec<f64>> {
    if cfg.mask_prob <= 0.0 {
        return Err(Error::NoSupervisedPositions);
    }
    if corpus.is_empty() {
        return Err(Error::Config("pre-training corpus is empty".into()));
    }
    let corpus: Vec<&Vec<usize>> = corpus.iter().filter(|s| !s.is_empty()).collect();
    if corpus.is_empty() {
        return Err(Error::Config("pre-training corpus has only empty sentences".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = OptimizerState::new(cfg.learning_rate, cfg.weight_decay, cfg.steps);
    let mut order = Vec::new();
    let mut epoch = 0u64;
    let mut losses = Vec::with_capacity(cfg.steps);
    let vocab_size = model.config.vocab_size;
    for _ in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        while batch.len() < cfg.batch_size.max(1) {
            if order.is_empty() {
                order = shuffled_indices(corpus.len(), cfg.seed.wrapping_add(epoch));
                order.reverse();
                epoch += 1;
            }
            let i = order.pop().expect("refilled above");
            batch.push(mask_sentence(corpus[i], cfg.mask_prob.min(1.0), vocab_size, &mut rng));
        }
        losses.push(backward_and_step(model, &batch, &mut state)?);
    }
    Ok(losses)
}
