//! Entity-oriented LM fine-tuning and the classifier-head baseline.
//!
//! EntLM feeds the raw sentence through the model and trains the LM head to
//! emit the class label word at entity positions and the original token
//! everywhere else. The baseline replaces the LM head with a fresh linear
//! classifier over the IO tags.

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::Serialize;

use crate::corpus::{Dataset, Tag, TagSequence, Vocabulary};
use crate::exec::{self, Strategy};
use crate::labelwords::{LabelWordMap, LabelWordMode};
use crate::sampler::shuffled_indices;
use crate::tinylm::loss::cross_entropy_sum;
use crate::tinylm::train::{apply_step, batch_loss};
use crate::tinylm::{backward_and_step, cross_entropy_loss, LmExample, OptimizerState, TinyMlm, TrainConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TargetSequence {
    pub target_ids: Vec<usize>,
    pub entity_mask: Vec<bool>,
}

/// Replaces every entity position with its class's label word; all other
/// positions keep the input id.
pub fn build_target_sequence(input_ids: &[usize], tags: &TagSequence, map: &LabelWordMap) -> Result<TargetSequence> {
    if input_ids.len() != tags.len() {
        return Err(Error::Shape(format!("{} ids but {} tags", input_ids.len(), tags.len())));
    }
    let mut target_ids = Vec::with_capacity(input_ids.len());
    let mut entity_mask = Vec::with_capacity(input_ids.len());
    for (&id, tag) in input_ids.iter().zip(tags.iter()) {
        match tag {
            Tag::O => {
                target_ids.push(id);
                entity_mask.push(false);
            }
            Tag::I(c) => {
                let label = map
                    .classes
                    .get(c)
                    .ok_or_else(|| Error::LabelWords(format!("no label word for class index {c}")))?;
                target_ids.push(label.token_id);
                entity_mask.push(true);
            }
        }
    }
    Ok(TargetSequence { target_ids, entity_mask })
}

/// Mean cross-entropy of the raw-input logits against the EntLM targets,
/// over every position.
pub fn entlm_loss(model: &TinyMlm, input_ids: &[usize], target: &TargetSequence) -> Result<f64> {
    if input_ids.len() != target.target_ids.len() {
        return Err(Error::Shape("input and target lengths differ".into()));
    }
    let out = model.forward(input_ids)?;
    let mask = vec![true; input_ids.len()];
    Ok(cross_entropy_loss(&out.logits, &target.target_ids, &mask)?.0)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct FinetuneReport {
    pub initial_loss: f64,
    pub final_loss: f64,
    pub step_losses: Vec<f64>,
    pub steps: usize,
}

fn epoch_batches(n: usize, cfg: &TrainConfig, epoch: usize) -> Vec<Vec<usize>> {
    let order = shuffled_indices(n, cfg.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64));
    order.chunks(cfg.batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

fn total_steps(n: usize, cfg: &TrainConfig) -> usize {
    cfg.epochs * n.div_ceil(cfg.batch_size.max(1))
}

/// EntLM training examples for a tagged dataset.
pub fn entlm_examples(dataset: &Dataset, vocab: &Vocabulary, map: &LabelWordMap) -> Result<Vec<LmExample>> {
    dataset
        .examples
        .iter()
        .map(|ex| {
            let ids = vocab.encode(&ex.sentence);
            let t = build_target_sequence(&ids, &ex.tags, map)?;
            Ok(LmExample::dense(ids, t.target_ids))
        })
        .collect()
}

/// Fine-tunes `model` in place on the support set with the EntLM
/// objective. In virtual mode the prototypes are first written into their
/// reserved `W_lm` rows; those rows then train with everything else unless
/// `cfg.freeze_virtual` is set, and `map` is updated with the trained rows.
/// The last-epoch model is kept.
pub fn finetune_entlm(
    model: &mut TinyMlm,
    support: &Dataset,
    vocab: &Vocabulary,
    map: &mut LabelWordMap,
    cfg: &TrainConfig,
) -> Result<FinetuneReport> {
    if support.is_empty() {
        return Err(Error::Config("support set is empty".into()));
    }
    map.install(model)?;
    let examples = entlm_examples(support, vocab, map)?;
    let steps = total_steps(examples.len(), cfg);
    let mut state = OptimizerState::new(cfg.learning_rate, cfg.weight_decay, steps);
    if cfg.freeze_virtual && map.mode == LabelWordMode::Virtual {
        state.frozen_lm_rows = map.token_ids();
    }
    let initial_loss = batch_loss(model, &examples)?;
    let mut step_losses = Vec::with_capacity(steps);
    for epoch in 0..cfg.epochs {
        for batch in epoch_batches(examples.len(), cfg, epoch) {
            let batch: Vec<LmExample> = batch.iter().map(|&i| examples[i].clone()).collect();
            step_losses.push(backward_and_step(model, &batch, &mut state)?);
        }
    }
    map.refresh_vectors(model);
    Ok(FinetuneReport {
        initial_loss,
        final_loss: batch_loss(model, &examples)?,
        step_losses,
        steps,
    })
}

/// Linear classifier over hidden states: `logits = h · Wᵀ + b`, one row of
/// `weight` per tag (`O` first, then positive classes).
#[derive(Clone, Debug, PartialEq)]
pub struct TaggerHead {
    pub weight: Array2<f64>,
    pub bias: Array2<f64>,
}

impl TaggerHead {
    /// `N(0, 1/hidden_dim)` weights, zero bias.
    pub fn new(num_tags: usize, hidden_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7a66_e4ad);
        let dist = Normal::new(0.0, 1.0 / (hidden_dim as f64).sqrt()).expect("finite std");
        TaggerHead {
            weight: Array2::from_shape_simple_fn((num_tags, hidden_dim), || dist.sample(&mut rng)),
            bias: Array2::zeros((1, num_tags)),
        }
    }

    pub fn num_parameters(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn logits(&self, hidden: &Array2<f64>) -> Array2<f64> {
        hidden.dot(&self.weight.t()) + &self.bias
    }

    /// Per-position argmax, ties to the lower tag index.
    pub fn predict(&self, model: &TinyMlm, input_ids: &[usize]) -> Result<TagSequence> {
        let (hidden, _) = model.encode(input_ids)?;
        let logits = self.logits(&hidden);
        Ok(TagSequence(
            logits
                .rows()
                .into_iter()
                .map(|row| {
                    let best = row
                        .iter()
                        .enumerate()
                        .fold((0, f64::NEG_INFINITY), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
                    Tag::from_index(best.0)
                })
                .collect(),
        ))
    }
}

struct TaggerExample {
    ids: Vec<usize>,
    tags: Vec<usize>,
}

struct TaggerGrads {
    loss: f64,
    count: usize,
    model: crate::tinylm::Params,
    weight: Array2<f64>,
    bias: Array2<f64>,
}

fn tagger_gradients(model: &TinyMlm, head: &TaggerHead, ex: &TaggerExample) -> Result<TaggerGrads> {
    let (hidden, cache) = model.encode(&ex.ids)?;
    let logits = head.logits(&hidden);
    let (loss, count, dlogits) = cross_entropy_sum(&logits, &ex.tags, &vec![true; ex.ids.len()])?;
    let weight = dlogits.t().dot(&hidden);
    let bias = dlogits.sum_axis(ndarray::Axis(0)).insert_axis(ndarray::Axis(0));
    let dh = dlogits.dot(&head.weight);
    let mut grads = model.params.zeros_like();
    model.encoder_backward(&cache, &dh, &mut grads);
    Ok(TaggerGrads {
        loss,
        count,
        model: grads,
        weight,
        bias,
    })
}

fn tagger_examples(dataset: &Dataset, vocab: &Vocabulary) -> Vec<TaggerExample> {
    dataset
        .examples
        .iter()
        .map(|ex| TaggerExample {
            ids: vocab.encode(&ex.sentence),
            tags: ex.tags.iter().map(Tag::index).collect(),
        })
        .collect()
}

fn tagger_loss(model: &TinyMlm, head: &TaggerHead, examples: &[TaggerExample]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0;
    for ex in examples {
        let (hidden, _) = model.encode(&ex.ids)?;
        let (mean, _) = cross_entropy_loss(&head.logits(&hidden), &ex.tags, &vec![true; ex.ids.len()])?;
        total += mean * ex.ids.len() as f64;
        count += ex.ids.len();
    }
    Ok(total / count.max(1) as f64)
}

/// Attaches a fresh classifier head and fine-tunes encoder and head on the
/// IO tags with the same optimiser settings as EntLM. `W_lm` is not used and
/// stays fixed.
pub fn finetune_tagger(
    model: &mut TinyMlm,
    support: &Dataset,
    vocab: &Vocabulary,
    cfg: &TrainConfig,
) -> Result<(TaggerHead, FinetuneReport)> {
    if support.is_empty() {
        return Err(Error::Config("support set is empty".into()));
    }
    let mut head = TaggerHead::new(support.label_set.num_tags(), model.config.hidden_dim, cfg.seed);
    let examples = tagger_examples(support, vocab);
    let steps = total_steps(examples.len(), cfg);
    let mut state = OptimizerState::new(cfg.learning_rate, cfg.weight_decay, steps);
    state.frozen_lm_rows = (0..model.config.vocab_size).collect();
    let initial_loss = tagger_loss(model, &head, &examples)?;
    let mut step_losses = Vec::with_capacity(steps);
    for epoch in 0..cfg.epochs {
        for batch in epoch_batches(examples.len(), cfg, epoch) {
            let parts = exec::try_map(Strategy::default(), &batch, |&i| tagger_gradients(model, &head, &examples[i]))?;
            let mut grads = model.params.zeros_like();
            let mut gw = Array2::zeros(head.weight.raw_dim());
            let mut gb = Array2::zeros(head.bias.raw_dim());
            let (mut total, mut count) = (0.0, 0);
            for p in parts {
                total += p.loss;
                count += p.count;
                grads.add_assign(&p.model);
                gw += &p.weight;
                gb += &p.bias;
            }
            let inv = 1.0 / count as f64;
            grads.scale(inv);
            gw.mapv_inplace(|g| g * inv);
            gb.mapv_inplace(|g| g * inv);
            let loss = total * inv;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("loss ({loss})"),
                    step: state.step,
                });
            }
            apply_step(
                &mut state,
                &mut model.params,
                &grads,
                vec![(&mut head.weight, &gw), (&mut head.bias, &gb)],
            )?;
            step_losses.push(loss);
        }
    }
    let final_loss = tagger_loss(model, &head, &examples)?;
    Ok((
        head,
        FinetuneReport {
            initial_loss,
            final_loss,
            step_losses,
            steps,
        },
    ))
}
