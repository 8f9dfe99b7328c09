//! One-pass label inference, Viterbi decoding and IO span extraction.

use ndarray::Array2;
use serde::Serialize;

use crate::corpus::{Dataset, Example, Sentence, Tag, TagSequence, Vocabulary};
use crate::exec::{self, Strategy};
use crate::labelwords::LabelWordMap;
use crate::tinylm::TinyMlm;
use crate::{Error, Result};

/// Per-position distribution over tags, column 0 = `O`, column `c + 1` =
/// class `c`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelDistribution {
    pub probs: Array2<f64>,
    /// Positions whose original token was out of vocabulary; their `O` score
    /// is the probability of UNK.
    pub oov: Vec<bool>,
}

impl LabelDistribution {
    pub fn len(&self) -> usize {
        self.probs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.nrows() == 0
    }

    pub fn num_tags(&self) -> usize {
        self.probs.ncols()
    }
}

/// Scores every tag from one forward pass: a class scores the softmax
/// probability of its label token, `O` scores the original token. The
/// gathered scores are renormalised per position, computed in log space so
/// tiny probabilities do not underflow.
pub fn label_distribution(model: &TinyMlm, input_ids: &[usize], map: &LabelWordMap) -> Result<LabelDistribution> {
    let logits = model.forward(input_ids)?.logits;
    let labels = map.token_ids();
    let mut probs = Array2::zeros((input_ids.len(), labels.len() + 1));
    for (i, &id) in input_ids.iter().enumerate() {
        let row = logits.row(i);
        let gathered: Vec<f64> = std::iter::once(row[id]).chain(labels.iter().map(|&t| row[t])).collect();
        let max = gathered.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = gathered.iter().map(|&z| (z - max).exp()).sum();
        for (j, &z) in gathered.iter().enumerate() {
            probs[[i, j]] = (z - max).exp() / sum;
        }
    }
    Ok(LabelDistribution {
        probs,
        oov: input_ids.iter().map(|&id| id == Vocabulary::UNK).collect(),
    })
}

/// First maximum in index order, so ties go to `O`, then class order.
fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub fn decode_greedy(dist: &LabelDistribution) -> TagSequence {
    TagSequence(
        dist.probs
            .rows()
            .into_iter()
            .map(|row| Tag::from_index(argmax(row.iter().copied())))
            .collect(),
    )
}

/// Row-stochastic tag transitions. Row 0 is the start state, row `t + 1`
/// the previous tag with index `t`; columns are tag indices.
#[derive(Clone, Debug, PartialEq)]
pub struct TransitionMatrix {
    pub probs: Array2<f64>,
}

impl TransitionMatrix {
    pub fn uniform(num_tags: usize) -> Self {
        TransitionMatrix {
            probs: Array2::from_elem((num_tags + 1, num_tags), 1.0 / num_tags as f64),
        }
    }

    pub fn num_tags(&self) -> usize {
        self.probs.ncols()
    }

    /// Transition probability from `prev` (`None` = start) to `next`.
    pub fn get(&self, prev: Option<Tag>, next: Tag) -> f64 {
        self.probs[[prev.map_or(0, |t| t.index() + 1), next.index()]]
    }
}

/// Add-`alpha` smoothed tag-bigram frequencies, start state included. A
/// row with no observations and `alpha = 0` falls back to uniform.
pub fn estimate_transitions(annotated: &Dataset, alpha: f64) -> Result<TransitionMatrix> {
    if annotated.is_empty() {
        return Err(Error::Decode("cannot estimate transitions from an empty corpus".into()));
    }
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::Decode(format!("smoothing must be a finite non-negative count, got {alpha}")));
    }
    let n = annotated.label_set.num_tags();
    let mut counts = Array2::<f64>::zeros((n + 1, n));
    for ex in &annotated.examples {
        let mut prev = 0;
        for tag in ex.tags.iter() {
            counts[[prev, tag.index()]] += 1.0;
            prev = tag.index() + 1;
        }
    }
    counts.mapv_inplace(|c| c + alpha);
    for mut row in counts.rows_mut() {
        let total: f64 = row.sum();
        if total > 0.0 {
            row.mapv_inplace(|c| c / total);
        } else {
            row.fill(1.0 / n as f64);
        }
    }
    Ok(TransitionMatrix { probs: counts })
}

/// Log-space score of a tag path: emissions plus transitions from the start
/// state. No end transition.
pub fn path_score(dist: &LabelDistribution, trans: &TransitionMatrix, path: &[usize]) -> f64 {
    let mut prev = 0;
    let mut score = 0.0;
    for (i, &t) in path.iter().enumerate() {
        score += dist.probs[[i, t]].ln() + trans.probs[[prev, t]].ln();
        prev = t + 1;
    }
    score
}

/// Highest-scoring tag sequence under emissions × transitions.
pub fn viterbi_decode(dist: &LabelDistribution, trans: &TransitionMatrix) -> Result<TagSequence> {
    let (n, y) = dist.probs.dim();
    if trans.num_tags() != y || trans.probs.nrows() != y + 1 {
        return Err(Error::Shape(format!(
            "distribution has {y} tags, transitions are {:?}",
            trans.probs.dim()
        )));
    }
    if n == 0 {
        return Ok(TagSequence(Vec::new()));
    }
    let emit = dist.probs.mapv(f64::ln);
    let logt = trans.probs.mapv(f64::ln);
    let mut score: Vec<f64> = (0..y).map(|t| logt[[0, t]] + emit[[0, t]]).collect();
    let mut back = vec![vec![0usize; y]; n];
    for i in 1..n {
        let mut next = vec![f64::NEG_INFINITY; y];
        for t in 0..y {
            let best = argmax((0..y).map(|p| score[p] + logt[[p + 1, t]]));
            back[i][t] = best;
            next[t] = score[best] + logt[[best + 1, t]] + emit[[i, t]];
        }
        score = next;
        if score.iter().all(|s| *s == f64::NEG_INFINITY) {
            return Err(Error::Decode(format!("every path has zero probability at position {i}")));
        }
    }
    if score.iter().all(|s| *s == f64::NEG_INFINITY) {
        return Err(Error::Decode("every path has zero probability at position 0".into()));
    }
    let mut t = argmax(score.iter().copied());
    let mut path = vec![0; n];
    for i in (0..n).rev() {
        path[i] = t;
        t = back[i][t];
    }
    Ok(TagSequence(path.into_iter().map(Tag::from_index).collect()))
}

/// A maximal run of one class; `end` is inclusive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct EntitySpan {
    pub start: usize,
    pub end: usize,
    pub class: usize,
}

pub fn extract_spans(tags: &TagSequence) -> Vec<EntitySpan> {
    let mut spans: Vec<EntitySpan> = Vec::new();
    for (i, tag) in tags.iter().enumerate() {
        if let Tag::I(c) = tag {
            match spans.last_mut() {
                Some(s) if s.class == c && s.end + 1 == i => s.end = i,
                _ => spans.push(EntitySpan { start: i, end: i, class: c }),
            }
        }
    }
    spans
}

/// Inverse of [`extract_spans`] for spans that fit in `len`.
pub fn spans_to_tags(spans: &[EntitySpan], len: usize) -> TagSequence {
    let mut tags = vec![Tag::O; len];
    for s in spans {
        for t in &mut tags[s.start..=s.end] {
            *t = Tag::I(s.class);
        }
    }
    TagSequence(tags)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Decoder {
    Greedy,
    Viterbi(TransitionMatrix),
}

impl Decoder {
    pub fn decode(&self, dist: &LabelDistribution) -> Result<TagSequence> {
        match self {
            Decoder::Greedy => Ok(decode_greedy(dist)),
            Decoder::Viterbi(t) => viterbi_decode(dist, t),
        }
    }
}

/// Tags one sentence with a single forward pass.
pub fn decode_sentence(
    model: &TinyMlm,
    vocab: &Vocabulary,
    map: &LabelWordMap,
    decoder: &Decoder,
    sentence: &Sentence,
) -> Result<TagSequence> {
    decoder.decode(&label_distribution(model, &vocab.encode(sentence), map)?)
}

/// Tags every sentence of `dataset`, returning a dataset with the same
/// sentences and predicted tags.
pub fn decode_dataset(
    model: &TinyMlm,
    vocab: &Vocabulary,
    map: &LabelWordMap,
    decoder: &Decoder,
    dataset: &Dataset,
    strategy: Strategy,
) -> Result<Dataset> {
    let examples = exec::try_map(strategy, &dataset.examples, |ex| {
        Ok::<_, Error>(Example {
            sentence: ex.sentence.clone(),
            tags: decode_sentence(model, vocab, map, decoder, &ex.sentence)?,
        })
    })?;
    Ok(dataset.with_examples("predicted", examples))
}
