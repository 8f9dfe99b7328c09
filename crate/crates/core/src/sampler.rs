//! Exact K-shot support-set sampling.
//!
//! The dataset is shuffled with a Fisher–Yates pass driven by
//! `ChaCha8Rng::seed_from_u64(seed)`; each draw is `random_range(0..=i)` for
//! `i` from `n - 1` down to 1. Sentences are then scanned in shuffled order
//! and accepted only if no class count would exceed K; the scan stops as soon
//! as every class holds exactly K mentions.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::corpus::{Dataset, Example, Tag, TagSequence};
use crate::{Error, Result};

/// Mentions per class, counting each maximal run of one `I-C` tag once.
pub fn count_entities(tags: &TagSequence) -> BTreeMap<usize, usize> {
    let mut counts = BTreeMap::new();
    let mut prev = Tag::O;
    for tag in tags.iter() {
        if let Tag::I(c) = tag {
            if tag != prev {
                *counts.entry(c).or_default() += 1;
            }
        }
        prev = tag;
    }
    counts
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportSet {
    pub dataset: Dataset,
    /// Mentions per positive class, indexed like the label set.
    pub counts: Vec<usize>,
    pub k: usize,
}

impl SupportSet {
    pub fn is_complete(&self) -> bool {
        self.counts.iter().all(|&c| c == self.k)
    }

    /// `K × |positive classes|` when complete.
    pub fn total_mentions(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }
}

/// Seeded Fisher–Yates permutation of `0..n`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    idx
}

pub fn sample_kshot(dataset: &Dataset, k: usize, seed: u64) -> Result<SupportSet> {
    let n_classes = dataset.label_set.len();
    let mut counts = vec![0usize; n_classes];
    let mut chosen: Vec<Example> = Vec::new();
    let done = |counts: &[usize]| counts.iter().all(|&c| c == k);

    for i in shuffled_indices(dataset.len(), seed) {
        if done(&counts) {
            break;
        }
        let ex = &dataset.examples[i];
        let temp = count_entities(&ex.tags);
        if temp.iter().any(|(&c, &n)| counts[c] + n > k) {
            continue;
        }
        for (c, n) in temp {
            counts[c] += n;
        }
        chosen.push(ex.clone());
    }

    if !done(&counts) {
        let deficits = counts
            .iter()
            .enumerate()
            .filter(|&(_, &n)| n < k)
            .map(|(c, &n)| (dataset.label_set.name(c).to_string(), n))
            .collect();
        return Err(Error::Infeasible { k, deficits });
    }
    Ok(SupportSet {
        dataset: dataset.with_examples(format!("{}-{k}shot-{seed}", dataset.name), chosen),
        counts,
        k,
    })
}
