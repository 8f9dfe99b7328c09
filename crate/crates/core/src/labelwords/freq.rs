use std::collections::BTreeMap;

use crate::corpus::{Dataset, Tag, Vocabulary};
use crate::exec::{self, Strategy};
use crate::tinylm::{softmax, TinyMlm};
use crate::{Error, Result};

/// Word/class co-occurrence counts over a lexicon-annotated corpus.
///
/// `data` holds how often each word is tagged with each class; `topk` holds
/// how often each word is among the LM's top-k predictions at a position
/// tagged with each class. Both map a word to per-class counts indexed like
/// `classes`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    pub classes: Vec<String>,
    pub data: BTreeMap<String, Vec<u64>>,
    pub topk: BTreeMap<String, Vec<u64>>,
    /// Top-k width of the LM pass, if one has run.
    pub k: Option<usize>,
}

fn add_counts(into: &mut BTreeMap<String, Vec<u64>>, from: BTreeMap<String, Vec<u64>>) {
    for (w, counts) in from {
        match into.get_mut(&w) {
            Some(dst) => dst.iter_mut().zip(&counts).for_each(|(a, b)| *a += b),
            None => {
                into.insert(w, counts);
            }
        }
    }
}

impl FrequencyTable {
    pub fn new(classes: Vec<String>) -> Self {
        FrequencyTable {
            classes,
            ..Default::default()
        }
    }

    pub fn class_index(&self, class: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == class)
    }

    /// φ(x = word, y* = class)
    pub fn data_count(&self, word: &str, class: usize) -> u64 {
        self.data.get(word).map_or(0, |c| c[class])
    }

    /// φ_topk(x̂ = word, y* = class)
    pub fn topk_count(&self, word: &str, class: usize) -> u64 {
        self.topk.get(word).map_or(0, |c| c[class])
    }

    /// Σ_k φ(x = word, y* = k)
    pub fn data_total(&self, word: &str) -> u64 {
        self.data.get(word).map_or(0, |c| c.iter().sum())
    }

    /// Sums two tables over the same classes. Associative and commutative.
    pub fn merge(mut self, other: FrequencyTable) -> FrequencyTable {
        if self.classes.is_empty() {
            self.classes = other.classes.clone();
        }
        debug_assert!(other.classes.is_empty() || other.classes == self.classes);
        add_counts(&mut self.data, other.data);
        add_counts(&mut self.topk, other.topk);
        self.k = self.k.or(other.k);
        self
    }

    /// `word<TAB>class<TAB>data_count<TAB>topk_count` for every nonzero pair,
    /// sorted by word then class order.
    pub fn to_tsv(&self) -> String {
        let mut words: Vec<&String> = self.data.keys().chain(self.topk.keys()).collect();
        words.sort();
        words.dedup();
        let mut out = String::from("word\tclass\tdata_count\ttopk_count\n");
        for w in words {
            for (ci, c) in self.classes.iter().enumerate() {
                let (d, t) = (self.data_count(w, ci), self.topk_count(w, ci));
                if d > 0 || t > 0 {
                    out.push_str(&format!("{w}\t{c}\t{d}\t{t}\n"));
                }
            }
        }
        out
    }
}

pub fn count_data_frequencies(annotated: &Dataset) -> FrequencyTable {
    count_data_frequencies_with(annotated, Strategy::default())
}

pub fn count_data_frequencies_with(annotated: &Dataset, strategy: Strategy) -> FrequencyTable {
    let classes = annotated.label_set.classes().to_vec();
    let n = classes.len();
    exec::map_reduce(
        strategy,
        &annotated.examples,
        FrequencyTable::new(classes),
        |ex| {
            let mut t = FrequencyTable::default();
            for (tok, tag) in ex.sentence.tokens.iter().zip(ex.tags.iter()) {
                if let Tag::I(c) = tag {
                    t.data.entry(tok.clone()).or_insert_with(|| vec![0; n])[c] += 1;
                }
            }
            t
        },
        FrequencyTable::merge,
    )
}

/// Word ids of the `k` most probable words in `probs`, ties to the lower id.
/// Reserved vocabulary entries are never candidates.
pub(crate) fn top_k_words(probs: &[f64], k: usize) -> Vec<usize> {
    let mut ids: Vec<usize> = (Vocabulary::first_word_id()..probs.len()).collect();
    let k = k.min(ids.len());
    if k == 0 {
        return Vec::new();
    }
    let cmp = |a: &usize, b: &usize| probs[*b].total_cmp(&probs[*a]).then(a.cmp(b));
    ids.select_nth_unstable_by(k - 1, cmp);
    ids.truncate(k);
    ids.sort_by(cmp);
    ids
}

pub fn count_lm_topk(model: &TinyMlm, vocab: &Vocabulary, annotated: &Dataset, k: usize) -> Result<FrequencyTable> {
    count_lm_topk_with(model, vocab, annotated, k, Strategy::default())
}

/// One forward pass per sentence that contains at least one entity tag.
pub fn count_lm_topk_with(
    model: &TinyMlm,
    vocab: &Vocabulary,
    annotated: &Dataset,
    k: usize,
    strategy: Strategy,
) -> Result<FrequencyTable> {
    if k == 0 {
        return Err(Error::LabelWords("top-k width must be at least 1".into()));
    }
    if k > vocab.num_words() {
        return Err(Error::LabelWords(format!(
            "top-k width {k} exceeds vocabulary of {} words",
            vocab.num_words()
        )));
    }
    let classes = annotated.label_set.classes().to_vec();
    let n = classes.len();
    let parts = exec::try_map(strategy, &annotated.examples, |ex| -> Result<FrequencyTable> {
        let mut t = FrequencyTable::default();
        if !ex.tags.iter().any(Tag::is_entity) {
            return Ok(t);
        }
        let out = model.forward(&vocab.encode(&ex.sentence))?;
        for (i, tag) in ex.tags.iter().enumerate() {
            let Tag::I(c) = tag else { continue };
            let probs = softmax(out.logits.row(i));
            for id in top_k_words(&probs, k) {
                t.topk.entry(vocab.token(id).to_string()).or_insert_with(|| vec![0; n])[c] += 1;
            }
        }
        Ok(t)
    })?;
    let mut table = parts.into_iter().fold(FrequencyTable::new(classes), FrequencyTable::merge);
    table.k = Some(k);
    Ok(table)
}
