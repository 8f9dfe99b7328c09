//! Automatic label-word search over a lexicon-annotated corpus.
//!
//! Candidates are ranked per class by data frequency, by LM top-k frequency,
//! or by the product of both, then filtered by a class-share threshold.
//! The surviving words either become a discrete label word or are averaged
//! into a virtual label word.

mod freq;
mod map;
mod select;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Dataset, LabelSet, Vocabulary};
use crate::tinylm::TinyMlm;
use crate::{Error, Result};

pub use freq::{count_data_frequencies, count_data_frequencies_with, count_lm_topk, count_lm_topk_with, FrequencyTable};
pub use map::{build_label_word_map, build_virtual_prototype, ClassLabel, LabelWordMap, LabelWordMode};
pub use select::{remove_conflicts, select_combined, select_data, select_lm};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    Data,
    Lm,
    DataLm,
}

impl SearchMethod {
    pub fn needs_lm(self) -> bool {
        !matches!(self, SearchMethod::Data)
    }
}

/// Conflict-removal threshold on a word's class share of data frequency.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConflictPolicy {
    pub threshold: f64,
}

impl Default for ConflictPolicy {
    fn default() -> Self {
        ConflictPolicy { threshold: 0.6 }
    }
}

impl ConflictPolicy {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&threshold) {
            return Err(Error::LabelWords(format!("conflict threshold {threshold} outside [0, 1]")));
        }
        Ok(ConflictPolicy { threshold })
    }
}

/// A label-word method such as `data_lm+virtual`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabelWordMethod {
    pub search: SearchMethod,
    pub mode: LabelWordMode,
}

impl Default for LabelWordMethod {
    fn default() -> Self {
        LabelWordMethod {
            search: SearchMethod::DataLm,
            mode: LabelWordMode::Virtual,
        }
    }
}

impl FromStr for LabelWordMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (base, mode) = match s.strip_suffix("+virtual") {
            Some(b) => (b, LabelWordMode::Virtual),
            None => (s, LabelWordMode::Discrete),
        };
        let search = match base {
            "data" => SearchMethod::Data,
            "lm" => SearchMethod::Lm,
            "data_lm" => SearchMethod::DataLm,
            _ => return Err(Error::LabelWords(format!("unknown label-word method {s:?}"))),
        };
        Ok(LabelWordMethod { search, mode })
    }
}

impl fmt::Display for LabelWordMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let base = match self.search {
            SearchMethod::Data => "data",
            SearchMethod::Lm => "lm",
            SearchMethod::DataLm => "data_lm",
        };
        match self.mode {
            LabelWordMode::Discrete => f.write_str(base),
            LabelWordMode::Virtual => write!(f, "{base}+virtual"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SearchConfig {
    pub method: LabelWordMethod,
    pub conflict: ConflictPolicy,
    /// Candidates kept per class before conflict removal, and LM top-k width.
    pub top_k: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            method: LabelWordMethod::default(),
            conflict: ConflictPolicy::default(),
            top_k: 6,
        }
    }
}

/// Ranked, in-vocabulary, conflict-filtered candidates per class (indexed
/// like `label_set`). At most `top_k` words survive per class.
pub fn select_label_words(
    freq: &FrequencyTable,
    label_set: &LabelSet,
    vocab: &Vocabulary,
    cfg: &SearchConfig,
) -> Vec<Vec<String>> {
    label_set
        .classes()
        .iter()
        .map(|class| {
            let ranked = match cfg.method.search {
                SearchMethod::Data => select_data(freq, class, usize::MAX),
                SearchMethod::Lm => select_lm(freq, class, usize::MAX),
                SearchMethod::DataLm => select_combined(freq, class, usize::MAX),
            };
            let top: Vec<String> = ranked
                .into_iter()
                .filter(|w| vocab.word_id(w).is_some())
                .take(cfg.top_k)
                .collect();
            remove_conflicts(&top, class, freq, cfg.conflict.threshold)
        })
        .collect()
}

/// Counts, selects and assembles a label-word map in one go.
pub fn search_label_words(
    model: &TinyMlm,
    vocab: &Vocabulary,
    annotated: &Dataset,
    cfg: &SearchConfig,
) -> Result<(FrequencyTable, LabelWordMap)> {
    let mut freq = count_data_frequencies(annotated);
    if cfg.method.search.needs_lm() {
        freq = freq.merge(count_lm_topk(model, vocab, annotated, cfg.top_k)?);
    }
    let selections = select_label_words(&freq, &annotated.label_set, vocab, cfg);
    let map = build_label_word_map(&annotated.label_set, vocab, &selections, cfg.method.mode, model)?;
    Ok((freq, map))
}
