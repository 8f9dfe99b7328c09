use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{LabelSet, Vocabulary, VIRTUAL_SLOTS};
use crate::tinylm::TinyMlm;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelWordMode {
    Discrete,
    Virtual,
}

/// Label word of one class. `token_id` is the vocabulary id the class is
/// scored by: the discrete word's id, or its reserved virtual slot.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassLabel {
    pub class: String,
    /// Filtered candidate words the label was derived from, best first.
    pub words: Vec<String>,
    pub token_id: usize,
    /// Discrete mode only.
    pub label_word: Option<String>,
    /// Virtual mode only; `hidden_dim` long.
    pub vector: Option<Vec<f64>>,
}

/// Mapping from positive classes to label words. `O` is scored by the
/// original token at each position and has no entry.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelWordMap {
    pub mode: LabelWordMode,
    /// Indexed like the label set.
    pub classes: Vec<ClassLabel>,
}

/// Elementwise mean of the `W_lm` rows of `words`.
pub fn build_virtual_prototype(model: &TinyMlm, vocab: &Vocabulary, words: &[String], class: &str) -> Result<Vec<f64>> {
    if words.is_empty() {
        return Err(Error::LabelWords(format!("class {class} has no usable label words")));
    }
    let mut proto = vec![0.0; model.config.hidden_dim];
    for w in words {
        let id = vocab
            .word_id(w)
            .ok_or_else(|| Error::LabelWords(format!("label word {w:?} for {class} is not in the vocabulary")))?;
        for (p, x) in proto.iter_mut().zip(model.params.lm_head.row(id)) {
            *p += x;
        }
    }
    let n = words.len() as f64;
    proto.iter_mut().for_each(|p| *p /= n);
    Ok(proto)
}

/// Assembles the class → label-word map from per-class filtered candidate
/// lists (indexed like `label_set`). Discrete mode gives each class its best
/// in-vocabulary word not already claimed by an earlier class; virtual mode
/// builds prototypes and assigns class `i` to virtual slot `i`.
pub fn build_label_word_map(
    label_set: &LabelSet,
    vocab: &Vocabulary,
    selections: &[Vec<String>],
    mode: LabelWordMode,
    model: &TinyMlm,
) -> Result<LabelWordMap> {
    if selections.len() != label_set.len() {
        return Err(Error::LabelWords(format!(
            "{} selections for {} classes",
            selections.len(),
            label_set.len()
        )));
    }
    let mut classes = Vec::with_capacity(label_set.len());
    match mode {
        LabelWordMode::Discrete => {
            let mut claimed: Vec<usize> = Vec::new();
            for (c, words) in selections.iter().enumerate() {
                let name = label_set.name(c);
                let (word, id) = words
                    .iter()
                    .filter_map(|w| vocab.word_id(w).map(|id| (w, id)))
                    .find(|(_, id)| !claimed.contains(id))
                    .ok_or_else(|| Error::LabelWords(format!("class {name} has no available label word")))?;
                claimed.push(id);
                classes.push(ClassLabel {
                    class: name.to_string(),
                    words: words.clone(),
                    token_id: id,
                    label_word: Some(word.clone()),
                    vector: None,
                });
            }
        }
        LabelWordMode::Virtual => {
            if label_set.len() > VIRTUAL_SLOTS {
                return Err(Error::LabelWords(format!(
                    "{} classes exceed {VIRTUAL_SLOTS} virtual slots",
                    label_set.len()
                )));
            }
            for (c, words) in selections.iter().enumerate() {
                let name = label_set.name(c);
                let usable: Vec<String> = words.iter().filter(|w| vocab.word_id(w).is_some()).cloned().collect();
                let vector = build_virtual_prototype(model, vocab, &usable, name)?;
                classes.push(ClassLabel {
                    class: name.to_string(),
                    words: usable,
                    token_id: Vocabulary::virtual_slot(c),
                    label_word: None,
                    vector: Some(vector),
                });
            }
        }
    }
    Ok(LabelWordMap { mode, classes })
}

#[derive(Serialize, Deserialize)]
struct ClassJson {
    words: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    label_word: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    vector: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct MapJson {
    mode: LabelWordMode,
    classes: BTreeMap<String, ClassJson>,
}

impl LabelWordMap {
    /// Scored token per class, indexed like the label set.
    pub fn token_ids(&self) -> Vec<usize> {
        self.classes.iter().map(|c| c.token_id).collect()
    }

    pub fn token_for(&self, class: usize) -> usize {
        self.classes[class].token_id
    }

    /// Writes the prototypes into their virtual `W_lm` rows. No-op in
    /// discrete mode.
    pub fn install(&self, model: &mut TinyMlm) -> Result<()> {
        for c in &self.classes {
            if let Some(v) = &c.vector {
                if v.len() != model.config.hidden_dim {
                    return Err(Error::LabelWords(format!(
                        "prototype for {} has {} dims, model has {}",
                        c.class,
                        v.len(),
                        model.config.hidden_dim
                    )));
                }
                model
                    .params
                    .lm_head
                    .row_mut(c.token_id)
                    .iter_mut()
                    .zip(v)
                    .for_each(|(dst, &x)| *dst = x);
            }
        }
        Ok(())
    }

    /// Copies the current virtual `W_lm` rows back into the prototypes.
    pub fn refresh_vectors(&mut self, model: &TinyMlm) {
        for c in &mut self.classes {
            if let Some(v) = &mut c.vector {
                *v = model.params.lm_head.row(c.token_id).to_vec();
            }
        }
    }

    /// `{"mode": ..., "classes": {"PER": {"words": [...], "vector": [...]}}}`
    pub fn to_json(&self) -> String {
        let doc = MapJson {
            mode: self.mode,
            classes: self
                .classes
                .iter()
                .map(|c| {
                    (
                        c.class.clone(),
                        ClassJson {
                            words: c.words.clone(),
                            label_word: c.label_word.clone(),
                            vector: c.vector.clone(),
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("label-word map serialises")
    }

    /// Parses a map file and resolves it against a label set and vocabulary.
    pub fn from_json(text: &str, label_set: &LabelSet, vocab: &Vocabulary) -> Result<Self> {
        let mut doc: MapJson = serde_json::from_str(text)?;
        let mut classes = Vec::with_capacity(label_set.len());
        for (c, name) in label_set.classes().iter().enumerate() {
            let entry = doc
                .classes
                .remove(name)
                .ok_or_else(|| Error::LabelWords(format!("map has no entry for class {name}")))?;
            let token_id = match doc.mode {
                LabelWordMode::Discrete => {
                    let w = entry
                        .label_word
                        .as_deref()
                        .ok_or_else(|| Error::LabelWords(format!("class {name} has no label_word")))?;
                    vocab
                        .word_id(w)
                        .ok_or_else(|| Error::LabelWords(format!("label word {w:?} not in vocabulary")))?
                }
                LabelWordMode::Virtual => {
                    if entry.vector.is_none() {
                        return Err(Error::LabelWords(format!("class {name} has no vector")));
                    }
                    Vocabulary::virtual_slot(c)
                }
            };
            classes.push(ClassLabel {
                class: name.clone(),
                words: entry.words,
                token_id,
                label_word: entry.label_word,
                vector: entry.vector,
            });
        }
        if let Some(extra) = doc.classes.keys().next() {
            return Err(Error::LabelWords(format!("map has unknown class {extra}")));
        }
        let map = LabelWordMap { mode: doc.mode, classes };
        let ids = map.token_ids();
        if (1..ids.len()).any(|i| ids[..i].contains(&ids[i])) {
            return Err(Error::LabelWords("two classes share a label word".into()));
        }
        Ok(map)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Sentence;
    use crate::tinylm::{init_model, ModelConfig};

    fn setup() -> (LabelSet, Vocabulary, TinyMlm) {
        let vocab = Vocabulary::build(&[Sentence::new(["John", "Paris", "Mary", "London", "x"])], 1);
        let model = init_model(ModelConfig {
            vocab_size: vocab.len(),
            hidden_dim: 8,
            n_layers: 1,
            n_heads: 2,
            ffn_dim: 8,
            max_seq_len: 8,
            seed: 1,
        })
        .unwrap();
        (LabelSet::new(["PER", "LOC"]).unwrap(), vocab, model)
    }

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn discrete_first_claim() {
        let (ls, vocab, model) = setup();
        let sel = vec![words(&["John", "Mary"]), words(&["John", "Paris"])];
        let m = build_label_word_map(&ls, &vocab, &sel, LabelWordMode::Discrete, &model).unwrap();
        assert_eq!(m.classes[0].label_word.as_deref(), Some("John"));
        assert_eq!(m.classes[1].label_word.as_deref(), Some("Paris"));
        assert_ne!(m.token_for(0), m.token_for(1));
    }

    #[test]
    fn discrete_skips_oov_and_errors_when_exhausted() {
        let (ls, vocab, model) = setup();
        let sel = vec![words(&["Zed", "John"]), words(&["John"])];
        let err = build_label_word_map(&ls, &vocab, &sel, LabelWordMode::Discrete, &model).unwrap_err();
        assert!(err.to_string().contains("LOC"), "{err}");
    }

    #[test]
    fn single_class_singleton() {
        let (_, vocab, model) = setup();
        let ls = LabelSet::new(["PER"]).unwrap();
        let m = build_label_word_map(&ls, &vocab, &[words(&["Mary"])], LabelWordMode::Discrete, &model).unwrap();
        assert_eq!(m.classes.len(), 1);
    }

    #[test]
    fn prototypes_are_row_means() {
        let (ls, vocab, model) = setup();
        let john = vocab.word_id("John").unwrap();
        let mary = vocab.word_id("Mary").unwrap();
        let p1 = build_virtual_prototype(&model, &vocab, &words(&["John"]), "PER").unwrap();
        assert_eq!(p1, model.params.lm_head.row(john).to_vec());
        let p2 = build_virtual_prototype(&model, &vocab, &words(&["John", "Mary"]), "PER").unwrap();
        for (i, v) in p2.iter().enumerate() {
            let want = (model.params.lm_head[[john, i]] + model.params.lm_head[[mary, i]]) / 2.0;
            assert!((v - want).abs() < 1e-15);
        }
        assert!(build_virtual_prototype(&model, &vocab, &[], "PER").is_err());

        let sel = vec![words(&["John", "Mary"]), words(&["Paris"])];
        let m = build_label_word_map(&ls, &vocab, &sel, LabelWordMode::Virtual, &model).unwrap();
        assert_eq!(m.token_ids(), [Vocabulary::virtual_slot(0), Vocabulary::virtual_slot(1)]);
    }

    #[test]
    fn json_round_trip() {
        let (ls, vocab, model) = setup();
        for mode in [LabelWordMode::Discrete, LabelWordMode::Virtual] {
            let sel = vec![words(&["John", "Mary"]), words(&["Paris", "London"])];
            let m = build_label_word_map(&ls, &vocab, &sel, mode, &model).unwrap();
            let json = m.to_json();
            assert!(json.contains("\"mode\""));
            assert_eq!(LabelWordMap::from_json(&json, &ls, &vocab).unwrap(), m);
        }
        assert!(LabelWordMap::from_json(r#"{"mode":"discrete","classes":{}}"#, &ls, &vocab).is_err());
    }

    #[test]
    fn install_writes_virtual_rows() {
        let (ls, vocab, mut model) = setup();
        let sel = vec![words(&["John"]), words(&["Paris"])];
        let m = build_label_word_map(&ls, &vocab, &sel, LabelWordMode::Virtual, &model).unwrap();
        m.install(&mut model).unwrap();
        let john = vocab.word_id("John").unwrap();
        assert_eq!(model.params.lm_head.row(Vocabulary::virtual_slot(0)), model.params.lm_head.row(john));
    }
}
