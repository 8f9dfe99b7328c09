use std::collections::{BTreeMap, HashMap};

use super::{Dataset, Sentence};
use crate::{Error, Result};

/// Number of reserved rows for virtual label words.
pub const VIRTUAL_SLOTS: usize = 16;

const PAD: &str = "[PAD]";
const UNK: &str = "[UNK]";
const MASK: &str = "[MASK]";

/// Token ↔ id bijection. Ids `0..first_word_id()` are reserved:
/// PAD, UNK, MASK, then [`VIRTUAL_SLOTS`] virtual label-word slots.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub const PAD: usize = 0;
    pub const UNK: usize = 1;
    pub const MASK: usize = 2;
    pub const FIRST_VIRTUAL: usize = 3;

    fn reserved() -> Vec<String> {
        let mut tokens = vec![PAD.to_string(), UNK.to_string(), MASK.to_string()];
        tokens.extend((0..VIRTUAL_SLOTS).map(|i| format!("[VIRTUAL{i}]")));
        tokens
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    /// Counts tokens over `sentences`; tokens seen at least `min_count` times
    /// get ids ordered by frequency (descending) then lexicographically.
    pub fn build<'a, I>(sentences: I, min_count: usize) -> Self
    where
        I: IntoIterator<Item = &'a Sentence>,
    {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for s in sentences {
            for t in &s.tokens {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let reserved = Self::reserved();
        let mut words: Vec<(&str, usize)> = counts
            .into_iter()
            .filter(|&(w, c)| c >= min_count.max(1) && !reserved.iter().any(|r| r == w))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        let mut tokens = reserved;
        tokens.extend(words.into_iter().map(|(w, _)| w.to_string()));
        Self::from_tokens(tokens)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn first_word_id() -> usize {
        Self::FIRST_VIRTUAL + VIRTUAL_SLOTS
    }

    /// Number of non-reserved tokens.
    pub fn num_words(&self) -> usize {
        self.len() - Self::first_word_id()
    }

    pub fn is_reserved(id: usize) -> bool {
        id < Self::first_word_id()
    }

    pub fn virtual_slot(slot: usize) -> usize {
        assert!(slot < VIRTUAL_SLOTS, "virtual slot {slot} out of range");
        Self::FIRST_VIRTUAL + slot
    }

    /// Id of a corpus word; reserved names are not considered words.
    pub fn word_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied().filter(|&id| !Self::is_reserved(id))
    }

    pub fn id_or_unk(&self, token: &str) -> usize {
        self.word_id(token).unwrap_or(Self::UNK)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn encode(&self, sentence: &Sentence) -> Vec<usize> {
        sentence.tokens.iter().map(|t| self.id_or_unk(t)).collect()
    }

    /// One token per line; the line number is the id.
    pub fn to_text(&self) -> String {
        let mut out = self.tokens.join("\n");
        out.push('\n');
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let tokens: Vec<String> = text.lines().map(str::to_string).collect();
        let reserved = Self::reserved();
        if tokens.len() < reserved.len() || tokens[..reserved.len()] != reserved[..] {
            return Err(Error::Parse {
                line: 1,
                message: "vocabulary does not start with the reserved block".into(),
            });
        }
        let vocab = Self::from_tokens(tokens);
        if vocab.index.len() != vocab.tokens.len() {
            return Err(Error::Parse {
                line: 1,
                message: "duplicate token in vocabulary".into(),
            });
        }
        Ok(vocab)
    }
}

/// Builds one vocabulary over every sentence of `datasets`.
pub fn build_vocabulary(datasets: &[&Dataset], min_count: usize) -> Vocabulary {
    Vocabulary::build(datasets.iter().flat_map(|d| d.sentences()), min_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sents(lines: &[&str]) -> Vec<Sentence> {
        lines.iter().map(|l| Sentence::new(l.split_whitespace())).collect()
    }

    #[test]
    fn min_count_filters() {
        let s = sents(&["a a a b"]);
        let v = Vocabulary::build(&s, 2);
        assert!(v.word_id("a").is_some());
        assert!(v.word_id("b").is_none());
        assert_eq!(v.id_or_unk("b"), Vocabulary::UNK);
    }

    #[test]
    fn empty_corpus_has_reserved_only() {
        let v = Vocabulary::build(&[], 1);
        assert_eq!(v.len(), Vocabulary::first_word_id());
        assert_eq!(v.num_words(), 0);
    }

    #[test]
    fn lexicographic_tie_break() {
        let v = Vocabulary::build(&sents(&["b a b a c"]), 1);
        assert!(v.word_id("a").unwrap() < v.word_id("b").unwrap());
        assert!(v.word_id("b").unwrap() < v.word_id("c").unwrap());
    }

    #[test]
    fn reserved_names_are_not_words() {
        let v = Vocabulary::build(&sents(&["[MASK] x"]), 1);
        assert_eq!(v.word_id("[MASK]"), None);
        assert_eq!(v.num_words(), 1);
    }

    #[test]
    fn text_round_trip() {
        let v = Vocabulary::build(&sents(&["x y z y"]), 1);
        assert_eq!(Vocabulary::from_text(&v.to_text()).unwrap(), v);
        assert!(Vocabulary::from_text("x\ny\n").is_err());
    }
}
