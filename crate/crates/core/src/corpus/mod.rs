//! Sentences, IO tags, datasets and the files they are read from.

mod conll;
mod gazetteer;
mod synth;
mod vocab;

use std::fmt;

use crate::{Error, Result};

pub use conll::{parse_conll, parse_conll_with, to_conll};
pub use gazetteer::{annotate_with_gazetteer, Gazetteer};
pub use synth::generate_synthetic_corpus;
pub use vocab::{build_vocabulary, Vocabulary, VIRTUAL_SLOTS};

/// Ordered positive entity classes. The `O` class is implicit and always
/// occupies tag index 0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelSet {
    classes: Vec<String>,
}

impl LabelSet {
    pub fn new<I, S>(classes: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let classes: Vec<String> = classes.into_iter().map(Into::into).collect();
        for (i, c) in classes.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::LabelSet("empty class name".into()));
            }
            if c == "O" {
                return Err(Error::LabelSet("O cannot be a positive class".into()));
            }
            if c.chars().any(char::is_whitespace) {
                return Err(Error::LabelSet(format!("class name {c:?} contains whitespace")));
            }
            if classes[..i].contains(c) {
                return Err(Error::LabelSet(format!("duplicate class {c:?}")));
            }
        }
        Ok(LabelSet { classes })
    }

    /// Number of positive classes.
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    /// Number of tags, positive classes plus `O`.
    pub fn num_tags(&self) -> usize {
        self.classes.len() + 1
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn name(&self, class: usize) -> &str {
        &self.classes[class]
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == name)
    }

    /// Formats a tag as `O` or `I-<class>`.
    pub fn tag_name(&self, tag: Tag) -> String {
        match tag {
            Tag::O => "O".to_string(),
            Tag::I(c) => format!("I-{}", self.classes[c]),
        }
    }

    /// Parses `O`, `I-C` or `B-C` (normalised to `I-C`) against this label set.
    pub fn parse_tag(&self, text: &str) -> Option<Tag> {
        let class = tag_class(text)?;
        match class {
            None => Some(Tag::O),
            Some(c) => self.index_of(c).map(Tag::I),
        }
    }
}

/// Splits tag syntax: `Some(None)` for `O`, `Some(Some(class))` for `I-`/`B-`.
pub(crate) fn tag_class(text: &str) -> Option<Option<&str>> {
    if text == "O" {
        return Some(None);
    }
    let class = text.strip_prefix("I-").or_else(|| text.strip_prefix("B-"))?;
    if class.is_empty() || class == "O" {
        return None;
    }
    Some(Some(class))
}

/// An IO tag. Class indices refer to a [`LabelSet`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    O,
    I(usize),
}

impl Tag {
    /// Dense index: `O` is 0, class `c` is `c + 1`.
    pub fn index(self) -> usize {
        match self {
            Tag::O => 0,
            Tag::I(c) => c + 1,
        }
    }

    pub fn from_index(index: usize) -> Tag {
        if index == 0 {
            Tag::O
        } else {
            Tag::I(index - 1)
        }
    }

    pub fn class(self) -> Option<usize> {
        match self {
            Tag::O => None,
            Tag::I(c) => Some(c),
        }
    }

    pub fn is_entity(self) -> bool {
        matches!(self, Tag::I(_))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Sentence {
    pub tokens: Vec<String>,
}

impl Sentence {
    pub fn new<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Sentence {
            tokens: tokens.into_iter().map(Into::into).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

impl fmt::Display for Sentence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.tokens.join(" "))
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct TagSequence(pub Vec<Tag>);

impl TagSequence {
    pub fn all_o(len: usize) -> Self {
        TagSequence(vec![Tag::O; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Tag> + '_ {
        self.0.iter().copied()
    }
}

impl From<Vec<Tag>> for TagSequence {
    fn from(tags: Vec<Tag>) -> Self {
        TagSequence(tags)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Example {
    pub sentence: Sentence,
    pub tags: TagSequence,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub label_set: LabelSet,
    pub examples: Vec<Example>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, label_set: LabelSet) -> Self {
        Dataset {
            name: name.into(),
            label_set,
            examples: Vec::new(),
        }
    }

    /// Adds a pair after checking lengths and tag classes.
    pub fn push(&mut self, sentence: Sentence, tags: TagSequence) -> Result<()> {
        if sentence.len() != tags.len() {
            return Err(Error::Shape(format!(
                "sentence has {} tokens but {} tags",
                sentence.len(),
                tags.len()
            )));
        }
        if let Some(c) = tags.iter().filter_map(Tag::class).find(|&c| c >= self.label_set.len()) {
            return Err(Error::LabelSet(format!("tag class index {c} outside label set")));
        }
        self.examples.push(Example { sentence, tags });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn sentences(&self) -> impl Iterator<Item = &Sentence> + '_ {
        self.examples.iter().map(|e| &e.sentence)
    }

    /// A dataset holding the given subset of examples, label set unchanged.
    pub fn with_examples(&self, name: impl Into<String>, examples: Vec<Example>) -> Dataset {
        Dataset {
            name: name.into(),
            label_set: self.label_set.clone(),
            examples,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_set_rejects_bad_classes() {
        assert!(LabelSet::new(["PER", "PER"]).is_err());
        assert!(LabelSet::new(["O"]).is_err());
        assert!(LabelSet::new([""]).is_err());
        assert!(LabelSet::new(["A B"]).is_err());
        let ls = LabelSet::new(["PER", "LOC"]).unwrap();
        assert_eq!(ls.num_tags(), 3);
        assert_eq!(ls.parse_tag("B-LOC"), Some(Tag::I(1)));
        assert_eq!(ls.parse_tag("I-MISC"), None);
        assert_eq!(ls.tag_name(Tag::I(0)), "I-PER");
    }

    #[test]
    fn tag_index_round_trip() {
        for i in 0..5 {
            assert_eq!(Tag::from_index(i).index(), i);
        }
    }

    #[test]
    fn push_checks_lengths() {
        let mut d = Dataset::new("d", LabelSet::new(["PER"]).unwrap());
        assert!(d.push(Sentence::new(["a"]), TagSequence::all_o(2)).is_err());
        assert!(d.push(Sentence::new(["a"]), TagSequence(vec![Tag::I(3)])).is_err());
        d.push(Sentence::new(["a"]), TagSequence::all_o(1)).unwrap();
        assert_eq!(d.len(), 1);
    }
}
