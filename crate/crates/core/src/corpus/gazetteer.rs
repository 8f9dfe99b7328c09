use std::collections::BTreeMap;

use super::{Dataset, LabelSet, Sentence, Tag, TagSequence};
use crate::{Error, Result};

/// Multi-token surface forms mapped to entity classes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gazetteer {
    label_set: LabelSet,
    entries: BTreeMap<Vec<String>, usize>,
    max_len: usize,
}

impl Gazetteer {
    /// Builds a gazetteer from `(surface form, class)` pairs. Surface forms
    /// are split on whitespace. Classes are collected in first-appearance
    /// order unless `label_set` is given.
    pub fn from_entries<I, S, C>(entries: I, label_set: Option<&LabelSet>) -> Result<Self>
    where
        I: IntoIterator<Item = (S, C)>,
        S: AsRef<str>,
        C: AsRef<str>,
    {
        let pairs: Vec<(Vec<String>, String)> = entries
            .into_iter()
            .map(|(s, c)| {
                (
                    s.as_ref().split_whitespace().map(str::to_string).collect(),
                    c.as_ref().to_string(),
                )
            })
            .collect();
        let label_set = match label_set {
            Some(ls) => ls.clone(),
            None => {
                let mut classes: Vec<String> = Vec::new();
                for (_, c) in &pairs {
                    if !classes.contains(c) {
                        classes.push(c.clone());
                    }
                }
                LabelSet::new(classes)?
            }
        };
        let mut map = BTreeMap::new();
        for (surface, class) in pairs {
            if surface.is_empty() {
                return Err(Error::Gazetteer("empty surface form".into()));
            }
            let idx = label_set
                .index_of(&class)
                .ok_or_else(|| Error::Gazetteer(format!("class {class:?} not in label set")))?;
            if let Some(&prev) = map.get(&surface) {
                if prev != idx {
                    return Err(Error::Gazetteer(format!(
                        "{:?} listed under both {} and {}",
                        surface.join(" "),
                        label_set.name(prev),
                        class
                    )));
                }
            }
            map.insert(surface, idx);
        }
        if map.is_empty() {
            return Err(Error::Gazetteer("no entries".into()));
        }
        let max_len = map.keys().map(Vec::len).max().unwrap_or(0);
        Ok(Gazetteer {
            label_set,
            entries: map,
            max_len,
        })
    }

    /// Parses `surface form<TAB>class` lines. Blank lines are skipped.
    pub fn from_tsv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut cols = line.split('\t');
            let (Some(surface), Some(class), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "expected `surface<TAB>class`".into(),
                });
            };
            if surface.trim().is_empty() || class.trim().is_empty() {
                return Err(Error::Parse {
                    line: i + 1,
                    message: "empty surface form or class".into(),
                });
            }
            pairs.push((surface.to_string(), class.trim().to_string()));
        }
        Gazetteer::from_entries(pairs, None)
    }

    /// Entries grouped by class in label-set order, so that [`from_tsv`]
    /// recovers the same label set.
    ///
    /// [`from_tsv`]: Gazetteer::from_tsv
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for c in 0..self.label_set.len() {
            for s in self.entries_of(c) {
                out.push_str(&format!("{}\t{}\n", s.join(" "), self.label_set.name(c)));
            }
        }
        out
    }

    pub fn label_set(&self) -> &LabelSet {
        &self.label_set
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn lookup(&self, tokens: &[String]) -> Option<usize> {
        self.entries.get(tokens).copied()
    }

    /// Surface forms of one class, in sorted order.
    pub fn entries_of(&self, class: usize) -> Vec<&[String]> {
        self.entries
            .iter()
            .filter(|(_, &c)| c == class)
            .map(|(s, _)| s.as_slice())
            .collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[String], usize)> + '_ {
        self.entries.iter().map(|(s, &c)| (s.as_slice(), c))
    }

    /// Keeps the entries for which `keep` returns true.
    pub fn filtered(&self, mut keep: impl FnMut(&[String], usize) -> bool) -> Result<Gazetteer> {
        let entries: Vec<(String, String)> = self
            .iter()
            .filter(|(s, c)| keep(s, *c))
            .map(|(s, c)| (s.join(" "), self.label_set.name(c).to_string()))
            .collect();
        Gazetteer::from_entries(entries, Some(&self.label_set))
    }

    /// Tags one sentence by leftmost-longest exact matching.
    pub fn tag(&self, sentence: &Sentence) -> TagSequence {
        let tokens = &sentence.tokens;
        let mut tags = vec![Tag::O; tokens.len()];
        let mut i = 0;
        while i < tokens.len() {
            let longest = self.max_len.min(tokens.len() - i);
            let hit = (1..=longest)
                .rev()
                .find_map(|len| self.lookup(&tokens[i..i + len]).map(|c| (len, c)));
            match hit {
                Some((len, class)) => {
                    tags[i..i + len].fill(Tag::I(class));
                    i += len;
                }
                None => i += 1,
            }
        }
        TagSequence(tags)
    }
}

/// Distantly annotates sentences with a gazetteer (leftmost-longest,
/// case-sensitive token matching). Unmatched tokens are `O`.
pub fn annotate_with_gazetteer<'a, I>(sentences: I, gaz: &Gazetteer) -> Dataset
where
    I: IntoIterator<Item = &'a Sentence>,
{
    let mut dataset = Dataset::new("lexicon", gaz.label_set().clone());
    for s in sentences {
        let tags = gaz.tag(s);
        dataset
            .push(s.clone(), tags)
            .expect("gazetteer tags match sentence length and label set");
    }
    dataset
}
