//! Artifact files under the output root and their readers and writers.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use entlm_core::corpus::{parse_conll_with, to_conll, Dataset, Gazetteer, LabelSet, Sentence, Vocabulary};
use entlm_core::pipeline::packaged_gazetteer;

pub const GAZETTEER: &str = "gazetteer.tsv";
pub const LEXICON: &str = "lexicon.tsv";
pub const UNLABELED: &str = "unlabeled.txt";
pub const TRAIN: &str = "train.conll";
pub const TEST: &str = "test.conll";
pub const ANNOTATED: &str = "annotated.conll";
pub const VOCAB: &str = "vocab.txt";
pub const PRETRAINED: &str = "pretrained.ckpt";
pub const FREQUENCIES: &str = "frequencies.tsv";
pub const LABEL_WORDS: &str = "labelwords.json";
pub const SUPPORT: &str = "support.conll";
pub const FINETUNED: &str = "finetuned.ckpt";
pub const PREDICTIONS: &str = "predictions.conll";
pub const METRICS: &str = "metrics.json";
pub const COST: &str = "cost.tsv";
pub const COST_JSON: &str = "cost.json";
pub const RESULTS_TSV: &str = "results.tsv";
pub const RESULTS_JSONL: &str = "results.jsonl";
pub const RUNS_JSONL: &str = "runs.jsonl";
pub const SUPPORTS_TSV: &str = "supports.tsv";

pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&root).with_context(|| format!("creating output root {}", root.display()))?;
        Ok(Workspace { root })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn read(&self, name: &str) -> Result<String> {
        read_file(&self.path(name))
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))
    }

    pub fn lexicon(&self) -> Result<Gazetteer> {
        Ok(Gazetteer::from_tsv(&self.read(LEXICON)?)?)
    }

    /// Label set of the run, taken from the lexicon.
    pub fn label_set(&self) -> Result<LabelSet> {
        Ok(self.lexicon()?.label_set().clone())
    }

    pub fn vocab(&self) -> Result<Vocabulary> {
        Ok(Vocabulary::from_text(&self.read(VOCAB)?)?)
    }

    pub fn conll(&self, name: &str, labels: &LabelSet) -> Result<Dataset> {
        read_conll(&self.path(name), labels)
    }

    pub fn write_conll(&self, name: &str, dataset: &Dataset) -> Result<()> {
        self.write(name, to_conll(dataset))
    }
}

pub fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn read_conll(path: &Path, labels: &LabelSet) -> Result<Dataset> {
    let mut d = parse_conll_with(&read_file(path)?, labels).with_context(|| format!("parsing {}", path.display()))?;
    d.name = path.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    Ok(d)
}

pub fn load_gazetteer(path: Option<&Path>) -> Result<Gazetteer> {
    match path {
        Some(p) => Gazetteer::from_tsv(&read_file(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(packaged_gazetteer()),
    }
}

pub fn parse_sentences(text: &str) -> Vec<Sentence> {
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>())
        .filter(|t| !t.is_empty())
        .map(Sentence::new)
        .collect()
}

pub fn sentences_to_text<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&s.tokens.join(" "));
        out.push('\n');
    }
    out
}
