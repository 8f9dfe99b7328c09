//! Declarative experiment configuration (TOML).

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use entlm_core::labelwords::{ConflictPolicy, LabelWordMethod, SearchConfig};
use entlm_core::pipeline::BenchmarkConfig;
use entlm_core::tinylm::{ModelConfig, PretrainConfig, TrainConfig};
use serde::{Deserialize, Serialize};

/// Method name of the classifier-head baseline; every other method is a
/// label-word method such as `data_lm+virtual`.
pub const TAGGER: &str = "tagger";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DecodeVariant {
    #[default]
    Greedy,
    Viterbi,
}

impl DecodeVariant {
    pub fn name(self) -> &'static str {
        match self {
            DecodeVariant::Greedy => "greedy",
            DecodeVariant::Viterbi => "viterbi",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Unlabeled corpus, one whitespace-tokenised sentence per line.
    pub corpus: Option<PathBuf>,
    /// Gazetteer TSV; the packaged one when absent.
    pub gazetteer: Option<PathBuf>,
    /// Gold CoNLL splits; synthetic when absent.
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Experiment {
    pub k: Vec<usize>,
    /// Support sets sampled per K.
    pub splits: usize,
    /// Fine-tuning runs per support set.
    pub repeats: usize,
    pub seed: u64,
    pub methods: Vec<String>,
    pub th: f64,
    pub topk: usize,
    pub decode: DecodeVariant,
    /// Add-alpha smoothing of the transition estimate.
    pub alpha: f64,
}

impl Default for Experiment {
    fn default() -> Self {
        Experiment {
            k: vec![5, 10, 20, 50],
            splits: 3,
            repeats: 4,
            seed: 0,
            methods: vec!["data_lm+virtual".into()],
            th: 0.6,
            topk: 6,
            decode: DecodeVariant::Greedy,
            alpha: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub paths: Paths,
    pub benchmark: BenchmarkConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub experiment: Experiment,
}

/// Per-command overrides shared by every subcommand.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// K values, comma separated.
    #[arg(long = "K", global = true, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// Sampling seed, and base seed of fine-tuning runs.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Label-word method (data, lm, data_lm, with optional +virtual) or tagger.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Conflict-removal threshold.
    #[arg(long, global = true)]
    pub th: Option<f64>,
    /// Label-word candidates per class and LM top-k width.
    #[arg(long, global = true)]
    pub topk: Option<usize>,
    /// Fine-tuning epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Fine-tuning learning rate.
    #[arg(long, global = true)]
    pub lr: Option<f64>,
    #[arg(long, global = true, value_enum)]
    pub decode: Option<DecodeVariant>,
}

impl ExperimentConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(ExperimentConfig::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        let e = &mut self.experiment;
        if let Some(k) = &o.k {
            e.k = k.clone();
        }
        if let Some(s) = o.seed {
            e.seed = s;
        }
        if let Some(m) = &o.method {
            e.methods = vec![m.clone()];
        }
        if let Some(th) = o.th {
            e.th = th;
        }
        if let Some(k) = o.topk {
            e.topk = k;
        }
        if let Some(d) = o.decode {
            e.decode = d;
        }
        if let Some(n) = o.epochs {
            self.train.epochs = n;
        }
        if let Some(lr) = o.lr {
            self.train.learning_rate = lr;
        }
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        if e.k.is_empty() {
            bail!("experiment.k is empty");
        }
        if e.splits == 0 || e.repeats == 0 {
            bail!("experiment.splits and experiment.repeats must be at least 1");
        }
        if e.methods.is_empty() {
            bail!("experiment.methods is empty");
        }
        for m in &e.methods {
            if m != TAGGER {
                m.parse::<LabelWordMethod>()?;
            }
        }
        ConflictPolicy::new(e.th)?;
        if e.topk == 0 {
            bail!("experiment.topk must be at least 1");
        }
        if !(e.alpha >= 0.0 && e.alpha.is_finite()) {
            bail!("experiment.alpha must be a finite non-negative number");
        }
        if self.train.learning_rate.is_nan() || self.train.learning_rate <= 0.0 || self.train.batch_size == 0 {
            bail!("train.learning_rate must be positive and train.batch_size at least 1");
        }
        let p = &self.paths;
        for (key, path) in [("corpus", &p.corpus), ("gazetteer", &p.gazetteer), ("train", &p.train), ("test", &p.test)] {
            if let Some(path) = path {
                if !path.is_file() {
                    bail!("paths.{key}: {} does not exist", path.display());
                }
            }
        }
        Ok(())
    }

    /// The first configured method; single-run commands use only this one.
    pub fn method(&self) -> &str {
        &self.experiment.methods[0]
    }

    pub fn search(&self, method: LabelWordMethod) -> SearchConfig {
        SearchConfig {
            method,
            conflict: ConflictPolicy { threshold: self.experiment.th },
            top_k: self.experiment.topk,
        }
    }
}
