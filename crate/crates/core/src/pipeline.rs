//! End-to-end experiment plumbing over the packaged synthetic benchmark:
//! corpus splits, the noisy lexicon, pretraining and single experiment
//! cells.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{annotate_with_gazetteer, generate_synthetic_corpus, Dataset, Gazetteer, Vocabulary};
use crate::decode::{decode_dataset, estimate_transitions, Decoder, TransitionMatrix};
use crate::entlm::{finetune_entlm, finetune_tagger, FinetuneReport};
use crate::eval::{span_f1, SpanF1Report};
use crate::exec::{self, Strategy};
use crate::labelwords::{
    build_label_word_map, count_data_frequencies, count_lm_topk, select_label_words, FrequencyTable, LabelWordMap,
    SearchConfig,
};
use crate::tinylm::{mlm_pretrain, ModelConfig, PretrainConfig, TinyMlm, TrainConfig};
use crate::{Error, Result};

/// Three-class gazetteer (PER, LOC, ORG) shipped with the crate.
pub const PACKAGED_GAZETTEER: &str = include_str!("../data/gazetteer.tsv");

pub fn packaged_gazetteer() -> Gazetteer {
    Gazetteer::from_tsv(PACKAGED_GAZETTEER).expect("packaged gazetteer parses")
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub seed: u64,
    pub unlabeled_sentences: usize,
    pub train_sentences: usize,
    pub test_sentences: usize,
    /// Fraction of gazetteer entries that make it into the lexicon.
    pub lexicon_coverage: f64,
    pub min_count: usize,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seed: 0,
            unlabeled_sentences: 5000,
            train_sentences: 1000,
            test_sentences: 500,
            lexicon_coverage: 0.7,
            min_count: 1,
        }
    }
}

/// All corpora of one benchmark instance. `annotated` is the unlabeled
/// corpus tagged by the lexicon; `train` and `test` carry gold tags.
#[derive(Clone, Debug)]
pub struct Benchmark {
    pub gazetteer: Gazetteer,
    pub lexicon: Gazetteer,
    pub annotated: Dataset,
    pub train: Dataset,
    pub test: Dataset,
    pub vocab: Vocabulary,
}

/// Keeps each entry with probability `coverage`, but at least one per class.
pub fn noisy_lexicon(gaz: &Gazetteer, coverage: f64, seed: u64) -> Result<Gazetteer> {
    if !(0.0..=1.0).contains(&coverage) {
        return Err(Error::Config(format!("lexicon coverage {coverage} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x1e71_c0de);
    let mut seen = vec![false; gaz.label_set().len()];
    gaz.filtered(|_, class| {
        let keep = rng.random_bool(coverage) || !seen[class];
        seen[class] |= keep;
        keep
    })
}

pub fn build_benchmark(gaz: &Gazetteer, cfg: &BenchmarkConfig) -> Result<Benchmark> {
    let unlabeled = generate_synthetic_corpus(gaz, cfg.seed, cfg.unlabeled_sentences)?;
    let mut train = generate_synthetic_corpus(gaz, cfg.seed.wrapping_add(1), cfg.train_sentences)?;
    let mut test = generate_synthetic_corpus(gaz, cfg.seed.wrapping_add(2), cfg.test_sentences)?;
    train.name = "train".into();
    test.name = "test".into();
    let lexicon = noisy_lexicon(gaz, cfg.lexicon_coverage, cfg.seed)?;
    let annotated = annotate_with_gazetteer(unlabeled.sentences(), &lexicon);
    let vocab = Vocabulary::build(unlabeled.sentences(), cfg.min_count);
    Ok(Benchmark {
        gazetteer: gaz.clone(),
        lexicon,
        annotated,
        train,
        test,
        vocab,
    })
}

pub fn encode_corpus<'a>(vocab: &Vocabulary, sentences: impl IntoIterator<Item = &'a crate::corpus::Sentence>) -> Vec<Vec<usize>> {
    sentences.into_iter().map(|s| vocab.encode(s)).collect()
}

/// Fresh model sized for `bench`, MLM-pretrained on the unlabeled corpus.
pub fn pretrain(bench: &Benchmark, model: &ModelConfig, cfg: &PretrainConfig) -> Result<(TinyMlm, Vec<f64>)> {
    let mut lm = TinyMlm::new(ModelConfig {
        vocab_size: bench.vocab.len(),
        ..model.clone()
    })?;
    let losses = mlm_pretrain(&mut lm, &encode_corpus(&bench.vocab, bench.annotated.sentences()), cfg)?;
    Ok((lm, losses))
}

/// Frequency table and per-class label-word selections computed once per
/// model, independent of the support set.
#[derive(Clone, Debug)]
pub struct LabelWordSearch {
    pub freq: FrequencyTable,
    pub selections: Vec<Vec<String>>,
}

pub fn run_search(model: &TinyMlm, bench: &Benchmark, cfg: &SearchConfig) -> Result<LabelWordSearch> {
    let mut freq = count_data_frequencies(&bench.annotated);
    if cfg.method.search.needs_lm() {
        freq = freq.merge(count_lm_topk(model, &bench.vocab, &bench.annotated, cfg.top_k)?);
    }
    let selections = select_label_words(&freq, &bench.annotated.label_set, &bench.vocab, cfg);
    Ok(LabelWordSearch { freq, selections })
}

/// Transitions estimated from the lexicon-annotated corpus.
pub fn lexicon_transitions(bench: &Benchmark, alpha: f64) -> Result<TransitionMatrix> {
    estimate_transitions(&bench.annotated, alpha)
}

#[derive(Clone, Debug)]
pub struct EntlmOutcome {
    pub model: TinyMlm,
    pub map: LabelWordMap,
    pub finetune: FinetuneReport,
    pub greedy: SpanF1Report,
    pub viterbi: Option<SpanF1Report>,
}

/// Fine-tunes a copy of `base` with EntLM on `support` and scores it on the
/// test split with greedy and, when `trans` is given, Viterbi decoding.
pub fn run_entlm(
    base: &TinyMlm,
    bench: &Benchmark,
    search: &LabelWordSearch,
    mode: crate::labelwords::LabelWordMode,
    support: &Dataset,
    train: &TrainConfig,
    trans: Option<&TransitionMatrix>,
) -> Result<EntlmOutcome> {
    let mut model = base.clone();
    let mut map = build_label_word_map(&support.label_set, &bench.vocab, &search.selections, mode, &model)?;
    let finetune = finetune_entlm(&mut model, support, &bench.vocab, &mut map, train)?;
    let score = |decoder: &Decoder| -> Result<SpanF1Report> {
        let pred = decode_dataset(&model, &bench.vocab, &map, decoder, &bench.test, Strategy::default())?;
        span_f1(&bench.test, &pred)
    };
    let greedy = score(&Decoder::Greedy)?;
    let viterbi = trans.map(|t| score(&Decoder::Viterbi(t.clone()))).transpose()?;
    Ok(EntlmOutcome {
        model,
        map,
        finetune,
        greedy,
        viterbi,
    })
}

#[derive(Clone, Debug)]
pub struct TaggerOutcome {
    pub finetune: FinetuneReport,
    pub report: SpanF1Report,
}

/// Classifier-head baseline on the same support set and test split.
pub fn run_tagger(base: &TinyMlm, bench: &Benchmark, support: &Dataset, train: &TrainConfig) -> Result<TaggerOutcome> {
    let mut model = base.clone();
    let (head, finetune) = finetune_tagger(&mut model, support, &bench.vocab, train)?;
    let examples = exec::try_map(Strategy::default(), &bench.test.examples, |ex| {
        Ok::<_, Error>(crate::corpus::Example {
            sentence: ex.sentence.clone(),
            tags: head.predict(&model, &bench.vocab.encode(&ex.sentence))?,
        })
    })?;
    let pred = bench.test.with_examples("predicted", examples);
    Ok(TaggerOutcome {
        finetune,
        report: span_f1(&bench.test, &pred)?,
    })
}

/// Sample mean and sample standard deviation (zero for fewer than two
/// values).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}
