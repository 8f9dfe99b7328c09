use anyhow::{anyhow, bail, Context, Result};
use entlm_core::corpus::{annotate_with_gazetteer, Dataset, Example, Vocabulary};
use entlm_core::decode::{decode_dataset, estimate_transitions, Decoder, TransitionMatrix};
use entlm_core::entlm::{finetune_entlm, finetune_tagger, TaggerHead};
use entlm_core::eval::{bench_decoding, span_f1};
use entlm_core::exec::{self, Strategy};
use entlm_core::labelwords::{build_label_word_map, LabelWordMap, LabelWordMethod};
use entlm_core::pipeline::{build_benchmark, encode_corpus, run_search, Benchmark};
use entlm_core::sampler::sample_kshot;
use entlm_core::tinylm::{mlm_pretrain, Checkpoint, ModelConfig, TinyMlm, TrainConfig};

use crate::config::{DecodeVariant, ExperimentConfig, TAGGER};
use crate::workspace::{self as ws, load_gazetteer, parse_sentences, read_conll, sentences_to_text, Workspace};

const TAGGER_WEIGHT: &str = "tagger.weight";
const TAGGER_BIAS: &str = "tagger.bias";

/// Synthetic benchmark with any configured corpus files swapped in.
pub fn load_benchmark(cfg: &ExperimentConfig) -> Result<Benchmark> {
    let gaz = load_gazetteer(cfg.paths.gazetteer.as_deref())?;
    let mut bench = build_benchmark(&gaz, &cfg.benchmark)?;
    let labels = gaz.label_set().clone();
    if let Some(p) = &cfg.paths.corpus {
        let sentences = parse_sentences(&ws::read_file(p)?);
        bench.annotated = annotate_with_gazetteer(sentences.iter(), &bench.lexicon);
        bench.vocab = Vocabulary::build(sentences.iter(), cfg.benchmark.min_count);
    }
    if let Some(p) = &cfg.paths.train {
        bench.train = read_conll(p, &labels)?;
    }
    if let Some(p) = &cfg.paths.test {
        bench.test = read_conll(p, &labels)?;
    }
    Ok(bench)
}

pub fn generate(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let bench = load_benchmark(cfg)?;
    w.write(ws::GAZETTEER, bench.gazetteer.to_tsv())?;
    w.write(ws::LEXICON, bench.lexicon.to_tsv())?;
    w.write(ws::UNLABELED, sentences_to_text(bench.annotated.sentences()))?;
    w.write_conll(ws::TRAIN, &bench.train)?;
    w.write_conll(ws::TEST, &bench.test)?;
    eprintln!(
        "generated {} unlabeled, {} train, {} test sentences; lexicon {} of {} entries",
        bench.annotated.len(),
        bench.train.len(),
        bench.test.len(),
        bench.lexicon.len(),
        bench.gazetteer.len()
    );
    Ok(())
}

pub fn annotate(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let lexicon = w.lexicon()?;
    let text = match &cfg.paths.corpus {
        Some(p) => ws::read_file(p)?,
        None => w.read(ws::UNLABELED)?,
    };
    let sentences = parse_sentences(&text);
    let annotated = annotate_with_gazetteer(sentences.iter(), &lexicon);
    let vocab = Vocabulary::build(sentences.iter(), cfg.benchmark.min_count);
    w.write_conll(ws::ANNOTATED, &annotated)?;
    w.write(ws::VOCAB, vocab.to_text())?;
    eprintln!("annotated {} sentences; vocabulary of {}", annotated.len(), vocab.len());
    Ok(())
}

pub fn pretrain(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let vocab = w.vocab()?;
    let annotated = w.conll(ws::ANNOTATED, &w.label_set()?)?;
    let mut model = TinyMlm::new(ModelConfig {
        vocab_size: vocab.len(),
        ..cfg.model.clone()
    })?;
    let losses = mlm_pretrain(&mut model, &encode_corpus(&vocab, annotated.sentences()), &cfg.pretrain)?;
    Checkpoint::new(model).save(w.path(ws::PRETRAINED))?;
    if let (Some(first), Some(last)) = (losses.first(), losses.last()) {
        eprintln!("pretrained {} steps; loss {first:.4} -> {last:.4}", losses.len());
    }
    Ok(())
}

fn pretrained(w: &Workspace, vocab: &Vocabulary) -> Result<TinyMlm> {
    Ok(Checkpoint::load_for_vocab(w.path(ws::PRETRAINED), vocab.len())?.model)
}

fn label_word_method(cfg: &ExperimentConfig) -> Result<LabelWordMethod> {
    let m = cfg.method();
    if m == TAGGER {
        bail!("method {TAGGER} has no label words");
    }
    Ok(m.parse()?)
}

fn local_benchmark(w: &Workspace, vocab: Vocabulary) -> Result<Benchmark> {
    let lexicon = w.lexicon()?;
    let annotated = w.conll(ws::ANNOTATED, lexicon.label_set())?;
    let empty = Dataset::new("", lexicon.label_set().clone());
    Ok(Benchmark {
        gazetteer: lexicon.clone(),
        lexicon,
        annotated,
        train: empty.clone(),
        test: empty,
        vocab,
    })
}

pub fn select(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let method = label_word_method(cfg)?;
    let vocab = w.vocab()?;
    let model = pretrained(w, &vocab)?;
    let bench = local_benchmark(w, vocab)?;
    let search = run_search(&model, &bench, &cfg.search(method))?;
    let map = build_label_word_map(&bench.annotated.label_set, &bench.vocab, &search.selections, method.mode, &model)?;
    w.write(ws::FREQUENCIES, search.freq.to_tsv())?;
    w.write(ws::LABEL_WORDS, map.to_json())?;
    for c in &map.classes {
        eprintln!("{}\t{}", c.class, c.words.join(" "));
    }
    Ok(())
}

pub fn sample(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let train = w.conll(ws::TRAIN, &w.label_set()?)?;
    let k = match cfg.experiment.k.as_slice() {
        [k] => *k,
        ks => bail!("sample takes a single K, got {ks:?}"),
    };
    let support = sample_kshot(&train, k, cfg.experiment.seed)?;
    w.write_conll(ws::SUPPORT, &support.dataset)?;
    let counts: Vec<String> = train
        .label_set
        .classes()
        .iter()
        .zip(&support.counts)
        .map(|(c, n)| format!("{c}={n}"))
        .collect();
    println!("K={k} seed={} sentences={} {}", cfg.experiment.seed, support.len(), counts.join(" "));
    Ok(())
}

fn train_config(cfg: &ExperimentConfig, seed: u64) -> TrainConfig {
    TrainConfig { seed, ..cfg.train.clone() }
}

pub fn finetune(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let vocab = w.vocab()?;
    let labels = w.label_set()?;
    let support = w.conll(ws::SUPPORT, &labels)?;
    let mut model = pretrained(w, &vocab)?;
    let train = train_config(cfg, cfg.experiment.seed);
    let (ck, report) = if cfg.method() == TAGGER {
        let (head, report) = finetune_tagger(&mut model, &support, &vocab, &train)?;
        let mut ck = Checkpoint::new(model);
        ck.extras = vec![(TAGGER_WEIGHT.into(), head.weight), (TAGGER_BIAS.into(), head.bias)];
        (ck, report)
    } else {
        let mut map = LabelWordMap::from_json(&w.read(ws::LABEL_WORDS)?, &labels, &vocab)?;
        let report = finetune_entlm(&mut model, &support, &vocab, &mut map, &train)?;
        let mut ck = Checkpoint::new(model);
        ck.label_words = Some(map.to_json());
        (ck, report)
    };
    ck.save(w.path(ws::FINETUNED))?;
    eprintln!(
        "fine-tuned {} steps on {} sentences; loss {:.4} -> {:.4}",
        report.steps,
        support.len(),
        report.initial_loss,
        report.final_loss
    );
    Ok(())
}

enum Tagger {
    Entlm(TinyMlm, LabelWordMap),
    Head(TinyMlm, TaggerHead),
}

fn finetuned(w: &Workspace, vocab: &Vocabulary) -> Result<Tagger> {
    let ck = Checkpoint::load_for_vocab(w.path(ws::FINETUNED), vocab.len())?;
    if let (Some(weight), Some(bias)) = (ck.extra(TAGGER_WEIGHT), ck.extra(TAGGER_BIAS)) {
        let head = TaggerHead {
            weight: weight.clone(),
            bias: bias.clone(),
        };
        return Ok(Tagger::Head(ck.model, head));
    }
    let json = ck
        .label_words
        .as_deref()
        .ok_or_else(|| anyhow!("{} has neither a label-word map nor a tagger head", ws::FINETUNED))?;
    let map = LabelWordMap::from_json(json, &w.label_set()?, vocab)?;
    Ok(Tagger::Entlm(ck.model, map))
}

fn transitions(cfg: &ExperimentConfig, w: &Workspace) -> Result<TransitionMatrix> {
    let annotated = w.conll(ws::ANNOTATED, &w.label_set()?)?;
    Ok(estimate_transitions(&annotated, cfg.experiment.alpha)?)
}

pub fn decode(cfg: &ExperimentConfig, w: &Workspace, input: Option<&std::path::Path>) -> Result<()> {
    let vocab = w.vocab()?;
    let labels = w.label_set()?;
    let data = match input {
        Some(p) => read_conll(p, &labels)?,
        None => w.conll(ws::TEST, &labels)?,
    };
    let pred = match finetuned(w, &vocab)? {
        Tagger::Entlm(model, map) => {
            let decoder = match cfg.experiment.decode {
                DecodeVariant::Greedy => Decoder::Greedy,
                DecodeVariant::Viterbi => Decoder::Viterbi(transitions(cfg, w)?),
            };
            decode_dataset(&model, &vocab, &map, &decoder, &data, Strategy::default())?
        }
        Tagger::Head(model, head) => {
            if cfg.experiment.decode == DecodeVariant::Viterbi {
                bail!("viterbi decoding needs a label-word model, not a tagger head");
            }
            let examples = exec::try_map(Strategy::default(), &data.examples, |ex| {
                Ok::<_, entlm_core::Error>(Example {
                    sentence: ex.sentence.clone(),
                    tags: head.predict(&model, &vocab.encode(&ex.sentence))?,
                })
            })?;
            data.with_examples("predicted", examples)
        }
    };
    w.write_conll(ws::PREDICTIONS, &pred)?;
    eprintln!("decoded {} sentences", pred.len());
    Ok(())
}

pub fn eval(w: &Workspace, gold: Option<&std::path::Path>, pred: Option<&std::path::Path>) -> Result<()> {
    let labels = w.label_set()?;
    let gold = match gold {
        Some(p) => read_conll(p, &labels)?,
        None => w.conll(ws::TEST, &labels)?,
    };
    let pred = match pred {
        Some(p) => read_conll(p, &labels)?,
        None => w.conll(ws::PREDICTIONS, &labels)?,
    };
    let report = span_f1(&gold, &pred)?;
    let mut json = serde_json::to_string_pretty(&report)?;
    json.push('\n');
    w.write(ws::METRICS, &json)?;
    println!("P={:.4} R={:.4} F1={:.4}", report.precision(), report.recall(), report.f1());
    Ok(())
}

pub fn bench(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let vocab = w.vocab()?;
    let test = w.conll(ws::TEST, &w.label_set()?)?;
    let Tagger::Entlm(model, map) = finetuned(w, &vocab)? else {
        bail!("bench needs a label-word model, not a tagger head");
    };
    let trans = transitions(cfg, w).context("bench estimates transitions from the annotated corpus")?;
    let report = bench_decoding(&model, &vocab, &test, &map, Some(&trans))?;
    let table = report.to_table();
    w.write(ws::COST, &table)?;
    let mut json = serde_json::to_string(&report)?;
    json.push('\n');
    w.write(ws::COST_JSON, json)?;
    print!("{table}");
    Ok(())
}
