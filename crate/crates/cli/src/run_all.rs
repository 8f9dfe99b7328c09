//! The full method × K × seed matrix with aggregated results.

use std::fmt::Write as _;
use std::time::Instant;

use anyhow::Result;
use entlm_core::corpus::Example;
use entlm_core::decode::{decode_dataset, Decoder};
use entlm_core::entlm::{finetune_entlm, finetune_tagger};
use entlm_core::eval::{span_f1, RunRecord, SpanF1Report};
use entlm_core::exec::{self, Strategy};
use entlm_core::labelwords::{build_label_word_map, LabelWordMethod};
use entlm_core::pipeline::{lexicon_transitions, mean_std, pretrain, run_search, Benchmark, LabelWordSearch};
use entlm_core::sampler::{sample_kshot, SupportSet};
use entlm_core::tinylm::TinyMlm;
use serde::Serialize;

use crate::commands::load_benchmark;
use crate::config::{DecodeVariant, ExperimentConfig, TAGGER};
use crate::workspace::{self as ws, Workspace};

enum Method {
    Entlm { name: String, method: LabelWordMethod, search: LabelWordSearch },
    Tagger,
}

impl Method {
    fn label(&self, decode: DecodeVariant) -> String {
        match self {
            Method::Entlm { name, .. } => format!("{name}/{}", decode.name()),
            Method::Tagger => TAGGER.to_string(),
        }
    }
}

struct Cell {
    method: usize,
    k_index: usize,
    split: usize,
    seed: u64,
}

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    bench: &'a Benchmark,
    base: &'a TinyMlm,
    decoder: &'a Decoder,
}

fn timed_decode(model: &TinyMlm, f: impl FnOnce() -> Result<SpanF1Report>) -> Result<(SpanF1Report, u64, f64)> {
    let before = model.forward_calls();
    let start = Instant::now();
    let report = f()?;
    Ok((report, model.forward_calls() - before, start.elapsed().as_secs_f64() * 1e3))
}

fn run_cell(ctx: &Context, method: &Method, support: &SupportSet, seed: u64) -> Result<(SpanF1Report, u64, f64)> {
    let bench = ctx.bench;
    let train = entlm_core::tinylm::TrainConfig {
        seed,
        ..ctx.cfg.train.clone()
    };
    let mut model = ctx.base.clone();
    match method {
        Method::Entlm { method, search, .. } => {
            let mut map =
                build_label_word_map(&support.dataset.label_set, &bench.vocab, &search.selections, method.mode, &model)?;
            finetune_entlm(&mut model, &support.dataset, &bench.vocab, &mut map, &train)?;
            timed_decode(&model, || {
                let pred = decode_dataset(&model, &bench.vocab, &map, ctx.decoder, &bench.test, Strategy::Sequential)?;
                Ok(span_f1(&bench.test, &pred)?)
            })
        }
        Method::Tagger => {
            let (head, _) = finetune_tagger(&mut model, &support.dataset, &bench.vocab, &train)?;
            timed_decode(&model, || {
                let examples = bench
                    .test
                    .examples
                    .iter()
                    .map(|ex| {
                        Ok(Example {
                            sentence: ex.sentence.clone(),
                            tags: head.predict(&model, &bench.vocab.encode(&ex.sentence))?,
                        })
                    })
                    .collect::<entlm_core::Result<Vec<_>>>()?;
                Ok(span_f1(&bench.test, &bench.test.with_examples("predicted", examples))?)
            })
        }
    }
}

#[derive(Serialize)]
struct Aggregate<'a> {
    method: &'a str,
    #[serde(rename = "K")]
    k: usize,
    runs: usize,
    #[serde(rename = "P")]
    p: f64,
    #[serde(rename = "P_std")]
    p_std: f64,
    #[serde(rename = "R")]
    r: f64,
    #[serde(rename = "R_std")]
    r_std: f64,
    #[serde(rename = "F1")]
    f1: f64,
    #[serde(rename = "F1_std")]
    f1_std: f64,
}

pub fn run_all(cfg: &ExperimentConfig, w: &Workspace) -> Result<()> {
    let e = &cfg.experiment;
    let bench = load_benchmark(cfg)?;
    eprintln!("pretraining on {} sentences", bench.annotated.len());
    let (base, _) = pretrain(&bench, &cfg.model, &cfg.pretrain)?;

    let mut methods = Vec::new();
    for name in &e.methods {
        methods.push(if name == TAGGER {
            Method::Tagger
        } else {
            let method: LabelWordMethod = name.parse()?;
            let search = run_search(&base, &bench, &cfg.search(method))?;
            Method::Entlm { name: name.clone(), method, search }
        });
    }
    let decoder = match e.decode {
        DecodeVariant::Greedy => Decoder::Greedy,
        DecodeVariant::Viterbi => Decoder::Viterbi(lexicon_transitions(&bench, e.alpha)?),
    };

    let mut supports = Vec::new();
    let mut supports_tsv = String::from("K\tsplit\tseed\tsentences");
    for c in bench.train.label_set.classes() {
        let _ = write!(supports_tsv, "\t{c}");
    }
    supports_tsv.push('\n');
    for &k in &e.k {
        let mut per_split = Vec::new();
        for split in 0..e.splits {
            let seed = e.seed + split as u64;
            let s = sample_kshot(&bench.train, k, seed)?;
            let _ = write!(supports_tsv, "{k}\t{split}\t{seed}\t{}", s.len());
            for n in &s.counts {
                let _ = write!(supports_tsv, "\t{n}");
            }
            supports_tsv.push('\n');
            per_split.push(s);
        }
        supports.push(per_split);
    }

    let mut cells = Vec::new();
    for method in 0..methods.len() {
        for k_index in 0..e.k.len() {
            for split in 0..e.splits {
                for repeat in 0..e.repeats {
                    let seed = e.seed + (split * e.repeats + repeat) as u64;
                    cells.push(Cell { method, k_index, split, seed });
                }
            }
        }
    }
    eprintln!("running {} cells", cells.len());
    let ctx = Context {
        cfg,
        bench: &bench,
        base: &base,
        decoder: &decoder,
    };
    let results = exec::try_map(Strategy::default(), &cells, |c| {
        run_cell(&ctx, &methods[c.method], &supports[c.k_index][c.split], c.seed)
    })?;

    let mut runs = String::new();
    for (c, (report, forwards, millis)) in cells.iter().zip(&results) {
        let record = RunRecord {
            method: methods[c.method].label(e.decode),
            k: e.k[c.k_index],
            seed: c.seed,
            precision: report.precision(),
            recall: report.recall(),
            f1: report.f1(),
            forwards: *forwards,
            millis: *millis,
        };
        runs.push_str(&record.to_json_line());
        runs.push('\n');
    }

    let mut tsv = String::from("method");
    for k in &e.k {
        let _ = write!(tsv, "\tK={k}");
    }
    tsv.push('\n');
    let mut jsonl = String::new();
    for (m, method) in methods.iter().enumerate() {
        let label = method.label(e.decode);
        tsv.push_str(&label);
        for (ki, &k) in e.k.iter().enumerate() {
            let reports: Vec<&SpanF1Report> = cells
                .iter()
                .zip(&results)
                .filter(|(c, _)| c.method == m && c.k_index == ki)
                .map(|(_, r)| &r.0)
                .collect();
            let stat = |f: fn(&SpanF1Report) -> f64| mean_std(&reports.iter().map(|r| f(r)).collect::<Vec<_>>());
            let (p, p_std) = stat(SpanF1Report::precision);
            let (r, r_std) = stat(SpanF1Report::recall);
            let (f1, f1_std) = stat(SpanF1Report::f1);
            let _ = write!(tsv, "\t{:.2}({:.2})", 100.0 * f1, 100.0 * f1_std);
            let agg = Aggregate {
                method: &label,
                k,
                runs: reports.len(),
                p,
                p_std,
                r,
                r_std,
                f1,
                f1_std,
            };
            jsonl.push_str(&serde_json::to_string(&agg)?);
            jsonl.push('\n');
        }
        tsv.push('\n');
    }

    w.write(ws::SUPPORTS_TSV, &supports_tsv)?;
    w.write(ws::RUNS_JSONL, &runs)?;
    w.write(ws::RESULTS_JSONL, &jsonl)?;
    w.write(ws::RESULTS_TSV, &tsv)?;
    print!("{tsv}");
    Ok(())
}
