//! Exact-match span F1 and the decoding cost harness.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::time::Instant;

use serde::Serialize;

use crate::corpus::{Dataset, Vocabulary};
use crate::decode::{decode_greedy, extract_spans, label_distribution, viterbi_decode, EntitySpan, TransitionMatrix};
use crate::labelwords::LabelWordMap;
use crate::tinylm::TinyMlm;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl Counts {
    fn new(tp: usize, fp: usize, fn_: usize) -> Self {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Counts {
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct SpanF1Report {
    #[serde(flatten)]
    pub micro: Counts,
    pub per_class: BTreeMap<String, Counts>,
}

impl SpanF1Report {
    pub fn precision(&self) -> f64 {
        self.micro.precision
    }

    pub fn recall(&self) -> f64 {
        self.micro.recall
    }

    pub fn f1(&self) -> f64 {
        self.micro.f1
    }
}

/// Micro-averaged and per-class span scores. A predicted span is a true
/// positive iff start, end and class all match a gold span.
pub fn span_f1(gold: &Dataset, predicted: &Dataset) -> Result<SpanF1Report> {
    if gold.len() != predicted.len() {
        return Err(Error::Eval(format!(
            "gold has {} sentences, predictions have {}",
            gold.len(),
            predicted.len()
        )));
    }
    if gold.label_set != predicted.label_set {
        return Err(Error::Eval("gold and predictions use different label sets".into()));
    }
    let classes = gold.label_set.len();
    let mut per = vec![(0usize, 0usize, 0usize); classes];
    for (i, (g, p)) in gold.examples.iter().zip(&predicted.examples).enumerate() {
        if g.sentence != p.sentence {
            return Err(Error::Eval(format!("sentence {i} differs between gold and predictions")));
        }
        let gs: BTreeSet<EntitySpan> = extract_spans(&g.tags).into_iter().collect();
        let ps: BTreeSet<EntitySpan> = extract_spans(&p.tags).into_iter().collect();
        for s in &ps {
            if gs.contains(s) {
                per[s.class].0 += 1;
            } else {
                per[s.class].1 += 1;
            }
        }
        for s in gs.difference(&ps) {
            per[s.class].2 += 1;
        }
    }
    let (tp, fp, fn_) = per.iter().fold((0, 0, 0), |a, c| (a.0 + c.0, a.1 + c.1, a.2 + c.2));
    Ok(SpanF1Report {
        micro: Counts::new(tp, fp, fn_),
        per_class: per
            .iter()
            .enumerate()
            .map(|(c, &(tp, fp, fn_))| (gold.label_set.name(c).to_string(), Counts::new(tp, fp, fn_)))
            .collect(),
    })
}

/// Number of contiguous spans of a length-`n` sentence, optionally limited
/// to spans of at most `max_span_len` tokens.
pub fn enumeration_cost(n: usize, max_span_len: Option<usize>) -> usize {
    let l = max_span_len.map_or(n, |l| l.min(n));
    (1..=l).map(|len| n - len + 1).sum()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct MethodCost {
    pub forwards: u64,
    pub millis: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CostReport {
    pub sentences: usize,
    pub tokens: usize,
    pub greedy: MethodCost,
    pub viterbi: Option<MethodCost>,
    /// Stand-in for per-span template querying.
    pub template: MethodCost,
    /// Span queries the template method would issue.
    pub template_queries: u64,
    /// Span × class queries, reported apart from the headline count.
    pub template_class_queries: u64,
}

impl CostReport {
    pub fn forward_ratio(&self) -> f64 {
        self.template.forwards as f64 / self.greedy.forwards.max(1) as f64
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "method\tforwards\tmillis");
        let _ = writeln!(out, "one-pass\t{}\t{:.2}", self.greedy.forwards, self.greedy.millis);
        if let Some(v) = self.viterbi {
            let _ = writeln!(out, "one-pass+viterbi\t{}\t{:.2}", v.forwards, v.millis);
        }
        let _ = writeln!(out, "template\t{}\t{:.2}", self.template.forwards, self.template.millis);
        let _ = writeln!(
            out,
            "# {} sentences, {} tokens, template/one-pass forwards {:.2}x, span x class queries {}",
            self.sentences,
            self.tokens,
            self.forward_ratio(),
            self.template_class_queries
        );
        out
    }
}

fn timed<F: FnMut() -> Result<()>>(model: &TinyMlm, mut f: F) -> Result<MethodCost> {
    let before = model.forward_calls();
    let start = Instant::now();
    f()?;
    Ok(MethodCost {
        forwards: model.forward_calls() - before,
        millis: start.elapsed().as_secs_f64() * 1e3,
    })
}

/// Times and counts forward passes for greedy one-pass decoding, Viterbi
/// decoding (when `trans` is given) and a simulated template method that
/// scores every span with one forward pass of the sentence. Runs
/// sequentially.
pub fn bench_decoding(
    model: &TinyMlm,
    vocab: &Vocabulary,
    dataset: &Dataset,
    map: &LabelWordMap,
    trans: Option<&TransitionMatrix>,
) -> Result<CostReport> {
    let encoded: Vec<Vec<usize>> = dataset.sentences().map(|s| vocab.encode(s)).collect();
    let greedy = timed(model, || {
        for ids in &encoded {
            decode_greedy(&label_distribution(model, ids, map)?);
        }
        Ok(())
    })?;
    let viterbi = trans
        .map(|t| {
            timed(model, || {
                for ids in &encoded {
                    viterbi_decode(&label_distribution(model, ids, map)?, t)?;
                }
                Ok(())
            })
        })
        .transpose()?;
    let mut queries = 0u64;
    let template = timed(model, || {
        for ids in &encoded {
            for _ in 0..enumeration_cost(ids.len(), None) {
                model.forward(ids)?;
                queries += 1;
            }
        }
        Ok(())
    })?;
    Ok(CostReport {
        sentences: encoded.len(),
        tokens: encoded.iter().map(Vec::len).sum(),
        greedy,
        viterbi,
        template,
        template_queries: queries,
        template_class_queries: queries * dataset.label_set.num_tags() as u64,
    })
}

/// One experiment run, serialised as a JSON line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub method: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub seed: u64,
    #[serde(rename = "P")]
    pub precision: f64,
    #[serde(rename = "R")]
    pub recall: f64,
    #[serde(rename = "F1")]
    pub f1: f64,
    pub forwards: u64,
    pub millis: f64,
}

impl RunRecord {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("record serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabelSet, Sentence, Tag, TagSequence};

    fn ds(rows: &[Vec<Tag>]) -> Dataset {
        let mut d = Dataset::new("t", LabelSet::new(["PER", "LOC"]).unwrap());
        for r in rows {
            d.push(Sentence::new(vec!["w"; r.len()]), TagSequence(r.clone())).unwrap();
        }
        d
    }

    #[test]
    fn enumeration_counts() {
        assert_eq!(enumeration_cost(6, None), 21);
        assert_eq!(enumeration_cost(0, None), 0);
        assert_eq!(enumeration_cost(10, Some(3)), 27);
        assert_eq!(enumeration_cost(2, Some(5)), 3);
    }

    #[test]
    fn perfect_and_empty() {
        let g = ds(&[vec![Tag::I(0), Tag::O, Tag::I(1)]]);
        let r = span_f1(&g, &g).unwrap();
        assert_eq!((r.precision(), r.recall(), r.f1()), (1.0, 1.0, 1.0));
        let none = ds(&[vec![Tag::O; 3]]);
        let r = span_f1(&g, &none).unwrap();
        assert_eq!(r.f1(), 0.0);
        assert_eq!(r.micro.fn_, 2);
    }

    #[test]
    fn boundary_mismatch() {
        let g = ds(&[vec![Tag::I(0), Tag::I(0)]]);
        let p = ds(&[vec![Tag::I(0), Tag::O]]);
        let r = span_f1(&g, &p).unwrap();
        assert_eq!((r.micro.tp, r.micro.fp, r.micro.fn_, r.f1()), (0, 1, 1, 0.0));
        assert_eq!(r.per_class["PER"].fp, 1);
    }

    #[test]
    fn misaligned_errors() {
        let g = ds(&[vec![Tag::O]]);
        assert!(span_f1(&g, &ds(&[])).is_err());
        assert!(span_f1(&g, &ds(&[vec![Tag::O, Tag::O]])).is_err());
    }

    #[test]
    fn json_line_keys() {
        let r = RunRecord {
            method: "entlm".into(),
            k: 5,
            seed: 1,
            precision: 0.5,
            recall: 0.25,
            f1: 1.0 / 3.0,
            forwards: 10,
            millis: 2.0,
        };
        let line = r.to_json_line();
        for key in ["\"method\"", "\"K\"", "\"seed\"", "\"P\"", "\"R\"", "\"F1\"", "\"forwards\"", "\"millis\""] {
            assert!(line.contains(key), "{line}");
        }
    }
}
