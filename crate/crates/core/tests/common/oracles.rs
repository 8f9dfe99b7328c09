use entlm_core::tinylm::{train::example_gradients, LmExample, TinyMlm};

/// Worst relative error between analytic gradients and central differences
/// of the summed loss, over every parameter. Relative error is
/// `|a − n| / max(|a|, |n|, floor)`.
pub struct GradCheck {
    pub checked: usize,
    pub worst_rel: f64,
    pub worst_at: (usize, usize),
}

pub fn summed_loss(model: &TinyMlm, batch: &[LmExample]) -> f64 {
    batch
        .iter()
        .map(|ex| {
            let out = model.forward(&ex.input).unwrap();
            let mut total = 0.0;
            for (i, (&t, &m)) in ex.targets.iter().zip(&ex.mask).enumerate() {
                if !m {
                    continue;
                }
                let row = out.logits.row(i);
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
                total += lse - row[t];
            }
            total
        })
        .sum()
}

pub fn gradient_check(model: &TinyMlm, batch: &[LmExample], step: f64, floor: f64) -> GradCheck {
    let mut analytic = model.params.zeros_like();
    for ex in batch {
        let (_, _, g) = example_gradients(model, ex).unwrap();
        analytic.add_assign(&g);
    }
    let analytic: Vec<Vec<f64>> = analytic.tensors().iter().map(|t| t.iter().copied().collect()).collect();
    let mut probe = model.clone();
    let mut worst = GradCheck { checked: 0, worst_rel: 0.0, worst_at: (0, 0) };
    for (ti, tensor) in analytic.iter().enumerate() {
        for (j, &a) in tensor.iter().enumerate() {
            let orig = probe.params.tensors()[ti].as_slice().unwrap()[j];
            set(&mut probe, ti, j, orig + step);
            let plus = summed_loss(&probe, batch);
            set(&mut probe, ti, j, orig - step);
            let minus = summed_loss(&probe, batch);
            set(&mut probe, ti, j, orig);
            let numeric = (plus - minus) / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst.checked += 1;
            if rel > worst.worst_rel {
                worst.worst_rel = rel;
                worst.worst_at = (ti, j);
            }
        }
    }
    worst
}

fn set(model: &mut TinyMlm, tensor: usize, idx: usize, value: f64) {
    model.params.tensors_mut()[tensor].as_slice_mut().unwrap()[idx] = value;
}

/// Per-class data and top-k counts rebuilt by a plain rescan of the corpus.
pub struct RescanCounts {
    pub data: std::collections::BTreeMap<(String, usize), u64>,
    pub topk: std::collections::BTreeMap<(String, usize), u64>,
}

pub fn rescan_counts(
    model: Option<&TinyMlm>,
    vocab: &entlm_core::corpus::Vocabulary,
    dataset: &entlm_core::corpus::Dataset,
    k: usize,
) -> RescanCounts {
    use entlm_core::corpus::{Tag, Vocabulary};
    let mut data = std::collections::BTreeMap::new();
    let mut topk = std::collections::BTreeMap::new();
    for ex in &dataset.examples {
        let mut logits = None;
        for (i, (tok, tag)) in ex.sentence.tokens.iter().zip(ex.tags.iter()).enumerate() {
            let Tag::I(c) = tag else { continue };
            *data.entry((tok.clone(), c)).or_insert(0) += 1;
            let Some(model) = model else { continue };
            let lg = logits.get_or_insert_with(|| model.forward(&vocab.encode(&ex.sentence)).unwrap().logits);
            let row: Vec<f64> = lg.row(i).to_vec();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|x| (x - max).exp()).sum();
            let p: Vec<f64> = row.iter().map(|x| (x - max).exp() / z).collect();
            let mut ids: Vec<usize> = (0..p.len()).filter(|&id| id >= Vocabulary::first_word_id()).collect();
            ids.sort_by(|&a, &b| p[b].partial_cmp(&p[a]).unwrap().then(a.cmp(&b)));
            for &id in ids.iter().take(k) {
                *topk.entry((vocab.token(id).to_string(), c)).or_insert(0) += 1;
            }
        }
    }
    RescanCounts { data, topk }
}

impl RescanCounts {
    fn get(map: &std::collections::BTreeMap<(String, usize), u64>, w: &str, c: usize) -> u64 {
        map.get(&(w.to_string(), c)).copied().unwrap_or(0)
    }

    pub fn data(&self, w: &str, c: usize) -> u64 {
        Self::get(&self.data, w, c)
    }

    pub fn topk(&self, w: &str, c: usize) -> u64 {
        Self::get(&self.topk, w, c)
    }

    pub fn words(&self) -> Vec<String> {
        let mut w: Vec<String> = self.data.keys().chain(self.topk.keys()).map(|(w, _)| w.clone()).collect();
        w.sort();
        w.dedup();
        w
    }

    /// Positive-score words, descending score, ties lexicographic.
    pub fn ranked(&self, c: usize, score: impl Fn(&Self, &str, usize) -> u64) -> Vec<String> {
        let mut scored: Vec<(u64, String)> =
            self.words().into_iter().map(|w| (score(self, &w, c), w)).filter(|(s, _)| *s > 0).collect();
        scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
        scored.into_iter().map(|(_, w)| w).collect()
    }

    pub fn keep_unconflicted(&self, words: &[String], c: usize, n_classes: usize, th: f64) -> Vec<String> {
        words
            .iter()
            .filter(|w| {
                let total: u64 = (0..n_classes).map(|k| self.data(w, k)).sum();
                total > 0 && (self.data(w, c) as f64) / (total as f64) > th
            })
            .cloned()
            .collect()
    }
}

/// Log score of a tag path: start transition, then emissions and pairwise
/// transitions. Row 0 of `trans` is the start state.
pub fn brute_path_score(emit: &[Vec<f64>], trans: &[Vec<f64>], path: &[usize]) -> f64 {
    let mut s = 0.0;
    for (i, &t) in path.iter().enumerate() {
        let from = if i == 0 { 0 } else { path[i - 1] + 1 };
        s += emit[i][t].ln() + trans[from][t].ln();
    }
    s
}

/// Maximum path score over all |Y|^n tag sequences.
pub fn brute_force_best(emit: &[Vec<f64>], trans: &[Vec<f64>]) -> f64 {
    let n = emit.len();
    let y = emit[0].len();
    let mut path = vec![0usize; n];
    let mut best = f64::NEG_INFINITY;
    loop {
        best = best.max(brute_path_score(emit, trans, &path));
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            path[i] += 1;
            if path[i] < y {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Explicit list of spans `(i, j)` with `j − i + 1 ≤ max_len`.
pub fn explicit_spans(n: usize, max_len: Option<usize>) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i..n {
            if max_len.is_none_or(|l| j - i < l) {
                out.push((i, j));
            }
        }
    }
    out
}

/// Mentions per class in a set of tag sequences, recounted as maximal runs.
pub fn recount_mentions(tags: &[&entlm_core::corpus::TagSequence], n_classes: usize) -> Vec<usize> {
    use entlm_core::corpus::Tag;
    let mut counts = vec![0; n_classes];
    for t in tags {
        let mut prev: Option<usize> = None;
        for tag in t.iter() {
            let cur = match tag {
                Tag::I(c) => Some(c),
                Tag::O => None,
            };
            if let Some(c) = cur {
                if prev != Some(c) {
                    counts[c] += 1;
                }
            }
            prev = cur;
        }
    }
    counts
}

/// Mean cross-entropy of `targets` under the row-wise softmax of `logits`.
pub fn reference_ce(logits: &ndarray::Array2<f64>, targets: &[usize]) -> f64 {
    let mut total = 0.0;
    for (i, &t) in targets.iter().enumerate() {
        let row = logits.row(i);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|x| (x - max).exp()).sum::<f64>().ln();
        total += lse - row[t];
    }
    total / targets.len() as f64
}
