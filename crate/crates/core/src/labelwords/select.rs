use super::FrequencyTable;

fn rank<F>(freq: &FrequencyTable, class: &str, top_n: usize, score: F) -> Vec<String>
where
    F: Fn(&str, usize) -> u64,
{
    let Some(c) = freq.class_index(class) else {
        return Vec::new();
    };
    let mut words: Vec<&String> = freq.data.keys().chain(freq.topk.keys()).collect();
    words.sort();
    words.dedup();
    let mut scored: Vec<(u64, &String)> = words
        .into_iter()
        .map(|w| (score(w, c), w))
        .filter(|&(s, _)| s > 0)
        .collect();
    scored.sort_by(|a, b| b.0.cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    scored.into_iter().take(top_n).map(|(_, w)| w.clone()).collect()
}

/// Words ranked by φ(w, C), descending, ties lexicographic.
pub fn select_data(freq: &FrequencyTable, class: &str, top_n: usize) -> Vec<String> {
    rank(freq, class, top_n, |w, c| freq.data_count(w, c))
}

/// Words ranked by φ_topk(w, C).
pub fn select_lm(freq: &FrequencyTable, class: &str, top_n: usize) -> Vec<String> {
    rank(freq, class, top_n, |w, c| freq.topk_count(w, c))
}

/// Words ranked by φ(w, C) · φ_topk(w, C); zero products are dropped.
pub fn select_combined(freq: &FrequencyTable, class: &str, top_n: usize) -> Vec<String> {
    rank(freq, class, top_n, |w, c| freq.data_count(w, c) * freq.topk_count(w, c))
}

/// Keeps words whose class share φ(w, C) / Σ_k φ(w, k) strictly exceeds
/// `threshold`, preserving order. Words never tagged are dropped.
pub fn remove_conflicts(candidates: &[String], class: &str, freq: &FrequencyTable, threshold: f64) -> Vec<String> {
    let Some(c) = freq.class_index(class) else {
        return Vec::new();
    };
    candidates
        .iter()
        .filter(|w| {
            let total = freq.data_total(w);
            total > 0 && freq.data_count(w, c) as f64 / total as f64 > threshold
        })
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(rows: &[(&str, [u64; 2], [u64; 2])]) -> FrequencyTable {
        let mut t = FrequencyTable::new(vec!["PER".into(), "ORG".into()]);
        for (w, d, k) in rows {
            if d.iter().any(|&x| x > 0) {
                t.data.insert(w.to_string(), d.to_vec());
            }
            if k.iter().any(|&x| x > 0) {
                t.topk.insert(w.to_string(), k.to_vec());
            }
        }
        t
    }

    #[test]
    fn data_ranking() {
        let t = table(&[("Mary", [2, 0], [0, 0]), ("John", [3, 0], [0, 0])]);
        assert_eq!(select_data(&t, "PER", 10), ["John", "Mary"]);
        assert_eq!(select_data(&t, "PER", 1), ["John"]);
        assert!(select_data(&t, "LOC", 10).is_empty());
        assert!(select_data(&t, "ORG", 10).is_empty());
    }

    #[test]
    fn ties_are_lexicographic() {
        let t = table(&[("b", [2, 0], [0, 0]), ("a", [2, 0], [0, 0])]);
        assert_eq!(select_data(&t, "PER", 10), ["a", "b"]);
    }

    #[test]
    fn lm_ranking() {
        let t = table(&[("Smith", [0, 0], [4, 0]), ("Jones", [0, 0], [1, 0])]);
        assert_eq!(select_lm(&t, "PER", 1), ["Smith"]);
        assert_eq!(select_lm(&t, "PER", 99), ["Smith", "Jones"]);
        assert!(select_lm(&table(&[("x", [1, 0], [0, 0])]), "PER", 3).is_empty());
    }

    #[test]
    fn combined_ranking() {
        let t = table(&[("a", [3, 0], [1, 0]), ("b", [2, 0], [4, 0]), ("c", [5, 0], [0, 0])]);
        assert_eq!(select_combined(&t, "PER", 10), ["b", "a"]);
        let single = table(&[("z", [1, 0], [1, 0])]);
        assert_eq!(select_combined(&single, "PER", 10), ["z"]);
    }

    #[test]
    fn conflict_ratio() {
        let t = table(&[("the", [5, 5], [0, 0]), ("John", [9, 1], [0, 0]), ("ghost", [0, 0], [3, 0])]);
        let cands: Vec<String> = ["the", "John", "ghost"].map(String::from).to_vec();
        assert_eq!(remove_conflicts(&cands, "PER", &t, 0.6), ["John"]);
        assert_eq!(remove_conflicts(&cands, "PER", &t, 0.0), ["the", "John"]);
        // ratio exactly at the threshold is removed
        assert!(remove_conflicts(&cands[..1], "PER", &t, 0.5).is_empty());
    }
}
