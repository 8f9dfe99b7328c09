use super::{tag_class, Dataset, LabelSet, Sentence, Tag, TagSequence};
use crate::{Error, Result};

/// Parses two-column CoNLL text, inferring the label set from the tags in
/// order of first appearance. `B-` prefixes are rewritten to `I-`.
pub fn parse_conll(text: &str) -> Result<Dataset> {
    let rows = read_rows(text)?;
    let mut classes: Vec<String> = Vec::new();
    for (_, _, tag) in rows.iter().flatten() {
        if let Some(Some(c)) = tag_class(tag) {
            if !classes.iter().any(|k| k == c) {
                classes.push(c.to_string());
            }
        }
    }
    let label_set = LabelSet::new(classes)?;
    assemble(rows, label_set)
}

/// Parses CoNLL text against a fixed label set; unknown classes are errors.
pub fn parse_conll_with(text: &str, label_set: &LabelSet) -> Result<Dataset> {
    let rows = read_rows(text)?;
    assemble(rows, label_set.clone())
}

/// Serialises a dataset as `token<TAB>tag` lines with blank-line separators.
pub fn to_conll(dataset: &Dataset) -> String {
    let mut out = String::new();
    for ex in &dataset.examples {
        for (token, tag) in ex.sentence.tokens.iter().zip(ex.tags.iter()) {
            out.push_str(token);
            out.push('\t');
            out.push_str(&dataset.label_set.tag_name(tag));
            out.push('\n');
        }
        out.push('\n');
    }
    out
}

type Row<'a> = (usize, &'a str, &'a str);

fn read_rows(text: &str) -> Result<Vec<Vec<Row<'_>>>> {
    let mut sentences = Vec::new();
    let mut current = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            if !current.is_empty() {
                sentences.push(std::mem::take(&mut current));
            }
            continue;
        }
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 2 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 2 columns, found {}", cols.len()),
            });
        }
        if tag_class(cols[1]).is_none() {
            return Err(Error::Parse {
                line: line_no,
                message: format!("unknown tag syntax {:?}", cols[1]),
            });
        }
        current.push((line_no, cols[0], cols[1]));
    }
    if !current.is_empty() {
        sentences.push(current);
    }
    Ok(sentences)
}

fn assemble(rows: Vec<Vec<Row<'_>>>, label_set: LabelSet) -> Result<Dataset> {
    let mut dataset = Dataset::new("conll", label_set);
    for sent in rows {
        let mut tokens = Vec::with_capacity(sent.len());
        let mut tags = Vec::with_capacity(sent.len());
        for (line, token, tag) in sent {
            let parsed: Tag = dataset.label_set.parse_tag(tag).ok_or_else(|| Error::Parse {
                line,
                message: format!("tag {tag:?} not in label set"),
            })?;
            tokens.push(token.to_string());
            tags.push(parsed);
        }
        dataset.push(Sentence { tokens }, TagSequence(tags))?;
    }
    Ok(dataset)
}
