//! Mapping free-form model replies onto a setup's labels.

use serde::{Deserialize, Serialize};

use crate::labeling::{label_index_from_class_id, ProblemSetup};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "index")]
pub enum ParseOutcome {
    Label(usize),
    /// Two or more distinct labels were named.
    Ambiguous,
    /// No label was named.
    Unparseable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelParse {
    pub outcome: ParseOutcome,
    pub raw_text: String,
    /// Byte ranges in `raw_text` that matched a label.
    pub matched_spans: Vec<(usize, usize)>,
}

impl LabelParse {
    pub fn label(&self) -> Option<usize> {
        match self.outcome {
            ParseOutcome::Label(i) => Some(i),
            _ => None,
        }
    }

    pub fn is_valid(&self) -> bool {
        self.label().is_some()
    }
}

/// Case-insensitive label search with longest-match priority: once
/// `slightly positive` matches, the `positive` inside it is not counted.
/// Matches must sit on word boundaries.
pub fn parse_label(text: &str, setup: &ProblemSetup) -> LabelParse {
    let spans = label_spans(text, setup);
    let outcome = outcome_of(spans.iter().map(|(_, _, label)| *label));
    LabelParse {
        outcome,
        raw_text: text.to_string(),
        matched_spans: spans.into_iter().map(|(s, e, _)| (s, e)).collect(),
    }
}

/// Parser for few-shot replies, which may answer with a class id (`2`),
/// a label name, or both. Ids and names that agree count once.
pub fn parse_fewshot_reply(text: &str, setup: &ProblemSetup) -> LabelParse {
    let mut found: Vec<(usize, usize, usize)> = label_spans(text, setup);
    for (start, end) in digit_runs(text) {
        if let Ok(id) = text[start..end].parse::<usize>() {
            if let Some(label) = label_index_from_class_id(id, setup.classes) {
                found.push((start, end, label));
            }
        }
    }
    found.sort_unstable();
    let outcome = outcome_of(found.iter().map(|(_, _, label)| *label));
    LabelParse {
        outcome,
        raw_text: text.to_string(),
        matched_spans: found.into_iter().map(|(s, e, _)| (s, e)).collect(),
    }
}

fn outcome_of(labels: impl Iterator<Item = usize>) -> ParseOutcome {
    let mut distinct: Vec<usize> = labels.collect();
    distinct.sort_unstable();
    distinct.dedup();
    match distinct.as_slice() {
        [] => ParseOutcome::Unparseable,
        [one] => ParseOutcome::Label(*one),
        _ => ParseOutcome::Ambiguous,
    }
}

/// `(start, end, label_index)` for every non-overlapping label occurrence,
/// in text order.
fn label_spans(text: &str, setup: &ProblemSetup) -> Vec<(usize, usize, usize)> {
    let bytes = text.as_bytes();
    let mut by_length: Vec<(usize, &str)> = setup
        .labels
        .iter()
        .enumerate()
        .map(|(i, l)| (i, l.as_str()))
        .collect();
    by_length.sort_by_key(|(i, l)| (std::cmp::Reverse(l.len()), *i));

    let mut claimed = vec![false; bytes.len()];
    let mut spans = Vec::new();
    for (index, label) in by_length {
        let needle = label.as_bytes();
        if needle.is_empty() || needle.len() > bytes.len() {
            continue;
        }
        let mut start = 0;
        while start + needle.len() <= bytes.len() {
            let end = start + needle.len();
            if bytes[start..end].eq_ignore_ascii_case(needle)
                && text.is_char_boundary(start)
                && text.is_char_boundary(end)
                && on_word_boundary(text, start, end)
                && !claimed[start..end].iter().any(|&c| c)
            {
                claimed[start..end].iter_mut().for_each(|c| *c = true);
                spans.push((start, end, index));
                start = end;
            } else {
                start += 1;
            }
        }
    }
    spans.sort_unstable();
    spans
}

fn on_word_boundary(text: &str, start: usize, end: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[end..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

fn digit_runs(text: &str) -> Vec<(usize, usize)> {
    let mut runs = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_ascii_digit(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                runs.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        runs.push((s, text.len()));
    }
    runs.into_iter()
        .filter(|&(s, e)| on_word_boundary(text, s, e))
        .collect()
}
