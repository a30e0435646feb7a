//! Prompt text. Every builder is pure and byte-stable.

use thiserror::Error;

use crate::labeling::{class_id, ProblemSetup};

/// Captioning prompt sent with every image.
pub const CAPTION_PROMPT: &str = "Describe this image in details.";

pub const FEWSHOT_MIN_SHOTS: usize = 5;
pub const FEWSHOT_MAX_SHOTS: usize = 15;
pub const FEWSHOT_DEFAULT_SHOTS: usize = 15;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("{0} shots given; few-shot prompts take {FEWSHOT_MIN_SHOTS}..={FEWSHOT_MAX_SHOTS}")]
    ShotCountOutOfRange(usize),
    #[error("shot {shot} has label index {label_index}, setup has {classes} classes")]
    ShotLabelOutsideSetup {
        shot: usize,
        label_index: usize,
        classes: usize,
    },
}

/// Direct image classification prompt for `setup`'s label set.
pub fn task1_prompt(setup: &ProblemSetup) -> String {
    format!(
        "Analyze this image, and classify it as {{{}}} sentiments, do not describe the image, and select only one class.",
        setup.labels.join(", ")
    )
}

pub fn caption_prompt() -> &'static str {
    CAPTION_PROMPT
}

/// `Slightly Negative` from `slightly negative`.
pub fn title_case(label: &str) -> String {
    label
        .split(' ')
        .map(|w| {
            let mut chars = w.chars();
            match chars.next() {
                Some(first) => first.to_uppercase().chain(chars).collect(),
                None => String::new(),
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Label-to-class-id mapping as shown to text models, e.g.
/// `{"Positive": 2, "Negative": 0, "Neutral": 1}`.
///
/// Entries run from the extremes inwards, positive before negative.
pub fn class_id_mapping(setup: &ProblemSetup) -> String {
    let c = setup.classes;
    let mut order = Vec::with_capacity(c);
    let (mut lo, mut hi) = (0usize, c - 1);
    while lo < hi {
        order.push(lo);
        order.push(hi);
        lo += 1;
        hi -= 1;
    }
    if lo == hi {
        order.push(lo);
    }
    let entries: Vec<String> = order
        .into_iter()
        .map(|i| format!("\"{}\": {}", title_case(&setup.labels[i]), class_id(i, c)))
        .collect();
    format!("{{{}}}", entries.join(", "))
}

/// The sentiment question posed for one description.
pub fn sentiment_question(setup: &ProblemSetup) -> String {
    format!(
        "What is the sentiment of this description? Please choose an answer from {}",
        class_id_mapping(setup)
    )
}

/// One labelled example in a few-shot prompt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Shot {
    pub caption: String,
    pub label_index: usize,
}

/// Few-shot classification prompt: each shot as description and answer,
/// then the question for `query`.
///
/// ```text
/// Description: <shot caption>
/// Answer: <class id>
///
/// ...
///
/// Description: <query>
/// What is the sentiment of this description? Please choose an answer from {...}
/// Answer:
/// ```
pub fn fewshot_prompt(setup: &ProblemSetup, shots: &[Shot], query: &str) -> Result<String, PromptError> {
    if !(FEWSHOT_MIN_SHOTS..=FEWSHOT_MAX_SHOTS).contains(&shots.len()) {
        return Err(PromptError::ShotCountOutOfRange(shots.len()));
    }
    let mut out = String::new();
    for (n, shot) in shots.iter().enumerate() {
        if shot.label_index >= setup.classes {
            return Err(PromptError::ShotLabelOutsideSetup {
                shot: n,
                label_index: shot.label_index,
                classes: setup.classes,
            });
        }
        out.push_str("Description: ");
        out.push_str(&one_line(&shot.caption));
        out.push_str("\nAnswer: ");
        out.push_str(&class_id(shot.label_index, setup.classes).to_string());
        out.push_str("\n\n");
    }
    out.push_str("Description: ");
    out.push_str(&one_line(query));
    out.push('\n');
    out.push_str(&sentiment_question(setup));
    out.push_str("\nAnswer:");
    Ok(out)
}

fn one_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}
