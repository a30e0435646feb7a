//! Consensus labels from vote vectors.
//!
//! A problem setup pairs an agreement threshold `l` with a class count `C`.
//! Five-level votes are first merged down to `C` classes, then an image keeps
//! a label only if its most-voted class is unique and has at least `l` votes.
//! Class index 0 is always the most positive class.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, DatasetId};

pub const P5_LABELS: [&str; 5] = [
    "positive",
    "slightly positive",
    "neutral",
    "slightly negative",
    "negative",
];
pub const P3_LABELS: [&str; 3] = ["positive", "neutral", "negative"];
pub const P2_LABELS: [&str; 2] = ["positive", "negative"];

/// Canonical label list for a supported class count.
pub fn labels_for(classes: usize) -> Option<&'static [&'static str]> {
    match classes {
        5 => Some(&P5_LABELS),
        3 => Some(&P3_LABELS),
        2 => Some(&P2_LABELS),
        _ => None,
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LabelingError {
    #[error("cannot merge {from} classes into {to}")]
    UnsupportedMerge { from: usize, to: usize },
    #[error("unsupported class count {0}; expected 2, 3 or 5")]
    UnsupportedClassCount(usize),
    #[error("threshold {threshold} outside 1..={evaluators}")]
    ThresholdOutOfRange { threshold: u32, evaluators: u32 },
    #[error("setup for {setup} applied to dataset {dataset}")]
    DatasetMismatch { setup: DatasetId, dataset: DatasetId },
    #[error("{votes} votes cannot be merged into {to} classes")]
    VoteLength { votes: usize, to: usize },
    #[error("invalid setup key {0:?}; expected e.g. s3p5")]
    InvalidKey(String),
}

/// The pair ⟨σ_l, P_C⟩ for one dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ProblemSetup {
    pub dataset_id: DatasetId,
    /// Minimum votes the dominant class needs.
    pub threshold: u32,
    pub classes: usize,
    pub labels: Vec<String>,
}

impl ProblemSetup {
    pub fn new(dataset_id: DatasetId, threshold: u32, classes: usize) -> Result<Self, LabelingError> {
        let labels = labels_for(classes).ok_or(LabelingError::UnsupportedClassCount(classes))?;
        if threshold == 0 {
            return Err(LabelingError::ThresholdOutOfRange {
                threshold,
                evaluators: 0,
            });
        }
        Ok(ProblemSetup {
            dataset_id,
            threshold,
            classes,
            labels: labels.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Parses a short key such as `s3p5` (σ3, five classes).
    pub fn from_key(dataset_id: DatasetId, key: &str) -> Result<Self, LabelingError> {
        let key: SetupKey = key.parse()?;
        Self::new(dataset_id, key.threshold, key.classes)
    }

    pub fn key(&self) -> SetupKey {
        SetupKey {
            threshold: self.threshold,
            classes: self.classes,
        }
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    /// Checks the setup against a dataset's evaluator count and native classes.
    pub fn validate_for(&self, d: &Dataset) -> Result<(), LabelingError> {
        if self.dataset_id != d.dataset_id {
            return Err(LabelingError::DatasetMismatch {
                setup: self.dataset_id,
                dataset: d.dataset_id,
            });
        }
        if self.threshold == 0 || self.threshold > d.evaluator_count {
            return Err(LabelingError::ThresholdOutOfRange {
                threshold: self.threshold,
                evaluators: d.evaluator_count,
            });
        }
        check_projection(d.categories(), self.classes)
    }
}

impl fmt::Display for ProblemSetup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.dataset_id, self.key())
    }
}

/// `s{l}p{C}`, e.g. `s5p3`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SetupKey {
    pub threshold: u32,
    pub classes: usize,
}

impl fmt::Display for SetupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}p{}", self.threshold, self.classes)
    }
}

impl FromStr for SetupKey {
    type Err = LabelingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || LabelingError::InvalidKey(s.to_string());
        let rest = s.strip_prefix('s').ok_or_else(bad)?;
        let (l, c) = rest.split_once('p').ok_or_else(bad)?;
        Ok(SetupKey {
            threshold: l.parse().map_err(|_| bad())?,
            classes: c.parse().map_err(|_| bad())?,
        })
    }
}

/// Wire class id used in training and few-shot prompts: `Negative` is 0 and
/// ids grow towards `Positive`, the reverse of the in-core label order.
pub fn class_id(label_index: usize, classes: usize) -> usize {
    classes - 1 - label_index
}

pub fn label_index_from_class_id(class_id: usize, classes: usize) -> Option<usize> {
    (class_id < classes).then(|| classes - 1 - class_id)
}

fn check_projection(from: usize, to: usize) -> Result<(), LabelingError> {
    if from == to || (from == 5 && (to == 3 || to == 2)) {
        Ok(())
    } else {
        Err(LabelingError::UnsupportedMerge { from, to })
    }
}

/// Merges five-level votes into three (`(v1+v2, v3, v4+v5)`) or two
/// (`(v1+v2+v3, v4+v5)`, neutral counted as positive) classes.
pub fn merge_votes(votes: &[u32], from: usize, to: usize) -> Result<Vec<u32>, LabelingError> {
    if from != 5 || !(to == 3 || to == 2) {
        return Err(LabelingError::UnsupportedMerge { from, to });
    }
    if votes.len() != 5 {
        return Err(LabelingError::VoteLength {
            votes: votes.len(),
            to,
        });
    }
    Ok(match to {
        3 => vec![votes[0] + votes[1], votes[2], votes[3] + votes[4]],
        _ => vec![votes[0] + votes[1] + votes[2], votes[3] + votes[4]],
    })
}

/// Like [`merge_votes`], but passes votes through unchanged when the dataset
/// is already at the target granularity.
pub fn project_votes(votes: &[u32], from: usize, to: usize) -> Result<Vec<u32>, LabelingError> {
    if from == to {
        if votes.len() != to {
            return Err(LabelingError::VoteLength {
                votes: votes.len(),
                to,
            });
        }
        return Ok(votes.to_vec());
    }
    merge_votes(votes, from, to)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Exclusion {
    BelowThreshold,
    /// Two or more classes share the maximum.
    Tie,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    Label(usize),
    Excluded(Exclusion),
}

impl Dominance {
    pub fn label(self) -> Option<usize> {
        match self {
            Dominance::Label(i) => Some(i),
            Dominance::Excluded(_) => None,
        }
    }
}

/// The dominant class of `votes` under threshold `l`.
///
/// Below-threshold wins over tie when both apply.
pub fn dominant(votes: &[u32], threshold: u32) -> Dominance {
    let Some(&max) = votes.iter().max() else {
        return Dominance::Excluded(Exclusion::BelowThreshold);
    };
    if max < threshold || max == 0 {
        return Dominance::Excluded(Exclusion::BelowThreshold);
    }
    let mut winners = votes.iter().enumerate().filter(|(_, &v)| v == max);
    let (index, _) = winners.next().expect("max is attained");
    if winners.next().is_some() {
        Dominance::Excluded(Exclusion::Tie)
    } else {
        Dominance::Label(index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledInstance {
    pub image_id: String,
    pub setup: ProblemSetup,
    pub label_index: usize,
    pub merged_votes: Vec<u32>,
}

/// Labels every record of `d` under `setup`, dropping excluded images.
/// File order is preserved.
pub fn build_subset(d: &Dataset, setup: &ProblemSetup) -> Result<Vec<LabeledInstance>, LabelingError> {
    setup.validate_for(d)?;
    let mut out = Vec::new();
    for record in &d.records {
        let merged = project_votes(&record.votes, d.categories(), setup.classes)?;
        if let Dominance::Label(label_index) = dominant(&merged, setup.threshold) {
            out.push(LabeledInstance {
                image_id: record.image_id.clone(),
                setup: setup.clone(),
                label_index,
                merged_votes: merged,
            });
        }
    }
    Ok(out)
}

/// Counts of excluded records by reason, for reporting alongside a subset.
pub fn exclusion_counts(d: &Dataset, setup: &ProblemSetup) -> Result<(usize, usize), LabelingError> {
    setup.validate_for(d)?;
    let mut below = 0;
    let mut ties = 0;
    for record in &d.records {
        let merged = project_votes(&record.votes, d.categories(), setup.classes)?;
        match dominant(&merged, setup.threshold) {
            Dominance::Excluded(Exclusion::BelowThreshold) => below += 1,
            Dominance::Excluded(Exclusion::Tie) => ties += 1,
            Dominance::Label(_) => {}
        }
    }
    Ok((below, ties))
}

pub fn write_jsonl<W: Write>(mut w: W, instances: &[LabeledInstance]) -> std::io::Result<()> {
    for inst in instances {
        serde_json::to_writer(&mut w, inst)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

pub fn read_jsonl<R: BufRead>(r: R) -> std::io::Result<Vec<LabeledInstance>> {
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}
