//! Rule-based compound sentiment scoring for caption text.
//!
//! Each token found in the lexicon contributes its valence. A booster among
//! the three preceding tokens grows (or shrinks) that contribution's
//! magnitude, and a negator among them scales it by `-0.74`. The raw sum `x`
//! is squashed into `(-1, 1)` by `x / sqrt(x² + α)`.
//!
//! Capitalization and punctuation emphasis are not modelled: captions are
//! model-generated prose and those cues rarely occur.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::CaptionRecord;
use crate::labeling::ProblemSetup;

const BUILTIN_LEXICON: &str = include_str!("../assets/lexicon.tsv");
const BUILTIN_BOOSTERS: &str = include_str!("../assets/boosters.tsv");
const BUILTIN_NEGATORS: &str = include_str!("../assets/negators.txt");

/// Damping of a booster's increment by distance (1, 2, 3 tokens back).
const BOOSTER_DAMPING: [f64; 3] = [1.0, 0.95, 0.9];

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon has no entries")]
    EmptyLexicon,
    #[error("{source_name}:{line}: duplicate token {token:?}")]
    DuplicateToken {
        source_name: String,
        line: usize,
        token: String,
    },
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("lexicon scoring supports 3- and 2-class setups, not {0} classes")]
    UnsupportedSetup(usize),
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Token valences plus booster and negator lists. Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct LexiconTable {
    entries: HashMap<String, f64>,
    boosters: HashMap<String, f64>,
    negators: HashSet<String>,
}

impl LexiconTable {
    /// The bundled English lexicon.
    pub fn builtin() -> Self {
        Self::parse(BUILTIN_LEXICON, BUILTIN_BOOSTERS, BUILTIN_NEGATORS)
            .expect("bundled lexicon assets are well-formed")
    }

    /// Loads TSV assets from disk. Missing booster or negator paths fall back
    /// to the bundled lists.
    pub fn load(
        lexicon: &Path,
        boosters: Option<&Path>,
        negators: Option<&Path>,
    ) -> Result<Self, LexiconError> {
        let read = |p: &Path| {
            std::fs::read_to_string(p).map_err(|source| LexiconError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let lex = read(lexicon)?;
        let boost = boosters.map(read).transpose()?;
        let neg = negators.map(read).transpose()?;
        Self::parse(
            &lex,
            boost.as_deref().unwrap_or(BUILTIN_BOOSTERS),
            neg.as_deref().unwrap_or(BUILTIN_NEGATORS),
        )
    }

    /// Parses `token<TAB>valence` lexicon and booster tables and a
    /// one-token-per-line negator list. Lines starting with `#` are skipped.
    pub fn parse(lexicon: &str, boosters: &str, negators: &str) -> Result<Self, LexiconError> {
        Ok(LexiconTable {
            entries: parse_table("lexicon", lexicon)?,
            boosters: parse_table("boosters", boosters)?,
            negators: negators
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .collect(),
        })
    }

    pub fn from_parts(
        entries: impl IntoIterator<Item = (String, f64)>,
        boosters: impl IntoIterator<Item = (String, f64)>,
        negators: impl IntoIterator<Item = String>,
    ) -> Self {
        LexiconTable {
            entries: entries.into_iter().collect(),
            boosters: boosters.into_iter().collect(),
            negators: negators.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn valence(&self, token: &str) -> Option<f64> {
        self.entries.get(token).copied()
    }

    fn is_negator(&self, token: &str) -> bool {
        self.negators.contains(token) || token.ends_with("n't")
    }

    /// Raw (unnormalized) valence sum of `text`.
    pub fn raw_sum(&self, text: &str, params: &ScoringParams) -> Result<f64, LexiconError> {
        if self.entries.is_empty() {
            return Err(LexiconError::EmptyLexicon);
        }
        let tokens = tokenize(text);
        let mut sum = 0.0;
        for (i, token) in tokens.iter().enumerate() {
            if self.boosters.contains_key(token.as_str()) {
                continue;
            }
            let Some(valence) = self.valence(token) else {
                continue;
            };
            if valence == 0.0 {
                continue;
            }
            let window = &tokens[i.saturating_sub(params.window)..i];
            let mut magnitude = valence.abs();
            for (distance, prev) in window.iter().rev().enumerate() {
                if let Some(inc) = self.boosters.get(prev.as_str()) {
                    magnitude += inc * BOOSTER_DAMPING.get(distance).copied().unwrap_or(0.9);
                }
            }
            let mut contribution = valence.signum() * magnitude.max(0.0);
            if window.iter().any(|t| self.is_negator(t)) {
                contribution *= params.negation_scalar;
            }
            sum += contribution;
        }
        Ok(sum)
    }

    pub fn score(&self, text: &str) -> Result<CompoundScore, LexiconError> {
        self.score_with(text, &ScoringParams::default())
    }

    pub fn score_with(&self, text: &str, params: &ScoringParams) -> Result<CompoundScore, LexiconError> {
        let raw = self.raw_sum(text, params)?;
        Ok(CompoundScore::from_value(normalize(raw, params.alpha), params.threshold))
    }
}

fn parse_table(source_name: &str, text: &str) -> Result<HashMap<String, f64>, LexiconError> {
    let mut out = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line_no = n + 1;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let token = parts.next().unwrap_or("").trim().to_lowercase();
        let value = parts.next().ok_or_else(|| LexiconError::Parse {
            source_name: source_name.into(),
            line: line_no,
            message: "expected token<TAB>value".into(),
        })?;
        let value: f64 = value.trim().parse().map_err(|_| LexiconError::Parse {
            source_name: source_name.into(),
            line: line_no,
            message: format!("invalid number {value:?}"),
        })?;
        if !value.is_finite() {
            return Err(LexiconError::Parse {
                source_name: source_name.into(),
                line: line_no,
                message: "value must be finite".into(),
            });
        }
        if out.insert(token.clone(), value).is_some() {
            return Err(LexiconError::DuplicateToken {
                source_name: source_name.into(),
                line: line_no,
                token,
            });
        }
    }
    Ok(out)
}

/// Lowercased word tokens. Apostrophes inside words are kept (`don't`).
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '\''))
        .map(|t| t.trim_matches('\''))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// `x / sqrt(x² + α)`.
pub fn normalize(raw: f64, alpha: f64) -> f64 {
    if raw == 0.0 {
        return 0.0;
    }
    raw / (raw * raw + alpha).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringParams {
    /// Label boundary: positive above `threshold`, negative below `-threshold`.
    pub threshold: f64,
    pub alpha: f64,
    pub negation_scalar: f64,
    /// Tokens looked back for boosters and negators.
    pub window: usize,
}

impl Default for ScoringParams {
    fn default() -> Self {
        ScoringParams {
            threshold: 0.5,
            alpha: 15.0,
            negation_scalar: -0.74,
            window: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Polarity {
    Negative,
    Neutral,
    Positive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompoundScore {
    pub value: f64,
    pub label: Polarity,
}

impl CompoundScore {
    /// Boundary values fall in neutral.
    pub fn from_value(value: f64, threshold: f64) -> Self {
        let label = if value > threshold {
            Polarity::Positive
        } else if value < -threshold {
            Polarity::Negative
        } else {
            Polarity::Neutral
        };
        CompoundScore { value, label }
    }
}

/// Label index of a compound score under a 3- or 2-class setup.
///
/// Two classes use the sign of the score (positive iff value > 0); five
/// classes are rejected since three polarity bands cannot express them.
pub fn label_for_setup(score: &CompoundScore, setup: &ProblemSetup) -> Result<usize, LexiconError> {
    match setup.classes {
        3 => Ok(match score.label {
            Polarity::Positive => 0,
            Polarity::Neutral => 1,
            Polarity::Negative => 2,
        }),
        2 => Ok(if score.value > 0.0 { 0 } else { 1 }),
        c => Err(LexiconError::UnsupportedSetup(c)),
    }
}

pub fn classify_caption(
    rec: &CaptionRecord,
    lex: &LexiconTable,
    setup: &ProblemSetup,
    params: &ScoringParams,
) -> Result<usize, LexiconError> {
    if !matches!(setup.classes, 2 | 3) {
        return Err(LexiconError::UnsupportedSetup(setup.classes));
    }
    let score = lex.score_with(&rec.caption_text, params)?;
    label_for_setup(&score, setup)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetId;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy() -> LexiconTable {
        LexiconTable::from_parts(
            [
                ("great".to_string(), 3.0),
                ("good".to_string(), 1.9),
                ("bad".to_string(), -2.5),
                ("calm".to_string(), 1.3),
                ("dirty".to_string(), -1.9),
            ],
            [("very".to_string(), 0.293), ("slightly".to_string(), -0.293)],
            ["not".to_string(), "never".to_string()],
        )
    }

    #[test]
    fn empty_text_is_neutral_zero() {
        let s = toy().score("").unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.label, Polarity::Neutral);
    }

    #[test]
    fn single_token_normalization() {
        // 3 / sqrt(9 + 15)
        let s = toy().score("great").unwrap();
        assert_abs_diff_eq!(s.value, 0.612_372_4, epsilon = 1e-6);
        assert_eq!(s.label, Polarity::Positive);
    }

    #[test]
    fn cancellation_gives_exact_zero() {
        let lex = LexiconTable::from_parts(
            [("up".to_string(), 2.0), ("down".to_string(), -2.0)],
            [],
            [],
        );
        let s = lex.score("Up, then down.").unwrap();
        assert_eq!(s.value, 0.0);
        assert_eq!(s.label, Polarity::Neutral);
    }

    #[test]
    fn negation_within_window_flips() {
        let lex = toy();
        let p = ScoringParams::default();
        assert_abs_diff_eq!(lex.raw_sum("not good", &p).unwrap(), -0.74 * 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(lex.raw_sum("not a very good", &p).unwrap(), -0.74 * (1.9 + 0.293), epsilon = 1e-12);
        // four tokens back is outside the window
        assert_abs_diff_eq!(lex.raw_sum("not one two three good", &p).unwrap(), 1.9, epsilon = 1e-12);
        assert_abs_diff_eq!(lex.raw_sum("isn't good", &p).unwrap(), -0.74 * 1.9, epsilon = 1e-12);
    }

    #[test]
    fn boosters_follow_the_sign_of_the_boosted_token() {
        let lex = toy();
        let p = ScoringParams::default();
        assert_abs_diff_eq!(lex.raw_sum("very bad", &p).unwrap(), -(2.5 + 0.293), epsilon = 1e-12);
        assert_abs_diff_eq!(lex.raw_sum("very, very good", &p).unwrap(), 1.9 + 0.293 + 0.293 * 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(lex.raw_sum("slightly dirty", &p).unwrap(), -(1.9 - 0.293), epsilon = 1e-12);
    }

    #[test]
    fn tokenizer_lowercases_and_splits_punctuation() {
        assert_eq!(tokenize("A GREAT, sunny-day! Don't"), ["a", "great", "sunny", "day", "don't"]);
    }

    #[test]
    fn threshold_bands() {
        assert_eq!(CompoundScore::from_value(0.5, 0.5).label, Polarity::Neutral);
        assert_eq!(CompoundScore::from_value(-0.5, 0.5).label, Polarity::Neutral);
        assert_eq!(CompoundScore::from_value(0.5000001, 0.5).label, Polarity::Positive);
        assert_eq!(CompoundScore::from_value(-0.9, 0.5).label, Polarity::Negative);
        assert_eq!(CompoundScore::from_value(0.3, 0.5).label, Polarity::Neutral);
    }

    #[test]
    fn setup_mapping() {
        let p3 = ProblemSetup::new(DatasetId::Percept5, 3, 3).unwrap();
        let p5 = ProblemSetup::new(DatasetId::Percept5, 3, 5).unwrap();
        let p2 = ProblemSetup::new(DatasetId::Deep2, 3, 2).unwrap();
        let at = |v| CompoundScore::from_value(v, 0.5);
        assert_eq!(label_for_setup(&at(0.3), &p3).unwrap(), 1);
        assert_eq!(label_for_setup(&at(-0.9), &p3).unwrap(), 2);
        assert_eq!(label_for_setup(&at(0.9), &p3).unwrap(), 0);
        assert!(matches!(label_for_setup(&at(0.9), &p5), Err(LexiconError::UnsupportedSetup(5))));
        assert_eq!(label_for_setup(&at(0.1), &p2).unwrap(), 0);
        assert_eq!(label_for_setup(&at(0.0), &p2).unwrap(), 1);
    }

    #[test]
    fn empty_lexicon_is_an_error() {
        let lex = LexiconTable::default();
        assert!(matches!(lex.score("good"), Err(LexiconError::EmptyLexicon)));
    }

    #[test]
    fn duplicate_tokens_rejected() {
        let err = LexiconTable::parse("good\t1.9\nGood\t2.0\n", "", "").unwrap_err();
        assert!(matches!(err, LexiconError::DuplicateToken { line: 2, .. }));
        assert!(LexiconTable::parse("good\tNaN\n", "", "").is_err());
        assert!(LexiconTable::parse("good 1.9\n", "", "").is_err());
    }

    #[test]
    fn builtin_assets_load() {
        let lex = LexiconTable::builtin();
        assert!(lex.len() > 7000);
        assert_eq!(lex.valence("good"), Some(1.9));
        let s = lex.score("A beautiful sunny park with happy children playing.").unwrap();
        assert_eq!(s.label, Polarity::Positive);
        let s = lex.score("Overflowing trash and broken, dirty sidewalks.").unwrap();
        assert!(s.value < 0.0);
    }

    proptest! {
        #[test]
        fn normalized_value_is_bounded_and_sign_preserving(raw in -1.0e6f64..1.0e6) {
            let v = normalize(raw, 15.0);
            prop_assert!(v > -1.0 && v < 1.0);
            prop_assert_eq!(v == 0.0, raw == 0.0);
            prop_assert!(v * raw >= 0.0);
        }
    }
}
