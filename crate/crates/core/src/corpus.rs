//! Annotation ingestion.
//!
//! Every source layout is translated into [`Dataset`]: one [`AnnotationRecord`]
//! per image carrying a vote vector over the dataset's categories. Rows that
//! break the vote invariants are rejected, never repaired.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Category names of the five-level dataset, most positive first.
pub const PERCEPT5_CATEGORIES: [&str; 5] = [
    "positive",
    "slightly positive",
    "neutral",
    "slightly negative",
    "negative",
];

/// Category names of the binary dataset.
pub const DEEP2_CATEGORIES: [&str; 2] = ["positive", "negative"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetId {
    /// Five categories, five evaluators per image.
    Percept5,
    /// Two categories, five evaluators per image.
    Deep2,
    Custom,
}

impl DatasetId {
    pub fn as_str(self) -> &'static str {
        match self {
            DatasetId::Percept5 => "percept5",
            DatasetId::Deep2 => "deep2",
            DatasetId::Custom => "custom",
        }
    }
}

impl fmt::Display for DatasetId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "percept5" => Ok(DatasetId::Percept5),
            "deep2" => Ok(DatasetId::Deep2),
            "custom" => Ok(DatasetId::Custom),
            other => Err(format!("unknown dataset {other}; use percept5, deep2 or custom")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub image_id: String,
    pub image_uri: String,
    pub votes: Vec<u32>,
    pub dataset_id: DatasetId,
}

impl AnnotationRecord {
    pub fn max_votes(&self) -> u32 {
        self.votes.iter().copied().max().unwrap_or(0)
    }
}

/// An immutable, validated annotation collection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub dataset_id: DatasetId,
    pub category_names: Vec<String>,
    pub records: Vec<AnnotationRecord>,
    pub evaluator_count: u32,
}

impl Dataset {
    pub fn categories(&self) -> usize {
        self.category_names.len()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, image_id: &str) -> Option<&AnnotationRecord> {
        self.records.iter().find(|r| r.image_id == image_id)
    }

    /// Index from image id to record, for repeated lookups.
    pub fn index(&self) -> HashMap<&str, &AnnotationRecord> {
        self.records
            .iter()
            .map(|r| (r.image_id.as_str(), r))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    /// One row per image: id, uri, then one count column per category.
    #[default]
    Wide,
    /// One row per evaluator judgment; a label column names the category.
    PerVote,
}

/// Column mapping for one source format.
///
/// The default profile for a dataset reads the normalized schema
/// `image_id,image_uri,v1..vC`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IngestProfile {
    pub dataset_id: DatasetId,
    #[serde(default)]
    pub layout: Layout,
    /// Required for `custom`; fixed for the built-in datasets.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category_names: Option<Vec<String>>,
    #[serde(default = "default_evaluators")]
    pub evaluators: u32,
    #[serde(default = "default_id_column")]
    pub id_column: String,
    #[serde(default = "default_uri_column")]
    pub uri_column: String,
    /// Wide layout only. Defaults to `v1..vC`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vote_columns: Option<Vec<String>>,
    /// Per-vote layout only.
    #[serde(default = "default_label_column")]
    pub label_column: String,
    /// Per-vote layout only: the raw label value for each category, in
    /// category order. Defaults to the category names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_values: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected_records: Option<usize>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
}

fn default_evaluators() -> u32 {
    5
}
fn default_id_column() -> String {
    "image_id".into()
}
fn default_uri_column() -> String {
    "image_uri".into()
}
fn default_label_column() -> String {
    "label".into()
}
fn default_delimiter() -> char {
    ','
}

impl IngestProfile {
    pub fn normalized(dataset_id: DatasetId) -> Self {
        IngestProfile {
            dataset_id,
            layout: Layout::Wide,
            category_names: None,
            evaluators: default_evaluators(),
            id_column: default_id_column(),
            uri_column: default_uri_column(),
            vote_columns: None,
            label_column: default_label_column(),
            label_values: None,
            expected_records: None,
            delimiter: default_delimiter(),
        }
    }

    pub fn percept5() -> Self {
        Self::normalized(DatasetId::Percept5)
    }

    pub fn deep2() -> Self {
        Self::normalized(DatasetId::Deep2)
    }

    pub fn with_expected_records(mut self, n: usize) -> Self {
        self.expected_records = Some(n);
        self
    }

    pub fn resolved_categories(&self) -> Result<Vec<String>, CorpusError> {
        let names: Vec<String> = match self.dataset_id {
            DatasetId::Percept5 => PERCEPT5_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            DatasetId::Deep2 => DEEP2_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            DatasetId::Custom => self.category_names.clone().ok_or_else(|| {
                CorpusError::InvalidProfile("custom datasets must declare category_names".into())
            })?,
        };
        if let (Some(given), false) = (&self.category_names, self.dataset_id == DatasetId::Custom) {
            if *given != names {
                return Err(CorpusError::InvalidProfile(format!(
                    "{} has fixed categories {:?}",
                    self.dataset_id, names
                )));
            }
        }
        if names.len() < 2 {
            return Err(CorpusError::InvalidProfile(
                "at least two categories are required".into(),
            ));
        }
        Ok(names)
    }

    fn resolved_vote_columns(&self, c: usize) -> Vec<String> {
        self.vote_columns
            .clone()
            .unwrap_or_else(|| (1..=c).map(|i| format!("v{i}")).collect())
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("annotation file not found: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("schema mismatch in {}: {message}", path.display())]
    SchemaMismatch { path: PathBuf, message: String },
    #[error("line {line}: malformed row: {message}")]
    MalformedRow { line: u64, message: String },
    #[error("line {line}: votes for image {image_id} sum to {sum}, expected {expected}")]
    VoteSumViolation {
        image_id: String,
        line: u64,
        sum: u32,
        expected: u32,
    },
    #[error("line {line}: duplicate image id {image_id}")]
    DuplicateImageId { image_id: String, line: u64 },
    #[error("expected {expected} records, found {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("invalid ingestion profile: {0}")]
    InvalidProfile(String),
    #[error("reading {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    /// Line number of the offending row, when the error is row-specific.
    pub fn line(&self) -> Option<u64> {
        match self {
            CorpusError::MalformedRow { line, .. }
            | CorpusError::VoteSumViolation { line, .. }
            | CorpusError::DuplicateImageId { line, .. } => Some(*line),
            _ => None,
        }
    }
}

/// A row dropped under lenient ingestion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectedRow {
    pub line: u64,
    pub reason: String,
}

/// Reads `path` under `profile`, aborting on the first invalid row.
pub fn ingest(path: &Path, profile: &IngestProfile) -> Result<Dataset, CorpusError> {
    let (dataset, _) = read(path, profile, false)?;
    if let Some(expected) = profile.expected_records {
        if dataset.len() != expected {
            return Err(CorpusError::CountMismatch {
                expected,
                found: dataset.len(),
            });
        }
    }
    Ok(dataset)
}

/// Reads `path`, collecting invalid rows instead of failing. File-level
/// problems (missing file, wrong header) are still errors.
pub fn ingest_lenient(
    path: &Path,
    profile: &IngestProfile,
) -> Result<(Dataset, Vec<RejectedRow>), CorpusError> {
    read(path, profile, true)
}

fn read(
    path: &Path,
    profile: &IngestProfile,
    lenient: bool,
) -> Result<(Dataset, Vec<RejectedRow>), CorpusError> {
    if !path.is_file() {
        return Err(CorpusError::MissingFile(path.to_path_buf()));
    }
    let categories = profile.resolved_categories()?;
    if profile.evaluators == 0 {
        return Err(CorpusError::InvalidProfile("evaluators must be positive".into()));
    }
    if !profile.delimiter.is_ascii() {
        return Err(CorpusError::InvalidProfile("delimiter must be ASCII".into()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(profile.delimiter as u8)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| io_error(path, e))?;
    let headers = reader.headers().map_err(|e| io_error(path, e))?.clone();
    let header: Vec<&str> = headers.iter().map(str::trim).collect();

    let mut sink = RowSink::new(lenient);
    let records = match profile.layout {
        Layout::Wide => read_wide(path, profile, &categories, &header, &mut reader, &mut sink)?,
        Layout::PerVote => {
            read_per_vote(path, profile, &categories, &header, &mut reader, &mut sink)?
        }
    };

    Ok((
        Dataset {
            dataset_id: profile.dataset_id,
            category_names: categories,
            records,
            evaluator_count: profile.evaluators,
        },
        sink.rejected,
    ))
}

struct RowSink {
    lenient: bool,
    rejected: Vec<RejectedRow>,
}

impl RowSink {
    fn new(lenient: bool) -> Self {
        RowSink {
            lenient,
            rejected: Vec::new(),
        }
    }

    /// Either swallows the error (lenient) or hands it back.
    fn reject(&mut self, err: CorpusError) -> Result<(), CorpusError> {
        if self.lenient {
            self.rejected.push(RejectedRow {
                line: err.line().unwrap_or(0),
                reason: err.to_string(),
            });
            Ok(())
        } else {
            Err(err)
        }
    }
}

fn io_error(path: &Path, e: csv::Error) -> CorpusError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => CorpusError::SchemaMismatch {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

fn row_line(row: &csv::StringRecord) -> u64 {
    row.position().map(|p| p.line()).unwrap_or(0)
}

fn read_wide(
    path: &Path,
    profile: &IngestProfile,
    categories: &[String],
    header: &[&str],
    reader: &mut csv::Reader<std::fs::File>,
    sink: &mut RowSink,
) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let vote_columns = profile.resolved_vote_columns(categories.len());
    if vote_columns.len() != categories.len() {
        return Err(CorpusError::InvalidProfile(format!(
            "{} vote columns for {} categories",
            vote_columns.len(),
            categories.len()
        )));
    }
    let mut expected = vec![profile.id_column.as_str(), profile.uri_column.as_str()];
    expected.extend(vote_columns.iter().map(String::as_str));
    if header != expected.as_slice() {
        return Err(CorpusError::SchemaMismatch {
            path: path.to_path_buf(),
            message: format!("expected header {:?}, found {:?}", expected, header),
        });
    }

    let mut seen = HashSet::new();
    let mut records = Vec::new();
    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                sink.reject(CorpusError::MalformedRow {
                    line,
                    message: e.to_string(),
                })?;
                continue;
            }
        };
        let line = row_line(&row);
        match parse_wide_row(&row, line, profile, categories.len(), &seen) {
            Ok(record) => {
                seen.insert(record.image_id.clone());
                records.push(record);
            }
            Err(e) => sink.reject(e)?,
        }
    }
    Ok(records)
}

fn parse_wide_row(
    row: &csv::StringRecord,
    line: u64,
    profile: &IngestProfile,
    c: usize,
    seen: &HashSet<String>,
) -> Result<AnnotationRecord, CorpusError> {
    let image_id = row.get(0).unwrap_or("").trim().to_string();
    if image_id.is_empty() {
        return Err(CorpusError::MalformedRow {
            line,
            message: "empty image id".into(),
        });
    }
    let image_uri = row.get(1).unwrap_or("").trim().to_string();
    let mut votes = Vec::with_capacity(c);
    for i in 0..c {
        let raw = row.get(2 + i).unwrap_or("").trim();
        let v: u32 = raw.parse().map_err(|_| CorpusError::MalformedRow {
            line,
            message: format!("vote column {} is not a non-negative integer: {raw:?}", i + 1),
        })?;
        votes.push(v);
    }
    let sum: u32 = votes.iter().sum();
    if sum != profile.evaluators {
        return Err(CorpusError::VoteSumViolation {
            image_id,
            line,
            sum,
            expected: profile.evaluators,
        });
    }
    if seen.contains(&image_id) {
        return Err(CorpusError::DuplicateImageId { image_id, line });
    }
    Ok(AnnotationRecord {
        image_id,
        image_uri,
        votes,
        dataset_id: profile.dataset_id,
    })
}

fn read_per_vote(
    path: &Path,
    profile: &IngestProfile,
    categories: &[String],
    header: &[&str],
    reader: &mut csv::Reader<std::fs::File>,
    sink: &mut RowSink,
) -> Result<Vec<AnnotationRecord>, CorpusError> {
    let find = |name: &str| {
        header
            .iter()
            .position(|h| *h == name)
            .ok_or_else(|| CorpusError::SchemaMismatch {
                path: path.to_path_buf(),
                message: format!("missing column {name:?} in {header:?}"),
            })
    };
    let id_col = find(&profile.id_column)?;
    let uri_col = find(&profile.uri_column)?;
    let label_col = find(&profile.label_column)?;
    let values = profile.label_values.clone().unwrap_or_else(|| categories.to_vec());
    if values.len() != categories.len() {
        return Err(CorpusError::InvalidProfile(format!(
            "{} label values for {} categories",
            values.len(),
            categories.len()
        )));
    }
    let lookup: HashMap<String, usize> = values
        .iter()
        .enumerate()
        .map(|(i, v)| (v.trim().to_lowercase(), i))
        .collect();

    struct Pending {
        uri: String,
        votes: Vec<u32>,
        first_line: u64,
        broken: bool,
    }
    let mut order: Vec<String> = Vec::new();
    let mut pending: HashMap<String, Pending> = HashMap::new();

    for row in reader.records() {
        let row = match row {
            Ok(row) => row,
            Err(e) => {
                let line = e.position().map(|p| p.line()).unwrap_or(0);
                sink.reject(CorpusError::MalformedRow {
                    line,
                    message: e.to_string(),
                })?;
                continue;
            }
        };
        let line = row_line(&row);
        let image_id = row.get(id_col).unwrap_or("").trim().to_string();
        let uri = row.get(uri_col).unwrap_or("").trim().to_string();
        let label = row.get(label_col).unwrap_or("").trim().to_lowercase();
        if image_id.is_empty() {
            sink.reject(CorpusError::MalformedRow {
                line,
                message: "empty image id".into(),
            })?;
            continue;
        }
        let Some(&category) = lookup.get(&label) else {
            if let Some(p) = pending.get_mut(&image_id) {
                p.broken = true;
            }
            sink.reject(CorpusError::MalformedRow {
                line,
                message: format!("unknown label {label:?}"),
            })?;
            continue;
        };
        let entry = pending.entry(image_id.clone()).or_insert_with(|| {
            order.push(image_id.clone());
            Pending {
                uri: uri.clone(),
                votes: vec![0; categories.len()],
                first_line: line,
                broken: false,
            }
        });
        entry.votes[category] += 1;
    }

    let mut records = Vec::with_capacity(order.len());
    for image_id in order {
        let p = pending.remove(&image_id).expect("pending entry for ordered id");
        if p.broken {
            continue;
        }
        let sum: u32 = p.votes.iter().sum();
        if sum != profile.evaluators {
            sink.reject(CorpusError::VoteSumViolation {
                image_id,
                line: p.first_line,
                sum,
                expected: profile.evaluators,
            })?;
            continue;
        }
        records.push(AnnotationRecord {
            image_id,
            image_uri: p.uri,
            votes: p.votes,
            dataset_id: profile.dataset_id,
        });
    }
    Ok(records)
}

/// Vote totals and agreement histogram of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub dataset_id: DatasetId,
    pub records: usize,
    pub evaluators: u32,
    pub category_names: Vec<String>,
    /// Votes per category across all records.
    pub vote_totals: Vec<u64>,
    pub total_votes: u64,
    /// Number of records whose most-voted category received `k` votes.
    pub max_vote_histogram: BTreeMap<u32, usize>,
}

pub fn stats(d: &Dataset) -> DatasetStats {
    let mut vote_totals = vec![0u64; d.categories()];
    let mut max_vote_histogram = BTreeMap::new();
    for r in &d.records {
        for (total, v) in vote_totals.iter_mut().zip(&r.votes) {
            *total += u64::from(*v);
        }
        *max_vote_histogram.entry(r.max_votes()).or_insert(0) += 1;
    }
    DatasetStats {
        dataset_id: d.dataset_id,
        records: d.len(),
        evaluators: d.evaluator_count,
        category_names: d.category_names.clone(),
        total_votes: vote_totals.iter().sum(),
        vote_totals,
        max_vote_histogram,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    const HEADER5: &str = "image_id,image_uri,v1,v2,v3,v4,v5\n";

    #[test]
    fn reads_normalized_rows_in_file_order() {
        let f = write(&format!("{HEADER5}b,img/b.jpg,0,0,1,3,1\na,img/a.jpg,5,0,0,0,0\n"));
        let d = ingest(f.path(), &IngestProfile::percept5()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.records[0].image_id, "b");
        assert_eq!(d.records[0].votes, vec![0, 0, 1, 3, 1]);
        assert_eq!(d.records[1].image_uri, "img/a.jpg");
        assert_eq!(d.category_names[1], "slightly positive");
    }

    #[test]
    fn header_only_file_is_an_empty_dataset() {
        let f = write(HEADER5);
        let d = ingest(f.path(), &IngestProfile::percept5()).unwrap();
        assert!(d.is_empty());
        assert_eq!(stats(&d).total_votes, 0);
    }

    #[test]
    fn missing_file() {
        let err = ingest(Path::new("/nonexistent/x.csv"), &IngestProfile::percept5()).unwrap_err();
        assert!(matches!(err, CorpusError::MissingFile(_)));
    }

    #[test]
    fn wrong_column_order_is_schema_mismatch() {
        let f = write("image_uri,image_id,v1,v2,v3,v4,v5\n");
        let err = ingest(f.path(), &IngestProfile::percept5()).unwrap_err();
        assert!(matches!(err, CorpusError::SchemaMismatch { .. }));
        let f = write("image_id,image_uri,v1,v2\n");
        let err = ingest(f.path(), &IngestProfile::percept5()).unwrap_err();
        assert!(matches!(err, CorpusError::SchemaMismatch { .. }));
    }

    #[test]
    fn vote_sum_violation_names_the_image() {
        let f = write(&format!("{HEADER5}ok,u,1,1,1,1,1\nbad,u,1,1,1,1,0\n"));
        match ingest(f.path(), &IngestProfile::percept5()).unwrap_err() {
            CorpusError::VoteSumViolation { image_id, line, sum, .. } => {
                assert_eq!(image_id, "bad");
                assert_eq!(line, 3);
                assert_eq!(sum, 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let f = write(&format!("{HEADER5}a,u,5,0,0,0,0\na,u,0,5,0,0,0\n"));
        let err = ingest(f.path(), &IngestProfile::percept5()).unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateImageId { line: 3, .. }));
    }

    #[test]
    fn non_integer_votes_are_malformed() {
        let f = write(&format!("{HEADER5}a,u,5,0,x,0,0\n"));
        let err = ingest(f.path(), &IngestProfile::percept5()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow { line: 2, .. }));
        let f = write(&format!("{HEADER5}a,u,5,0,0,0\n"));
        let err = ingest(f.path(), &IngestProfile::percept5()).unwrap_err();
        assert!(matches!(err, CorpusError::MalformedRow { .. }), "{err:?}");
    }

    #[test]
    fn lenient_mode_collects_bad_rows() {
        let f = write(&format!(
            "{HEADER5}a,u,5,0,0,0,0\nb,u,1,1,1,1,0\nc,u,0,0,5,0,0\n"
        ));
        let (d, rejected) = ingest_lenient(f.path(), &IngestProfile::percept5()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(rejected.len(), 1);
        assert_eq!(rejected[0].line, 3);
    }

    #[test]
    fn manifest_count_enforced() {
        let f = write(&format!("{HEADER5}a,u,5,0,0,0,0\n"));
        let err = ingest(f.path(), &IngestProfile::percept5().with_expected_records(2)).unwrap_err();
        assert!(matches!(err, CorpusError::CountMismatch { expected: 2, found: 1 }));
    }

    #[test]
    fn per_vote_layout_aggregates_judgments() {
        let f = write(
            "worker,image_id,image_uri,label\n\
             w1,a,u/a,Positive\nw2,a,u/a,positive\nw3,b,u/b,Negative\nw4,a,u/a,Negative\n\
             w5,b,u/b,negative\nw6,a,u/a,positive\nw7,a,u/a,positive\nw8,b,u/b,negative\n\
             w9,b,u/b,positive\nw10,b,u/b,negative\n",
        );
        let profile = IngestProfile {
            layout: Layout::PerVote,
            ..IngestProfile::deep2()
        };
        let d = ingest(f.path(), &profile).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.records[0].votes, vec![4, 1]);
        assert_eq!(d.records[1].votes, vec![1, 4]);
    }

    #[test]
    fn per_vote_short_image_is_a_sum_violation() {
        let f = write("image_id,image_uri,label\na,u,positive\na,u,negative\n");
        let profile = IngestProfile {
            layout: Layout::PerVote,
            ..IngestProfile::deep2()
        };
        let err = ingest(f.path(), &profile).unwrap_err();
        assert!(matches!(err, CorpusError::VoteSumViolation { sum: 2, .. }));
    }

    #[test]
    fn custom_dataset_requires_categories() {
        let f = write("image_id,image_uri,v1,v2,v3\n");
        let mut profile = IngestProfile::normalized(DatasetId::Custom);
        assert!(matches!(
            ingest(f.path(), &profile).unwrap_err(),
            CorpusError::InvalidProfile(_)
        ));
        profile.category_names = Some(vec!["positive".into(), "neutral".into(), "negative".into()]);
        profile.evaluators = 3;
        assert_eq!(ingest(f.path(), &profile).unwrap().categories(), 3);
    }

    #[test]
    fn stats_examples() {
        let rec = |id: &str, votes: Vec<u32>| AnnotationRecord {
            image_id: id.into(),
            image_uri: String::new(),
            votes,
            dataset_id: DatasetId::Percept5,
        };
        let d = Dataset {
            dataset_id: DatasetId::Percept5,
            category_names: PERCEPT5_CATEGORIES.iter().map(|s| s.to_string()).collect(),
            records: vec![rec("a", vec![5, 0, 0, 0, 0]), rec("b", vec![0, 0, 0, 0, 5])],
            evaluator_count: 5,
        };
        let s = stats(&d);
        assert_eq!(s.max_vote_histogram, BTreeMap::from([(5, 2)]));
        assert_eq!(s.vote_totals, vec![5, 0, 0, 0, 5]);
        assert_eq!(s.total_votes, 10);

        let d = Dataset {
            records: vec![rec("u", vec![1, 1, 1, 1, 1])],
            ..d
        };
        assert_eq!(stats(&d).max_vote_histogram, BTreeMap::from([(1, 1)]));
    }
}
