use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{accuracy, f_score, Averaging, ConfusionMatrix};
use super::stats::{ci95, paired_t, relative_gain};
use super::EvalError;
use crate::labeling::ProblemSetup;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Reports whose invalid-prediction rate exceeds this carry no score.
pub const INVALID_FLAG_RATE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    FScore,
    Accuracy,
}

impl Metric {
    pub fn score(self, cm: &ConfusionMatrix, averaging: Averaging) -> Result<f64, EvalError> {
        match self {
            Metric::FScore => f_score(cm, averaging),
            Metric::Accuracy => accuracy(cm),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::FScore => "f_score",
            Metric::Accuracy => "accuracy",
        }
    }
}

/// Scores recomputed with invalid predictions dropped instead of counted
/// wrong.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedView {
    pub evaluated: u64,
    pub per_fold_scores: Vec<f64>,
    pub mean: f64,
    pub ci95_halfwidth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub other_system: String,
    /// `None` when the fold differences are constant and non-zero.
    pub t: Option<f64>,
    pub p: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelativeGain {
    pub other_system: String,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub setup: ProblemSetup,
    pub system_id: String,
    pub metric: Metric,
    pub averaging: Averaging,
    pub k: usize,
    pub seed: u64,
    /// Empty when the report is flagged.
    pub per_fold_scores: Vec<f64>,
    pub mean: Option<f64>,
    pub ci95_halfwidth: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub invalid_rate: f64,
    pub flagged_invalid: bool,
    pub excluded: Option<ExcludedView>,
    pub pairwise: Vec<PairwiseTest>,
    pub relative_gains: Vec<RelativeGain>,
}

impl EvalReport {
    /// Builds a report from one confusion matrix per held-out fold.
    pub fn from_folds(
        setup: ProblemSetup,
        system_id: impl Into<String>,
        metric: Metric,
        averaging: Averaging,
        seed: u64,
        folds: &[ConfusionMatrix],
    ) -> Result<Self, EvalError> {
        if folds.is_empty() {
            return Err(EvalError::EmptyMatrix);
        }
        let classes = setup.classes;
        if folds.iter().any(|f| f.classes() != classes) {
            return Err(EvalError::ClassCountMismatch);
        }
        let mut confusion = ConfusionMatrix::new(classes);
        for f in folds {
            confusion.merge(f);
        }
        let invalid_rate = confusion.invalid_rate();
        let flagged_invalid = invalid_rate > INVALID_FLAG_RATE;

        let scores = folds
            .iter()
            .map(|f| metric.score(f, averaging))
            .collect::<Result<Vec<_>, _>>()?;
        let (per_fold_scores, mean, ci95_halfwidth) = if flagged_invalid {
            (Vec::new(), None, None)
        } else {
            let (mean, hw) = summarize(&scores)?;
            (scores, Some(mean), hw)
        };

        let excluded = if confusion.invalid_count() == 0 {
            None
        } else {
            excluded_view(folds, metric, averaging)?
        };

        Ok(EvalReport {
            setup,
            system_id: system_id.into(),
            metric,
            averaging,
            k: folds.len(),
            seed,
            per_fold_scores,
            mean,
            ci95_halfwidth,
            confusion,
            invalid_rate,
            flagged_invalid,
            excluded,
            pairwise: Vec::new(),
            relative_gains: Vec::new(),
        })
    }

    fn same_cell(&self, other: &EvalReport) -> bool {
        self.setup == other.setup && self.metric == other.metric && self.averaging == other.averaging
    }

    /// `"<dataset>/<setup key>"`, the grouping key of tables and charts.
    pub fn setup_label(&self) -> String {
        format!("{}/{}", self.setup.dataset_id, self.setup.key())
    }
}

fn summarize(scores: &[f64]) -> Result<(f64, Option<f64>), EvalError> {
    if scores.len() < 2 {
        return Ok((scores[0], None));
    }
    let ci = ci95(scores)?;
    Ok((ci.mean, Some(ci.halfwidth)))
}

fn excluded_view(folds: &[ConfusionMatrix], metric: Metric, averaging: Averaging) -> Result<Option<ExcludedView>, EvalError> {
    let valid: Vec<ConfusionMatrix> = folds.iter().map(|f| f.valid_only()).collect();
    if valid.iter().any(|f| f.evaluated() == 0) {
        return Ok(None);
    }
    let scores = valid
        .iter()
        .map(|f| metric.score(f, averaging))
        .collect::<Result<Vec<_>, _>>()?;
    let (mean, ci95_halfwidth) = summarize(&scores)?;
    Ok(Some(ExcludedView {
        evaluated: valid.iter().map(|f| f.evaluated()).sum(),
        per_fold_scores: scores,
        mean,
        ci95_halfwidth,
    }))
}

/// Fills `pairwise` and `relative_gains` for every pair of reports that
/// share a setup and metric. Flagged reports take no part.
pub fn annotate_comparisons(reports: &mut [EvalReport]) {
    let n = reports.len();
    for i in 0..n {
        let mut pairwise = Vec::new();
        let mut gains = Vec::new();
        for j in 0..n {
            let (a, b) = (&reports[i], &reports[j]);
            if i == j || !a.same_cell(b) || a.flagged_invalid || b.flagged_invalid || a.system_id == b.system_id {
                continue;
            }
            if a.per_fold_scores.len() == b.per_fold_scores.len() && a.per_fold_scores.len() >= 2 {
                let (t, p) = match paired_t(&a.per_fold_scores, &b.per_fold_scores) {
                    Ok(r) => (Some(r.t), Some(r.p)),
                    Err(_) => (None, None),
                };
                pairwise.push(PairwiseTest {
                    other_system: b.system_id.clone(),
                    t,
                    p,
                });
            }
            if let (Some(x), Some(y)) = (a.mean, b.mean) {
                if let Ok(gain) = relative_gain(x, y) {
                    gains.push(RelativeGain {
                        other_system: b.system_id.clone(),
                        gain,
                    });
                }
            }
        }
        reports[i].pairwise = pairwise;
        reports[i].relative_gains = gains;
    }
}

#[derive(Serialize)]
struct ReportFile<'a> {
    schema_version: u32,
    reports: &'a [EvalReport],
}

/// Pretty JSON with a fixed field order and no timestamps, so identical
/// inputs give identical bytes.
pub fn render_json(reports: &[EvalReport]) -> String {
    let mut s = serde_json::to_string_pretty(&ReportFile {
        schema_version: REPORT_SCHEMA_VERSION,
        reports,
    })
    .expect("reports serialize");
    s.push('\n');
    s
}

/// Ordered unique values by first appearance.
fn first_seen<T: PartialEq + Clone>(items: impl IntoIterator<Item = T>) -> Vec<T> {
    let mut out: Vec<T> = Vec::new();
    for item in items {
        if !out.contains(&item) {
            out.push(item);
        }
    }
    out
}

fn cell(r: &EvalReport) -> String {
    match (r.flagged_invalid, r.mean) {
        (false, Some(m)) => match r.ci95_halfwidth {
            Some(hw) => format!("{:.1} ± {:.1}", m * 100.0, hw * 100.0),
            None => format!("{:.1}", m * 100.0),
        },
        _ => "—".to_string(),
    }
}

/// Systems as rows, setups as columns, cells `mean ± CI` in percent.
/// Flagged reports show `—`.
pub fn render_table(reports: &[EvalReport]) -> String {
    let setups = first_seen(reports.iter().map(|r| r.setup_label()));
    let systems = first_seen(reports.iter().map(|r| r.system_id.clone()));
    let metrics = first_seen(reports.iter().map(|r| r.metric.as_str()));

    let mut rows = vec![std::iter::once("system".to_string()).chain(setups.iter().cloned()).collect::<Vec<_>>()];
    for system in &systems {
        let mut row = vec![system.clone()];
        for setup in &setups {
            let found = reports
                .iter()
                .find(|r| &r.system_id == system && &r.setup_label() == setup);
            row.push(found.map(cell).unwrap_or_default());
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();

    let mut out = String::new();
    let _ = writeln!(out, "metric: {}", metrics.join(", "));
    for (n, row) in rows.iter().enumerate() {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(text, &w)| format!("{text}{}", " ".repeat(w - text.chars().count())))
            .collect();
        let _ = writeln!(out, "{}", line.join(" | ").trim_end());
        if n == 0 {
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            let _ = writeln!(out, "{}", rule.join("-+-"));
        }
    }
    let notes: Vec<&EvalReport> = reports.iter().filter(|r| r.confusion.invalid_count() > 0).collect();
    if !notes.is_empty() {
        out.push('\n');
        for r in notes {
            let _ = write!(
                out,
                "{} {}: invalid outputs {}/{} ({:.1}%)",
                r.system_id,
                r.setup_label(),
                r.confusion.invalid_count(),
                r.confusion.evaluated(),
                r.invalid_rate * 100.0
            );
            if let Some(ex) = &r.excluded {
                let _ = write!(out, ", excluding them: {:.1}", ex.mean * 100.0);
            }
            out.push('\n');
        }
    }
    out
}

/// `dataset,setup,system,mean,ci_low,ci_high`, rows grouped by setup.
/// Flagged reports leave the numeric fields empty.
pub fn render_chart_csv(reports: &[EvalReport]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["dataset", "setup", "system", "mean", "ci_low", "ci_high"])
        .expect("in-memory write");
    for setup in first_seen(reports.iter().map(|r| r.setup_label())) {
        for r in reports.iter().filter(|r| r.setup_label() == setup) {
            let (mean, low, high) = match (r.flagged_invalid, r.mean) {
                (false, Some(m)) => {
                    let hw = r.ci95_halfwidth.unwrap_or(0.0);
                    (format!("{m:.6}"), format!("{:.6}", m - hw), format!("{:.6}", m + hw))
                }
                _ => Default::default(),
            };
            w.write_record([
                r.setup.dataset_id.as_str(),
                &r.setup.key().to_string(),
                &r.system_id,
                &mean,
                &low,
                &high,
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmittedFiles {
    pub json: PathBuf,
    pub table: PathBuf,
    pub chart: Option<PathBuf>,
}

/// Writes `report.json`, `report.txt` and, when `chart` is set,
/// `chart.csv` into `dir`.
pub fn emit_report(reports: &[EvalReport], dir: &Path, chart: bool) -> Result<EmittedFiles, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::EmptyReports);
    }
    let write = |name: &str, body: String| -> Result<PathBuf, EvalError> {
        let path = dir.join(name);
        std::fs::create_dir_all(dir)
            .and_then(|_| std::fs::write(&path, body))
            .map_err(|e| EvalError::Io {
                path: path.display().to_string(),
                message: e.to_string(),
            })?;
        Ok(path)
    };
    Ok(EmittedFiles {
        json: write("report.json", render_json(reports))?,
        table: write("report.txt", render_table(reports))?,
        chart: if chart {
            Some(write("chart.csv", render_chart_csv(reports))?)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::DatasetId;
    use approx::assert_abs_diff_eq;

    fn setup(key: &str) -> ProblemSetup {
        ProblemSetup::from_key(DatasetId::Percept5, key).unwrap()
    }

    fn diag_fold(classes: usize, correct: u64, wrong: u64) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::new(classes);
        for c in 0..classes {
            cm.counts[c][c] = correct;
            cm.counts[c][(c + 1) % classes] = wrong;
        }
        cm
    }

    fn report(key: &str, system: &str, wrongs: &[u64]) -> EvalReport {
        let s = setup(key);
        let folds: Vec<_> = wrongs.iter().map(|&w| diag_fold(s.classes, 10, w)).collect();
        EvalReport::from_folds(s, system, Metric::FScore, Averaging::Macro, 7, &folds).unwrap()
    }

    #[test]
    fn mean_matches_fold_scores() {
        let r = report("s3p3", "a", &[0, 1, 2, 3, 4]);
        let m = r.per_fold_scores.iter().sum::<f64>() / 5.0;
        assert_abs_diff_eq!(r.mean.unwrap(), m, epsilon = 1e-12);
        assert!(r.ci95_halfwidth.unwrap() > 0.0);
        assert_eq!(r.k, 5);
        assert_eq!(r.confusion.total(), 5 * 30 + 3 * 10);
        assert!(r.excluded.is_none());
    }

    #[test]
    fn mostly_invalid_is_flagged() {
        let s = setup("s3p2");
        let folds: Vec<_> = (0..5)
            .map(|_| {
                let mut cm = ConfusionMatrix::new(2);
                cm.record(0, Some(0));
                cm.record(1, None);
                cm.record(0, None);
                cm
            })
            .collect();
        let r = EvalReport::from_folds(s, "verbose", Metric::FScore, Averaging::Macro, 0, &folds).unwrap();
        assert!(r.flagged_invalid);
        assert!(r.mean.is_none() && r.per_fold_scores.is_empty());
        assert!(render_table(std::slice::from_ref(&r)).contains("—"));
        assert!(render_chart_csv(&[r]).contains("s3p2,verbose,,,"));
    }

    #[test]
    fn excluded_view_drops_invalid() {
        let s = setup("s3p2");
        let folds: Vec<_> = (0..5)
            .map(|_| {
                let mut cm = diag_fold(2, 5, 0);
                cm.record(0, None);
                cm
            })
            .collect();
        let r = EvalReport::from_folds(s, "x", Metric::Accuracy, Averaging::Macro, 0, &folds).unwrap();
        assert_abs_diff_eq!(r.mean.unwrap(), 10.0 / 11.0, epsilon = 1e-12);
        assert_eq!(r.excluded.as_ref().unwrap().mean, 1.0);
        assert_eq!(r.excluded.unwrap().evaluated, 50);
    }

    #[test]
    fn comparisons_within_setup() {
        let mut reports = vec![
            report("s3p3", "a", &[0, 1, 0, 2, 1]),
            report("s3p3", "b", &[3, 5, 4, 6, 4]),
            report("s5p3", "a", &[0, 0, 0, 0, 0]),
        ];
        annotate_comparisons(&mut reports);
        assert_eq!(reports[0].pairwise.len(), 1);
        assert_eq!(reports[0].pairwise[0].other_system, "b");
        let (t_ab, t_ba) = (reports[0].pairwise[0].t.unwrap(), reports[1].pairwise[0].t.unwrap());
        assert_abs_diff_eq!(t_ab, -t_ba, epsilon = 1e-9);
        assert!(reports[0].relative_gains[0].gain > 0.0);
        assert!(reports[2].pairwise.is_empty());
    }

    #[test]
    fn one_report_one_row() {
        let r = report("s3p5", "gpt", &[0, 1, 0, 1, 0]);
        let json: serde_json::Value = serde_json::from_str(&render_json(std::slice::from_ref(&r))).unwrap();
        assert_eq!(json["schema_version"], 1);
        assert_eq!(json["reports"].as_array().unwrap().len(), 1);
        let table = render_table(&[r]);
        assert_eq!(table.lines().count(), 4);
        assert!(table.contains("percept5/s3p5"));
    }

    #[test]
    fn chart_groups_by_setup() {
        let mut reports = Vec::new();
        for system in ["a", "b", "c"] {
            for key in ["s3p5", "s3p3", "s5p5", "s5p3"] {
                reports.push(report(key, system, &[0, 1, 2, 1, 0]));
            }
        }
        let chart = render_chart_csv(&reports);
        let rows: Vec<&str> = chart.lines().skip(1).collect();
        assert_eq!(rows.len(), 12);
        let setups: Vec<&str> = rows.iter().map(|r| r.split(',').nth(1).unwrap()).collect();
        let groups = first_seen(setups.iter().copied());
        assert_eq!(groups, vec!["s3p5", "s3p3", "s5p5", "s5p3"]);
        for g in 0..4 {
            assert!(setups[g * 3..g * 3 + 3].iter().all(|s| *s == groups[g]));
        }
    }

    #[test]
    fn emission_is_byte_stable() {
        let reports = vec![report("s3p3", "a", &[0, 1, 0, 2, 1]), report("s3p3", "b", &[1, 1, 2, 2, 1])];
        let d1 = tempfile::tempdir().unwrap();
        let d2 = tempfile::tempdir().unwrap();
        let f1 = emit_report(&reports, d1.path(), true).unwrap();
        let f2 = emit_report(&reports, d2.path(), true).unwrap();
        for (a, b) in [(f1.json, f2.json), (f1.table, f2.table), (f1.chart.unwrap(), f2.chart.unwrap())] {
            assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
        }
        assert_eq!(emit_report(&[], d1.path(), false), Err(EvalError::EmptyReports));
    }
}
