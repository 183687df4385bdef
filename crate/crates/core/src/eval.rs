//! Metrics and result tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts indexed `[gold][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn zeros(n: usize) -> Self {
        ConfusionMatrix {
            n,
            counts: vec![0; n * n],
        }
    }

    pub fn from_indices(n: usize, gold: &[usize], predicted: &[usize]) -> Result<Self> {
        if gold.len() != predicted.len() {
            return Err(Error::InvalidArgument(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                predicted.len()
            )));
        }
        let mut cm = ConfusionMatrix::zeros(n);
        for (&g, &p) in gold.iter().zip(predicted) {
            if g >= n || p >= n {
                return Err(Error::InvalidArgument(format!("label index outside 0..{n}")));
            }
            cm.counts[g * n + p] += 1;
        }
        Ok(cm)
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, gold: usize, predicted: usize) -> u64 {
        self.counts[gold * self.n + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|i| self.get(i, i)).sum()
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n).map(<[u64]>::to_vec).collect()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.trace() as f64 / t as f64,
        }
    }

    pub fn class_scores(&self, class: usize) -> ClassScores {
        let tp = self.get(class, class) as f64;
        let predicted: u64 = (0..self.n).map(|g| self.get(g, class)).sum();
        let support: u64 = (0..self.n).map(|p| self.get(class, p)).sum();
        let ratio = |a: f64, b: u64| if b == 0 { 0.0 } else { a / b as f64 };
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScores {
            precision,
            recall,
            f1,
            support,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

pub const FAVOR: usize = 0;
pub const AGAINST: usize = 1;

/// Mean of the FAVOR and AGAINST F1 scores. A class that is never
/// predicted and never gold scores 0.
pub fn macro_f1_favor_against(cm: &ConfusionMatrix) -> f64 {
    (cm.class_scores(FAVOR).f1 + cm.class_scores(AGAINST).f1) / 2.0
}

pub fn aggregate_runs(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("run scores"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

pub fn aggregate_targets(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("target scores"));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// Three decimals, half away from zero, applied to the shortest decimal
/// representation of `x`.
pub fn format_3dp(x: f64) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let s = format!("{}", x.abs());
    let (int_part, frac_part) = s.split_once('.').unwrap_or((&s, ""));
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes().chain(std::iter::repeat(b'0')).take(3)).map(|b| b - b'0').collect();
    let round_up = frac_part.as_bytes().get(3).is_some_and(|&d| d >= b'5');
    if round_up {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 3;
    let int: String = digits[..split].iter().map(|d| char::from(b'0' + d)).collect();
    let frac: String = digits[split..].iter().map(|d| char::from(b'0' + d)).collect();
    let negative = x < 0.0 && digits.iter().any(|&d| d != 0);
    format!("{}{int}.{frac}", if negative { "-" } else { "" })
}

/// Scores of one (condition, target, seed) run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub condition: String,
    pub dataset: String,
    pub target: String,
    pub run_seed: u64,
    pub f1_favor: f64,
    pub f1_against: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
}

impl RunMetrics {
    pub fn from_confusion(condition: &str, dataset: &str, target: &str, run_seed: u64, cm: &ConfusionMatrix) -> Self {
        RunMetrics {
            condition: condition.to_string(),
            dataset: dataset.to_string(),
            target: target.to_string(),
            run_seed,
            f1_favor: cm.class_scores(FAVOR).f1,
            f1_against: cm.class_scores(AGAINST).f1,
            macro_f1: macro_f1_favor_against(cm),
            accuracy: cm.accuracy(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Markdown,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidArgument(format!("unknown report format {s:?}"))),
        }
    }
}

/// Per-run scores, in the order they were produced.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsReport {
    pub runs: Vec<RunMetrics>,
}

fn unique<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for item in items {
        if !out.iter().any(|o| o == item) {
            out.push(item.to_string());
        }
    }
    out
}

impl MetricsReport {
    pub fn datasets(&self) -> Vec<String> {
        unique(self.runs.iter().map(|r| r.dataset.as_str()))
    }

    pub fn conditions(&self) -> Vec<String> {
        unique(self.runs.iter().map(|r| r.condition.as_str()))
    }

    pub fn targets(&self, dataset: &str) -> Vec<String> {
        unique(self.runs.iter().filter(|r| r.dataset == dataset).map(|r| r.target.as_str()))
    }

    pub fn run_scores(&self, condition: &str, dataset: &str, target: &str) -> Vec<f64> {
        self.runs
            .iter()
            .filter(|r| r.condition == condition && r.dataset == dataset && r.target == target)
            .map(|r| r.macro_f1)
            .collect()
    }

    /// Mean macro-F1 over runs.
    pub fn target_mean(&self, condition: &str, dataset: &str, target: &str) -> Result<f64> {
        aggregate_runs(&self.run_scores(condition, dataset, target))
    }

    /// Mean over targets of the per-target run means.
    pub fn average(&self, condition: &str, dataset: &str) -> Result<f64> {
        let means: Vec<f64> = self
            .targets(dataset)
            .iter()
            .map(|t| self.target_mean(condition, dataset, t))
            .collect::<Result<_>>()?;
        aggregate_targets(&means)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for r in &self.runs {
            w.serialize(r)?;
        }
        if self.runs.is_empty() {
            w.write_record([
                "condition",
                "dataset",
                "target",
                "run_seed",
                "f1_favor",
                "f1_against",
                "macro_f1",
                "accuracy",
            ])?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let runs = r.deserialize().collect::<std::result::Result<Vec<RunMetrics>, _>>()?;
        Ok(MetricsReport { runs })
    }

    pub fn merge(&mut self, other: MetricsReport) {
        self.runs.extend(other.runs);
    }
}

/// One row per condition, one column per target of `dataset`, then Avg.
/// Cells missing from the report are left blank.
pub fn render_report(report: &MetricsReport, dataset: &str, format: ReportFormat) -> String {
    let targets = report.targets(dataset);
    let conditions: Vec<String> = report
        .conditions()
        .into_iter()
        .filter(|c| report.runs.iter().any(|r| &r.condition == c && r.dataset == dataset))
        .collect();
    let mut header = vec!["Condition".to_string()];
    header.extend(targets.iter().cloned());
    header.push("Avg".into());
    let rows: Vec<Vec<String>> = conditions
        .iter()
        .map(|c| {
            let mut row = vec![c.clone()];
            for t in &targets {
                row.push(report.target_mean(c, dataset, t).map(format_3dp).unwrap_or_default());
            }
            row.push(report.average(c, dataset).map(format_3dp).unwrap_or_default());
            row
        })
        .collect();
    let mut out = String::new();
    match format {
        ReportFormat::Csv => {
            for row in std::iter::once(&header).chain(&rows) {
                let _ = writeln!(out, "{}", row.join(","));
            }
        }
        ReportFormat::Markdown => {
            let _ = writeln!(out, "| {} |", header.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(header.len()));
            for row in &rows {
                let _ = writeln!(out, "| {} |", row.join(" | "));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const F: usize = 0;
    const A: usize = 1;
    const N: usize = 2;

    fn hand_matrix() -> ConfusionMatrix {
        ConfusionMatrix::from_indices(3, &[F, F, A, A, N], &[F, A, A, A, N]).unwrap()
    }

    #[test]
    fn confusion_counts_by_hand() {
        let cm = hand_matrix();
        assert_eq!(cm.rows(), vec![vec![1, 1, 0], vec![0, 2, 0], vec![0, 0, 1]]);
        assert_eq!(ConfusionMatrix::from_indices(3, &[], &[]).unwrap(), ConfusionMatrix::zeros(3));
        assert!(ConfusionMatrix::from_indices(3, &[F], &[]).is_err());
    }

    #[test]
    fn macro_f1_by_hand() {
        let cm = hand_matrix();
        assert!((cm.class_scores(F).f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((cm.class_scores(A).f1 - 0.8).abs() < 1e-12);
        assert!((macro_f1_favor_against(&cm) - 0.733_333_333_333_333_3).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_extremes() {
        let perfect = ConfusionMatrix::from_indices(3, &[F, A, N], &[F, A, N]).unwrap();
        assert_eq!(macro_f1_favor_against(&perfect), 1.0);
        let none = ConfusionMatrix::from_indices(3, &[F, A, N], &[N, N, N]).unwrap();
        assert_eq!(macro_f1_favor_against(&none), 0.0);
    }

    proptest! {
        #[test]
        fn metric_ignores_order_and_none_relabelling(
            pairs in prop::collection::vec((0usize..3, 0usize..3), 1..60),
            rotate in 0usize..60,
        ) {
            let (gold, pred): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let base = macro_f1_favor_against(&ConfusionMatrix::from_indices(3, &gold, &pred).unwrap());
            prop_assert!((0.0..=1.0).contains(&base));
            let k = rotate % gold.len();
            let (mut g2, mut p2) = (gold.clone(), pred.clone());
            g2.rotate_left(k);
            p2.rotate_left(k);
            let rotated = macro_f1_favor_against(&ConfusionMatrix::from_indices(3, &g2, &p2).unwrap());
            prop_assert_eq!(base, rotated);
            let relabel = |v: &[usize]| -> Vec<usize> { v.iter().map(|&x| if x == N { 3 } else { x }).collect() };
            let four = ConfusionMatrix::from_indices(4, &relabel(&gold), &relabel(&pred)).unwrap();
            prop_assert_eq!(base, macro_f1_favor_against(&four));
        }
    }

    #[test]
    fn aggregates() {
        let row = [0.767, 0.755, 0.697, 0.704, 0.702];
        assert_eq!(format_3dp(aggregate_targets(&row).unwrap()), "0.725");
        assert_eq!(aggregate_runs(&[0.5]).unwrap(), 0.5);
        assert!(aggregate_runs(&[]).is_err());
        let st = aggregate_targets(&[0.769, 0.800, 0.774, 0.795, 0.741]).unwrap();
        assert!((st - 0.7758).abs() < 1e-12);
        assert_eq!(format_3dp(st), "0.776");
    }

    #[test]
    fn rounding_is_half_away_from_zero() {
        assert_eq!(format_3dp(0.0625), "0.063");
        assert_eq!(format_3dp(0.1235), "0.124");
        assert_eq!(format_3dp(0.1234), "0.123");
        assert_eq!(format_3dp(0.9995), "1.000");
        assert_eq!(format_3dp(-0.0625), "-0.063");
        assert_eq!(format_3dp(-0.0001), "0.000");
        assert_eq!(format_3dp(1.0), "1.000");
    }

    fn run(condition: &str, target: &str, seed: u64, f1: f64) -> RunMetrics {
        RunMetrics {
            condition: condition.into(),
            dataset: "SemEval".into(),
            target: target.into(),
            run_seed: seed,
            f1_favor: f1,
            f1_against: f1,
            macro_f1: f1,
            accuracy: f1,
        }
    }

    #[test]
    fn markdown_report_layout() {
        let report = MetricsReport {
            runs: vec![run("BERT", "AT", 0, 0.5), run("BERT", "AT", 1, 0.7), run("BERT", "CC", 0, 0.4)],
        };
        let md = render_report(&report, "SemEval", ReportFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "| Condition | AT | CC | Avg |");
        assert_eq!(lines[2], "| BERT | 0.600 | 0.400 | 0.500 |");
        let csv = render_report(&report, "SemEval", ReportFormat::Csv);
        assert_eq!(csv, "Condition,AT,CC,Avg\nBERT,0.600,0.400,0.500\n");
    }

    #[test]
    fn ablation_report_has_one_row_per_condition() {
        let conditions = ["BERT", "BERT+Conv+BiLSTM", "ST+BERT", "ST+BERT+Conv", "ST+BERT+BiLSTM", "ST+BERT+Conv+BiLSTM"];
        let report = MetricsReport {
            runs: conditions.iter().map(|c| run(c, "AT", 0, 0.6)).collect(),
        };
        let md = render_report(&report, "SemEval", ReportFormat::Markdown);
        assert_eq!(md.lines().count(), 2 + conditions.len());
    }

    #[test]
    fn metrics_csv_round_trip() {
        let report = MetricsReport {
            runs: vec![run("ST+BERT", "FM", 3, 0.123_456_789_012_345)],
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("metrics.csv");
        report.write_csv(&path).unwrap();
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("condition,dataset,target,run_seed,f1_favor,f1_against,macro_f1,accuracy\n"));
        assert_eq!(MetricsReport::read_csv(&path).unwrap(), report);
    }
}
