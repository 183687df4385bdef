//! Failure analysis and corpus affinity.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusBundle, CorpusName, Label, Split, Task};
use crate::error::{Error, Result};

/// One model prediction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub gold: Label,
    pub predicted: Label,
    pub probabilities: Vec<f64>,
    /// The top probability was shared; the lowest class index won.
    pub tie: bool,
    pub condition: String,
}

impl PredictionRecord {
    pub fn new(id: &str, gold: Label, probabilities: Vec<f64>, condition: &str) -> Result<Self> {
        let task = gold.task();
        if probabilities.len() != task.num_classes() {
            return Err(Error::Predictions(format!(
                "{id}: {} probabilities for {} classes",
                probabilities.len(),
                task.num_classes()
            )));
        }
        let sum: f64 = probabilities.iter().sum();
        if (sum - 1.0).abs() > 1e-6 || probabilities.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Predictions(format!("{id}: probabilities sum to {sum}")));
        }
        let mut best = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[best] {
                best = i;
            }
        }
        let tie = probabilities
            .iter()
            .enumerate()
            .any(|(i, &p)| i != best && p == probabilities[best]);
        Ok(PredictionRecord {
            id: id.to_string(),
            gold,
            predicted: task.label(best).expect("index below class count"),
            probabilities,
            tie,
            condition: condition.to_string(),
        })
    }

    pub fn is_correct(&self) -> bool {
        self.gold == self.predicted
    }

    pub fn confidence(&self) -> f64 {
        self.probabilities[self.predicted.class_index()]
    }
}

fn probability_columns(task: Task) -> Vec<String> {
    (0..task.num_classes())
        .map(|i| format!("p_{}", task.class_name(i).to_ascii_lowercase()))
        .collect()
}

/// Writes `id, gold, predicted, p_<class>...` rows.
pub fn write_predictions(path: &Path, records: &[PredictionRecord]) -> Result<()> {
    let task = records.first().map_or(Task::Stance, |r| r.gold.task());
    let mut out = String::from("id\tgold\tpredicted");
    for c in probability_columns(task) {
        out.push('\t');
        out.push_str(&c);
    }
    out.push('\n');
    for r in records {
        let _ = write!(out, "{}\t{}\t{}", r.id, r.gold, r.predicted);
        for p in &r.probabilities {
            let _ = write!(out, "\t{p:.9}");
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path, condition: &str) -> Result<Vec<PredictionRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let source = path.display().to_string();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::NoExamples(source.clone()))?;
    let task = [Task::Stance, Task::Sarcasm]
        .into_iter()
        .find(|&t| {
            let mut expected = vec!["id".to_string(), "gold".into(), "predicted".into()];
            expected.extend(probability_columns(t));
            header.split('\t').eq(expected.iter().map(String::as_str))
        })
        .ok_or_else(|| Error::Parse {
            path: source.clone(),
            line: 1,
            message: format!("unexpected header {header:?}"),
        })?;
    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: source.clone(),
            line: line_no,
            message,
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 + task.num_classes() {
            return Err(parse_err(format!("expected {} fields", 3 + task.num_classes())));
        }
        let label = |s: &str| {
            Label::parse(s)
                .filter(|l| l.task() == task)
                .ok_or_else(|| Error::UnknownLabel {
                    path: source.clone(),
                    line: line_no,
                    value: s.to_string(),
                })
        };
        let gold = label(fields[1])?;
        let written = label(fields[2])?;
        let probs = fields[3..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| parse_err(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        let record = PredictionRecord::new(fields[0], gold, probs, condition).map_err(|e| parse_err(e.to_string()))?;
        if record.predicted != written {
            return Err(parse_err(format!(
                "predicted {written} is not the argmax {}",
                record.predicted
            )));
        }
        if !seen.insert(record.id.clone()) {
            return Err(Error::DuplicateId {
                path: source.clone(),
                line: line_no,
                id: record.id,
            });
        }
        records.push(record);
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Misclassification {
    pub id: String,
    pub target: Option<String>,
    pub text: String,
    pub gold: Label,
    pub predicted: Label,
    pub confidence: f64,
}

/// Wrong test predictions joined with their text, most confident first.
pub fn misclassification_report(predictions: &[PredictionRecord], corpus: &CorpusBundle) -> Result<Vec<Misclassification>> {
    let by_id: BTreeMap<&str, &PredictionRecord> = predictions.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut out = Vec::new();
    for example in corpus.examples_in(Split::Test) {
        let p = by_id
            .get(example.id.as_str())
            .ok_or_else(|| Error::Predictions(format!("no prediction for test example {}", example.id)))?;
        if p.gold != example.label {
            return Err(Error::Predictions(format!(
                "{}: prediction file says gold {}, corpus says {}",
                example.id, p.gold, example.label
            )));
        }
        if !p.is_correct() {
            out.push(Misclassification {
                id: example.id.clone(),
                target: example.target.clone(),
                text: example.text.clone(),
                gold: p.gold,
                predicted: p.predicted,
                confidence: p.confidence(),
            });
        }
    }
    out.sort_by(|a, b| b.confidence.total_cmp(&a.confidence).then_with(|| a.id.cmp(&b.id)));
    Ok(out)
}

/// Checks that `predictions` cover exactly the test rows of `corpus`.
pub fn check_coverage(predictions: &[PredictionRecord], corpus: &CorpusBundle) -> Result<()> {
    let ids: BTreeSet<&str> = predictions.iter().map(|p| p.id.as_str()).collect();
    let test: BTreeSet<&str> = corpus.examples_in(Split::Test).iter().map(|e| e.id.as_str()).collect();
    if ids != test {
        let missing = test.difference(&ids).count();
        let extra = ids.difference(&test).count();
        return Err(Error::Predictions(format!(
            "predictions cover the wrong rows: {missing} test rows missing, {extra} unknown ids"
        )));
    }
    Ok(())
}

/// Fraction of flagged examples wrong under `before` that `after` gets
/// right. `None` when no flagged example was wrong under `before`.
pub fn sarcasm_recovery(
    before: &[PredictionRecord],
    after: &[PredictionRecord],
    flagged: &BTreeSet<String>,
) -> Result<Option<f64>> {
    let index = |records: &[PredictionRecord]| -> Result<BTreeMap<String, bool>> {
        let mut map = BTreeMap::new();
        for r in records {
            if map.insert(r.id.clone(), r.is_correct()).is_some() {
                return Err(Error::Predictions(format!("duplicate prediction for {}", r.id)));
            }
        }
        Ok(map)
    };
    let before = index(before)?;
    let after = index(after)?;
    if !before.keys().eq(after.keys()) {
        return Err(Error::Predictions("the two prediction sets cover different examples".into()));
    }
    let mut wrong_before = 0usize;
    let mut recovered = 0usize;
    let mut unknown = 0usize;
    for id in flagged {
        match (before.get(id), after.get(id)) {
            (Some(false), Some(ok)) => {
                wrong_before += 1;
                recovered += usize::from(*ok);
            }
            (Some(true), _) => {}
            _ => unknown += 1,
        }
    }
    if unknown > 0 {
        warn!("{unknown} flagged ids have no prediction and were skipped");
    }
    Ok((wrong_before > 0).then(|| recovered as f64 / wrong_before as f64))
}

/// Reads `id<TAB>is_sarcastic` annotations and returns the flagged ids.
pub fn read_annotations(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_annotations(&text, &path.display().to_string())
}

pub fn parse_annotations(text: &str, source: &str) -> Result<BTreeSet<String>> {
    let mut flagged = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.is_empty() || line.starts_with('#') || (i == 0 && line == "id\tis_sarcastic") {
            continue;
        }
        let (id, value) = line.split_once('\t').ok_or_else(|| Error::Parse {
            path: source.to_string(),
            line: i + 1,
            message: "expected id<TAB>is_sarcastic".into(),
        })?;
        let is_sarcastic = match value.trim().to_ascii_lowercase().as_str() {
            "1" | "true" | "yes" => true,
            "0" | "false" | "no" => false,
            other => {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: i + 1,
                    message: format!("is_sarcastic must be 0 or 1, got {other:?}"),
                })
            }
        };
        if is_sarcastic {
            flagged.insert(id.to_string());
        }
    }
    Ok(flagged)
}

pub fn source_domain(name: CorpusName) -> &'static str {
    match name {
        CorpusName::SemEval | CorpusName::St => "Twitter",
        CorpusName::Mpchi => "health web articles",
        CorpusName::SaV2C => "online debate forums",
        CorpusName::Sarc => "Reddit",
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffinityProfile {
    pub intermediate: String,
    pub target: String,
    pub avg_len_intermediate: f64,
    pub avg_len_target: f64,
    pub length_ratio: f64,
    pub vocab_jaccard: f64,
    pub size_ratio: f64,
    pub source_domain: String,
    pub target_domain: String,
}

/// Mean whitespace-token count per text.
pub fn average_length<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<f64> {
    let mut n = 0usize;
    let mut tokens = 0usize;
    for t in texts {
        n += 1;
        tokens += t.split_whitespace().count();
    }
    if n == 0 {
        return Err(Error::Empty("corpus"));
    }
    Ok(tokens as f64 / n as f64)
}

/// Case-folded word types.
pub fn vocabulary<'a>(texts: impl IntoIterator<Item = &'a str>) -> HashSet<String> {
    texts
        .into_iter()
        .flat_map(|t| t.split(|c: char| !c.is_alphanumeric() && c != '_'))
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn jaccard(a: &HashSet<String>, b: &HashSet<String>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        return 1.0;
    }
    a.intersection(b).count() as f64 / union as f64
}

pub fn affinity(intermediate: &CorpusBundle, target: &CorpusBundle) -> Result<AffinityProfile> {
    let texts = |c: &CorpusBundle| -> Vec<String> { c.all_examples().iter().map(|e| e.text.clone()).collect() };
    let (a, b) = (texts(intermediate), texts(target));
    if a.is_empty() || b.is_empty() {
        return Err(Error::Empty("corpus"));
    }
    let len_a = average_length(a.iter().map(String::as_str))?;
    let len_b = average_length(b.iter().map(String::as_str))?;
    if len_a == 0.0 || len_b == 0.0 {
        return Err(Error::InvalidCorpus("corpus texts are all empty".into()));
    }
    let vocab_a = vocabulary(a.iter().map(String::as_str));
    let vocab_b = vocabulary(b.iter().map(String::as_str));
    Ok(AffinityProfile {
        intermediate: intermediate.name().to_string(),
        target: target.name().to_string(),
        avg_len_intermediate: len_a,
        avg_len_target: len_b,
        length_ratio: len_a / len_b,
        vocab_jaccard: jaccard(&vocab_a, &vocab_b),
        size_ratio: a.len() as f64 / b.len() as f64,
        source_domain: source_domain(intermediate.name()).into(),
        target_domain: source_domain(target.name()).into(),
    })
}

/// Weights of the composite affinity score
/// `jaccard * vocab_jaccard - length * |ln length_ratio| - size * |ln size_ratio|`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AffinityWeights {
    pub jaccard: f64,
    pub length: f64,
    pub size: f64,
}

impl Default for AffinityWeights {
    fn default() -> Self {
        AffinityWeights {
            jaccard: 1.0,
            length: 1.0,
            size: 0.0,
        }
    }
}

impl AffinityProfile {
    pub fn score(&self, w: &AffinityWeights) -> f64 {
        w.jaccard * self.vocab_jaccard - w.length * self.length_ratio.ln().abs() - w.size * self.size_ratio.ln().abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedAffinity {
    pub profile: AffinityProfile,
    pub score: f64,
}

/// Candidates ordered by descending score; equal scores keep input order.
pub fn affinity_ranking(
    intermediates: &[&CorpusBundle],
    target: &CorpusBundle,
    weights: &AffinityWeights,
) -> Result<Vec<RankedAffinity>> {
    if intermediates.is_empty() {
        return Err(Error::Empty("intermediate corpora"));
    }
    let mut ranked = intermediates
        .iter()
        .map(|c| {
            let profile = affinity(c, target)?;
            let score = profile.score(weights);
            Ok(RankedAffinity { profile, score })
        })
        .collect::<Result<Vec<_>>>()?;
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{LabeledExample, SarcasmLabel, StanceLabel};

    fn stance(id: &str, text: &str, label: StanceLabel) -> LabeledExample {
        LabeledExample {
            id: id.into(),
            text: text.into(),
            target: Some("FM".into()),
            label: Label::Stance(label),
            split: Split::Test,
        }
    }

    fn sarcasm_corpus(name: CorpusName, texts: &[&str]) -> CorpusBundle {
        let ex = texts
            .iter()
            .enumerate()
            .map(|(i, t)| LabeledExample {
                id: format!("{i}"),
                text: t.to_string(),
                target: None,
                label: Label::Sarcasm(if i % 2 == 0 {
                    SarcasmLabel::Sarcastic
                } else {
                    SarcasmLabel::NotSarcastic
                }),
                split: Split::Unsplit,
            })
            .collect();
        CorpusBundle::new(name, ex).unwrap()
    }

    fn pred(id: &str, gold: StanceLabel, probs: [f64; 3]) -> PredictionRecord {
        PredictionRecord::new(id, Label::Stance(gold), probs.to_vec(), "c").unwrap()
    }

    #[test]
    fn argmax_ties_pick_lowest_index() {
        let p = pred("a", StanceLabel::Against, [0.4, 0.4, 0.2]);
        assert_eq!(p.predicted, Label::Stance(StanceLabel::InFavor));
        assert!(p.tie);
        assert!(PredictionRecord::new("b", Label::Stance(StanceLabel::None), vec![0.5, 0.6, 0.0], "c").is_err());
    }

    #[test]
    fn misclassifications_sorted_by_confidence() {
        let text = "I like girls. They just need to know their place. #SemST";
        let corpus = CorpusBundle::new(
            CorpusName::SemEval,
            vec![
                stance("1", text, StanceLabel::Against),
                stance("2", "equal pay now", StanceLabel::InFavor),
                stance("3", "whatever", StanceLabel::None),
            ],
        )
        .unwrap();
        let preds = vec![
            pred("1", StanceLabel::Against, [0.7, 0.2, 0.1]),
            pred("2", StanceLabel::InFavor, [0.8, 0.1, 0.1]),
            pred("3", StanceLabel::None, [0.1, 0.8, 0.1]),
        ];
        let report = misclassification_report(&preds, &corpus).unwrap();
        assert_eq!(report.len(), 2);
        assert_eq!(report[0].id, "3");
        assert_eq!(report[1].text, text);
        assert_eq!(report[1].predicted, Label::Stance(StanceLabel::InFavor));
        assert!(misclassification_report(&preds[..2], &corpus).is_err());
        let perfect: Vec<_> = preds.iter().take(2).cloned().collect();
        let corpus2 = CorpusBundle::new(CorpusName::SemEval, vec![stance("2", "x", StanceLabel::InFavor)]).unwrap();
        assert!(misclassification_report(&perfect[1..], &corpus2).unwrap().is_empty());
    }

    #[test]
    fn recovery_rates() {
        let flagged: BTreeSet<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let before = vec![
            pred("a", StanceLabel::Against, [0.9, 0.05, 0.05]),
            pred("b", StanceLabel::Against, [0.9, 0.05, 0.05]),
            pred("c", StanceLabel::Against, [0.05, 0.9, 0.05]),
            pred("d", StanceLabel::None, [0.05, 0.9, 0.05]),
        ];
        assert_eq!(sarcasm_recovery(&before, &before, &flagged).unwrap(), Some(0.0));
        let mut after = before.clone();
        after[0] = pred("a", StanceLabel::Against, [0.1, 0.8, 0.1]);
        assert_eq!(sarcasm_recovery(&before, &after, &flagged).unwrap(), Some(0.5));
        after[1] = pred("b", StanceLabel::Against, [0.1, 0.8, 0.1]);
        after.reverse();
        assert_eq!(sarcasm_recovery(&before, &after, &flagged).unwrap(), Some(1.0));
        let only_c: BTreeSet<String> = ["c".to_string()].into();
        assert_eq!(sarcasm_recovery(&before, &after, &only_c).unwrap(), None);
        assert!(sarcasm_recovery(&before, &after[1..], &flagged).is_err());
    }

    #[test]
    fn predictions_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("predictions.tsv");
        let records = vec![
            pred("x1", StanceLabel::Against, [0.2, 0.5, 0.3]),
            pred("x2", StanceLabel::None, [0.1, 0.1, 0.8]),
        ];
        write_predictions(&path, &records).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("id\tgold\tpredicted\tp_favor\tp_against\tp_none\n"));
        assert_eq!(read_predictions(&path, "c").unwrap(), records);
    }

    #[test]
    fn annotations_parse() {
        let set = parse_annotations("id\tis_sarcastic\n10\t1\n11\t0\n# note\n12\ttrue\n", "a.tsv").unwrap();
        assert_eq!(set, ["10".to_string(), "12".to_string()].into());
        assert!(parse_annotations("10\tmaybe\n", "a.tsv").is_err());
    }

    #[test]
    fn affinity_basics() {
        let a = sarcasm_corpus(CorpusName::St, &["a b c", "d e"]);
        let b = sarcasm_corpus(CorpusName::SaV2C, &["x y", "z w"]);
        assert_eq!(average_length(["a b c", "d e"]).unwrap(), 2.5);
        let same = affinity(&a, &a).unwrap();
        assert_eq!((same.vocab_jaccard, same.length_ratio, same.size_ratio), (1.0, 1.0, 1.0));
        let disjoint = affinity(&a, &b).unwrap();
        assert_eq!(disjoint.vocab_jaccard, 0.0);
        assert_eq!(disjoint.vocab_jaccard, affinity(&b, &a).unwrap().vocab_jaccard);
        assert_eq!(disjoint.source_domain, "Twitter");
    }

    #[test]
    fn ranking_puts_identical_corpus_first() {
        let target = sarcasm_corpus(CorpusName::St, &["the cat sat", "on the mat"]);
        let other = sarcasm_corpus(CorpusName::Sarc, &["a much longer reddit comment about nothing at all", "x"]);
        let ranked = affinity_ranking(&[&other, &target], &target, &AffinityWeights::default()).unwrap();
        assert_eq!(ranked[0].profile.intermediate, "ST");
        let single = affinity_ranking(&[&other], &target, &AffinityWeights::default()).unwrap();
        assert_eq!(single.len(), 1);
        assert!(affinity_ranking(&[], &target, &AffinityWeights::default()).is_err());
    }
}
