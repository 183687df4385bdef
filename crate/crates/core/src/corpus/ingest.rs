//! Conversion of vendor corpus files into canonical bundles.
//!
//! Supported sources:
//!
//! * SemEval-2016 Task 6A: tab-separated `ID, Target, Tweet, Stance`,
//!   often Windows-1252 encoded. Targets outside the five studied ones
//!   (e.g. the Donald Trump test-only target) are skipped.
//! * MPCHI: comma- or tab-separated with query/target, sentence/text and
//!   stance columns (`support|oppose|neutral` or canonical strings).
//! * Sarcasm Corpus V2: `Corpus, Label, ID, Quote Text, Response Text`,
//!   `sarc|notsarc` labels; only the `GEN` category is kept.
//! * SARC balanced (Kaggle layout): `label, comment, ...`, labels `1|0`.
//! * ST: text and label columns, labels `1|0`, `sarcastic|non-sarcastic`, `S|NS`.
//!
//! The train/test split of stance files is taken from the file name: a
//! file whose name contains `test` holds test rows, anything else training rows.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::split::stratified_subsample;
use super::{CorpusBundle, CorpusName, Label, LabeledExample, SarcasmLabel, Split, StanceLabel, Task};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VendorFormat {
    SemEval,
    Mpchi,
    SaV2C,
    Sarc,
    St,
}

impl VendorFormat {
    pub fn corpus(self) -> CorpusName {
        match self {
            VendorFormat::SemEval => CorpusName::SemEval,
            VendorFormat::Mpchi => CorpusName::Mpchi,
            VendorFormat::SaV2C => CorpusName::SaV2C,
            VendorFormat::Sarc => CorpusName::Sarc,
            VendorFormat::St => CorpusName::St,
        }
    }
}

impl FromStr for VendorFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match CorpusName::from_str(s)? {
            CorpusName::SemEval => VendorFormat::SemEval,
            CorpusName::Mpchi => VendorFormat::Mpchi,
            CorpusName::SaV2C => VendorFormat::SaV2C,
            CorpusName::Sarc => VendorFormat::Sarc,
            CorpusName::St => VendorFormat::St,
        })
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    /// SaV2C: also ingest the Quote side as independent examples.
    pub include_quotes: bool,
    pub max_rows: Option<usize>,
    pub seed: u64,
}

const SEMEVAL_TARGETS: &[(&str, &str)] = &[
    ("atheism", "AT"),
    ("climate change is a real concern", "CC"),
    ("feminist movement", "FM"),
    ("hillary clinton", "HC"),
    ("legalization of abortion", "LA"),
];

const MPCHI_TARGETS: &[(&str, &str)] = &[
    ("mmr vaccination can cause autism", "MMR"),
    ("sun exposure leads to skin cancer", "SC"),
    ("e-cigarettes are safer than normal cigarettes", "EC"),
    ("vitamin c prevents common cold", "VC"),
    ("women should take hrt post menopause", "HRT"),
];

fn target_code(table: &[(&str, &'static str)], raw: &str) -> Option<&'static str> {
    let key = raw.trim().to_lowercase();
    table
        .iter()
        .find(|(name, code)| *name == key || code.eq_ignore_ascii_case(&key))
        .map(|(_, code)| *code)
}

/// Expands directories into their (sorted) regular files.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut inner: Vec<PathBuf> = fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|d| d.ok().map(|d| d.path()))
                .filter(|p| p.is_file())
                .collect();
            inner.sort();
            files.extend(inner);
        } else if p.is_file() {
            files.push(p.clone());
        } else {
            return Err(Error::io(p, std::io::Error::from(std::io::ErrorKind::NotFound)));
        }
    }
    if files.is_empty() {
        return Err(Error::NoExamples("no input files".into()));
    }
    Ok(files)
}

/// UTF-8 if valid, otherwise Windows-1252/Latin-1 byte-to-char mapping.
fn decode(bytes: Vec<u8>) -> String {
    match String::from_utf8(bytes) {
        Ok(s) => s,
        Err(e) => e.into_bytes().iter().map(|&b| b as char).collect(),
    }
}

fn split_from_name(path: &Path) -> Split {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    if name.contains("test") {
        Split::Test
    } else {
        Split::Train
    }
}

struct Table {
    source: String,
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
}

impl Table {
    fn read(path: &Path, force_tab: bool) -> Result<Table> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = decode(bytes);
        let ext = path.extension().map(|e| e.to_string_lossy().to_lowercase());
        let tab = force_tab || matches!(ext.as_deref(), Some("tsv") | Some("txt"));
        let mut builder = csv::ReaderBuilder::new();
        builder.flexible(true).has_headers(false);
        if tab {
            builder.delimiter(b'\t').quoting(false);
        }
        let mut reader = builder.from_reader(text.as_bytes());
        let source = path.display().to_string();
        let mut records = reader.records();
        let header = match records.next() {
            Some(r) => r?.iter().map(|h| h.trim().trim_start_matches('\u{feff}').to_lowercase()).collect(),
            None => return Err(Error::NoExamples(source)),
        };
        let mut rows = Vec::new();
        for r in records {
            let r = r?;
            let line = r.position().map(|p| p.line() as usize).unwrap_or(0);
            if r.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            rows.push((line, r.iter().map(str::to_owned).collect()));
        }
        Ok(Table { source, header, rows })
    }

    fn column(&self, candidates: &[&str]) -> Result<usize> {
        candidates
            .iter()
            .find_map(|c| self.header.iter().position(|h| h == c))
            .ok_or_else(|| Error::Parse {
                path: self.source.clone(),
                line: 1,
                message: format!("missing column (one of {candidates:?})"),
            })
    }

    fn optional_column(&self, candidates: &[&str]) -> Option<usize> {
        self.column(candidates).ok()
    }

    fn field<'a>(&self, line: usize, row: &'a [String], col: usize) -> Result<&'a str> {
        row.get(col).map(String::as_str).ok_or_else(|| Error::Parse {
            path: self.source.clone(),
            line,
            message: format!("row has {} fields, expected at least {}", row.len(), col + 1),
        })
    }

    fn unknown_label(&self, line: usize, value: &str) -> Error {
        Error::UnknownLabel {
            path: self.source.clone(),
            line,
            value: value.to_owned(),
        }
    }
}

fn stance_label(raw: &str) -> Option<StanceLabel> {
    match raw.trim().to_lowercase().as_str() {
        "favor" | "favour" | "infavor" | "support" | "supports" | "pro" => Some(StanceLabel::InFavor),
        "against" | "oppose" | "opposes" | "con" => Some(StanceLabel::Against),
        "none" | "neutral" | "neither" => Some(StanceLabel::None),
        _ => None,
    }
}

fn sarcasm_label(raw: &str) -> Option<SarcasmLabel> {
    match raw.trim().to_lowercase().as_str() {
        "1" | "sarc" | "sarcastic" | "s" | "yes" | "true" => Some(SarcasmLabel::Sarcastic),
        "0" | "notsarc" | "not_sarcastic" | "non-sarcastic" | "non_sarcastic" | "ns" | "no" | "false" => {
            Some(SarcasmLabel::NotSarcastic)
        }
        _ => None,
    }
}

/// Collects examples while dropping empty texts and rejecting duplicate ids.
struct Collector {
    examples: Vec<LabeledExample>,
    ids: std::collections::HashSet<String>,
    dropped_empty: usize,
}

impl Collector {
    fn new() -> Self {
        Collector {
            examples: Vec::new(),
            ids: Default::default(),
            dropped_empty: 0,
        }
    }

    fn push(&mut self, table: &Table, line: usize, example: LabeledExample) -> Result<()> {
        if example.text.trim().is_empty() {
            self.dropped_empty += 1;
            return Ok(());
        }
        if !self.ids.insert(example.id.clone()) {
            return Err(Error::DuplicateId {
                path: table.source.clone(),
                line,
                id: example.id,
            });
        }
        self.examples.push(example);
        Ok(())
    }
}

fn ingest_semeval(files: &[PathBuf], out: &mut Collector) -> Result<()> {
    for path in files {
        let t = Table::read(path, true)?;
        let split = split_from_name(path);
        let (c_id, c_target, c_text, c_label) = (
            t.column(&["id"])?,
            t.column(&["target"])?,
            t.column(&["tweet", "text"])?,
            t.column(&["stance", "label"])?,
        );
        let mut skipped = 0;
        for (line, row) in &t.rows {
            let raw_target = t.field(*line, row, c_target)?;
            let Some(code) = target_code(SEMEVAL_TARGETS, raw_target) else {
                skipped += 1;
                continue;
            };
            let raw_label = t.field(*line, row, c_label)?;
            let label = stance_label(raw_label).ok_or_else(|| t.unknown_label(*line, raw_label))?;
            let example = LabeledExample {
                id: t.field(*line, row, c_id)?.trim().to_owned(),
                text: t.field(*line, row, c_text)?.trim().to_owned(),
                target: Some(code.to_owned()),
                label: Label::Stance(label),
                split,
            };
            out.push(&t, *line, example)?;
        }
        if skipped > 0 {
            log::info!("{}: skipped {skipped} rows with targets outside the study", t.source);
        }
    }
    Ok(())
}

fn ingest_mpchi(files: &[PathBuf], out: &mut Collector) -> Result<()> {
    for path in files {
        let t = Table::read(path, false)?;
        let split = split_from_name(path);
        let c_target = t.column(&["query", "target", "topic"])?;
        let c_text = t.column(&["sentence", "text"])?;
        let c_label = t.column(&["stance", "label"])?;
        let c_id = t.optional_column(&["id"]);
        for (n, (line, row)) in t.rows.iter().enumerate() {
            let raw_target = t.field(*line, row, c_target)?;
            let code = target_code(MPCHI_TARGETS, raw_target).ok_or_else(|| Error::Parse {
                path: t.source.clone(),
                line: *line,
                message: format!("unknown MPCHI query {raw_target:?}"),
            })?;
            let raw_label = t.field(*line, row, c_label)?;
            let label = stance_label(raw_label).ok_or_else(|| t.unknown_label(*line, raw_label))?;
            let id = match c_id {
                Some(c) => t.field(*line, row, c)?.trim().to_owned(),
                None => format!("mpchi-{}-{:05}", split.as_str(), n + 1),
            };
            let example = LabeledExample {
                id,
                text: t.field(*line, row, c_text)?.trim().to_owned(),
                target: Some(code.to_owned()),
                label: Label::Stance(label),
                split,
            };
            out.push(&t, *line, example)?;
        }
    }
    Ok(())
}

fn ingest_sav2c(files: &[PathBuf], include_quotes: bool, out: &mut Collector) -> Result<()> {
    for path in files {
        let t = Table::read(path, false)?;
        let c_corpus = t.optional_column(&["corpus"]);
        let c_label = t.column(&["label"])?;
        let c_id = t.column(&["id"])?;
        let c_quote = t.column(&["quote text", "quote"])?;
        let c_response = t.column(&["response text", "response"])?;
        for (line, row) in &t.rows {
            if let Some(c) = c_corpus {
                if !t.field(*line, row, c)?.trim().eq_ignore_ascii_case("GEN") {
                    continue;
                }
            }
            let raw_label = t.field(*line, row, c_label)?;
            let label = sarcasm_label(raw_label).ok_or_else(|| t.unknown_label(*line, raw_label))?;
            let id = t.field(*line, row, c_id)?.trim().to_owned();
            if include_quotes {
                out.push(
                    &t,
                    *line,
                    LabeledExample {
                        id: format!("{id}-quote"),
                        text: t.field(*line, row, c_quote)?.trim().to_owned(),
                        target: None,
                        label: Label::Sarcasm(label),
                        split: Split::Unsplit,
                    },
                )?;
            }
            out.push(
                &t,
                *line,
                LabeledExample {
                    id,
                    text: t.field(*line, row, c_response)?.trim().to_owned(),
                    target: None,
                    label: Label::Sarcasm(label),
                    split: Split::Unsplit,
                },
            )?;
        }
    }
    Ok(())
}

fn ingest_labeled_text(
    files: &[PathBuf],
    prefix: &str,
    text_columns: &[&str],
    out: &mut Collector,
) -> Result<()> {
    let mut n = 0usize;
    for path in files {
        let t = Table::read(path, false)?;
        let c_text = t.column(text_columns)?;
        let c_label = t.column(&["label", "sarcasm", "class"])?;
        let c_id = t.optional_column(&["id"]);
        for (line, row) in &t.rows {
            n += 1;
            let raw_label = t.field(*line, row, c_label)?;
            let label = sarcasm_label(raw_label).ok_or_else(|| t.unknown_label(*line, raw_label))?;
            let id = match c_id {
                Some(c) => t.field(*line, row, c)?.trim().to_owned(),
                None => format!("{prefix}-{n:07}"),
            };
            out.push(
                &t,
                *line,
                LabeledExample {
                    id,
                    text: t.field(*line, row, c_text)?.trim().to_owned(),
                    target: None,
                    label: Label::Sarcasm(label),
                    split: Split::Unsplit,
                },
            )?;
        }
    }
    Ok(())
}

/// Reads vendor files (or directories of them) into a validated bundle.
pub fn ingest(format: VendorFormat, inputs: &[PathBuf], options: &IngestOptions) -> Result<CorpusBundle> {
    let files = expand_inputs(inputs)?;
    let mut out = Collector::new();
    match format {
        VendorFormat::SemEval => ingest_semeval(&files, &mut out)?,
        VendorFormat::Mpchi => ingest_mpchi(&files, &mut out)?,
        VendorFormat::SaV2C => ingest_sav2c(&files, options.include_quotes, &mut out)?,
        VendorFormat::Sarc => ingest_labeled_text(&files, "sarc", &["comment", "text"], &mut out)?,
        VendorFormat::St => ingest_labeled_text(&files, "st", &["text", "tweet", "sentence"], &mut out)?,
    }
    if out.dropped_empty > 0 {
        log::warn!("{:?}: dropped {} rows with empty text", format, out.dropped_empty);
    }
    let mut examples = out.examples;
    if examples.is_empty() {
        return Err(Error::NoExamples(format!("{:?} input", format)));
    }
    if let Some(max) = options.max_rows {
        examples = stratified_subsample(examples, max, options.seed);
    }
    CorpusBundle::new(format.corpus(), examples)
}

/// Table-I-style summary: target -> split -> label -> count.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub corpus: String,
    pub total: usize,
    pub counts: BTreeMap<String, BTreeMap<String, BTreeMap<String, usize>>>,
}

impl CorpusStats {
    pub fn of(bundle: &CorpusBundle) -> Self {
        let mut counts: BTreeMap<String, BTreeMap<String, BTreeMap<String, usize>>> = BTreeMap::new();
        let task = bundle.task();
        let targets: Vec<Option<String>> = match task {
            Task::Stance => bundle.targets().iter().cloned().map(Some).collect(),
            Task::Sarcasm => vec![None],
        };
        for target in targets {
            let key = target.clone().unwrap_or_else(|| super::NO_TARGET.to_owned());
            for split in Split::ALL {
                let row = bundle.stats().class_counts(target.as_deref(), split, task);
                if row.iter().all(|&c| c == 0) {
                    continue;
                }
                let labels = row
                    .iter()
                    .enumerate()
                    .map(|(i, &c)| (task.class_name(i).to_owned(), c))
                    .collect();
                counts
                    .entry(key.clone())
                    .or_default()
                    .insert(split.as_str().to_owned(), labels);
            }
        }
        CorpusStats {
            corpus: bundle.name().to_string(),
            total: bundle.len(),
            counts,
        }
    }

    pub fn get(&self, target: &str, split: Split, label: &str) -> usize {
        self.counts
            .get(target)
            .and_then(|s| s.get(split.as_str()))
            .and_then(|l| l.get(label))
            .copied()
            .unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn semeval_targets_map_to_codes_and_trump_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let train = dir.path().join("semeval2016-task6-trainingdata.txt");
        fs::write(
            &train,
            "ID\tTarget\tTweet\tStance\n\
             101\tAtheism\tGod is everywhere #SemST\tAGAINST\n\
             102\tClimate Change is a Real Concern\tWe need action\tFAVOR\n\
             103\tDonald Trump\tMake it great\tFAVOR\n",
        )
        .unwrap();
        let test = dir.path().join("SemEval2016-Task6-testdata-gold.txt");
        fs::write(&test, "ID\tTarget\tTweet\tStance\n201\tHillary Clinton\tvote \"her\"\tNONE\n").unwrap();
        let b = ingest(VendorFormat::SemEval, &[train, test], &IngestOptions::default()).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.targets(), ["AT", "CC", "HC"]);
        let stats = CorpusStats::of(&b);
        assert_eq!(stats.get("AT", Split::Train, "AGAINST"), 1);
        assert_eq!(stats.get("HC", Split::Test, "NONE"), 1);
    }

    #[test]
    fn latin1_bytes_are_decoded() {
        assert_eq!(decode(vec![b'c', 0xe9]), "c\u{e9}");
        assert_eq!(decode("ok".as_bytes().to_vec()), "ok");
    }

    #[test]
    fn sav2c_keeps_general_category_response_side() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("GEN-sarc-notsarc.csv");
        fs::write(
            &f,
            "Corpus,Label,ID,Quote Text,Response Text\n\
             GEN,sarc,GEN_sarc_0001,\"q1\",\"oh sure, great idea\"\n\
             GEN,notsarc,GEN_notsarc_0001,q2,fine by me\n\
             HYP,sarc,HYP_sarc_0001,q3,hyperbole\n",
        )
        .unwrap();
        let b = ingest(VendorFormat::SaV2C, std::slice::from_ref(&f), &IngestOptions::default()).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.rows()[0].text, "oh sure, great idea");
        let opts = IngestOptions {
            include_quotes: true,
            ..Default::default()
        };
        let b = ingest(VendorFormat::SaV2C, &[f], &opts).unwrap();
        assert_eq!(b.len(), 4);
    }

    #[test]
    fn sarc_unknown_label_names_line() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("train-balanced-sarcasm.csv");
        fs::write(&f, "label,comment,author\n1,yeah right,a\n7,hm,b\n").unwrap();
        match ingest(VendorFormat::Sarc, &[f], &IngestOptions::default()) {
            Err(Error::UnknownLabel { line, value, .. }) => assert_eq!((line, value.as_str()), (3, "7")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest(VendorFormat::St, &[dir.path().to_owned()], &IngestOptions::default()).is_err());
    }

    #[test]
    fn mpchi_queries_and_stance_words() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("mpchi_test.csv");
        fs::write(
            &f,
            "Query,Sentence,Stance\n\
             Women should take HRT post menopause,HRT helps,support\n\
             MMR vaccination can cause autism,No link found,oppose\n",
        )
        .unwrap();
        let b = ingest(VendorFormat::Mpchi, &[f], &IngestOptions::default()).unwrap();
        assert_eq!(b.targets(), ["HRT", "MMR"]);
        assert!(b.rows().iter().all(|e| e.split == Split::Test));
    }
}
