//! Stance and sarcasm corpora in one canonical representation.
//!
//! Every corpus, whatever its vendor format, is converted once into a UTF-8
//! TSV with the header `id<TAB>target<TAB>text<TAB>label`. Stance corpora
//! live in a directory holding `train.tsv` and `test.tsv`; sarcasm corpora
//! are a single unsplit file. Splitting sarcasm data is the job of
//! [`split`], never of the loader.

pub mod ingest;
pub mod split;

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use split::{holdout_split, make_cv_folds, FoldPlan};

pub const CANONICAL_HEADER: &str = "id\ttarget\ttext\tlabel";
pub const NO_TARGET: &str = "-";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum StanceLabel {
    InFavor,
    Against,
    None,
}

impl StanceLabel {
    pub const ALL: [StanceLabel; 3] = [StanceLabel::InFavor, StanceLabel::Against, StanceLabel::None];

    pub fn as_str(self) -> &'static str {
        match self {
            StanceLabel::InFavor => "FAVOR",
            StanceLabel::Against => "AGAINST",
            StanceLabel::None => "NONE",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl FromStr for StanceLabel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "FAVOR" => Ok(StanceLabel::InFavor),
            "AGAINST" => Ok(StanceLabel::Against),
            "NONE" => Ok(StanceLabel::None),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SarcasmLabel {
    Sarcastic,
    NotSarcastic,
}

impl SarcasmLabel {
    pub const ALL: [SarcasmLabel; 2] = [SarcasmLabel::Sarcastic, SarcasmLabel::NotSarcastic];

    pub fn as_str(self) -> &'static str {
        match self {
            SarcasmLabel::Sarcastic => "SARCASTIC",
            SarcasmLabel::NotSarcastic => "NOT_SARCASTIC",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

impl FromStr for SarcasmLabel {
    type Err = ();

    fn from_str(s: &str) -> std::result::Result<Self, ()> {
        match s {
            "SARCASTIC" => Ok(SarcasmLabel::Sarcastic),
            "NOT_SARCASTIC" => Ok(SarcasmLabel::NotSarcastic),
            _ => Err(()),
        }
    }
}

/// Which classification problem a label (or a model head) belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sarcasm,
    Stance,
}

impl Task {
    pub fn num_classes(self) -> usize {
        match self {
            Task::Sarcasm => 2,
            Task::Stance => 3,
        }
    }

    pub fn class_name(self, index: usize) -> &'static str {
        match self {
            Task::Sarcasm => SarcasmLabel::ALL[index].as_str(),
            Task::Stance => StanceLabel::ALL[index].as_str(),
        }
    }

    pub fn label(self, index: usize) -> Option<Label> {
        match self {
            Task::Sarcasm => SarcasmLabel::from_index(index).map(Label::Sarcasm),
            Task::Stance => StanceLabel::from_index(index).map(Label::Stance),
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Task::Sarcasm => "sarcasm",
            Task::Stance => "stance",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Stance(StanceLabel),
    Sarcasm(SarcasmLabel),
}

impl Label {
    pub fn task(self) -> Task {
        match self {
            Label::Stance(_) => Task::Stance,
            Label::Sarcasm(_) => Task::Sarcasm,
        }
    }

    pub fn class_index(self) -> usize {
        match self {
            Label::Stance(l) => l.index(),
            Label::Sarcasm(l) => l.index(),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Stance(l) => l.as_str(),
            Label::Sarcasm(l) => l.as_str(),
        }
    }

    pub fn parse(s: &str) -> Option<Label> {
        s.parse::<StanceLabel>()
            .map(Label::Stance)
            .or_else(|_| s.parse::<SarcasmLabel>().map(Label::Sarcasm))
            .ok()
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
    Unsplit,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Test, Split::Unsplit];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
            Split::Unsplit => "unsplit",
        }
    }

    fn slot(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CorpusName {
    SemEval,
    #[serde(rename = "MPCHI")]
    Mpchi,
    SaV2C,
    #[serde(rename = "SARC")]
    Sarc,
    #[serde(rename = "ST")]
    St,
}

impl CorpusName {
    pub fn as_str(self) -> &'static str {
        match self {
            CorpusName::SemEval => "SemEval",
            CorpusName::Mpchi => "MPCHI",
            CorpusName::SaV2C => "SaV2C",
            CorpusName::Sarc => "SARC",
            CorpusName::St => "ST",
        }
    }

    pub fn task(self) -> Task {
        match self {
            CorpusName::SemEval | CorpusName::Mpchi => Task::Stance,
            _ => Task::Sarcasm,
        }
    }

    /// Target codes in reporting order; empty for sarcasm corpora.
    pub fn known_targets(self) -> &'static [&'static str] {
        match self {
            CorpusName::SemEval => &["AT", "CC", "FM", "HC", "LA"],
            CorpusName::Mpchi => &["MMR", "SC", "EC", "VC", "HRT"],
            _ => &[],
        }
    }
}

impl fmt::Display for CorpusName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CorpusName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "semeval" => Ok(CorpusName::SemEval),
            "mpchi" => Ok(CorpusName::Mpchi),
            "sav2c" => Ok(CorpusName::SaV2C),
            "sarc" => Ok(CorpusName::Sarc),
            "st" => Ok(CorpusName::St),
            _ => Err(Error::InvalidArgument(format!("unknown corpus {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: String,
    pub text: String,
    pub target: Option<String>,
    pub label: Label,
    pub split: Split,
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct StatKey {
    pub target: Option<String>,
    pub split: Split,
    pub label: Label,
}

/// Example counts keyed by (target, split, label).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClassTable(BTreeMap<StatKey, usize>);

impl ClassTable {
    pub fn from_examples<'a>(examples: impl IntoIterator<Item = &'a LabeledExample>) -> Self {
        let mut table = BTreeMap::new();
        for e in examples {
            let key = StatKey {
                target: e.target.clone(),
                split: e.split,
                label: e.label,
            };
            *table.entry(key).or_insert(0) += 1;
        }
        ClassTable(table)
    }

    pub fn get(&self, target: Option<&str>, split: Split, label: Label) -> usize {
        let key = StatKey {
            target: target.map(str::to_owned),
            split,
            label,
        };
        self.0.get(&key).copied().unwrap_or(0)
    }

    /// Counts for one (target, split) slice, ordered by class index.
    pub fn class_counts(&self, target: Option<&str>, split: Split, task: Task) -> Vec<usize> {
        (0..task.num_classes())
            .map(|i| self.get(target, split, task.label(i).expect("class index in range")))
            .collect()
    }

    /// Counts for one label across every split of a target.
    pub fn label_total(&self, target: Option<&str>, label: Label) -> usize {
        Split::ALL.iter().map(|&s| self.get(target, s, label)).sum()
    }

    pub fn total(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&StatKey, usize)> {
        self.0.iter().map(|(k, &v)| (k, v))
    }
}

/// Per-split row-read counters shared by a bundle and everything derived
/// from it, so a pipeline can prove it never looked at held-out rows.
#[derive(Clone, Debug, Default)]
pub struct ReadLog(Arc<[AtomicUsize; 3]>);

impl ReadLog {
    fn record(&self, split: Split, n: usize) {
        self.0[split.slot()].fetch_add(n, Ordering::Relaxed);
    }

    pub fn reads(&self, split: Split) -> usize {
        self.0[split.slot()].load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        for c in self.0.iter() {
            c.store(0, Ordering::Relaxed);
        }
    }
}

/// An immutable, validated corpus.
#[derive(Clone, Debug)]
pub struct CorpusBundle {
    name: CorpusName,
    examples: Vec<LabeledExample>,
    targets: Vec<String>,
    stats: ClassTable,
    reads: ReadLog,
}

impl CorpusBundle {
    /// Validates id uniqueness and label/target consistency, then computes
    /// class statistics. Targets are listed in first-appearance order.
    pub fn new(name: CorpusName, examples: Vec<LabeledExample>) -> Result<Self> {
        Self::with_log(name, examples, ReadLog::default())
    }

    fn with_log(name: CorpusName, examples: Vec<LabeledExample>, reads: ReadLog) -> Result<Self> {
        let task = name.task();
        let mut seen = HashSet::with_capacity(examples.len());
        let mut targets: Vec<String> = Vec::new();
        for e in &examples {
            if !seen.insert(e.id.as_str()) {
                return Err(Error::InvalidCorpus(format!("{name}: duplicate id {:?}", e.id)));
            }
            if e.label.task() != task {
                return Err(Error::InvalidCorpus(format!(
                    "{name}: example {:?} carries a {} label",
                    e.id,
                    e.label.task()
                )));
            }
            match (&e.target, task) {
                (Some(t), Task::Stance) => {
                    if !targets.iter().any(|x| x == t) {
                        targets.push(t.clone());
                    }
                }
                (None, Task::Sarcasm) => {}
                (Some(_), Task::Sarcasm) => {
                    return Err(Error::InvalidCorpus(format!(
                        "{name}: sarcasm example {:?} has a target",
                        e.id
                    )))
                }
                (None, Task::Stance) => {
                    return Err(Error::InvalidCorpus(format!(
                        "{name}: stance example {:?} has no target",
                        e.id
                    )))
                }
            }
        }
        let stats = ClassTable::from_examples(&examples);
        Ok(CorpusBundle {
            name,
            examples,
            targets,
            stats,
            reads,
        })
    }

    /// A new bundle over transformed examples that keeps this bundle's read log.
    pub fn derive(&self, examples: Vec<LabeledExample>) -> Result<Self> {
        Self::with_log(self.name, examples, self.reads.clone())
    }

    pub fn name(&self) -> CorpusName {
        self.name
    }

    pub fn task(&self) -> Task {
        self.name.task()
    }

    pub fn targets(&self) -> &[String] {
        &self.targets
    }

    pub fn stats(&self) -> &ClassTable {
        &self.stats
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn read_log(&self) -> &ReadLog {
        &self.reads
    }

    /// Rows of one split. Reads are recorded.
    pub fn examples_in(&self, split: Split) -> Vec<&LabeledExample> {
        let rows: Vec<_> = self.examples.iter().filter(|e| e.split == split).collect();
        self.reads.record(split, rows.len());
        rows
    }

    /// Rows of one (target, split) slice. Reads are recorded.
    pub fn target_examples(&self, target: &str, split: Split) -> Vec<&LabeledExample> {
        let rows: Vec<_> = self
            .examples
            .iter()
            .filter(|e| e.split == split && e.target.as_deref() == Some(target))
            .collect();
        self.reads.record(split, rows.len());
        rows
    }

    /// Everything that may be used for fitting: train and unsplit rows.
    pub fn trainable(&self) -> Vec<&LabeledExample> {
        let rows: Vec<_> = self.examples.iter().filter(|e| e.split != Split::Test).collect();
        for s in [Split::Train, Split::Unsplit] {
            self.reads.record(s, rows.iter().filter(|e| e.split == s).count());
        }
        rows
    }

    /// All rows, including test rows. Reads are recorded.
    pub fn all_examples(&self) -> &[LabeledExample] {
        for s in Split::ALL {
            self.reads.record(s, self.examples.iter().filter(|e| e.split == s).count());
        }
        &self.examples
    }

    /// Unrecorded access for bookkeeping that never feeds a model
    /// (statistics, serialization, text normalization).
    pub(crate) fn rows(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn cv_folds(&self, k: usize, seed: u64) -> Result<FoldPlan> {
        make_cv_folds(&self.trainable(), k, seed)
    }
}

/// Exact per-(target, split, label) counts.
pub fn class_distribution(bundle: &CorpusBundle) -> ClassTable {
    bundle.stats().clone()
}

pub fn escape_field(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

pub fn unescape_field(s: &str) -> std::result::Result<String, String> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => return Err(format!("invalid escape \\{other}")),
            None => return Err("dangling backslash".into()),
        }
    }
    Ok(out)
}

/// Parses canonical TSV text. `source` only labels error messages.
pub fn parse_canonical(text: &str, source: &str, split: Split) -> Result<Vec<LabeledExample>> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: source.to_owned(),
        line,
        message,
    };
    let mut lines = text.split('\n');
    match lines.next() {
        Some(h) if h == CANONICAL_HEADER => {}
        Some("") | None => return Err(Error::NoExamples(source.to_owned())),
        Some(h) => return Err(parse_err(1, format!("expected header {CANONICAL_HEADER:?}, found {h:?}"))),
    }
    let mut examples = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in lines.enumerate() {
        let line = i + 2;
        if raw.is_empty() {
            // only the terminating newline may produce an empty line
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 4 {
            return Err(parse_err(line, format!("expected 4 tab-separated fields, found {}", fields.len())));
        }
        let id = unescape_field(fields[0]).map_err(|m| parse_err(line, m))?;
        let target = unescape_field(fields[1]).map_err(|m| parse_err(line, m))?;
        let text = unescape_field(fields[2]).map_err(|m| parse_err(line, m))?;
        let label = Label::parse(fields[3]).ok_or_else(|| Error::UnknownLabel {
            path: source.to_owned(),
            line,
            value: fields[3].to_owned(),
        })?;
        if id.is_empty() {
            return Err(parse_err(line, "empty id".into()));
        }
        if text.is_empty() {
            return Err(parse_err(line, "empty text".into()));
        }
        let target = match (target.as_str(), label.task()) {
            (NO_TARGET, Task::Sarcasm) => None,
            (NO_TARGET, Task::Stance) => return Err(parse_err(line, "stance row without target".into())),
            (t, Task::Stance) => Some(t.to_owned()),
            (_, Task::Sarcasm) => return Err(parse_err(line, "sarcasm row must use target '-'".into())),
        };
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicateId {
                path: source.to_owned(),
                line,
                id,
            });
        }
        examples.push(LabeledExample {
            id,
            text,
            target,
            label,
            split,
        });
    }
    if examples.is_empty() {
        return Err(Error::NoExamples(source.to_owned()));
    }
    Ok(examples)
}

pub fn read_canonical(path: &Path, split: Split) -> Result<Vec<LabeledExample>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_canonical(&text, &path.display().to_string(), split)
}

pub fn write_canonical<'a, W: Write>(
    mut out: W,
    examples: impl IntoIterator<Item = &'a LabeledExample>,
) -> std::io::Result<()> {
    writeln!(out, "{CANONICAL_HEADER}")?;
    for e in examples {
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            escape_field(&e.id),
            escape_field(e.target.as_deref().unwrap_or(NO_TARGET)),
            escape_field(&e.text),
            e.label
        )?;
    }
    Ok(())
}

fn write_canonical_file<'a>(
    path: &Path,
    examples: impl IntoIterator<Item = &'a LabeledExample>,
) -> Result<()> {
    let mut buf = Vec::new();
    write_canonical(&mut buf, examples).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Loads a stance corpus directory holding `train.tsv` and/or `test.tsv`.
pub fn load_stance_corpus(path: &Path, name: CorpusName) -> Result<CorpusBundle> {
    if name.task() != Task::Stance {
        return Err(Error::InvalidArgument(format!("{name} is not a stance corpus")));
    }
    let mut examples = Vec::new();
    let mut found = false;
    for split in [Split::Train, Split::Test] {
        let file = path.join(format!("{}.tsv", split.as_str()));
        if !file.exists() {
            continue;
        }
        found = true;
        let rows = read_canonical(&file, split)?;
        examples.extend(rows);
    }
    if !found {
        return Err(Error::NoExamples(path.display().to_string()));
    }
    check_cross_file_ids(&examples, path)?;
    let known = name.known_targets();
    if let Some(bad) = examples
        .iter()
        .filter_map(|e| e.target.as_deref())
        .find(|t| !known.contains(t))
    {
        return Err(Error::InvalidCorpus(format!("{name}: unknown target {bad:?}")));
    }
    let bundle = CorpusBundle::new(name, examples)?;
    if bundle.targets().len() != known.len() {
        log::warn!(
            "{name}: {} of {} targets present in {}",
            bundle.targets().len(),
            known.len(),
            path.display()
        );
    }
    Ok(bundle)
}

fn check_cross_file_ids(examples: &[LabeledExample], path: &Path) -> Result<()> {
    let mut seen = HashSet::new();
    for e in examples {
        if !seen.insert(e.id.as_str()) {
            return Err(Error::InvalidCorpus(format!(
                "{}: id {:?} appears in both train and test",
                path.display(),
                e.id
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SarcasmLoadOptions {
    /// Keep at most this many rows, drawn by seeded stratified reservoir sampling.
    pub max_rows: Option<usize>,
    pub seed: u64,
}

/// Loads a sarcasm corpus file (or a directory containing `all.tsv`).
pub fn load_sarcasm_corpus(
    path: &Path,
    name: CorpusName,
    options: &SarcasmLoadOptions,
) -> Result<CorpusBundle> {
    if name.task() != Task::Sarcasm {
        return Err(Error::InvalidArgument(format!("{name} is not a sarcasm corpus")));
    }
    let file: PathBuf = if path.is_dir() { path.join("all.tsv") } else { path.to_owned() };
    let mut examples = read_canonical(&file, Split::Unsplit)?;
    if let Some(max) = options.max_rows {
        examples = split::stratified_subsample(examples, max, options.seed);
    }
    CorpusBundle::new(name, examples)
}

/// Loads either kind of corpus by name.
pub fn load_corpus(path: &Path, name: CorpusName, options: &SarcasmLoadOptions) -> Result<CorpusBundle> {
    match name.task() {
        Task::Stance => load_stance_corpus(path, name),
        Task::Sarcasm => load_sarcasm_corpus(path, name, options),
    }
}

/// Writes a bundle in canonical form: a directory with `train.tsv` and
/// `test.tsv` for stance corpora, a single file for sarcasm corpora.
pub fn save_canonical(bundle: &CorpusBundle, path: &Path) -> Result<()> {
    match bundle.task() {
        Task::Stance => {
            fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
            for split in [Split::Train, Split::Test] {
                let rows = bundle.rows().iter().filter(|e| e.split == split);
                write_canonical_file(&path.join(format!("{}.tsv", split.as_str())), rows)?;
            }
            Ok(())
        }
        Task::Sarcasm => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
            }
            write_canonical_file(path, bundle.rows())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stance(id: &str, target: &str, label: StanceLabel, split: Split) -> LabeledExample {
        LabeledExample {
            id: id.into(),
            text: format!("text {id}"),
            target: Some(target.into()),
            label: Label::Stance(label),
            split,
        }
    }

    #[test]
    fn escape_roundtrip_handles_control_characters() {
        let s = "a\tb\nc\\d\re";
        assert_eq!(escape_field(s), "a\\tb\\nc\\\\d\\re");
        assert_eq!(unescape_field(&escape_field(s)).unwrap(), s);
        assert!(unescape_field("bad\\q").is_err());
    }

    #[test]
    fn parse_reports_line_numbers() {
        let text = "id\ttarget\ttext\tlabel\n1\tAT\thello\tFAVOR\n2\tAT\tbroken\n";
        match parse_canonical(text, "x.tsv", Split::Train) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_unknown_label_and_duplicate_id() {
        let text = "id\ttarget\ttext\tlabel\n1\tAT\thello\tPRO\n";
        assert!(matches!(
            parse_canonical(text, "x", Split::Train),
            Err(Error::UnknownLabel { line: 2, .. })
        ));
        let text = "id\ttarget\ttext\tlabel\n1\tAT\thello\tFAVOR\n1\tAT\tagain\tNONE\n";
        assert!(matches!(
            parse_canonical(text, "x", Split::Train),
            Err(Error::DuplicateId { line: 3, .. })
        ));
    }

    #[test]
    fn empty_input_is_no_examples() {
        assert!(matches!(parse_canonical("", "x", Split::Train), Err(Error::NoExamples(_))));
        assert!(matches!(
            parse_canonical("id\ttarget\ttext\tlabel\n", "x", Split::Train),
            Err(Error::NoExamples(_))
        ));
    }

    #[test]
    fn sarcasm_rows_need_dash_target() {
        let ok = "id\ttarget\ttext\tlabel\n1\t-\tyeah right\tSARCASTIC\n";
        let rows = parse_canonical(ok, "x", Split::Unsplit).unwrap();
        assert_eq!(rows[0].target, None);
        let bad = "id\ttarget\ttext\tlabel\n1\tAT\tyeah right\tSARCASTIC\n";
        assert!(parse_canonical(bad, "x", Split::Unsplit).is_err());
    }

    #[test]
    fn stats_sum_to_slice_sizes() {
        let examples = vec![
            stance("1", "AT", StanceLabel::InFavor, Split::Train),
            stance("2", "AT", StanceLabel::Against, Split::Train),
            stance("3", "AT", StanceLabel::Against, Split::Test),
            stance("4", "CC", StanceLabel::None, Split::Train),
        ];
        let b = CorpusBundle::new(CorpusName::SemEval, examples).unwrap();
        assert_eq!(b.targets(), ["AT", "CC"]);
        let t = class_distribution(&b);
        assert_eq!(t.class_counts(Some("AT"), Split::Train, Task::Stance), vec![1, 1, 0]);
        assert_eq!(t.class_counts(Some("AT"), Split::Test, Task::Stance), vec![0, 1, 0]);
        assert_eq!(t.total(), 4);
    }

    #[test]
    fn empty_bundle_has_empty_table() {
        let b = CorpusBundle::new(CorpusName::St, vec![]).unwrap();
        assert!(class_distribution(&b).is_empty());
    }

    #[test]
    fn read_log_counts_only_requested_splits() {
        let examples = vec![
            stance("1", "AT", StanceLabel::InFavor, Split::Train),
            stance("2", "AT", StanceLabel::Against, Split::Test),
        ];
        let b = CorpusBundle::new(CorpusName::SemEval, examples).unwrap();
        b.target_examples("AT", Split::Train);
        b.trainable();
        assert_eq!(b.read_log().reads(Split::Test), 0);
        assert_eq!(b.read_log().reads(Split::Train), 2);
        let d = b.derive(b.rows().to_vec()).unwrap();
        d.examples_in(Split::Test);
        assert_eq!(b.read_log().reads(Split::Test), 1);
    }

    #[test]
    fn mixed_tasks_are_rejected() {
        let mut e = stance("1", "AT", StanceLabel::InFavor, Split::Train);
        e.label = Label::Sarcasm(SarcasmLabel::Sarcastic);
        assert!(CorpusBundle::new(CorpusName::SemEval, vec![e]).is_err());
    }
}
