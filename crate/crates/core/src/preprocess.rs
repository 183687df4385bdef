//! Deterministic text normalization applied before tokenization.
//!
//! Steps run in a fixed order: case-folding, hashtag segmentation, lexical
//! normalization, then the optional stemming / stop-word removal that only
//! non-embedding baselines use.

use std::collections::{HashMap, HashSet};
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use regex::Regex;
use rust_stemmers::{Algorithm, Stemmer};
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusBundle, LabeledExample};
use crate::error::{Error, Result};

const DEFAULT_WORDS_GZ: &[u8] = include_bytes!("../data/words.txt.gz");
const DEFAULT_LEXICON: &str = include_str!("../data/lexnorm.tsv");

/// Per-character penalty for substrings missing from the word list.
const UNKNOWN_CHAR_COST: f64 = 10.0;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub case_fold: bool,
    pub segment_hashtags: bool,
    pub normalize_lexical: bool,
    pub stem: bool,
    pub remove_stopwords: bool,
    pub drop_empty: bool,
}

impl Default for PipelineConfig {
    /// The pipeline used in front of pretrained encoders.
    fn default() -> Self {
        PipelineConfig {
            case_fold: true,
            segment_hashtags: true,
            normalize_lexical: true,
            stem: false,
            remove_stopwords: false,
            drop_empty: true,
        }
    }
}

impl PipelineConfig {
    pub fn identity() -> Self {
        PipelineConfig {
            case_fold: false,
            segment_hashtags: false,
            normalize_lexical: false,
            stem: false,
            remove_stopwords: false,
            drop_empty: false,
        }
    }

    /// Stemmed or stop-word-stripped text would not match pretrained
    /// vocabularies, so the neural path refuses both.
    pub fn validate_for_neural(&self) -> Result<()> {
        if self.stem || self.remove_stopwords {
            return Err(Error::InvalidArgument(
                "stemming and stop-word removal are not allowed in front of a pretrained encoder".into(),
            ));
        }
        Ok(())
    }
}

/// Word costs derived from a frequency-ranked word list:
/// `cost(w) = ln(rank(w) * ln V)` with ranks starting at 1.
#[derive(Clone, Debug)]
pub struct WordCostTable {
    costs: HashMap<String, f64>,
    vocab_size: usize,
    max_word_len: usize,
}

impl WordCostTable {
    /// Builds the table from words in rank order. Repeated words keep their
    /// first (best) rank.
    pub fn from_ranked_words<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let list: Vec<String> = words
            .into_iter()
            .map(|w| w.as_ref().trim().to_lowercase())
            .filter(|w| !w.is_empty())
            .collect();
        let vocab_size = list.len().max(2);
        let ln_v = (vocab_size as f64).ln();
        let mut costs = HashMap::with_capacity(list.len());
        let mut max_word_len = 0;
        for (i, w) in list.into_iter().enumerate() {
            max_word_len = max_word_len.max(w.chars().count());
            costs.entry(w).or_insert(((i + 1) as f64 * ln_v).ln());
        }
        WordCostTable {
            costs,
            vocab_size,
            max_word_len,
        }
    }

    /// One word per line, most frequent first.
    pub fn from_path(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = if path.extension().is_some_and(|e| e == "gz") {
            gunzip(&bytes).map_err(|e| Error::io(path, e))?
        } else {
            String::from_utf8(bytes)
                .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::InvalidData, e)))?
        };
        Ok(Self::from_ranked_words(text.lines()))
    }

    /// The bundled ~126k-word English list.
    pub fn english() -> Arc<WordCostTable> {
        static TABLE: OnceLock<Arc<WordCostTable>> = OnceLock::new();
        TABLE
            .get_or_init(|| {
                let text = gunzip(DEFAULT_WORDS_GZ).expect("bundled word list is valid gzip");
                Arc::new(Self::from_ranked_words(text.lines()))
            })
            .clone()
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn word_cost(&self, word: &str) -> Option<f64> {
        self.costs.get(word).copied()
    }

    /// Cost of a lower-cased substring: its table cost when listed,
    /// otherwise `10 * len + ln(V ln V)`.
    pub fn cost(&self, piece: &str) -> f64 {
        let len = piece.chars().count();
        if len <= self.max_word_len {
            if let Some(c) = self.costs.get(piece) {
                return *c;
            }
        }
        let v = self.vocab_size as f64;
        UNKNOWN_CHAR_COST * len as f64 + (v * v.ln()).ln()
    }
}

fn gunzip(bytes: &[u8]) -> std::io::Result<String> {
    let mut out = String::new();
    flate2::read::GzDecoder::new(bytes).read_to_string(&mut out)?;
    Ok(out)
}

/// Minimum-cost segmentation of a hashtag body by dynamic programming over
/// split points. Tokens are slices of the input, so their concatenation
/// reproduces it exactly. Among equal-cost segmentations the one whose
/// last token starts earliest wins.
pub fn segment_hashtag(tag: &str, table: &WordCostTable) -> Vec<String> {
    let chars: Vec<char> = tag.chars().collect();
    let n = chars.len();
    if n == 0 {
        return Vec::new();
    }
    let lower: Vec<String> = chars.iter().map(|c| c.to_lowercase().collect()).collect();
    let mut best = vec![f64::INFINITY; n + 1];
    let mut back = vec![0usize; n + 1];
    best[0] = 0.0;
    for end in 1..=n {
        for start in 0..end {
            let piece: String = lower[start..end].concat();
            let candidate = best[start] + table.cost(&piece);
            if candidate < best[end] {
                best[end] = candidate;
                back[end] = start;
            }
        }
    }
    let mut tokens = Vec::new();
    let mut end = n;
    while end > 0 {
        let start = back[end];
        tokens.push(chars[start..end].iter().collect());
        end = start;
    }
    tokens.reverse();
    tokens
}

/// Variant -> canonical replacements, matched token-wise after case-folding.
#[derive(Clone, Debug, Default)]
pub struct Lexicon {
    map: HashMap<String, String>,
}

impl Lexicon {
    /// Parses `variant<TAB>canonical` lines (`#` starts a comment line).
    /// Rejects lexicons whose canonical words are themselves variants, which
    /// would make normalization non-idempotent.
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let (variant, canonical) = line
                .split_once('\t')
                .ok_or_else(|| Error::Lexicon(format!("line {}: expected variant<TAB>canonical", i + 1)))?;
            let variant = variant.trim().to_lowercase();
            let canonical = canonical.trim().to_owned();
            if variant.is_empty() || canonical.is_empty() {
                return Err(Error::Lexicon(format!("line {}: empty field", i + 1)));
            }
            map.insert(variant, canonical);
        }
        for (variant, canonical) in &map {
            if let Some(w) = canonical.split_whitespace().find(|w| map.contains_key(&w.to_lowercase())) {
                return Err(Error::Lexicon(format!(
                    "canonical form {canonical:?} of {variant:?} contains variant {w:?}"
                )));
            }
        }
        Ok(Lexicon { map })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let text: String = pairs.into_iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
        Self::parse(&text)
    }

    /// The versioned dictionary shipped with the crate.
    pub fn english() -> Arc<Lexicon> {
        static LEXICON: OnceLock<Arc<Lexicon>> = OnceLock::new();
        LEXICON
            .get_or_init(|| Arc::new(Self::parse(DEFAULT_LEXICON).expect("bundled lexicon is valid")))
            .clone()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    fn lookup(&self, token: &str) -> Option<(usize, usize, &str)> {
        if let Some(c) = self.map.get(&token.to_lowercase()) {
            return Some((0, token.len(), c));
        }
        let is_edge = |c: char| matches!(c, '.' | ',' | '!' | '?' | ';' | ':' | '"' | '(' | ')' | '[' | ']' | '…');
        let core = token.trim_matches(is_edge);
        if core.is_empty() || core.len() == token.len() {
            return None;
        }
        let start = token.len() - token.trim_start_matches(is_edge).len();
        self.map
            .get(&core.to_lowercase())
            .map(|c| (start, start + core.len(), c.as_str()))
    }
}

/// Replaces lexicon variants token by token, leaving whitespace untouched.
pub fn normalize_lexical(text: &str, lexicon: &Lexicon) -> String {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while !rest.is_empty() {
        let ws = rest.len() - rest.trim_start().len();
        out.push_str(&rest[..ws]);
        rest = &rest[ws..];
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let token = &rest[..end];
        match lexicon.lookup(token) {
            Some((s, e, canonical)) => {
                out.push_str(&token[..s]);
                out.push_str(canonical);
                out.push_str(&token[e..]);
            }
            None => out.push_str(token),
        }
        rest = &rest[end..];
    }
    out
}

const STOPWORDS: &[&str] = &[
    "i", "me", "my", "myself", "we", "our", "ours", "ourselves", "you", "your", "yours", "yourself",
    "yourselves", "he", "him", "his", "himself", "she", "her", "hers", "herself", "it", "its", "itself",
    "they", "them", "their", "theirs", "themselves", "what", "which", "who", "whom", "this", "that",
    "these", "those", "am", "is", "are", "was", "were", "be", "been", "being", "have", "has", "had",
    "having", "do", "does", "did", "doing", "a", "an", "the", "and", "but", "if", "or", "because", "as",
    "until", "while", "of", "at", "by", "for", "with", "about", "against", "between", "into", "through",
    "during", "before", "after", "above", "below", "to", "from", "up", "down", "in", "out", "on", "off",
    "over", "under", "again", "further", "then", "once", "here", "there", "when", "where", "why", "how",
    "all", "any", "both", "each", "few", "more", "most", "other", "some", "such", "no", "nor", "not",
    "only", "own", "same", "so", "than", "too", "very", "s", "t", "can", "will", "just", "don", "should",
    "now",
];

fn hashtag_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"#+(\w+)").expect("valid hashtag regex"))
}

/// Word list and lexicon locations plus the pipeline switches; the on-disk
/// form of a preprocessing configuration.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PreprocessSettings {
    #[serde(flatten)]
    pub pipeline: PipelineConfig,
    pub word_list: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

impl PreprocessSettings {
    pub fn from_toml_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::InvalidArgument(format!("{}: {e}", path.display())))
    }
}

pub struct Preprocessor {
    config: PipelineConfig,
    table: Arc<WordCostTable>,
    lexicon: Arc<Lexicon>,
    stemmer: Stemmer,
    stopwords: HashSet<&'static str>,
}

impl Preprocessor {
    pub fn new(config: PipelineConfig, table: Arc<WordCostTable>, lexicon: Arc<Lexicon>) -> Self {
        Preprocessor {
            config,
            table,
            lexicon,
            stemmer: Stemmer::create(Algorithm::English),
            stopwords: STOPWORDS.iter().copied().collect(),
        }
    }

    /// Uses the bundled word list and lexicon.
    pub fn english(config: PipelineConfig) -> Self {
        Self::new(config, WordCostTable::english(), Lexicon::english())
    }

    pub fn from_settings(settings: &PreprocessSettings) -> Result<Self> {
        let table = match &settings.word_list {
            Some(p) => Arc::new(WordCostTable::from_path(p)?),
            None => WordCostTable::english(),
        };
        let lexicon = match &settings.lexicon {
            Some(p) => Arc::new(Lexicon::from_path(p)?),
            None => Lexicon::english(),
        };
        Ok(Self::new(settings.pipeline.clone(), table, lexicon))
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    /// Runs the pipeline on one text; `None` when the result is blank and
    /// `drop_empty` is set.
    pub fn apply(&self, text: &str) -> Option<String> {
        let cfg = &self.config;
        let mut s = if cfg.case_fold { text.to_lowercase() } else { text.to_owned() };
        if cfg.segment_hashtags {
            s = hashtag_pattern()
                .replace_all(&s, |caps: &regex::Captures| {
                    caps[1]
                        .split('_')
                        .filter(|p| !p.is_empty())
                        .flat_map(|p| segment_hashtag(p, &self.table))
                        .collect::<Vec<_>>()
                        .join(" ")
                })
                .into_owned();
        }
        if cfg.normalize_lexical {
            s = normalize_lexical(&s, &self.lexicon);
        }
        if cfg.stem || cfg.remove_stopwords {
            s = s
                .split_whitespace()
                .filter(|w| !(cfg.remove_stopwords && self.stopwords.contains(w.to_lowercase().as_str())))
                .map(|w| if cfg.stem { self.stemmer.stem(w).into_owned() } else { w.to_owned() })
                .collect::<Vec<_>>()
                .join(" ");
        }
        if cfg.drop_empty && s.trim().is_empty() {
            return None;
        }
        Some(s)
    }

    pub fn preprocess_example(&self, example: &LabeledExample) -> Option<LabeledExample> {
        self.apply(&example.text).map(|text| LabeledExample {
            text,
            ..example.clone()
        })
    }

    /// Maps the pipeline over every example, dropping those that come out
    /// empty. Statistics are recomputed; the read log is shared.
    pub fn preprocess_corpus(&self, bundle: &CorpusBundle) -> CorpusBundle {
        let examples = bundle
            .rows()
            .iter()
            .filter_map(|e| self.preprocess_example(e))
            .collect();
        bundle
            .derive(examples)
            .expect("preprocessing keeps ids, targets and labels intact")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{class_distribution, CorpusName, Label, SarcasmLabel, Split};
    use proptest::prelude::*;

    fn toy_table() -> WordCostTable {
        WordCostTable::from_ranked_words(["the", "climate", "change", "is", "real", "a", "mmr", "cli", "mate"])
    }

    /// Exhaustive oracle: every one of the 2^(n-1) segmentations.
    fn brute_force_min(tag: &str, table: &WordCostTable) -> (f64, Vec<Vec<String>>) {
        let chars: Vec<char> = tag.chars().collect();
        let n = chars.len();
        let mut best = f64::INFINITY;
        let mut winners = Vec::new();
        for mask in 0u32..(1 << (n - 1)) {
            let mut pieces = Vec::new();
            let mut start = 0;
            for i in 1..n {
                if mask & (1 << (i - 1)) != 0 {
                    pieces.push(chars[start..i].iter().collect::<String>());
                    start = i;
                }
            }
            pieces.push(chars[start..].iter().collect());
            let cost: f64 = pieces.iter().map(|p| table.cost(&p.to_lowercase())).sum();
            if cost < best - 1e-12 {
                best = cost;
                winners = vec![pieces];
            } else if (cost - best).abs() <= 1e-12 {
                winners.push(pieces);
            }
        }
        (best, winners)
    }

    fn seg_cost(tokens: &[String], table: &WordCostTable) -> f64 {
        tokens.iter().map(|t| table.cost(&t.to_lowercase())).sum()
    }

    #[test]
    fn cost_follows_rank_formula() {
        let t = toy_table();
        let ln_v = (9f64).ln();
        assert!((t.word_cost("the").unwrap() - ln_v.ln()).abs() < 1e-12);
        assert!((t.word_cost("change").unwrap() - (3.0 * ln_v).ln()).abs() < 1e-12);
        assert!((t.cost("zz") - (20.0 + (9.0 * ln_v).ln())).abs() < 1e-12);
    }

    #[test]
    fn climatechange_splits_into_two_words() {
        let t = toy_table();
        assert_eq!(segment_hashtag("climatechange", &t), ["climate", "change"]);
        let (best, winners) = brute_force_min("climatechange", &t);
        assert_eq!(winners, vec![vec!["climate".to_string(), "change".to_string()]]);
        assert!((seg_cost(&segment_hashtag("climatechange", &t), &t) - best).abs() < 1e-12);
    }

    #[test]
    fn single_known_word_stays_whole() {
        assert_eq!(segment_hashtag("mmr", &toy_table()), ["mmr"]);
        assert_eq!(segment_hashtag("MMR", &toy_table()), ["MMR"]);
    }

    #[test]
    fn empty_tag_gives_no_tokens() {
        assert!(segment_hashtag("", &toy_table()).is_empty());
    }

    #[test]
    fn unknown_tags_stay_in_one_chunk() {
        assert_eq!(segment_hashtag("xqzv", &toy_table()), ["xqzv"]);
    }

    #[test]
    fn bundled_word_list_segments_common_tags() {
        let t = WordCostTable::english();
        assert!(t.vocab_size() > 120_000);
        assert_eq!(segment_hashtag("climatechange", &t), ["climate", "change"]);
        assert_eq!(segment_hashtag("feministmovement", &t), ["feminist", "movement"]);
    }

    proptest! {
        #[test]
        fn dp_matches_exhaustive_minimum(tag in "[a-z]{1,12}") {
            let t = toy_table();
            let tokens = segment_hashtag(&tag, &t);
            prop_assert_eq!(tokens.concat(), tag.clone());
            let (best, _) = brute_force_min(&tag, &t);
            prop_assert!((seg_cost(&tokens, &t) - best).abs() < 1e-9);
        }

        #[test]
        fn pipeline_is_idempotent_and_lowercase(text in "[A-Za-z#_ ,.!0-9]{0,40}") {
            let p = Preprocessor::english(PipelineConfig::default());
            if let Some(once) = p.apply(&text) {
                prop_assert!(!once.chars().any(|c| c.is_ascii_uppercase()));
                prop_assert_eq!(p.apply(&once), Some(once.clone()));
            }
        }
    }

    #[test]
    fn lexical_normalization_maps_tokens() {
        let lex = Lexicon::from_pairs([("u", "you"), ("r", "are"), ("gr8", "great")]).unwrap();
        assert_eq!(normalize_lexical("u r gr8", &lex), "you are great");
        assert_eq!(normalize_lexical("U r gr8!", &lex), "you are great!");
        assert_eq!(normalize_lexical("nothing  here\tat all", &lex), "nothing  here\tat all");
        let once = normalize_lexical("u r gr8, u", &lex);
        assert_eq!(normalize_lexical(&once, &lex), once);
    }

    #[test]
    fn non_closed_lexicon_is_rejected() {
        assert!(Lexicon::from_pairs([("u", "you"), ("you", "thou")]).is_err());
        assert!(Lexicon::parse("no tab here").is_err());
    }

    #[test]
    fn missing_lexicon_file_fails_construction() {
        let settings = PreprocessSettings {
            lexicon: Some("/nonexistent/lexicon.tsv".into()),
            ..Default::default()
        };
        assert!(Preprocessor::from_settings(&settings).is_err());
    }

    #[test]
    fn bundled_lexicon_is_closed() {
        assert!(Lexicon::english().len() > 100);
    }

    #[test]
    fn semst_tweet_hashtag_is_segmented() {
        let p = Preprocessor::english(PipelineConfig::default());
        let out = p.apply("I like girls. They just need to know their place. #SemST").unwrap();
        let expected = segment_hashtag("semst", &WordCostTable::english()).join(" ");
        assert_eq!(out, format!("i like girls. they just need to know their place. {expected}"));
        assert!(!out.contains('#'));
    }

    #[test]
    fn blank_text_is_dropped_and_identity_config_is_identity() {
        let p = Preprocessor::english(PipelineConfig::default());
        assert_eq!(p.apply("   "), None);
        let id = Preprocessor::english(PipelineConfig::identity());
        let s = "Hello #World u r Gr8";
        assert_eq!(id.apply(s).as_deref(), Some(s));
    }

    #[test]
    fn stemming_and_stopwords_for_baselines() {
        let cfg = PipelineConfig {
            stem: true,
            remove_stopwords: true,
            ..PipelineConfig::default()
        };
        assert!(cfg.validate_for_neural().is_err());
        assert!(PipelineConfig::default().validate_for_neural().is_ok());
        let p = Preprocessor::english(cfg);
        assert_eq!(p.apply("The voters are running").as_deref(), Some("voter run"));
    }

    fn sarcasm(id: &str, text: &str) -> LabeledExample {
        LabeledExample {
            id: id.into(),
            text: text.into(),
            target: None,
            label: Label::Sarcasm(SarcasmLabel::Sarcastic),
            split: Split::Unsplit,
        }
    }

    #[test]
    fn corpus_preprocessing_drops_empties_and_recounts() {
        let b = CorpusBundle::new(CorpusName::St, vec![sarcasm("1", "Great #MondayMorning"), sarcasm("2", "  ")])
            .unwrap();
        let p = Preprocessor::english(PipelineConfig::default());
        let out = p.preprocess_corpus(&b);
        assert_eq!(out.len(), b.len() - 1);
        assert_eq!(out.stats(), &class_distribution(&out));
        assert_eq!(out.rows()[0].text, "great monday morning");

        let id = Preprocessor::english(PipelineConfig::identity());
        assert_eq!(id.preprocess_corpus(&b).rows(), b.rows());
    }
}
