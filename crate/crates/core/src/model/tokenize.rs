//! Text to token ids.
//!
//! Pretrained encoders bring their own tokenizer (`tokenizer.json`); the
//! fallback encoder uses a word vocabulary built from training text and
//! stored alongside its parameters.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

use crate::error::{Error, Result};

pub const PAD: &str = "[PAD]";
pub const UNK: &str = "[UNK]";
pub const SEP: &str = "[SEP]";
const SPECIALS: [&str; 3] = [PAD, UNK, SEP];

fn word_pattern() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").expect("valid token regex"))
}

/// Lower-cased word and punctuation tokens.
pub fn word_tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    word_pattern().find_iter(text).map(|m| m.as_str().to_lowercase())
}

/// Frequency-ranked word vocabulary with `[PAD]=0`, `[UNK]=1`, `[SEP]=2`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordVocab {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl WordVocab {
    /// Keeps the `max_size - 3` most frequent tokens (ties broken
    /// alphabetically) that occur at least `min_count` times.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>, max_size: usize, min_count: usize) -> Self {
        let mut counts: HashMap<String, usize> = HashMap::new();
        for text in texts {
            for tok in word_tokens(text) {
                *counts.entry(tok).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(t, c)| *c >= min_count && !SPECIALS.contains(&t.as_str()))
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().map(|(t, _)| t))
            .take(max_size.max(SPECIALS.len()))
            .collect();
        Self::from_tokens(tokens).expect("built vocabulary is well formed")
    }

    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < SPECIALS.len() || tokens[..3] != SPECIALS {
            return Err(Error::Tokenizer("vocabulary must start with [PAD], [UNK], [SEP]".into()));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Tokenizer(format!("duplicate vocabulary entry {t:?}")));
            }
        }
        Ok(WordVocab { tokens, index })
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_tokens(text.lines().map(str::to_owned).collect())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// One token per line; line number is the id.
    pub fn to_text(&self) -> String {
        let mut s = self.tokens.join("\n");
        s.push('\n');
        s
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(1)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Token ids of one example before batching.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EncodedText {
    pub ids: Vec<u32>,
    pub type_ids: Vec<u32>,
    pub truncated: bool,
}

/// A padded batch, row-major `[batch, len]`.
#[derive(Clone, Debug)]
pub struct EncodedBatch {
    pub ids: Vec<u32>,
    pub type_ids: Vec<u32>,
    pub mask: Vec<u8>,
    pub batch: usize,
    pub len: usize,
    pub truncated: usize,
}

impl EncodedBatch {
    /// Right-pads every row to the longest row, or to `pad_to` when longer.
    pub fn collate(rows: &[&EncodedText], pad_to: Option<usize>, pad_id: u32) -> Self {
        let longest = rows.iter().map(|r| r.ids.len()).max().unwrap_or(1).max(1);
        let len = pad_to.map_or(longest, |p| p.max(longest));
        let batch = rows.len();
        let mut ids = vec![pad_id; batch * len];
        let mut type_ids = vec![0; batch * len];
        let mut mask = vec![0u8; batch * len];
        for (r, row) in rows.iter().enumerate() {
            let base = r * len;
            ids[base..base + row.ids.len()].copy_from_slice(&row.ids);
            type_ids[base..base + row.type_ids.len()].copy_from_slice(&row.type_ids);
            mask[base..base + row.ids.len()].fill(1);
        }
        EncodedBatch {
            ids,
            type_ids,
            mask,
            batch,
            len,
            truncated: rows.iter().filter(|r| r.truncated).count(),
        }
    }
}

pub enum TextTokenizer {
    Words(WordVocab),
    Pretrained(Box<tokenizers::Tokenizer>),
}

impl TextTokenizer {
    pub fn pretrained(path: &Path) -> Result<Self> {
        let tok = tokenizers::Tokenizer::from_file(path)
            .map_err(|e| Error::Tokenizer(format!("{}: {e}", path.display())))?;
        Ok(TextTokenizer::Pretrained(Box::new(tok)))
    }

    pub fn vocab(&self) -> Option<&WordVocab> {
        match self {
            TextTokenizer::Words(v) => Some(v),
            TextTokenizer::Pretrained(_) => None,
        }
    }

    pub fn pad_id(&self) -> u32 {
        match self {
            TextTokenizer::Words(_) => 0,
            TextTokenizer::Pretrained(t) => t
                .get_padding()
                .map(|p| p.pad_id)
                .or_else(|| t.token_to_id("[PAD]"))
                .or_else(|| t.token_to_id("<pad>"))
                .unwrap_or(0),
        }
    }

    /// Encodes `text` (optionally preceded by a `pair` segment such as the
    /// stance target) and truncates to `max_len` tokens.
    pub fn encode(&self, text: &str, pair: Option<&str>, max_len: usize) -> Result<EncodedText> {
        match self {
            TextTokenizer::Words(vocab) => {
                let mut ids = Vec::new();
                let mut type_ids = Vec::new();
                if let Some(p) = pair {
                    ids.extend(word_tokens(p).map(|t| vocab.id(&t)));
                    ids.push(vocab.id(SEP));
                    type_ids.resize(ids.len(), 0);
                }
                ids.extend(word_tokens(text).map(|t| vocab.id(&t)));
                type_ids.resize(ids.len(), u32::from(pair.is_some()));
                if ids.is_empty() {
                    ids.push(vocab.id(UNK));
                    type_ids.push(0);
                }
                let truncated = ids.len() > max_len;
                ids.truncate(max_len);
                type_ids.truncate(max_len);
                Ok(EncodedText { ids, type_ids, truncated })
            }
            TextTokenizer::Pretrained(tok) => {
                let encoding = match pair {
                    Some(p) => tok.encode((p, text), true),
                    None => tok.encode(text, true),
                }
                .map_err(|e| Error::Tokenizer(e.to_string()))?;
                let mut ids = encoding.get_ids().to_vec();
                let mut type_ids = encoding.get_type_ids().to_vec();
                let truncated = ids.len() > max_len;
                if truncated {
                    // keep the closing special token
                    let last = *ids.last().expect("non-empty encoding");
                    ids.truncate(max_len);
                    type_ids.truncate(max_len);
                    ids[max_len - 1] = last;
                }
                Ok(EncodedText { ids, type_ids, truncated })
            }
        }
    }
}
