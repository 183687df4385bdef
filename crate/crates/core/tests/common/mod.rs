#![allow(dead_code)]

use std::fs;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const HEADER: &str = "id\ttarget\ttext\tlabel";

const FILLER: &[&str] = &[
    "the", "a", "today", "people", "really", "think", "about", "this", "still", "news", "week", "just", "now",
    "again", "some", "they", "we", "talk", "said", "more",
];

/// Cue words for FAVOR, AGAINST, NONE.
pub const STANCE_CUES: [&[&str]; 3] = [
    &["support", "love", "proud", "agree", "great"],
    &["oppose", "hate", "wrong", "reject", "awful"],
    &["weather", "lunch", "football", "movie", "traffic"],
];

const SARCASM_CUES: [&[&str]; 2] = [
    &["yeah", "right", "totally", "sure", "wonderful"],
    &["report", "plain", "factual", "update", "schedule"],
];

pub fn sentence(rng: &mut ChaCha8Rng, cues: &[&str], extra: &str) -> String {
    let mut words: Vec<String> = (0..rng.random_range(3..7))
        .map(|_| FILLER.choose(rng).unwrap().to_string())
        .collect();
    for _ in 0..2 {
        let pos = rng.random_range(0..=words.len());
        words.insert(pos, cues.choose(rng).unwrap().to_string());
    }
    if !extra.is_empty() {
        words.push(extra.to_string());
    }
    words.join(" ")
}

pub const STANCE_NAMES: [&str; 3] = ["FAVOR", "AGAINST", "NONE"];

/// Canonical stance corpus whose labels are determined by cue words.
/// `counts[t] = (train per class, test per class)`.
pub fn write_stance_corpus(dir: &Path, targets: &[(&str, usize, usize)], seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = vec![HEADER.to_string()];
    let mut test = vec![HEADER.to_string()];
    for &(target, n_train, n_test) in targets {
        for (split, n, out) in [("tr", n_train, &mut train), ("te", n_test, &mut test)] {
            for i in 0..n {
                for (c, name) in STANCE_NAMES.iter().enumerate() {
                    let text = sentence(&mut rng, STANCE_CUES[c], &format!("#{}", target.to_lowercase()));
                    out.push(format!("{target}-{split}-{name}-{i}\t{target}\t{text}\t{name}"));
                }
            }
        }
    }
    fs::write(dir.join("train.tsv"), train.join("\n") + "\n").unwrap();
    fs::write(dir.join("test.tsv"), test.join("\n") + "\n").unwrap();
}

/// Canonical sarcasm corpus, `n` rows per class, in `<dir>/all.tsv`.
pub fn write_sarcasm_corpus(dir: &Path, n: usize, seed: u64) {
    fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![HEADER.to_string()];
    for i in 0..n {
        for (c, name) in ["SARCASTIC", "NOT_SARCASTIC"].iter().enumerate() {
            let text = sentence(&mut rng, SARCASM_CUES[c], "");
            rows.push(format!("s{c}-{i}\t-\t{text}\t{name}"));
        }
    }
    fs::write(dir.join("all.tsv"), rows.join("\n") + "\n").unwrap();
}

/// Published per-target class counts: (target, train F/A/N, test F/A/N).
pub const SEMEVAL_COUNTS: [(&str, [usize; 3], [usize; 3]); 5] = [
    ("AT", [92, 304, 117], [32, 160, 28]),
    ("CC", [212, 15, 168], [123, 11, 35]),
    ("FM", [210, 328, 126], [58, 183, 44]),
    ("HC", [112, 361, 166], [45, 172, 78]),
    ("LA", [105, 334, 164], [46, 189, 45]),
];

pub const MPCHI_COUNTS: [(&str, [usize; 3], [usize; 3]); 5] = [
    ("MMR", [48, 61, 72], [24, 33, 21]),
    ("SC", [68, 51, 117], [35, 26, 42]),
    ("EC", [60, 118, 111], [33, 47, 44]),
    ("VC", [74, 52, 68], [37, 16, 31]),
    ("HRT", [33, 95, 44], [9, 41, 24]),
];

const SEMEVAL_TARGET_NAMES: [(&str, &str); 5] = [
    ("AT", "Atheism"),
    ("CC", "Climate Change is a Real Concern"),
    ("FM", "Feminist Movement"),
    ("HC", "Hillary Clinton"),
    ("LA", "Legalization of Abortion"),
];

const MPCHI_QUERIES: [(&str, &str); 5] = [
    ("MMR", "MMR vaccination can cause autism"),
    ("SC", "Sun exposure leads to skin cancer"),
    ("EC", "E-cigarettes are safer than normal cigarettes"),
    ("VC", "Vitamin C prevents common cold"),
    ("HRT", "Women should take HRT post menopause"),
];

/// Files laid out like the SemEval-2016 task A distribution, with the
/// given per-class counts and a few out-of-study rows.
pub fn write_semeval_vendor(dir: &Path, counts: &[(&str, [usize; 3], [usize; 3])]) {
    fs::create_dir_all(dir).unwrap();
    let labels = ["FAVOR", "AGAINST", "NONE"];
    let mut id = 100_000;
    for (file, test) in [("semeval2016-task6-trainingdata.txt", false), ("SemEval2016-Task6-testdata.txt", true)] {
        let mut rows = vec!["ID\tTarget\tTweet\tStance".to_string()];
        for &(code, tr, te) in counts {
            let name = SEMEVAL_TARGET_NAMES.iter().find(|(c, _)| *c == code).unwrap().1;
            let per = if test { te } else { tr };
            for (c, &n) in per.iter().enumerate() {
                for i in 0..n {
                    id += 1;
                    rows.push(format!("{id}\t{name}\ttweet {i} about {name} #SemST\t{}", labels[c]));
                }
            }
        }
        id += 1;
        rows.push(format!("{id}\tDonald Trump\tnot part of the study\tAGAINST"));
        fs::write(dir.join(file), rows.join("\r\n") + "\r\n").unwrap();
    }
}

/// CSV files laid out like the MPCHI distribution.
pub fn write_mpchi_vendor(dir: &Path, counts: &[(&str, [usize; 3], [usize; 3])]) {
    fs::create_dir_all(dir).unwrap();
    let labels = ["favor", "against", "none"];
    for (file, test) in [("mpchi_train.csv", false), ("mpchi_test.csv", true)] {
        let mut rows = vec!["query,sentence,stance".to_string()];
        for &(code, tr, te) in counts {
            let query = MPCHI_QUERIES.iter().find(|(c, _)| *c == code).unwrap().1;
            let per = if test { te } else { tr };
            for (c, &n) in per.iter().enumerate() {
                for i in 0..n {
                    rows.push(format!("{query},\"Sentence {i}, on {code}.\",{}", labels[c]));
                }
            }
        }
        fs::write(dir.join(file), rows.join("\n") + "\n").unwrap();
    }
}

/// A two-class labelled text file (ST/SARC style): `label,text`.
pub fn write_labeled_text_vendor(path: &Path, sarcastic: usize, not: usize) {
    let mut rows = vec!["label,text".to_string()];
    for i in 0..sarcastic {
        rows.push(format!("1,\"oh great, another monday {i}\""));
    }
    for i in 0..not {
        rows.push(format!("0,\"the meeting is at noon {i}\""));
    }
    fs::write(path, rows.join("\n") + "\n").unwrap();
}

/// SaV2C-style CSV; the Response side carries the example.
pub fn write_sav2c_vendor(path: &Path, per_class: usize) {
    let mut rows = vec!["Corpus,Label,ID,Quote Text,Response Text".to_string()];
    for i in 0..per_class {
        rows.push(format!("GEN,sarc,GEN_sarc_{i:04},\"quote {i}\",\"oh sure, that will work {i}\""));
        rows.push(format!("GEN,notsarc,GEN_notsarc_{i:04},\"quote {i}\",\"I disagree with point {i}\""));
    }
    fs::write(path, rows.join("\n") + "\n").unwrap();
}

/// Experiment spec for a fast run on the synthetic corpora.
pub fn small_spec(name: &str, intermediate: &str, targets: &[&str]) -> String {
    let targets: Vec<String> = targets.iter().map(|t| format!("{t:?}")).collect();
    format!(
        r#"name = "{name}"
target_corpus = "SemEval"
targets = [{}]
intermediate = "{intermediate}"
runs = 1
base_seed = 7
encoder = "fallback_small"
max_seq_len = 16

[fallback]
width = 8
embed_dim = 8
recurrent_layers = 1

[model]
filter_count = 4
bilstm_hidden = 8
dropout_rate = 0.1

[pretrain]
max_epochs = 2
min_epochs = 1
lr_initial = 0.01
lr_final = 0.001

[train]
max_epochs = 4
min_epochs = 1
patience = 2
lr_initial = 0.01
lr_final = 0.001
"#,
        targets.join(", ")
    )
}
