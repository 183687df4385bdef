//! On-disk parameter bundles and cross-task transfer.
//!
//! A bundle is a directory:
//!
//! ```text
//! manifest.json         fingerprint, configs, head, metadata, tensor index
//! tensors/<name>.f32    raw little-endian float32 values
//! vocab.txt             word vocabulary (fallback encoder only)
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use candle_core::DType;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::tokenize::WordVocab;
use super::{fingerprint, initial_values, is_head_parameter, parameter_shapes, ClassifierConfig, EncoderSpec, Model};
use crate::corpus::Task;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadDescriptor {
    pub task: Task,
    pub classes: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BundleMetadata {
    pub source_corpus: String,
    pub seed: u64,
    pub epoch: usize,
    pub validation_accuracy: f64,
    /// Validation accuracy of every fold (one entry for a holdout split).
    #[serde(default)]
    pub fold_accuracies: Vec<f64>,
    #[serde(default)]
    pub selected_fold: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub architecture_fingerprint: String,
    pub encoder: EncoderSpec,
    pub classifier: ClassifierConfig,
    pub head: HeadDescriptor,
    pub metadata: BundleMetadata,
    pub tensors: Vec<TensorEntry>,
    pub vocab: Option<FileEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorData {
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug)]
pub struct ParameterBundle {
    pub encoder: EncoderSpec,
    pub classifier: ClassifierConfig,
    pub head: HeadDescriptor,
    pub metadata: BundleMetadata,
    pub tensors: BTreeMap<String, TensorData>,
    pub vocab: Option<WordVocab>,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn tensor_file(name: &str) -> String {
    format!("tensors/{name}.f32")
}

impl ParameterBundle {
    pub fn from_model(model: &Model, task: Task, metadata: BundleMetadata, vocab: Option<WordVocab>) -> Result<Self> {
        if model.config().head_classes != task.num_classes() {
            return Err(Error::Bundle(format!(
                "{}-class head cannot describe the {task} task",
                model.config().head_classes
            )));
        }
        let mut tensors = BTreeMap::new();
        for (name, var) in model.params() {
            tensors.insert(
                name.clone(),
                TensorData {
                    shape: var.dims().to_vec(),
                    values: model.values(name)?,
                },
            );
        }
        Ok(ParameterBundle {
            encoder: model.encoder().clone(),
            classifier: model.config().clone(),
            head: HeadDescriptor {
                task,
                classes: task.num_classes(),
            },
            metadata,
            tensors,
            vocab,
        })
    }

    pub fn fingerprint(&self) -> String {
        fingerprint(&self.encoder, &self.classifier)
    }

    /// Rebuilds the model the bundle was saved from.
    pub fn to_model(&self, dtype: DType) -> Result<Model> {
        let values = self
            .tensors
            .iter()
            .map(|(n, t)| (n.clone(), (t.shape.clone(), t.values.clone())))
            .collect();
        Model::from_values(&self.encoder, &self.classifier, &values, dtype)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir.join("tensors")).map_err(|e| Error::io(dir, e))?;
        let mut entries = Vec::with_capacity(self.tensors.len());
        for (name, t) in &self.tensors {
            let bytes: Vec<u8> = t.values.iter().flat_map(|v| v.to_le_bytes()).collect();
            let file = tensor_file(name);
            let path = dir.join(&file);
            fs::write(&path, &bytes).map_err(|e| Error::io(&path, e))?;
            entries.push(TensorEntry {
                name: name.clone(),
                shape: t.shape.clone(),
                file,
                sha256: sha256_hex(&bytes),
            });
        }
        let vocab = match &self.vocab {
            Some(v) => {
                let text = v.to_text();
                let path = dir.join("vocab.txt");
                fs::write(&path, &text).map_err(|e| Error::io(&path, e))?;
                Some(FileEntry {
                    file: "vocab.txt".into(),
                    sha256: sha256_hex(text.as_bytes()),
                })
            }
            None => None,
        };
        let manifest = Manifest {
            format_version: FORMAT_VERSION,
            architecture_fingerprint: self.fingerprint(),
            encoder: self.encoder.clone(),
            classifier: self.classifier.clone(),
            head: self.head,
            metadata: self.metadata.clone(),
            tensors: entries,
            vocab,
        };
        let path = dir.join("manifest.json");
        let mut json = serde_json::to_string_pretty(&manifest)?;
        json.push('\n');
        fs::write(&path, json).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.json");
        let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
        let manifest: Manifest = serde_json::from_str(&text)?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(Error::Bundle(format!(
                "unsupported format version {}",
                manifest.format_version
            )));
        }
        let recomputed = fingerprint(&manifest.encoder, &manifest.classifier);
        if recomputed != manifest.architecture_fingerprint {
            return Err(Error::Checksum {
                file: "manifest.json (architecture fingerprint)".into(),
                expected: manifest.architecture_fingerprint,
                found: recomputed,
            });
        }
        let read_checked = |file: &str, expected: &str| -> Result<Vec<u8>> {
            let path = dir.join(file);
            let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
            let found = sha256_hex(&bytes);
            if found != expected {
                return Err(Error::Checksum {
                    file: file.to_string(),
                    expected: expected.to_string(),
                    found,
                });
            }
            Ok(bytes)
        };
        let mut tensors = BTreeMap::new();
        for entry in &manifest.tensors {
            let bytes = read_checked(&entry.file, &entry.sha256)?;
            let n: usize = entry.shape.iter().product();
            if bytes.len() != 4 * n {
                return Err(Error::Bundle(format!(
                    "{}: {} bytes for shape {:?}",
                    entry.file,
                    bytes.len(),
                    entry.shape
                )));
            }
            let values = bytes
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            tensors.insert(
                entry.name.clone(),
                TensorData {
                    shape: entry.shape.clone(),
                    values,
                },
            );
        }
        for (name, shape) in parameter_shapes(&manifest.encoder, &manifest.classifier) {
            match tensors.get(&name) {
                Some(t) if t.shape == shape => {}
                Some(t) => {
                    return Err(Error::Bundle(format!("{name}: shape {:?}, expected {shape:?}", t.shape)));
                }
                None => return Err(Error::Bundle(format!("missing tensor {name}"))),
            }
        }
        let vocab = match &manifest.vocab {
            Some(entry) => {
                let bytes = read_checked(&entry.file, &entry.sha256)?;
                let text = String::from_utf8(bytes).map_err(|e| Error::Bundle(format!("vocab: {e}")))?;
                Some(WordVocab::parse(&text)?)
            }
            None => None,
        };
        Ok(ParameterBundle {
            encoder: manifest.encoder,
            classifier: manifest.classifier,
            head: manifest.head,
            metadata: manifest.metadata,
            tensors,
            vocab,
        })
    }
}

/// Builds a target-task model whose shared parameters are copied from
/// `bundle` and whose head is freshly initialized from `seed`.
pub fn transfer_parameters(
    bundle: &ParameterBundle,
    target_encoder: &EncoderSpec,
    target_cfg: &ClassifierConfig,
    seed: u64,
    dtype: DType,
) -> Result<Model> {
    let target_fp = fingerprint(target_encoder, target_cfg);
    let bundle_fp = bundle.fingerprint();
    if target_fp != bundle_fp {
        return Err(Error::FingerprintMismatch {
            bundle: bundle_fp,
            target: target_fp,
            mismatches: describe_mismatch(bundle, target_encoder, target_cfg),
        });
    }
    let shapes = parameter_shapes(target_encoder, target_cfg);
    let mut values = BTreeMap::new();
    for (name, shape) in &shapes {
        let data = if is_head_parameter(name) {
            initial_values(&shapes, name, seed)?
        } else {
            bundle
                .tensors
                .get(name)
                .ok_or_else(|| Error::Bundle(format!("missing tensor {name}")))?
                .values
                .clone()
        };
        values.insert(name.clone(), (shape.clone(), data));
    }
    Model::from_values(target_encoder, target_cfg, &values, dtype)
}

fn describe_mismatch(bundle: &ParameterBundle, encoder: &EncoderSpec, cfg: &ClassifierConfig) -> Vec<String> {
    let source: BTreeMap<_, _> = parameter_shapes(&bundle.encoder, &bundle.classifier)
        .into_iter()
        .filter(|(n, _)| !is_head_parameter(n))
        .collect();
    let target: BTreeMap<_, _> = parameter_shapes(encoder, cfg)
        .into_iter()
        .filter(|(n, _)| !is_head_parameter(n))
        .collect();
    let mut out = Vec::new();
    for (name, shape) in &target {
        match source.get(name) {
            Some(s) if s != shape => out.push(format!("{name}: bundle {s:?}, target {shape:?}")),
            None => out.push(format!("{name}: absent from bundle")),
            _ => {}
        }
    }
    for name in source.keys().filter(|n| !target.contains_key(*n)) {
        out.push(format!("{name}: absent from target"));
    }
    if out.is_empty() {
        out.push("shapes agree but encoder or classifier settings differ".into());
    }
    out
}
