//! Bags on disk and in memory: the MILB feature format, JSON manifests,
//! model files, the synthetic generator, and CSV score export.

mod export;
mod manifest;
mod milb;
mod model_file;
mod synth;

use std::path::PathBuf;

use thiserror::Error;

use crate::milnet::FeatureMatrix;
use crate::scalar::Scalar;

pub use export::{export_iis, IIS_FIXED_COLUMNS};
pub use manifest::{
    load_bag, load_manifest, load_split, save_split, DatasetManifest, ManifestEntry,
    MANIFEST_VERSION,
};
pub use milb::{
    decode_features, encode_features, read_features, write_features, MILB_MAGIC, MILB_VERSION,
};
pub use model_file::{
    decode_model, encode_model, read_model, write_model, MODEL_MAGIC, MODEL_VERSION,
};
pub use synth::{generate_synthetic, SynthConfig, SynthDataset};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: Vec<u8> },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("dimension conflict: expected {expected}, found {found}")]
    DimensionConflict { expected: usize, found: usize },

    #[error("truncated file: need {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("{found} trailing bytes after payload")]
    TrailingBytes { found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("manifest: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid record {id}: {reason}")]
    InvalidRecord { id: String, reason: String },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl DataError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &str, reason: impl Into<String>) -> Self {
        Self::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

/// One labeled bag. Instance labels are ground truth for evaluation only.
#[derive(Clone, Debug, PartialEq)]
pub struct BagRecord<T> {
    pub id: String,
    pub label: usize,
    pub feats: FeatureMatrix<T>,
    pub instance_labels: Option<Vec<u8>>,
}

impl<T: Scalar> BagRecord<T> {
    pub fn len(&self) -> usize {
        self.feats.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.feats.rows() == 0
    }

    pub fn positives(&self) -> Option<usize> {
        self.instance_labels
            .as_ref()
            .map(|l| l.iter().filter(|&&v| v == 1).count())
    }
}

/// One split's bags plus the shared schema.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub feature_dim: usize,
    pub class_names: Vec<String>,
    pub bags: Vec<BagRecord<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn len(&self) -> usize {
        self.bags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bags.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.bags.iter().map(|b| b.label).collect()
    }

    pub fn find(&self, id: &str) -> Option<&BagRecord<T>> {
        self.bags.iter().find(|b| b.id == id)
    }

    pub fn has_instance_labels(&self) -> bool {
        !self.bags.is_empty() && self.bags.iter().all(|b| b.instance_labels.is_some())
    }

    /// Shape agreement, label range, and (for labeled instances) the MIL
    /// rule: a bag is non-background iff it holds a positive instance.
    pub fn validate(&self) -> Result<(), DataError> {
        let classes = self.num_classes();
        if classes < 2 {
            return Err(DataError::config("class_names", "need at least 2 classes"));
        }
        for b in &self.bags {
            let bad = |reason: String| DataError::InvalidRecord {
                id: b.id.clone(),
                reason,
            };
            if b.feats.cols() != self.feature_dim {
                return Err(DataError::DimensionConflict {
                    expected: self.feature_dim,
                    found: b.feats.cols(),
                });
            }
            if b.label >= classes {
                return Err(bad(format!("label {} out of range", b.label)));
            }
            if let Some(l) = &b.instance_labels {
                if l.len() != b.feats.rows() {
                    return Err(bad(format!(
                        "{} instance labels for {} instances",
                        l.len(),
                        b.feats.rows()
                    )));
                }
                if l.iter().any(|&v| v > 1) {
                    return Err(bad("instance labels must be 0 or 1".into()));
                }
                let any_pos = l.contains(&1);
                if any_pos != (b.label != 0) {
                    return Err(bad("bag label disagrees with instance labels".into()));
                }
            }
        }
        Ok(())
    }
}
