use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::milb::{read_features, write_features};
use super::{BagRecord, DataError, Dataset};
use crate::scalar::Scalar;

pub const MANIFEST_VERSION: u32 = 1;

/// JSON index of one split. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub feature_dim: usize,
    pub class_names: Vec<String>,
    pub bags: Vec<ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub label: usize,
    pub features: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance_labels: Option<PathBuf>,
}

fn manifest_path(dir: &Path, split: &str) -> PathBuf {
    dir.join(format!("{split}.json"))
}

/// Loads a manifest and checks that every referenced file exists.
pub fn load_manifest(path: &Path) -> Result<DatasetManifest, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text)?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(DataError::VersionMismatch {
            expected: MANIFEST_VERSION,
            found: manifest.format_version,
        });
    }
    let base = path.parent().unwrap_or(Path::new("."));
    for e in &manifest.bags {
        for p in std::iter::once(&e.features).chain(e.instance_labels.as_ref()) {
            let full = base.join(p);
            if !full.is_file() {
                return Err(DataError::io(
                    full,
                    std::io::Error::new(std::io::ErrorKind::NotFound, "referenced file missing"),
                ));
            }
        }
    }
    Ok(manifest)
}

fn parse_instance_labels(path: &Path, id: &str) -> Result<Vec<u8>, DataError> {
    let text = fs::read_to_string(path).map_err(|e| DataError::io(path, e))?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| match l.trim() {
            "0" => Ok(0),
            "1" => Ok(1),
            other => Err(DataError::InvalidRecord {
                id: id.into(),
                reason: format!("instance label {other:?} is not 0/1"),
            }),
        })
        .collect()
}

/// Reads one bag. `base` is the manifest's directory.
pub fn load_bag<T: Scalar>(
    base: &Path,
    entry: &ManifestEntry,
    feature_dim: usize,
) -> Result<BagRecord<T>, DataError> {
    let feats = read_features(&base.join(&entry.features), Some(feature_dim))?;
    let instance_labels = entry
        .instance_labels
        .as_ref()
        .map(|p| parse_instance_labels(&base.join(p), &entry.id))
        .transpose()?;
    Ok(BagRecord {
        id: entry.id.clone(),
        label: entry.label,
        feats,
        instance_labels,
    })
}

/// Loads `<dir>/<split>.json` and every bag it references.
pub fn load_split<T: Scalar>(dir: &Path, split: &str) -> Result<Dataset<T>, DataError> {
    let path = manifest_path(dir, split);
    let manifest = load_manifest(&path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let bags = manifest
        .bags
        .iter()
        .map(|e| load_bag(base, e, manifest.feature_dim))
        .collect::<Result<Vec<_>, _>>()?;
    let ds = Dataset {
        feature_dim: manifest.feature_dim,
        class_names: manifest.class_names,
        bags,
    };
    ds.validate()?;
    Ok(ds)
}

/// Writes `<dir>/<split>.json` plus `<dir>/<split>/<id>.milb` (and
/// `<id>.labels` when instance labels exist).
pub fn save_split<T: Scalar>(dir: &Path, split: &str, data: &Dataset<T>) -> Result<(), DataError> {
    data.validate()?;
    let sub = dir.join(split);
    fs::create_dir_all(&sub).map_err(|e| DataError::io(&sub, e))?;
    let mut bags = Vec::with_capacity(data.bags.len());
    for b in &data.bags {
        if b.id.is_empty() || b.id.contains(['/', '\\']) {
            return Err(DataError::InvalidRecord {
                id: b.id.clone(),
                reason: "bag id must be a non-empty file name".into(),
            });
        }
        let feat_rel = PathBuf::from(split).join(format!("{}.milb", b.id));
        write_features(&dir.join(&feat_rel), &b.feats)?;
        let labels_rel = match &b.instance_labels {
            Some(l) => {
                let rel = PathBuf::from(split).join(format!("{}.labels", b.id));
                let mut text = String::with_capacity(2 * l.len());
                for v in l {
                    text.push(if *v == 1 { '1' } else { '0' });
                    text.push('\n');
                }
                let full = dir.join(&rel);
                fs::write(&full, text).map_err(|e| DataError::io(&full, e))?;
                Some(rel)
            }
            None => None,
        };
        bags.push(ManifestEntry {
            id: b.id.clone(),
            label: b.label,
            features: feat_rel,
            instance_labels: labels_rel,
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        feature_dim: data.feature_dim,
        class_names: data.class_names.clone(),
        bags,
    };
    let path = manifest_path(dir, split);
    let mut json = serde_json::to_string_pretty(&manifest)?;
    json.push('\n');
    fs::write(&path, json).map_err(|e| DataError::io(&path, e))
}
