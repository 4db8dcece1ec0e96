//! Benchmark manifest: the list of hidden-content items, their ground truths
//! and the images they point at.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest: {0}")]
    Parse(String),
    #[error("invalid manifest item {item_id}: {reason}")]
    Validation { item_id: String, reason: String },
    #[error("unsupported manifest version {0} (expected {MANIFEST_VERSION})")]
    Version(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemKind {
    HiddenText,
    HiddenObject,
}

impl ItemKind {
    pub fn short(self) -> &'static str {
        match self {
            ItemKind::HiddenText => "Text",
            ItemKind::HiddenObject => "Object",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Script {
    Latin,
    NonLatin,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rarity {
    Normal,
    Rare,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkItem {
    pub id: String,
    pub kind: ItemKind,
    pub script: Script,
    pub rarity: Rarity,
    pub image_path: PathBuf,
    pub ground_truth: String,
    #[serde(default)]
    pub synonyms: Vec<String>,
    /// Text substituted into the follow-up hint, e.g. "a cat silhouette".
    pub hint_phrase: String,
}

impl BenchmarkItem {
    fn check(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.ground_truth.trim().is_empty() {
            return Err("empty ground_truth".into());
        }
        if self.hint_phrase.trim().is_empty() {
            return Err("empty hint_phrase".into());
        }
        match self.kind {
            ItemKind::HiddenText => {
                if self.script == Script::NotApplicable {
                    return Err("hidden text needs a latin or non_latin script".into());
                }
                if !self.synonyms.is_empty() {
                    return Err("hidden text items take no synonyms".into());
                }
            }
            ItemKind::HiddenObject => {
                if self.script != Script::NotApplicable {
                    return Err("hidden object items must use script not_applicable".into());
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// Directory image paths are resolved against. Relative values are taken
    /// relative to the manifest file's directory at load time.
    #[serde(default)]
    pub root_dir: PathBuf,
    pub items: Vec<BenchmarkItem>,
    /// Held-out items used only as few-shot demonstrations.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exemplars: Vec<BenchmarkItem>,
}

pub type BalanceReport = BTreeMap<(ItemKind, Rarity), usize>;

impl Manifest {
    /// Builds and validates a manifest whose `root_dir` is already resolved.
    pub fn new(
        root_dir: PathBuf,
        items: Vec<BenchmarkItem>,
        exemplars: Vec<BenchmarkItem>,
    ) -> Result<Self, ManifestError> {
        let manifest = Self { version: MANIFEST_VERSION, root_dir, items, exemplars };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.version != MANIFEST_VERSION {
            return Err(ManifestError::Version(self.version));
        }
        let mut seen = HashSet::new();
        for item in self.items.iter().chain(&self.exemplars) {
            if !seen.insert(item.id.as_str()) {
                return Err(ManifestError::Validation { item_id: item.id.clone(), reason: "duplicate id".into() });
            }
            item.check()
                .map_err(|reason| ManifestError::Validation { item_id: item.id.clone(), reason })?;
            let path = self.image_path(item);
            if let Err(e) = File::open(&path) {
                return Err(ManifestError::Validation {
                    item_id: item.id.clone(),
                    reason: format!("image {} is not readable: {e}", path.display()),
                });
            }
        }
        Ok(())
    }

    pub fn image_path(&self, item: &BenchmarkItem) -> PathBuf {
        self.root_dir.join(&item.image_path)
    }

    pub fn item(&self, id: &str) -> Option<&BenchmarkItem> {
        self.items.iter().find(|item| item.id == id)
    }

    /// SHA-256 of the canonical item content. Independent of where the dataset
    /// lives on disk.
    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_vec(&(self.version, &self.items, &self.exemplars))
            .expect("manifest serialization is infallible");
        hex::encode(Sha256::digest(canonical))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serialization is infallible")
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| ManifestError::Io { path: path.to_path_buf(), source })?;
    let mut manifest: Manifest =
        serde_json::from_slice(&bytes).map_err(|e| ManifestError::Parse(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    manifest.root_dir = base.join(&manifest.root_dir);
    manifest.validate()?;
    Ok(manifest)
}

/// Counts per (kind, rarity) cell; all four cells are always present.
pub fn balance_report(manifest: &Manifest) -> BalanceReport {
    let mut report: BalanceReport = [ItemKind::HiddenText, ItemKind::HiddenObject]
        .into_iter()
        .flat_map(|k| [Rarity::Normal, Rarity::Rare].map(|r| ((k, r), 0)))
        .collect();
    for item in &manifest.items {
        *report.entry((item.kind, item.rarity)).or_default() += 1;
    }
    report
}
