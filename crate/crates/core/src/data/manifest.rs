//! JSON dataset manifest: sample files, split tags, and global statistics.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::fcube::write_atomic;
use super::DataError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    /// Guide image path, relative to the manifest.
    pub a: String,
    pub b: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub guide_channels: usize,
    pub bands: usize,
    pub patch: usize,
    /// Per-band mean of the reference cubes over the training split.
    pub band_means: Vec<f64>,
    pub samples: Vec<ManifestEntry>,
}

impl DatasetManifest {
    /// No path listed twice and no id in more than one split.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut paths = HashSet::new();
        let mut ids = HashSet::new();
        for e in &self.samples {
            if !ids.insert(&e.id) {
                return Err(DataError::Config(format!(
                    "sample id {} listed twice",
                    e.id
                )));
            }
            for p in [Some(&e.a), Some(&e.b), e.x.as_ref()].into_iter().flatten() {
                if !paths.insert(p) {
                    return Err(DataError::Config(format!("path {p} listed twice")));
                }
            }
        }
        Ok(())
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.samples.iter().filter(move |e| e.split == split)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path)?;
        let m: Self =
            serde_json::from_str(&text).map_err(|e| DataError::Config(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        self.validate()?;
        let text =
            serde_json::to_string_pretty(self).map_err(|e| DataError::Config(e.to_string()))?;
        write_atomic(path.as_ref(), text.as_bytes())
    }
}
