use std::collections::HashSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pcld::read_pointcloud_file;
use super::pointcloud::{normalize_unit_sphere, resample, PointCloud};
use super::synthetic::{generate_shape, mix_seed, ShapeKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            _ => Err(Error::Parse(format!("unknown split `{s}`"))),
        }
    }
}

/// Generator instructions standing in for a file on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Recipe {
    pub shape: ShapeKind,
    pub points: usize,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Recipe {
    pub fn generate(&self) -> PointCloud {
        generate_shape(self.shape, self.points, self.noise_sigma, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleEntry {
    pub id: String,
    pub class: usize,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recipe: Option<Recipe>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub classes: Vec<String>,
    pub samples: Vec<SampleEntry>,
    /// Directory that relative sample paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest: DatasetManifest = serde_json::from_str(&text)?;
    manifest.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
    manifest.validate()?;
    Ok(manifest)
}

impl DatasetManifest {
    pub fn num_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Validation("manifest lists no classes".into()));
        }
        let mut used = vec![false; self.classes.len()];
        let mut ids = HashSet::new();
        for s in &self.samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Validation(format!("duplicate sample id `{}`", s.id)));
            }
            match used.get_mut(s.class) {
                Some(u) => *u = true,
                None => return Err(Error::Validation("sparse class indices".into())),
            }
            match (&s.file, &s.recipe) {
                (Some(file), None) => {
                    let p = self.resolve(file);
                    if !p.is_file() {
                        return Err(Error::Validation(format!("missing file {}", p.display())));
                    }
                }
                (None, Some(_)) => {}
                _ => {
                    return Err(Error::Validation(format!(
                        "sample `{}` needs exactly one of file or recipe",
                        s.id
                    )))
                }
            }
        }
        if used.iter().any(|u| !u) {
            return Err(Error::Validation("sparse class indices".into()));
        }
        Ok(())
    }

    pub fn resolve(&self, file: &str) -> PathBuf {
        self.root.join(file)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &SampleEntry> {
        self.samples.iter().filter(move |s| s.split == split)
    }

    /// Loads one labeled sample with exactly `points` points, normalized.
    pub fn load_sample(&self, entry: &SampleEntry, points: usize) -> Result<PointCloud> {
        let raw = match (&entry.file, &entry.recipe) {
            (Some(file), _) => read_pointcloud_file(self.resolve(file))?,
            (None, Some(recipe)) => recipe.generate(),
            (None, None) => {
                return Err(Error::Validation(format!(
                    "sample `{}` has no source",
                    entry.id
                )))
            }
        };
        if raw.is_empty() {
            return Err(Error::Validation(format!(
                "sample `{}` has no points",
                entry.id
            )));
        }
        let seed = mix_seed(&[entry
            .id
            .bytes()
            .fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64))]);
        let sized = resample(&raw, points, seed);
        let mut pc = normalize_unit_sphere(&sized);
        pc.id = entry.id.clone();
        pc.label = Some(entry.class);
        Ok(pc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}
