//! On-disk dataset layout: `images/<id>.png|jpg`, `masks/<id>.png` and a
//! `manifest.json` listing every sample.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use forgenet_imaging::{io, ImageRgb8};
use serde::{Deserialize, Serialize};

use crate::mask::BinaryMask;
use crate::{Error, Result};

pub const MANIFEST: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForgeryKind {
    CopyMove,
    Splice,
    Removal,
}

impl ForgeryKind {
    pub const ALL: [ForgeryKind; 3] = [ForgeryKind::CopyMove, ForgeryKind::Splice, ForgeryKind::Removal];

    pub fn as_str(self) -> &'static str {
        match self {
            ForgeryKind::CopyMove => "copy_move",
            ForgeryKind::Splice => "splice",
            ForgeryKind::Removal => "removal",
        }
    }
}

impl fmt::Display for ForgeryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ForgeryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::Usage(format!("unknown forgery kind {s:?} (copy_move, splice, removal)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            _ => Err(Error::Usage(format!("unknown split {s:?} (train, val)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub kind: ForgeryKind,
    pub split: Split,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    /// Set when the images went through a lossy transmission profile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub osn_profile: Option<String>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(root: impl AsRef<Path>) -> Result<Self> {
        let path = root.as_ref().join(MANIFEST);
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, root: impl AsRef<Path>) -> Result<()> {
        fs::write(root.as_ref().join(MANIFEST), self.to_json()?)?;
        Ok(())
    }
}

pub fn mask_path(root: &Path, id: &str) -> PathBuf {
    root.join("masks").join(format!("{id}.png"))
}

/// The sample's image file; PNG is preferred when both exist.
pub fn image_path(root: &Path, id: &str) -> Result<PathBuf> {
    for ext in ["png", "jpg"] {
        let p = root.join("images").join(format!("{id}.{ext}"));
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::Input(format!("no image for sample {id}")))
}

#[derive(Clone, Debug)]
pub struct LabeledImage {
    pub id: String,
    pub kind: ForgeryKind,
    pub image: ImageRgb8,
    pub mask: BinaryMask,
}

pub fn load_entry(root: &Path, entry: &ManifestEntry) -> Result<LabeledImage> {
    let image = io::read_image(image_path(root, &entry.id)?)?;
    let mp = mask_path(root, &entry.id);
    if !mp.is_file() {
        return Err(Error::Input(format!("no mask for sample {}", entry.id)));
    }
    let mask = BinaryMask::from_gray8(&io::read_gray_png(mp)?);
    if mask.dims() != image.dims() {
        return Err(Error::Input(format!(
            "sample {}: mask {:?} does not match image {:?}",
            entry.id,
            mask.dims(),
            image.dims()
        )));
    }
    Ok(LabeledImage {
        id: entry.id.clone(),
        kind: entry.kind,
        image,
        mask,
    })
}

/// Loads every sample of `split` (all when `None`), sorted by id.
pub fn load_split(root: impl AsRef<Path>, split: Option<Split>) -> Result<Vec<LabeledImage>> {
    let root = root.as_ref();
    let manifest = Manifest::load(root)?;
    let mut entries: Vec<&ManifestEntry> = manifest
        .entries
        .iter()
        .filter(|e| split.is_none_or(|s| e.split == s))
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    entries.into_iter().map(|e| load_entry(root, e)).collect()
}
