use std::fs;
use std::path::{Path, PathBuf};

use forgenet_core::dataset::{mask_path, ForgeryKind, Manifest, ManifestEntry, Split};
use forgenet_core::{Error, Result};
use forgenet_imaging::{io, ImageRgb8};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::base::procedural_base;
use crate::forge::{generate, ForgerySpec};

#[derive(Clone, Debug)]
pub struct DatasetConfig {
    pub count: usize,
    pub seed: u64,
    /// Kinds drawn uniformly per sample.
    pub kinds: Vec<ForgeryKind>,
    /// Template for every kind; its `kind` field is overridden.
    pub spec: ForgerySpec,
    /// Directory of PNG/JPEG base images; procedural bases when `None`.
    pub bases: Option<PathBuf>,
    /// Procedural base size `(height, width)`.
    pub size: (usize, usize),
    pub val_fraction: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            count: 100,
            seed: 0,
            kinds: vec![ForgeryKind::CopyMove, ForgeryKind::Splice],
            spec: ForgerySpec::new(ForgeryKind::CopyMove),
            bases: None,
            size: (256, 256),
            val_fraction: 0.1,
        }
    }
}

/// Train/val assignment from the first 8 bytes of SHA-256 of the id.
pub fn split_for(id: &str, val_fraction: f64) -> Split {
    let d = Sha256::digest(id.as_bytes());
    let v = u64::from_be_bytes(d[..8].try_into().expect("digest is 32 bytes"));
    if (v as f64 / u64::MAX as f64) < val_fraction {
        Split::Val
    } else {
        Split::Train
    }
}

/// Every PNG/JPEG in `dir`, sorted by file name, with its stem as id.
pub fn load_bases(dir: &Path) -> Result<Vec<(String, ImageRgb8)>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "jpg" | "jpeg"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Usage(format!("no base images in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("base").to_string();
            Ok((id, io::read_image(&p)?))
        })
        .collect()
}

/// Generates `count` samples into `out/images`, `out/masks` and
/// `out/manifest.json`. Sample `i` draws everything from a generator
/// seeded with `seed ^ i`.
pub fn build_dataset(cfg: &DatasetConfig, out: &Path) -> Result<Manifest> {
    if cfg.kinds.is_empty() {
        return Err(Error::Usage("no forgery kinds selected".into()));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::Config(format!("val fraction {} must lie in [0, 1)", cfg.val_fraction)));
    }
    if cfg.size.0 == 0 || cfg.size.1 == 0 {
        return Err(Error::Config("base size must be positive".into()));
    }
    cfg.spec.validate()?;
    let bases = cfg.bases.as_deref().map(load_bases).transpose()?;
    fs::create_dir_all(out.join("images"))?;
    fs::create_dir_all(out.join("masks"))?;

    let entries = (0..cfg.count)
        .into_par_iter()
        .map(|i| -> Result<ManifestEntry> {
            let seed = cfg.seed ^ i as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let kind = cfg.kinds[rng.random_range(0..cfg.kinds.len())];
            let (base_id, base, donor_id, donor) = match &bases {
                Some(list) => {
                    let b = rng.random_range(0..list.len());
                    let d = if list.len() > 1 {
                        (b + rng.random_range(1..list.len())) % list.len()
                    } else {
                        b
                    };
                    (list[b].0.clone(), list[b].1.clone(), list[d].0.clone(), list[d].1.clone())
                }
                None => {
                    let (h, w) = cfg.size;
                    let base = procedural_base(&mut rng, h, w);
                    let donor = procedural_base(&mut rng, h, w);
                    (format!("procedural-{seed}"), base, format!("procedural-{seed}-donor"), donor)
                }
            };
            let spec = ForgerySpec { kind, ..cfg.spec.clone() };
            let mut sample = generate(&base, &donor, &spec, &mut rng)?;
            sample.meta.seed = seed;
            sample.meta.base_id = base_id;
            if kind == ForgeryKind::Splice {
                sample.meta.donor_id = Some(donor_id);
            }
            let id = format!("img{i:05}");
            io::write_png_rgb(out.join("images").join(format!("{id}.png")), &sample.image)?;
            io::write_png_gray(mask_path(out, &id), &sample.mask.to_gray8())?;
            Ok(ManifestEntry {
                split: split_for(&id, cfg.val_fraction),
                id,
                kind,
                seed,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        seed: cfg.seed,
        osn_profile: None,
        entries,
    };
    manifest.save(out)?;
    Ok(manifest)
}
