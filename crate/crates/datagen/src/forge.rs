use forgenet_core::dataset::ForgeryKind;
use forgenet_core::{BinaryMask, Error, Result};
use forgenet_imaging::{jpeg, resize_bilinear, ImageRgb8};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::region::{apply_transform, sample_region, Region, RegionShape, Transform, TransformSet};

const ATTEMPTS: usize = 16;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForgerySpec {
    pub kind: ForgeryKind,
    /// Bounds on the forged area as a fraction of the image.
    pub area: (f64, f64),
    pub shape: RegionShape,
    pub transforms: TransformSet,
    /// Quality range for an optional JPEG pass over the finished image.
    pub post_jpeg: Option<(u8, u8)>,
}

impl ForgerySpec {
    pub fn new(kind: ForgeryKind) -> Self {
        Self {
            kind,
            area: (0.01, 0.25),
            shape: RegionShape::Any,
            transforms: TransformSet::default(),
            post_jpeg: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.area;
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(Error::Config(format!("area bounds {lo}..{hi} must satisfy 0 < min <= max < 1")));
        }
        if let Some((a, b)) = self.transforms.scale {
            if !(0.5..=2.0).contains(&a) || !(0.5..=2.0).contains(&b) || a > b {
                return Err(Error::Config(format!("scale range {a}..{b} must lie within 0.5..2.0")));
            }
        }
        if let Some((a, b)) = self.post_jpeg {
            if a == 0 || b > 100 || a > b {
                return Err(Error::Config(format!("jpeg quality range {a}..{b} must lie within 1..100")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub kind: ForgeryKind,
    pub seed: u64,
    pub base_id: String,
    pub donor_id: Option<String>,
    /// Top-left corner of the source region (copy-move, splice).
    pub source: Option<(usize, usize)>,
    /// Height and width of the region before transformation.
    pub region: (usize, usize),
    /// Top-left corner of the forged region's bounding box.
    pub target: (usize, usize),
    pub transform: Transform,
    pub jpeg_quality: Option<u8>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub image: ImageRgb8,
    pub mask: BinaryMask,
    pub meta: SampleMeta,
}

struct Placed {
    image: ImageRgb8,
    mask: BinaryMask,
    source: Option<(usize, usize)>,
    region: (usize, usize),
    target: (usize, usize),
    transform: Transform,
}

fn area_ok(spec: &ForgerySpec, mask: &BinaryMask) -> bool {
    let f = mask.area_fraction();
    f >= spec.area.0 && f <= spec.area.1
}

/// Copies a transformed region of `source` into `base` at a random spot.
fn paste_from(
    base: &ImageRgb8,
    source: &ImageRgb8,
    spec: &ForgerySpec,
    rng: &mut impl Rng,
    same_image: bool,
) -> Result<Placed> {
    let (h, w) = base.dims();
    let total = (h * w) as f64;
    for _ in 0..ATTEMPTS {
        let t = spec.transforms.sample(rng);
        let frac = rng.random_range(spec.area.0..=spec.area.1);
        let region = sample_region(rng, frac * total / (t.scale * t.scale), spec.shape, h, w);
        let (sh, sw) = (region.h, region.w);
        let (th, tw) = t.output_dims(sh, sw);
        if sh > source.height() || sw > source.width() || th > h || tw > w {
            continue;
        }
        let sy = rng.random_range(0..=source.height() - sh);
        let sx = rng.random_range(0..=source.width() - sw);
        let ty = rng.random_range(0..=h - th);
        let tx = rng.random_range(0..=w - tw);
        if same_image && (ty, tx) == (sy, sx) {
            continue;
        }
        let patch = source.crop(sy, sx, sh, sw)?;
        let (moved, support) = apply_transform(&patch, &region.support, &t);
        let mut image = base.clone();
        let mut m = vec![0u8; h * w];
        for y in 0..th {
            for x in 0..tw {
                if support[y * tw + x] {
                    image.set_pixel(ty + y, tx + x, moved.pixel(y, x));
                    m[(ty + y) * w + tx + x] = 1;
                }
            }
        }
        let mask = BinaryMask::new(h, w, m)?;
        if !area_ok(spec, &mask) {
            continue;
        }
        return Ok(Placed {
            image,
            mask,
            source: Some((sy, sx)),
            region: (sh, sw),
            target: (ty, tx),
            transform: t,
        });
    }
    Err(Error::Config(format!(
        "no {} region within area bounds {:?} fits a {h}x{w} image after {ATTEMPTS} attempts",
        spec.kind, spec.area
    )))
}

/// Applies the optional JPEG pass. Provenance fields other than the
/// geometry are filled in by the dataset builder.
fn finish(placed: Placed, spec: &ForgerySpec, rng: &mut impl Rng) -> Result<Sample> {
    let (image, jpeg_quality) = match spec.post_jpeg {
        Some((lo, hi)) => {
            let q = rng.random_range(lo..=hi);
            (jpeg::decode(&jpeg::encode(&placed.image, q)?)?, Some(q))
        }
        None => (placed.image, None),
    };
    Ok(Sample {
        image,
        mask: placed.mask,
        meta: SampleMeta {
            kind: spec.kind,
            seed: 0,
            base_id: String::new(),
            donor_id: None,
            source: placed.source,
            region: placed.region,
            target: placed.target,
            transform: placed.transform,
            jpeg_quality,
        },
    })
}

/// Duplicates a region of `base` elsewhere in the same image.
pub fn gen_copy_move(base: &ImageRgb8, spec: &ForgerySpec, rng: &mut impl Rng) -> Result<Sample> {
    spec.validate()?;
    let placed = paste_from(base, base, spec, rng, true)?;
    finish(placed, spec, rng)
}

/// Pastes a region of `donor` (first resized to the base's dimensions)
/// into `base`.
pub fn gen_splice(base: &ImageRgb8, donor: &ImageRgb8, spec: &ForgerySpec, rng: &mut impl Rng) -> Result<Sample> {
    spec.validate()?;
    let donor = if donor.dims() == base.dims() {
        donor.clone()
    } else {
        resize_bilinear(donor, base.height(), base.width())?
    };
    let placed = paste_from(base, &donor, spec, rng, false)?;
    finish(placed, spec, rng)
}

/// Erases a region and fills it by diffusing the surrounding pixels inward.
pub fn gen_removal(base: &ImageRgb8, spec: &ForgerySpec, rng: &mut impl Rng) -> Result<Sample> {
    spec.validate()?;
    let (h, w) = base.dims();
    let total = (h * w) as f64;
    for _ in 0..ATTEMPTS {
        let frac = rng.random_range(spec.area.0..=spec.area.1);
        // leave room for a boundary ring
        let Region { h: rh, w: rw, support } = sample_region(rng, frac * total, spec.shape, h, w);
        if rh >= h || rw >= w {
            continue;
        }
        let ty = rng.random_range(0..=h - rh);
        let tx = rng.random_range(0..=w - rw);
        let mut m = vec![0u8; h * w];
        for y in 0..rh {
            for x in 0..rw {
                if support[y * rw + x] {
                    m[(ty + y) * w + tx + x] = 1;
                }
            }
        }
        let mask = BinaryMask::new(h, w, m)?;
        if !area_ok(spec, &mask) {
            continue;
        }
        let image = diffusion_fill(base, &mask)?;
        let placed = Placed {
            image,
            mask,
            source: None,
            region: (rh, rw),
            target: (ty, tx),
            transform: Transform::identity(),
        };
        return finish(placed, spec, rng);
    }
    Err(Error::Config(format!(
        "no removal region within area bounds {:?} fits a {h}x{w} image after {ATTEMPTS} attempts",
        spec.area
    )))
}

/// Replaces the masked pixels by a harmonic-style interpolation of the
/// unmasked 4-neighbours around them (Jacobi iterations from the ring mean).
pub fn diffusion_fill(img: &ImageRgb8, mask: &BinaryMask) -> Result<ImageRgb8> {
    const ITERS: usize = 1000;
    let (h, w) = img.dims();
    if mask.dims() != (h, w) {
        return Err(Error::Shape(format!("mask {:?} for image {:?}", mask.dims(), (h, w))));
    }
    let m = mask.values();
    let raw = img.as_raw();
    let neighbours = |i: usize| {
        let (y, x) = (i / w, i % w);
        let mut n = [usize::MAX; 4];
        if y > 0 {
            n[0] = i - w;
        }
        if y + 1 < h {
            n[1] = i + w;
        }
        if x > 0 {
            n[2] = i - 1;
        }
        if x + 1 < w {
            n[3] = i + 1;
        }
        n
    };
    let holes: Vec<usize> = (0..h * w).filter(|&i| m[i] == 1).collect();
    let ring: Vec<usize> = (0..h * w)
        .filter(|&i| m[i] == 0 && neighbours(i).iter().any(|&j| j != usize::MAX && m[j] == 1))
        .collect();
    if holes.is_empty() {
        return Ok(img.clone());
    }
    if ring.is_empty() {
        return Err(Error::Input("region covers the whole image; nothing to fill from".into()));
    }
    let mut val: Vec<[f32; 3]> = raw.chunks_exact(3).map(|p| [p[0] as f32, p[1] as f32, p[2] as f32]).collect();
    let mut mean = [0f32; 3];
    for &i in &ring {
        for c in 0..3 {
            mean[c] += val[i][c] / ring.len() as f32;
        }
    }
    for &i in &holes {
        val[i] = mean;
    }
    let nbrs: Vec<[usize; 4]> = holes.iter().map(|&i| neighbours(i)).collect();
    let mut next = vec![[0f32; 3]; holes.len()];
    for _ in 0..ITERS {
        let mut delta = 0f32;
        for (k, nb) in nbrs.iter().enumerate() {
            let mut s = [0f32; 3];
            let mut cnt = 0f32;
            for &j in nb.iter().filter(|&&j| j != usize::MAX) {
                for c in 0..3 {
                    s[c] += val[j][c];
                }
                cnt += 1.0;
            }
            for c in 0..3 {
                next[k][c] = s[c] / cnt;
            }
        }
        for (k, &i) in holes.iter().enumerate() {
            for c in 0..3 {
                delta = delta.max((next[k][c] - val[i][c]).abs());
            }
            val[i] = next[k];
        }
        if delta < 0.01 {
            break;
        }
    }
    let mut out = raw.to_vec();
    for &i in &holes {
        for c in 0..3 {
            out[i * 3 + c] = (val[i][c] + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    Ok(ImageRgb8::from_raw(h, w, out)?)
}

/// Dispatches on `spec.kind`; `donor` is only used for splicing.
pub fn generate(base: &ImageRgb8, donor: &ImageRgb8, spec: &ForgerySpec, rng: &mut impl Rng) -> Result<Sample> {
    match spec.kind {
        ForgeryKind::CopyMove => gen_copy_move(base, spec, rng),
        ForgeryKind::Splice => gen_splice(base, donor, spec, rng),
        ForgeryKind::Removal => gen_removal(base, spec, rng),
    }
}
