use forgenet_imaging::{resize_bilinear, ImageRgb8};
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegionShape {
    Rect,
    Polygon,
    /// Either, with equal odds.
    #[default]
    Any,
}

/// Which transforms a forgery may apply to its region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformSet {
    pub flip: bool,
    pub rotate90: bool,
    /// Uniform scale range, within `[0.5, 2.0]`.
    pub scale: Option<(f64, f64)>,
}

impl Default for TransformSet {
    fn default() -> Self {
        Self {
            flip: true,
            rotate90: true,
            scale: Some((0.5, 2.0)),
        }
    }
}

impl TransformSet {
    pub fn none() -> Self {
        Self {
            flip: false,
            rotate90: false,
            scale: None,
        }
    }

    pub fn sample(&self, rng: &mut impl Rng) -> Transform {
        Transform {
            flip: self.flip && rng.random_bool(0.5),
            rot90: if self.rotate90 { rng.random_range(0..4) } else { 0 },
            scale: match self.scale {
                Some((lo, hi)) if hi > lo => rng.random_range(lo..hi),
                Some((lo, _)) => lo,
                None => 1.0,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transform {
    /// Horizontal mirror, applied first.
    pub flip: bool,
    /// Quarter turns counter-clockwise, after the mirror.
    pub rot90: u8,
    /// Resize factor, applied last.
    pub scale: f64,
}

impl Transform {
    pub fn identity() -> Self {
        Self {
            flip: false,
            rot90: 0,
            scale: 1.0,
        }
    }

    pub fn output_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let (h, w) = if self.rot90 % 2 == 1 { (w, h) } else { (h, w) };
        (scaled(h, self.scale), scaled(w, self.scale))
    }
}

fn scaled(n: usize, s: f64) -> usize {
    ((n as f64 * s).round() as usize).max(1)
}

/// A region's support inside its bounding box, row-major.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Region {
    pub h: usize,
    pub w: usize,
    pub support: Vec<bool>,
}

/// Samples a region with roughly `area` pixels, either a rectangle or a
/// convex polygon inscribed in an ellipse, bounded by `max_h x max_w`.
pub(crate) fn sample_region(rng: &mut impl Rng, area: f64, shape: RegionShape, max_h: usize, max_w: usize) -> Region {
    let poly = match shape {
        RegionShape::Rect => false,
        RegionShape::Polygon => true,
        RegionShape::Any => rng.random_bool(0.5),
    };
    // inscribed polygons cover about 70% of their box
    let box_area = if poly { area / 0.7 } else { area };
    let aspect: f64 = rng.random_range(0.5..2.0);
    let h = ((box_area * aspect).sqrt().round() as usize).clamp(1, max_h.max(1));
    let w = ((box_area / h as f64).round() as usize).clamp(1, max_w.max(1));
    if !poly {
        return Region {
            h,
            w,
            support: vec![true; h * w],
        };
    }
    let k = rng.random_range(5..10);
    let mut angles: Vec<f64> = (0..k).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    angles.sort_by(|a, b| a.total_cmp(b));
    let (cy, cx) = (h as f64 / 2.0, w as f64 / 2.0);
    let pts: Vec<(f64, f64)> = angles.iter().map(|a| (cy + cy * a.sin(), cx + cx * a.cos())).collect();
    let mut support = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            support.push(inside_convex(&pts, y as f64 + 0.5, x as f64 + 0.5));
        }
    }
    Region { h, w, support }
}

/// Point test against a convex polygon whose vertices go around in angle
/// order.
fn inside_convex(pts: &[(f64, f64)], y: f64, x: f64) -> bool {
    let n = pts.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let (y0, x0) = pts[i];
        let (y1, x1) = pts[(i + 1) % n];
        let cross = (x1 - x0) * (y - y0) - (y1 - y0) * (x - x0);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

/// Mirrors, rotates and rescales a patch together with its support. The
/// image is resampled bilinearly, the support by nearest neighbour.
pub fn apply_transform(patch: &ImageRgb8, support: &[bool], t: &Transform) -> (ImageRgb8, Vec<bool>) {
    let (h, w) = patch.dims();
    assert_eq!(support.len(), h * w);
    let (rh, rw) = if t.rot90 % 2 == 1 { (w, h) } else { (h, w) };
    // source coordinate of rotated/mirrored pixel (y, x)
    let src = |y: usize, x: usize| -> (usize, usize) {
        let (sy, mut sx) = match t.rot90 % 4 {
            0 => (y, x),
            1 => (x, w - 1 - y),
            2 => (h - 1 - y, w - 1 - x),
            _ => (h - 1 - x, y),
        };
        if t.flip {
            sx = w - 1 - sx;
        }
        (sy, sx)
    };
    let img = ImageRgb8::from_fn(rh, rw, |y, x| {
        let (sy, sx) = src(y, x);
        patch.pixel(sy, sx)
    })
    .expect("patch dims are positive");
    let sup: Vec<bool> = (0..rh * rw)
        .map(|i| {
            let (sy, sx) = src(i / rw, i % rw);
            support[sy * w + sx]
        })
        .collect();
    if t.scale == 1.0 {
        return (img, sup);
    }
    let (oh, ow) = (scaled(rh, t.scale), scaled(rw, t.scale));
    let img = resize_bilinear(&img, oh, ow).expect("positive dims");
    let sup = (0..oh * ow)
        .map(|i| {
            let sy = (((i / ow) as f64 + 0.5) * rh as f64 / oh as f64) as usize;
            let sx = (((i % ow) as f64 + 0.5) * rw as f64 / ow as f64) as usize;
            sup[sy.min(rh - 1) * rw + sx.min(rw - 1)]
        })
        .collect();
    (img, sup)
}
