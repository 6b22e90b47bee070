use crate::resize::round_u8;
use crate::ImageRgb8;

const GAUSS: [[f32; 3]; 3] = [[1.0, 2.0, 1.0], [2.0, 4.0, 2.0], [1.0, 2.0, 1.0]];

/// 3x3 binomial blur with edge replication, returned unrounded.
pub fn gaussian3x3(img: &ImageRgb8) -> Vec<f32> {
    let (h, w) = img.dims();
    let src = img.as_raw();
    let mut out = vec![0f32; h * w * 3];
    for y in 0..h {
        for x in 0..w {
            let mut acc = [0f32; 3];
            for (dy, krow) in GAUSS.iter().enumerate() {
                let sy = (y + dy).saturating_sub(1).min(h - 1);
                for (dx, &k) in krow.iter().enumerate() {
                    let sx = (x + dx).saturating_sub(1).min(w - 1);
                    let i = (sy * w + sx) * 3;
                    for c in 0..3 {
                        acc[c] += k * src[i + c] as f32;
                    }
                }
            }
            let o = (y * w + x) * 3;
            for c in 0..3 {
                out[o + c] = acc[c] / 16.0;
            }
        }
    }
    out
}

/// Unsharp mask: `img + strength * (img - blur(img))`, clamped to 8 bits.
pub fn sharpen(img: &ImageRgb8, strength: f32) -> ImageRgb8 {
    if strength == 0.0 {
        return img.clone();
    }
    let blurred = gaussian3x3(img);
    let data = img
        .as_raw()
        .iter()
        .zip(&blurred)
        .map(|(&v, &b)| {
            let v = v as f32;
            round_u8(v + strength * (v - b))
        })
        .collect();
    ImageRgb8::from_raw(img.height(), img.width(), data).expect("same dims")
}
