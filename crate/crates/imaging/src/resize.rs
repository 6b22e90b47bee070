use crate::{Error, GrayImage8, ImageRgb8, Result};

/// Source taps for one output coordinate: `(lo, hi, frac)` with the sample
/// taken at `lo * (1 - frac) + hi * frac`.
fn taps(in_len: usize, out_len: usize) -> Vec<(usize, usize, f32)> {
    let scale = in_len as f64 / out_len as f64;
    (0..out_len)
        .map(|o| {
            if in_len == out_len {
                return (o, o, 0.0);
            }
            // half-pixel centers
            let src = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
            let lo = src.floor() as usize;
            let hi = (lo + 1).min(in_len - 1);
            (lo, hi, (src - lo as f64) as f32)
        })
        .collect()
}

/// Separable bilinear resampling of an interleaved `channels`-plane float
/// buffer with half-pixel centers. Equal dimensions return the input unchanged.
pub fn resize_plane_bilinear(
    src: &[f32],
    in_h: usize,
    in_w: usize,
    channels: usize,
    out_h: usize,
    out_w: usize,
) -> Vec<f32> {
    assert_eq!(src.len(), in_h * in_w * channels);
    if in_h == out_h && in_w == out_w {
        return src.to_vec();
    }
    let xt = taps(in_w, out_w);
    let yt = taps(in_h, out_h);

    // horizontal pass: in_h x out_w
    let mut tmp = vec![0f32; in_h * out_w * channels];
    for y in 0..in_h {
        let row = &src[y * in_w * channels..(y + 1) * in_w * channels];
        let out = &mut tmp[y * out_w * channels..(y + 1) * out_w * channels];
        for (x, &(lo, hi, f)) in xt.iter().enumerate() {
            for c in 0..channels {
                let a = row[lo * channels + c];
                let b = row[hi * channels + c];
                out[x * channels + c] = a + (b - a) * f;
            }
        }
    }

    let mut dst = vec![0f32; out_h * out_w * channels];
    let stride = out_w * channels;
    for (y, &(lo, hi, f)) in yt.iter().enumerate() {
        let a = &tmp[lo * stride..(lo + 1) * stride];
        let b = &tmp[hi * stride..(hi + 1) * stride];
        for ((d, &va), &vb) in dst[y * stride..(y + 1) * stride].iter_mut().zip(a).zip(b) {
            *d = va + (vb - va) * f;
        }
    }
    dst
}

#[inline]
pub(crate) fn round_u8(v: f32) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Bilinear resize of an RGB image, rounding half up back to 8 bits.
pub fn resize_bilinear(img: &ImageRgb8, out_h: usize, out_w: usize) -> Result<ImageRgb8> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimensions {
            height: out_h,
            width: out_w,
        });
    }
    if img.dims() == (out_h, out_w) {
        return Ok(img.clone());
    }
    let src: Vec<f32> = img.as_raw().iter().map(|&v| v as f32).collect();
    let out = resize_plane_bilinear(&src, img.height(), img.width(), 3, out_h, out_w);
    ImageRgb8::from_raw(out_h, out_w, out.into_iter().map(round_u8).collect())
}

/// Nearest-neighbour resize; keeps binary masks binary.
pub fn resize_gray_nearest(img: &GrayImage8, out_h: usize, out_w: usize) -> Result<GrayImage8> {
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidDimensions {
            height: out_h,
            width: out_w,
        });
    }
    let (in_h, in_w) = img.dims();
    let pick = |o: usize, in_len: usize, out_len: usize| {
        (((o as f64 + 0.5) * in_len as f64 / out_len as f64).floor() as usize).min(in_len - 1)
    };
    let xs: Vec<usize> = (0..out_w).map(|x| pick(x, in_w, out_w)).collect();
    let mut data = Vec::with_capacity(out_h * out_w);
    for y in 0..out_h {
        let sy = pick(y, in_h, out_h);
        data.extend(xs.iter().map(|&sx| img.get(sy, sx)));
    }
    GrayImage8::from_raw(out_h, out_w, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_when_dims_unchanged() {
        let img = ImageRgb8::from_fn(7, 5, |y, x| [(y * 30) as u8, (x * 40) as u8, 9]).unwrap();
        assert_eq!(resize_bilinear(&img, 7, 5).unwrap(), img);
    }

    #[test]
    fn checkerboard_2x2_to_1x1_is_rounded_mean() {
        let img = ImageRgb8::from_raw(2, 2, vec![0, 0, 0, 255, 255, 255, 255, 255, 255, 0, 0, 0])
            .unwrap();
        let out = resize_bilinear(&img, 1, 1).unwrap();
        assert_eq!(out.pixel(0, 0), [128, 128, 128]);
    }

    #[test]
    fn constant_stays_constant() {
        let img = ImageRgb8::filled(13, 9, [17, 200, 93]).unwrap();
        for (h, w) in [(1, 1), (4, 31), (26, 18), (100, 3)] {
            let out = resize_bilinear(&img, h, w).unwrap();
            assert!(out.as_raw().chunks(3).all(|p| p == [17, 200, 93]));
        }
    }

    #[test]
    fn nearest_keeps_values_binary() {
        let mask = GrayImage8::from_raw(3, 3, vec![0, 255, 0, 255, 255, 0, 0, 0, 255]).unwrap();
        let out = resize_gray_nearest(&mask, 7, 5).unwrap();
        assert!(out.as_raw().iter().all(|&v| v == 0 || v == 255));
        assert_eq!(out.get(0, 0), 0);
        assert_eq!(out.get(6, 4), 255);
    }

    #[test]
    fn zero_target_rejected() {
        let img = ImageRgb8::filled(2, 2, [0; 3]).unwrap();
        assert!(resize_bilinear(&img, 0, 3).is_err());
    }
}
