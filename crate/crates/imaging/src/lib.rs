//! Image plumbing for the forgery detector: 8-bit RGB/grayscale buffers,
//! PNG and baseline JPEG I/O, bilinear resizing, unsharp masking and the
//! lossy "social network" degradation profiles built on top of them.

mod error;
mod filter;
mod image;
pub mod io;
pub mod jpeg;
pub mod osn;
mod resize;

pub use error::{Error, Result};
pub use filter::{gaussian3x3, sharpen};
pub use image::{GrayImage8, ImageRgb8};
pub use osn::{degrade, OsnProfile, OsnStep, ResizeRule};
pub use resize::{resize_bilinear, resize_gray_nearest, resize_plane_bilinear};

/// Peak signal-to-noise ratio between two equally sized RGB images, in dB.
///
/// Identical images yield `f64::INFINITY`.
pub fn psnr(a: &ImageRgb8, b: &ImageRgb8) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::DimensionMismatch {
            expected: a.dims(),
            found: b.dims(),
        });
    }
    let mse = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum::<f64>()
        / a.as_raw().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}
