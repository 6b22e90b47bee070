//! Minimal baseline (sequential, Huffman) JPEG codec.
//!
//! The encoder always writes 3-component YCbCr with 4:2:0 subsampling and
//! the standard Annex K tables. The decoder accepts any baseline stream with
//! 1 or 3 components, sampling factors up to 2 and restart intervals.

mod dct;
mod decoder;
mod encoder;
mod huffman;
pub mod tables;

pub use decoder::decode;
pub use encoder::{encode, quantized_blocks, QuantizedPlanes};

pub(crate) const SOI: u8 = 0xD8;
pub(crate) const EOI: u8 = 0xD9;
pub(crate) const SOF0: u8 = 0xC0;
pub(crate) const SOF1: u8 = 0xC1;
pub(crate) const DHT: u8 = 0xC4;
pub(crate) const DQT: u8 = 0xDB;
pub(crate) const DRI: u8 = 0xDD;
pub(crate) const SOS: u8 = 0xDA;
pub(crate) const APP0: u8 = 0xE0;
pub(crate) const COM: u8 = 0xFE;

#[inline]
pub(crate) fn rgb_to_ycbcr(r: f32, g: f32, b: f32) -> [f32; 3] {
    [
        0.299 * r + 0.587 * g + 0.114 * b,
        -0.168_736 * r - 0.331_264 * g + 0.5 * b + 128.0,
        0.5 * r - 0.418_688 * g - 0.081_312 * b + 128.0,
    ]
}

#[inline]
pub(crate) fn ycbcr_to_rgb(y: f32, cb: f32, cr: f32) -> [f32; 3] {
    let cb = cb - 128.0;
    let cr = cr - 128.0;
    [
        y + 1.402 * cr,
        y - 0.344_136 * cb - 0.714_136 * cr,
        y + 1.772 * cb,
    ]
}
