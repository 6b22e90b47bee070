//! File I/O: PNG (8-bit RGB/RGBA/gray in, RGB/gray out) and baseline JPEG.

use std::fs::File;
use std::io::{BufWriter, Cursor, Write};
use std::path::Path;

use crate::{jpeg, Error, GrayImage8, ImageRgb8, Result};

const PNG_MAGIC: [u8; 8] = [0x89, b'P', b'N', b'G', 0x0D, 0x0A, 0x1A, 0x0A];

struct DecodedPng {
    height: usize,
    width: usize,
    color: png::ColorType,
    data: Vec<u8>,
}

fn decode_png(bytes: &[u8]) -> Result<DecodedPng> {
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder.read_info()?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader.next_frame(&mut buf)?;
    buf.truncate(info.buffer_size());
    Ok(DecodedPng {
        height: info.height as usize,
        width: info.width as usize,
        color: info.color_type,
        data: buf,
    })
}

fn png_to_rgb(p: DecodedPng) -> Result<ImageRgb8> {
    let data = match p.color {
        png::ColorType::Rgb => p.data,
        png::ColorType::Rgba => p
            .data
            .chunks_exact(4)
            .flat_map(|px| [px[0], px[1], px[2]])
            .collect(),
        png::ColorType::Grayscale => p.data.iter().flat_map(|&v| [v, v, v]).collect(),
        png::ColorType::GrayscaleAlpha => p
            .data
            .chunks_exact(2)
            .flat_map(|px| [px[0], px[0], px[0]])
            .collect(),
        png::ColorType::Indexed => return Err(Error::UnknownFormat),
    };
    ImageRgb8::from_raw(p.height, p.width, data)
}

/// Decodes PNG or JPEG bytes, detected by signature.
pub fn decode_image(bytes: &[u8]) -> Result<ImageRgb8> {
    if bytes.starts_with(&PNG_MAGIC) {
        png_to_rgb(decode_png(bytes)?)
    } else if bytes.starts_with(&[0xFF, 0xD8]) {
        jpeg::decode(bytes)
    } else {
        Err(Error::UnknownFormat)
    }
}

pub fn read_image(path: impl AsRef<Path>) -> Result<ImageRgb8> {
    decode_image(&std::fs::read(path)?)
}

/// Reads a PNG as a single channel; color inputs are reduced to their
/// first channel.
pub fn read_gray_png(path: impl AsRef<Path>) -> Result<GrayImage8> {
    let p = decode_png(&std::fs::read(path)?)?;
    let step = match p.color {
        png::ColorType::Grayscale => 1,
        png::ColorType::GrayscaleAlpha => 2,
        png::ColorType::Rgb => 3,
        png::ColorType::Rgba => 4,
        png::ColorType::Indexed => return Err(Error::UnknownFormat),
    };
    let data = p.data.chunks_exact(step).map(|px| px[0]).collect();
    GrayImage8::from_raw(p.height, p.width, data)
}

fn encode_png(w: impl Write, height: usize, width: usize, color: png::ColorType, data: &[u8]) -> Result<()> {
    let mut enc = png::Encoder::new(w, width as u32, height as u32);
    enc.set_color(color);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header()?;
    writer.write_image_data(data)?;
    writer.finish()?;
    Ok(())
}

pub fn encode_png_rgb(img: &ImageRgb8) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode_png(&mut out, img.height(), img.width(), png::ColorType::Rgb, img.as_raw())?;
    Ok(out)
}

pub fn encode_png_gray(img: &GrayImage8) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    encode_png(&mut out, img.height(), img.width(), png::ColorType::Grayscale, img.as_raw())?;
    Ok(out)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    f.write_all(bytes)?;
    f.flush()?;
    Ok(())
}

pub fn write_png_rgb(path: impl AsRef<Path>, img: &ImageRgb8) -> Result<()> {
    write_bytes(path.as_ref(), &encode_png_rgb(img)?)
}

pub fn write_png_gray(path: impl AsRef<Path>, img: &GrayImage8) -> Result<()> {
    write_bytes(path.as_ref(), &encode_png_gray(img)?)
}

pub fn write_jpeg(path: impl AsRef<Path>, img: &ImageRgb8, quality: u8) -> Result<()> {
    write_bytes(path.as_ref(), &jpeg::encode(img, quality)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip() {
        let img = ImageRgb8::from_fn(9, 14, |y, x| [(y * 20) as u8, (x * 11) as u8, 7]).unwrap();
        let bytes = encode_png_rgb(&img).unwrap();
        assert_eq!(decode_image(&bytes).unwrap(), img);
    }

    #[test]
    fn unknown_signature() {
        assert!(matches!(decode_image(b"GIF89a...."), Err(Error::UnknownFormat)));
    }
}
