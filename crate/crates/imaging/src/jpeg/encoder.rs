use super::huffman::{category, EncodeTable};
use super::tables::*;
use super::{dct, rgb_to_ycbcr, APP0, DHT, DQT, EOI, SOF0, SOI, SOS};
use crate::{Error, ImageRgb8, Result};

/// Quantized DCT coefficients of every block, natural order, in the order
/// the encoder emits them (per 16x16 MCU: four Y blocks row-major, then Cb, Cr).
#[derive(Clone, Debug)]
pub struct QuantizedPlanes {
    pub luma: Vec<[i16; 64]>,
    pub cb: Vec<[i16; 64]>,
    pub cr: Vec<[i16; 64]>,
}

struct Planes {
    /// padded to a multiple of 16 in both directions
    y: Vec<f32>,
    cb: Vec<f32>,
    cr: Vec<f32>,
    padded_w: usize,
    mcus_x: usize,
    mcus_y: usize,
}

fn to_planes(img: &ImageRgb8) -> Planes {
    let (h, w) = img.dims();
    let mcus_x = w.div_ceil(16);
    let mcus_y = h.div_ceil(16);
    let pw = mcus_x * 16;
    let ph = mcus_y * 16;
    let mut full = [vec![0f32; pw * ph], vec![0f32; pw * ph], vec![0f32; pw * ph]];
    for y in 0..ph {
        let sy = y.min(h - 1);
        for x in 0..pw {
            let [r, g, b] = img.pixel(sy, x.min(w - 1));
            let ycc = rgb_to_ycbcr(r as f32, g as f32, b as f32);
            for c in 0..3 {
                full[c][y * pw + x] = ycc[c];
            }
        }
    }
    let cw = pw / 2;
    let ch = ph / 2;
    let sub = |plane: &[f32]| {
        let mut out = vec![0f32; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                let i = 2 * y * pw + 2 * x;
                out[y * cw + x] = 0.25 * (plane[i] + plane[i + 1] + plane[i + pw] + plane[i + pw + 1]);
            }
        }
        out
    };
    let cb = sub(&full[1]);
    let cr = sub(&full[2]);
    let [y, _, _] = full;
    Planes {
        y,
        cb,
        cr,
        padded_w: pw,
        mcus_x,
        mcus_y,
    }
}

fn quantize_block(plane: &[f32], stride: usize, top: usize, left: usize, q: &[u16; 64]) -> [i16; 64] {
    let mut block = [0f32; 64];
    for y in 0..8 {
        for x in 0..8 {
            block[y * 8 + x] = plane[(top + y) * stride + left + x] - 128.0;
        }
    }
    let coef = dct::forward(&block);
    let mut out = [0i16; 64];
    for i in 0..64 {
        out[i] = (coef[i] / q[i] as f32).round() as i16;
    }
    out
}

pub fn quantized_blocks(img: &ImageRgb8, quality: u8) -> Result<QuantizedPlanes> {
    if !(1..=100).contains(&quality) {
        return Err(Error::InvalidQuality(quality));
    }
    let lq = scaled_quant(&LUMA_QUANT, quality);
    let cq = scaled_quant(&CHROMA_QUANT, quality);
    let p = to_planes(img);
    let cw = p.padded_w / 2;
    let mut out = QuantizedPlanes {
        luma: Vec::new(),
        cb: Vec::new(),
        cr: Vec::new(),
    };
    for my in 0..p.mcus_y {
        for mx in 0..p.mcus_x {
            for (by, bx) in [(0, 0), (0, 8), (8, 0), (8, 8)] {
                out.luma
                    .push(quantize_block(&p.y, p.padded_w, my * 16 + by, mx * 16 + bx, &lq));
            }
            out.cb.push(quantize_block(&p.cb, cw, my * 8, mx * 8, &cq));
            out.cr.push(quantize_block(&p.cr, cw, my * 8, mx * 8, &cq));
        }
    }
    Ok(out)
}

struct BitWriter {
    out: Vec<u8>,
    acc: u32,
    nbits: u32,
}

impl BitWriter {
    fn write(&mut self, len: u8, bits: u16) {
        debug_assert!(len <= 16);
        self.acc = (self.acc << len) | (bits as u32 & ((1u32 << len) - 1));
        self.nbits += len as u32;
        while self.nbits >= 8 {
            let byte = (self.acc >> (self.nbits - 8)) as u8;
            self.out.push(byte);
            if byte == 0xFF {
                self.out.push(0x00);
            }
            self.nbits -= 8;
            self.acc &= (1 << self.nbits) - 1;
        }
    }

    fn flush(&mut self) {
        if self.nbits > 0 {
            let pad = 8 - self.nbits as u8;
            self.write(pad, (1u16 << pad) - 1);
        }
    }
}

struct Tables {
    dc: [EncodeTable; 2],
    ac: [EncodeTable; 2],
}

fn encode_block(w: &mut BitWriter, block: &[i16; 64], prev_dc: &mut i32, t: &Tables, id: usize) {
    let dc = block[0] as i32;
    let diff = dc - *prev_dc;
    *prev_dc = dc;
    let size = category(diff);
    let (len, code) = t.dc[id].get(size);
    w.write(len, code);
    if size > 0 {
        w.write(size, magnitude_bits(diff, size));
    }

    let mut run = 0u8;
    for k in 1..64 {
        let v = block[ZIGZAG[k]] as i32;
        if v == 0 {
            run += 1;
            continue;
        }
        while run > 15 {
            let (len, code) = t.ac[id].get(0xF0);
            w.write(len, code);
            run -= 16;
        }
        let size = category(v);
        let (len, code) = t.ac[id].get((run << 4) | size);
        w.write(len, code);
        w.write(size, magnitude_bits(v, size));
        run = 0;
    }
    if run > 0 {
        let (len, code) = t.ac[id].get(0x00);
        w.write(len, code);
    }
}

#[inline]
fn magnitude_bits(v: i32, size: u8) -> u16 {
    if v >= 0 {
        v as u16
    } else {
        (v + (1 << size) - 1) as u16
    }
}

fn segment(out: &mut Vec<u8>, marker: u8, payload: &[u8]) {
    out.extend_from_slice(&[0xFF, marker]);
    out.extend_from_slice(&((payload.len() + 2) as u16).to_be_bytes());
    out.extend_from_slice(payload);
}

fn push_huffman(p: &mut Vec<u8>, class_id: u8, bits: &[u8; 16], vals: &[u8]) {
    p.push(class_id);
    p.extend_from_slice(bits);
    p.extend_from_slice(vals);
}

/// Encodes `img` as a baseline JFIF stream at `quality` (1..=100).
pub fn encode(img: &ImageRgb8, quality: u8) -> Result<Vec<u8>> {
    let blocks = quantized_blocks(img, quality)?;
    let (h, w) = img.dims();
    if h > u16::MAX as usize || w > u16::MAX as usize {
        return Err(Error::InvalidDimensions {
            height: h,
            width: w,
        });
    }
    let lq = scaled_quant(&LUMA_QUANT, quality);
    let cq = scaled_quant(&CHROMA_QUANT, quality);

    let mut out = vec![0xFF, SOI];
    segment(
        &mut out,
        APP0,
        &[b'J', b'F', b'I', b'F', 0, 1, 1, 0, 0, 1, 0, 1, 0, 0],
    );

    let mut dqt = Vec::with_capacity(130);
    for (id, table) in [(0u8, &lq), (1u8, &cq)] {
        dqt.push(id);
        dqt.extend(ZIGZAG.iter().map(|&n| table[n] as u8));
    }
    segment(&mut out, DQT, &dqt);

    let mut sof = vec![8];
    sof.extend_from_slice(&(h as u16).to_be_bytes());
    sof.extend_from_slice(&(w as u16).to_be_bytes());
    sof.extend_from_slice(&[3, 1, 0x22, 0, 2, 0x11, 1, 3, 0x11, 1]);
    segment(&mut out, SOF0, &sof);

    let mut dht = Vec::new();
    push_huffman(&mut dht, 0x00, &LUMA_DC_BITS, &LUMA_DC_VALS);
    push_huffman(&mut dht, 0x10, &LUMA_AC_BITS, &LUMA_AC_VALS);
    push_huffman(&mut dht, 0x01, &CHROMA_DC_BITS, &CHROMA_DC_VALS);
    push_huffman(&mut dht, 0x11, &CHROMA_AC_BITS, &CHROMA_AC_VALS);
    segment(&mut out, DHT, &dht);

    segment(&mut out, SOS, &[3, 1, 0x00, 2, 0x11, 3, 0x11, 0, 63, 0]);

    let tables = Tables {
        dc: [
            EncodeTable::new(&LUMA_DC_BITS, &LUMA_DC_VALS),
            EncodeTable::new(&CHROMA_DC_BITS, &CHROMA_DC_VALS),
        ],
        ac: [
            EncodeTable::new(&LUMA_AC_BITS, &LUMA_AC_VALS),
            EncodeTable::new(&CHROMA_AC_BITS, &CHROMA_AC_VALS),
        ],
    };
    let mut bw = BitWriter {
        out,
        acc: 0,
        nbits: 0,
    };
    let mut pred = [0i32; 3];
    for (mcu, luma) in blocks.luma.chunks_exact(4).enumerate() {
        for b in luma {
            encode_block(&mut bw, b, &mut pred[0], &tables, 0);
        }
        encode_block(&mut bw, &blocks.cb[mcu], &mut pred[1], &tables, 1);
        encode_block(&mut bw, &blocks.cr[mcu], &mut pred[2], &tables, 1);
    }
    bw.flush();
    let mut out = bw.out;
    out.extend_from_slice(&[0xFF, EOI]);
    Ok(out)
}
