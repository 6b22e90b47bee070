use super::huffman::DecodeTable;
use super::tables::ZIGZAG;
use super::{dct, ycbcr_to_rgb, COM, DHT, DQT, DRI, EOI, SOF0, SOF1, SOI, SOS};
use crate::resize::round_u8;
use crate::{Error, ImageRgb8, Result};

fn err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::JpegDecode(msg.into()))
}

#[derive(Clone, Debug)]
struct Component {
    id: u8,
    h: usize,
    v: usize,
    tq: usize,
    /// plane dims in samples, padded to whole blocks of whole MCUs
    blocks_w: usize,
    blocks_h: usize,
    plane: Vec<f32>,
    dc_table: usize,
    ac_table: usize,
    pred: i32,
}

struct Frame {
    height: usize,
    width: usize,
    hmax: usize,
    vmax: usize,
    mcus_x: usize,
    mcus_y: usize,
    comps: Vec<Component>,
}

struct BitReader<'a> {
    data: &'a [u8],
    pos: usize,
    acc: u64,
    nbits: u32,
    /// a marker was reached; further reads produce zero bits
    at_marker: bool,
}

impl<'a> BitReader<'a> {
    fn new(data: &'a [u8], pos: usize) -> Self {
        Self {
            data,
            pos,
            acc: 0,
            nbits: 0,
            at_marker: false,
        }
    }

    fn fill(&mut self) {
        while self.nbits <= 56 {
            let mut byte = 0u8;
            if !self.at_marker && self.pos < self.data.len() {
                byte = self.data[self.pos];
                if byte == 0xFF {
                    match self.data.get(self.pos + 1) {
                        Some(0x00) => self.pos += 2,
                        _ => {
                            self.at_marker = true;
                            byte = 0;
                        }
                    }
                } else {
                    self.pos += 1;
                }
            } else {
                self.at_marker = true;
            }
            self.acc |= (byte as u64) << (56 - self.nbits);
            self.nbits += 8;
        }
    }

    #[inline]
    fn peek(&mut self, n: u32) -> u32 {
        if self.nbits < n {
            self.fill();
        }
        (self.acc >> (64 - n)) as u32
    }

    #[inline]
    fn consume(&mut self, n: u32) {
        self.acc <<= n;
        self.nbits -= n;
    }

    fn bits(&mut self, n: u32) -> u32 {
        if n == 0 {
            return 0;
        }
        let v = self.peek(n);
        self.consume(n);
        v
    }

    fn decode(&mut self, table: &DecodeTable) -> Result<u8> {
        let (len, sym) = table.fast_lookup(self.peek(8));
        if len > 0 {
            self.consume(len as u32);
            return Ok(sym);
        }
        let mut code = self.bits(8) as i32;
        for len in 9..=16 {
            code = (code << 1) | self.bits(1) as i32;
            if let Some(sym) = table.lookup(code, len) {
                return Ok(sym);
            }
        }
        err("invalid huffman code")
    }

    fn receive_extend(&mut self, s: u8) -> i32 {
        if s == 0 {
            return 0;
        }
        let v = self.bits(s as u32) as i32;
        if v < (1 << (s - 1)) {
            v - (1 << s) + 1
        } else {
            v
        }
    }

    /// Drops buffered bits and moves to the next marker position.
    fn reset_to_marker(&mut self) -> usize {
        let mut p = self.pos;
        while p + 1 < self.data.len() && !(self.data[p] == 0xFF && self.data[p + 1] != 0x00) {
            p += 1;
        }
        // fill bytes before the marker code
        while p + 2 < self.data.len() && self.data[p + 1] == 0xFF {
            p += 1;
        }
        p
    }
}

fn read_u16(data: &[u8], pos: usize) -> Result<usize> {
    match data.get(pos..pos + 2) {
        Some(b) => Ok(u16::from_be_bytes([b[0], b[1]]) as usize),
        None => err("unexpected end of stream"),
    }
}

fn segment(data: &[u8], pos: usize) -> Result<&[u8]> {
    let len = read_u16(data, pos)?;
    if len < 2 || pos + len > data.len() {
        return err("segment length out of range");
    }
    Ok(&data[pos + 2..pos + len])
}

fn parse_sof(p: &[u8]) -> Result<Frame> {
    if p.len() < 6 || p[0] != 8 {
        return err("only 8-bit precision frames are supported");
    }
    let height = u16::from_be_bytes([p[1], p[2]]) as usize;
    let width = u16::from_be_bytes([p[3], p[4]]) as usize;
    let n = p[5] as usize;
    if height == 0 || width == 0 {
        return err("zero frame dimension");
    }
    if n != 1 && n != 3 {
        return Err(Error::JpegUnsupported(format!("{n} components")));
    }
    if p.len() != 6 + 3 * n {
        return err("bad frame header length");
    }
    let mut comps = Vec::with_capacity(n);
    for c in p[6..].chunks_exact(3) {
        let h = (c[1] >> 4) as usize;
        let v = (c[1] & 15) as usize;
        if !(1..=2).contains(&h) || !(1..=2).contains(&v) {
            return Err(Error::JpegUnsupported(format!("sampling factor {h}x{v}")));
        }
        if c[2] > 3 {
            return err("bad quantization table id");
        }
        comps.push(Component {
            id: c[0],
            h,
            v,
            tq: c[2] as usize,
            blocks_w: 0,
            blocks_h: 0,
            plane: Vec::new(),
            dc_table: 0,
            ac_table: 0,
            pred: 0,
        });
    }
    let hmax = comps.iter().map(|c| c.h).max().unwrap();
    let vmax = comps.iter().map(|c| c.v).max().unwrap();
    let mcus_x = width.div_ceil(8 * hmax);
    let mcus_y = height.div_ceil(8 * vmax);
    for c in &mut comps {
        c.blocks_w = mcus_x * c.h;
        c.blocks_h = mcus_y * c.v;
        c.plane = vec![0.0; c.blocks_w * c.blocks_h * 64];
    }
    Ok(Frame {
        height,
        width,
        hmax,
        vmax,
        mcus_x,
        mcus_y,
        comps,
    })
}

struct Decoder {
    qt: [Option<[u16; 64]>; 4],
    dc: [Option<DecodeTable>; 4],
    ac: [Option<DecodeTable>; 4],
    restart_interval: usize,
}

impl Decoder {
    fn parse_dqt(&mut self, mut p: &[u8]) -> Result<()> {
        while !p.is_empty() {
            let pq = p[0] >> 4;
            let tq = (p[0] & 15) as usize;
            if tq > 3 {
                return err("bad quantization table id");
            }
            let size = if pq == 0 { 64 } else { 128 };
            if p.len() < 1 + size {
                return err("truncated quantization table");
            }
            let mut t = [0u16; 64];
            for (k, slot) in t.iter_mut().enumerate() {
                *slot = if pq == 0 {
                    p[1 + k] as u16
                } else {
                    u16::from_be_bytes([p[1 + 2 * k], p[2 + 2 * k]])
                };
            }
            // stored in zigzag order
            self.qt[tq] = Some(t);
            p = &p[1 + size..];
        }
        Ok(())
    }

    fn parse_dht(&mut self, mut p: &[u8]) -> Result<()> {
        while !p.is_empty() {
            if p.len() < 17 {
                return err("truncated huffman table");
            }
            let class = p[0] >> 4;
            let id = (p[0] & 15) as usize;
            if class > 1 || id > 3 {
                return err("bad huffman table id");
            }
            let mut bits = [0u8; 16];
            bits.copy_from_slice(&p[1..17]);
            let total: usize = bits.iter().map(|&b| b as usize).sum();
            if p.len() < 17 + total {
                return err("truncated huffman values");
            }
            let table = DecodeTable::new(&bits, p[17..17 + total].to_vec())?;
            if class == 0 {
                self.dc[id] = Some(table);
            } else {
                self.ac[id] = Some(table);
            }
            p = &p[17 + total..];
        }
        Ok(())
    }

    fn decode_block(
        &self,
        r: &mut BitReader,
        comp: &mut Component,
        by: usize,
        bx: usize,
    ) -> Result<()> {
        let q = self.qt[comp.tq]
            .as_ref()
            .ok_or_else(|| Error::JpegDecode("missing quantization table".into()))?;
        let dc = self.dc[comp.dc_table]
            .as_ref()
            .ok_or_else(|| Error::JpegDecode("missing DC table".into()))?;
        let ac = self.ac[comp.ac_table]
            .as_ref()
            .ok_or_else(|| Error::JpegDecode("missing AC table".into()))?;

        let mut coef = [0f32; 64];
        let t = r.decode(dc)?;
        if t > 11 {
            return err("DC magnitude category out of range");
        }
        comp.pred += r.receive_extend(t);
        coef[0] = (comp.pred * q[0] as i32) as f32;
        let mut k = 1;
        while k < 64 {
            let rs = r.decode(ac)?;
            let run = (rs >> 4) as usize;
            let s = rs & 15;
            if s == 0 {
                if run == 15 {
                    k += 16;
                    continue;
                }
                break;
            }
            k += run;
            if k > 63 {
                return err("AC coefficient index out of range");
            }
            coef[ZIGZAG[k]] = (r.receive_extend(s) * q[k] as i32) as f32;
            k += 1;
        }
        let pixels = dct::inverse(&coef);
        let stride = comp.blocks_w * 8;
        for y in 0..8 {
            let row = &mut comp.plane[(by * 8 + y) * stride + bx * 8..][..8];
            for x in 0..8 {
                row[x] = (pixels[y * 8 + x] + 128.0).clamp(0.0, 255.0);
            }
        }
        Ok(())
    }

    /// Decodes one scan starting at `pos` (just past the SOS header);
    /// returns the position of the marker that ends it.
    fn decode_scan(&self, data: &[u8], pos: usize, frame: &mut Frame, scan: &[usize]) -> Result<usize> {
        let mut r = BitReader::new(data, pos);
        let single = scan.len() == 1;
        let (units_x, units_y) = if single {
            let c = &frame.comps[scan[0]];
            let cw = (frame.width * c.h).div_ceil(frame.hmax);
            let ch = (frame.height * c.v).div_ceil(frame.vmax);
            (cw.div_ceil(8), ch.div_ceil(8))
        } else {
            (frame.mcus_x, frame.mcus_y)
        };
        let total = units_x * units_y;
        for &ci in scan {
            frame.comps[ci].pred = 0;
        }
        let mut expected_rst = 0u8;
        for unit in 0..total {
            if self.restart_interval > 0 && unit > 0 && unit % self.restart_interval == 0 {
                let p = r.reset_to_marker();
                match data.get(p + 1) {
                    Some(&m) if m == 0xD0 + expected_rst => {}
                    _ => return err("expected restart marker"),
                }
                expected_rst = (expected_rst + 1) & 7;
                r = BitReader::new(data, p + 2);
                for &ci in scan {
                    frame.comps[ci].pred = 0;
                }
            }
            let (uy, ux) = (unit / units_x, unit % units_x);
            if single {
                let comp = &mut frame.comps[scan[0]];
                self.decode_block(&mut r, comp, uy, ux)?;
            } else {
                for &ci in scan {
                    let comp = &mut frame.comps[ci];
                    for v in 0..comp.v {
                        for h in 0..comp.h {
                            let (by, bx) = (uy * comp.v + v, ux * comp.h + h);
                            self.decode_block(&mut r, comp, by, bx)?;
                        }
                    }
                }
            }
        }
        Ok(r.reset_to_marker())
    }
}

/// Decodes a baseline JPEG stream into RGB.
pub fn decode(data: &[u8]) -> Result<ImageRgb8> {
    if data.len() < 4 || data[0] != 0xFF || data[1] != SOI {
        return err("missing SOI marker");
    }
    let mut dec = Decoder {
        qt: [None; 4],
        dc: [None, None, None, None],
        ac: [None, None, None, None],
        restart_interval: 0,
    };
    let mut frame: Option<Frame> = None;
    let mut pos = 2;
    let mut scans = 0usize;
    loop {
        while pos < data.len() && data[pos] != 0xFF {
            pos += 1;
        }
        while pos < data.len() && data[pos] == 0xFF {
            pos += 1;
        }
        let Some(&marker) = data.get(pos) else {
            return err("missing EOI marker");
        };
        pos += 1;
        match marker {
            EOI => break,
            SOF0 | SOF1 => {
                if frame.is_some() {
                    return err("multiple frames");
                }
                frame = Some(parse_sof(segment(data, pos)?)?);
            }
            0xC2 | 0xC3 | 0xC5..=0xC7 | 0xC9..=0xCB | 0xCD..=0xCF => {
                return Err(Error::JpegUnsupported(format!(
                    "frame type 0x{marker:02X} (only baseline is supported)"
                )));
            }
            DQT => dec.parse_dqt(segment(data, pos)?)?,
            DHT => dec.parse_dht(segment(data, pos)?)?,
            DRI => {
                let p = segment(data, pos)?;
                if p.len() != 2 {
                    return err("bad DRI length");
                }
                dec.restart_interval = u16::from_be_bytes([p[0], p[1]]) as usize;
            }
            SOS => {
                let f = frame
                    .as_mut()
                    .ok_or_else(|| Error::JpegDecode("scan before frame header".into()))?;
                let p = segment(data, pos)?;
                let n = *p.first().unwrap_or(&0) as usize;
                if n == 0 || p.len() != 1 + 2 * n + 3 {
                    return err("bad scan header");
                }
                let mut scan = Vec::with_capacity(n);
                for sel in p[1..1 + 2 * n].chunks_exact(2) {
                    let ci = f
                        .comps
                        .iter()
                        .position(|c| c.id == sel[0])
                        .ok_or_else(|| Error::JpegDecode("scan references unknown component".into()))?;
                    let (td, ta) = ((sel[1] >> 4) as usize, (sel[1] & 15) as usize);
                    if td > 3 || ta > 3 {
                        return err("bad huffman table selector");
                    }
                    f.comps[ci].dc_table = td;
                    f.comps[ci].ac_table = ta;
                    scan.push(ci);
                }
                let seg_len = read_u16(data, pos)?;
                pos = dec.decode_scan(data, pos + seg_len, f, &scan)?;
                scans += 1;
                continue;
            }
            0xD0..=0xD7 => continue,
            0x01 => continue,
            m if (0xE0..=0xEF).contains(&m) || m == COM || m >= 0xC0 => {
                segment(data, pos)?;
            }
            _ => return err(format!("unexpected marker 0x{marker:02X}")),
        }
        pos += read_u16(data, pos)?;
    }
    let frame = frame.ok_or_else(|| Error::JpegDecode("no frame header".into()))?;
    if scans == 0 {
        return err("no scan data");
    }
    to_rgb(&frame)
}

fn to_rgb(f: &Frame) -> Result<ImageRgb8> {
    // Subsampled components are upsampled bilinearly with centered samples.
    let upsample = |c: &Component| -> Vec<f32> {
        let stride = c.blocks_w * 8;
        if c.h == f.hmax && c.v == f.vmax {
            let mut out = Vec::with_capacity(f.height * f.width);
            for y in 0..f.height {
                out.extend_from_slice(&c.plane[y * stride..y * stride + f.width]);
            }
            return out;
        }
        let cw = (f.width * c.h).div_ceil(f.hmax);
        let ch = (f.height * c.v).div_ceil(f.vmax);
        let axis = |o: usize, factor: usize, max: usize, len: usize| {
            let s = ((o as f32 + 0.5) * factor as f32 / max as f32 - 0.5).clamp(0.0, (len - 1) as f32);
            let lo = s.floor() as usize;
            (lo, (lo + 1).min(len - 1), s - lo as f32)
        };
        let xs: Vec<_> = (0..f.width).map(|x| axis(x, c.h, f.hmax, cw)).collect();
        let mut out = Vec::with_capacity(f.height * f.width);
        for y in 0..f.height {
            let (y0, y1, fy) = axis(y, c.v, f.vmax, ch);
            let r0 = &c.plane[y0 * stride..];
            let r1 = &c.plane[y1 * stride..];
            for &(x0, x1, fx) in &xs {
                let top = r0[x0] + (r0[x1] - r0[x0]) * fx;
                let bot = r1[x0] + (r1[x1] - r1[x0]) * fx;
                out.push(top + (bot - top) * fy);
            }
        }
        out
    };
    let planes: Vec<Vec<f32>> = f.comps.iter().map(upsample).collect();
    let n = f.height * f.width;
    let mut out = Vec::with_capacity(n * 3);
    if planes.len() == 1 {
        for &v in &planes[0] {
            let v = round_u8(v);
            out.extend_from_slice(&[v, v, v]);
        }
    } else {
        for i in 0..n {
            let rgb = ycbcr_to_rgb(planes[0][i], planes[1][i], planes[2][i]);
            out.extend(rgb.map(round_u8));
        }
    }
    ImageRgb8::from_raw(f.height, f.width, out)
}
