use crate::{Error, Result};

/// Interleaved 8-bit RGB image, row-major.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageRgb8 {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl ImageRgb8 {
    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions { height, width });
        }
        if data.len() != height * width * 3 {
            return Err(Error::BufferLength {
                len: data.len(),
                height,
                width,
                channels: 3,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, rgb: [u8; 3]) -> Result<Self> {
        let data = rgb.iter().copied().cycle().take(height * width * 3).collect();
        Self::from_raw(height, width, data)
    }

    pub fn from_fn(
        height: usize,
        width: usize,
        mut f: impl FnMut(usize, usize) -> [u8; 3],
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(y, x));
            }
        }
        Self::from_raw(height, width, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    /// `(height, width)`
    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn as_raw_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, y: usize, x: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    /// Splits into three planar channels.
    pub fn planes(&self) -> [Vec<u8>; 3] {
        let n = self.height * self.width;
        let mut out = [vec![0; n], vec![0; n], vec![0; n]];
        for (i, px) in self.data.chunks_exact(3).enumerate() {
            out[0][i] = px[0];
            out[1][i] = px[1];
            out[2][i] = px[2];
        }
        out
    }

    pub fn from_planes(height: usize, width: usize, planes: [&[u8]; 3]) -> Result<Self> {
        let n = height * width;
        for p in &planes {
            if p.len() != n {
                return Err(Error::BufferLength {
                    len: p.len(),
                    height,
                    width,
                    channels: 1,
                });
            }
        }
        let mut data = Vec::with_capacity(n * 3);
        for i in 0..n {
            data.extend_from_slice(&[planes[0][i], planes[1][i], planes[2][i]]);
        }
        Self::from_raw(height, width, data)
    }

    /// Copies the `h`x`w` window starting at `(top, left)`.
    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::DimensionMismatch {
                expected: (self.height, self.width),
                found: (top + h, left + w),
            });
        }
        let mut data = Vec::with_capacity(h * w * 3);
        for y in top..top + h {
            let start = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + w * 3]);
        }
        Self::from_raw(h, w, data)
    }
}

/// 8-bit single-channel image (ground-truth masks, grayscale outputs).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GrayImage8 {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl GrayImage8 {
    pub fn from_raw(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidDimensions { height, width });
        }
        if data.len() != height * width {
            return Err(Error::BufferLength {
                len: data.len(),
                height,
                width,
                channels: 1,
            });
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }
}
