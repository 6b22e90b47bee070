use forgenet_imaging::{resize_plane_bilinear, GrayImage8};

use crate::error::shape_err;
use crate::{Error, Result};

/// Per-pixel forgery probability, row-major `height x width`, every value
/// in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityMask {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ProbabilityMask {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(shape_err!("mask {height}x{width} with {} values", data.len()));
        }
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Numeric(format!("probability {v} outside [0, 1]")));
        }
        Ok(Self { height, width, data })
    }

    /// Clamps into `[0, 1]`; non-finite values are rejected.
    pub fn from_clamped(height: usize, width: usize, mut data: Vec<f32>) -> Result<Self> {
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite probability".into()));
        }
        data.iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
        Self::new(height, width, data)
    }

    pub fn filled(height: usize, width: usize, v: f32) -> Result<Self> {
        Self::new(height, width, vec![v; height * width])
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

    pub fn values(&self) -> &[f32] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    pub fn resize_bilinear(&self, height: usize, width: usize) -> Result<Self> {
        let out = resize_plane_bilinear(&self.data, self.height, self.width, 1, height, width);
        Self::from_clamped(height, width, out)
    }

    /// `p > threshold` per pixel.
    pub fn binarize(&self, threshold: f32) -> BinaryMask {
        BinaryMask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&p| u8::from(p > threshold)).collect(),
        }
    }

    /// 8-bit encoding, `floor(p * 255 + 0.5)`.
    pub fn to_gray8(&self) -> GrayImage8 {
        let data = self.data.iter().map(|&p| (p * 255.0 + 0.5).floor() as u8).collect();
        GrayImage8::from_raw(self.height, self.width, data).expect("dims validated")
    }

    fn zip(&self, other: &Self, f: impl Fn(f32, f32) -> f32) -> Result<Self> {
        if self.dims() != other.dims() {
            return Err(shape_err!("fusing {:?} with {:?}", self.dims(), other.dims()));
        }
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Ok(Self {
            height: self.height,
            width: self.width,
            data,
        })
    }
}

/// Pixelwise maximum of two masks.
pub fn fuse_max(a: &ProbabilityMask, b: &ProbabilityMask) -> Result<ProbabilityMask> {
    a.zip(b, |x, y| if y > x { y } else { x })
}

/// Pixelwise mean of two masks.
pub fn fuse_avg(a: &ProbabilityMask, b: &ProbabilityMask) -> Result<ProbabilityMask> {
    a.zip(b, |x, y| (x + y) * 0.5)
}

/// Two-class mask, 1 = forged.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl BinaryMask {
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if height == 0 || width == 0 || data.len() != height * width {
            return Err(shape_err!("mask {height}x{width} with {} values", data.len()));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Input("binary mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    pub fn from_fn(height: usize, width: usize, f: impl Fn(usize, usize) -> bool) -> Result<Self> {
        let data = (0..height * width).map(|i| u8::from(f(i / width.max(1), i % width.max(1)))).collect();
        Self::new(height, width, data)
    }

    /// Ground-truth decode: values above 127 are forged.
    pub fn from_gray8(img: &GrayImage8) -> Self {
        let (height, width) = img.dims();
        Self {
            height,
            width,
            data: img.as_raw().iter().map(|&v| u8::from(v > 127)).collect(),
        }
    }

    /// 0 / 255 grayscale.
    pub fn to_gray8(&self) -> GrayImage8 {
        let data = self.data.iter().map(|&v| v * 255).collect();
        GrayImage8::from_raw(self.height, self.width, data).expect("dims validated")
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

    pub fn values(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] == 1
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn area_fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fusion_examples() {
        let a = ProbabilityMask::filled(1, 1, 0.2).unwrap();
        let b = ProbabilityMask::filled(1, 1, 0.7).unwrap();
        assert_eq!(fuse_max(&a, &b).unwrap().values(), &[0.7]);
        assert!((fuse_avg(&a, &b).unwrap().values()[0] - 0.45).abs() < 1e-7);
        assert_eq!(fuse_max(&a, &a).unwrap(), a);
        let c = ProbabilityMask::filled(2, 1, 0.5).unwrap();
        assert!(matches!(fuse_max(&a, &c), Err(Error::Shape(_))));
    }

    #[test]
    fn gray_encoding_rounds_half_up() {
        let m = ProbabilityMask::new(1, 4, vec![0.0, 1.0, 0.5, 0.498]).unwrap();
        assert_eq!(m.to_gray8().as_raw(), &[0, 255, 128, 127]);
    }

    #[test]
    fn gt_threshold() {
        let g = GrayImage8::from_raw(1, 4, vec![0, 127, 128, 255]).unwrap();
        assert_eq!(BinaryMask::from_gray8(&g).values(), &[0, 0, 1, 1]);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(ProbabilityMask::new(1, 1, vec![1.5]).is_err());
        assert!(BinaryMask::new(1, 1, vec![2]).is_err());
    }
}
