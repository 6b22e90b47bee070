use crate::error::shape_err;
use crate::{Error, Result, Scalar};

/// Dense row-major array. Feature maps are rank 4, `N x H x W x C`.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    dims: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(dims: impl Into<Vec<usize>>, data: Vec<T>) -> Result<Self> {
        let dims = dims.into();
        if dims.is_empty() || dims.contains(&0) {
            return Err(shape_err!("extents must be positive, got {dims:?}"));
        }
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(shape_err!("dims {dims:?} need {n} values, got {}", data.len()));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::full(dims, T::zero())
    }

    pub fn full(dims: impl Into<Vec<usize>>, v: T) -> Result<Self> {
        let dims = dims.into();
        let n = dims.iter().product();
        Self::new(dims, vec![v; n])
    }

    pub fn scalar(v: T) -> Self {
        Self {
            dims: vec![1],
            data: vec![v],
        }
    }

    pub fn from_fn(dims: impl Into<Vec<usize>>, f: impl FnMut(usize) -> T) -> Result<Self> {
        let dims = dims.into();
        let n = dims.iter().product();
        Self::new(dims, (0..n).map(f).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(Error::Usage(format!("item() on tensor of dims {:?}", self.dims)))
        }
    }

    pub fn reshape(self, dims: impl Into<Vec<usize>>) -> Result<Self> {
        Self::new(dims, self.data)
    }

    /// `(n, h, w, c)` of a rank-4 feature map.
    pub fn nhwc(&self) -> Result<[usize; 4]> {
        match self.dims[..] {
            [n, h, w, c] => Ok([n, h, w, c]),
            _ => Err(shape_err!("expected rank-4 NHWC tensor, got {:?}", self.dims)),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| U::lit(v.as_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.all_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what}: non-finite value")))
        }
    }

    /// Row-major element access.
    pub fn at(&self, idx: &[usize]) -> T {
        assert_eq!(idx.len(), self.dims.len());
        let mut flat = 0;
        for (&i, &d) in idx.iter().zip(&self.dims) {
            assert!(i < d);
            flat = flat * d + i;
        }
        self.data[flat]
    }

    /// Inner product of equally shaped tensors.
    pub fn dot(&self, other: &Self) -> Result<T> {
        if self.dims != other.dims {
            return Err(shape_err!("dot: {:?} vs {:?}", self.dims, other.dims));
        }
        Ok(self.data.iter().zip(&other.data).map(|(&a, &b)| a * b).sum())
    }

    /// Stacks equally shaped tensors along a new leading axis, or along the
    /// existing leading axis when `dims[0]` is the batch.
    pub fn concat_batch(items: &[&Self]) -> Result<Self> {
        let first = items.first().ok_or_else(|| shape_err!("concat_batch of nothing"))?;
        let inner = &first.dims[1..];
        let mut n = 0;
        let mut data = Vec::with_capacity(items.iter().map(|t| t.len()).sum());
        for t in items {
            if &t.dims[1..] != inner {
                return Err(shape_err!("batch items differ: {:?} vs {:?}", t.dims, first.dims));
            }
            n += t.dims[0];
            data.extend_from_slice(&t.data);
        }
        let mut dims = vec![n];
        dims.extend_from_slice(inner);
        Self::new(dims, data)
    }
}
