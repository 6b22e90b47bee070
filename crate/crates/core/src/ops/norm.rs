use crate::Scalar;

/// Per-channel statistics used to normalize one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// biased (population) variance
    pub var: Vec<T>,
}

/// Channel statistics over all leading axes of a channels-last buffer.
pub fn channel_stats<T: Scalar>(x: &[T], c: usize) -> BatchStats<T> {
    let rows = x.len() / c;
    let inv = T::one() / T::lit(rows as f64);
    let mut mean = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m *= inv);
    let mut var = vec![T::zero(); c];
    for row in x.chunks_exact(c) {
        for ((s, &v), &m) in var.iter_mut().zip(row).zip(&mean) {
            let d = v - m;
            *s += d * d;
        }
    }
    var.iter_mut().for_each(|s| *s *= inv);
    BatchStats { mean, var }
}

/// `gamma * (x - mean) * inv_std + beta` per channel; returns the output and
/// `inv_std = 1 / sqrt(var + eps)`.
pub fn batchnorm_forward<T: Scalar>(
    x: &[T],
    c: usize,
    mean: &[T],
    var: &[T],
    gamma: &[T],
    beta: &[T],
    eps: T,
) -> (Vec<T>, Vec<T>) {
    let inv_std: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut y = Vec::with_capacity(x.len());
    for row in x.chunks_exact(c) {
        for ch in 0..c {
            y.push(gamma[ch] * (row[ch] - mean[ch]) * inv_std[ch] + beta[ch]);
        }
    }
    (y, inv_std)
}

/// Returns `(dx, dgamma, dbeta)`. With `batch_stats` the mean and variance
/// are functions of `x` (training mode); otherwise they are constants.
pub fn batchnorm_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    c: usize,
    mean: &[T],
    inv_std: &[T],
    gamma: &[T],
    batch_stats: bool,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = x.len() / c;
    let mut dgamma = vec![T::zero(); c];
    let mut dbeta = vec![T::zero(); c];
    for (xr, gr) in x.chunks_exact(c).zip(dy.chunks_exact(c)) {
        for ch in 0..c {
            let xhat = (xr[ch] - mean[ch]) * inv_std[ch];
            dgamma[ch] += gr[ch] * xhat;
            dbeta[ch] += gr[ch];
        }
    }
    let mut dx = Vec::with_capacity(x.len());
    if batch_stats {
        // dx = gamma * inv_std / m * (m * dy - sum(dy) - xhat * sum(dy * xhat))
        let m = T::lit(rows as f64);
        for (xr, gr) in x.chunks_exact(c).zip(dy.chunks_exact(c)) {
            for ch in 0..c {
                let xhat = (xr[ch] - mean[ch]) * inv_std[ch];
                let v = m * gr[ch] - dbeta[ch] - xhat * dgamma[ch];
                dx.push(gamma[ch] * inv_std[ch] / m * v);
            }
        }
    } else {
        for gr in dy.chunks_exact(c) {
            for ch in 0..c {
                dx.push(gr[ch] * gamma[ch] * inv_std[ch]);
            }
        }
    }
    (dx, dgamma, dbeta)
}
