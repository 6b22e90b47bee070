use crate::error::shape_err;
use crate::{Result, Scalar};

/// 2x2 window, stride 2. Returns the pooled map and, per output element,
/// the flat input index it was taken from (first maximum in scan order).
pub fn maxpool2x2_forward<T: Scalar>(x: &[T], dims: [usize; 4]) -> Result<(Vec<T>, Vec<u32>)> {
    let [n, h, w, c] = dims;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(shape_err!("maxpool2x2 needs even spatial dims, got {h}x{w}"));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut y = Vec::with_capacity(n * oh * ow * c);
    let mut arg = Vec::with_capacity(n * oh * ow * c);
    for ni in 0..n {
        for oy in 0..oh {
            for ox in 0..ow {
                for ci in 0..c {
                    let mut best_i = ((ni * h + 2 * oy) * w + 2 * ox) * c + ci;
                    let mut best = x[best_i];
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let i = ((ni * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ci;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                    y.push(best);
                    arg.push(best_i as u32);
                }
            }
        }
    }
    Ok((y, arg))
}

pub fn maxpool2x2_backward<T: Scalar>(dy: &[T], argmax: &[u32], in_len: usize) -> Vec<T> {
    let mut dx = vec![T::zero(); in_len];
    for (&g, &i) in dy.iter().zip(argmax) {
        dx[i as usize] += g;
    }
    dx
}
