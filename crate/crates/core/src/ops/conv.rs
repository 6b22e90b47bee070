use rayon::prelude::*;

use super::ROW_CHUNK;
use crate::error::shape_err;
use crate::{Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// Zero padding; output extent `ceil(in / stride)`.
    Same,
    Valid,
}

/// Index arithmetic for a cross-correlation of an `n x in_h x in_w x cin`
/// input with a `kh x kw x cin x cout` kernel.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub n: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub cin: usize,
    pub kh: usize,
    pub kw: usize,
    pub cout: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
    pub out_h: usize,
    pub out_w: usize,
}

fn same_extent(input: usize, k: usize, stride: usize) -> (usize, usize) {
    let out = input.div_ceil(stride);
    let total = ((out - 1) * stride + k).saturating_sub(input);
    (out, total / 2)
}

impl ConvGeometry {
    pub fn new(
        input: [usize; 4],
        kernel: [usize; 4],
        stride: usize,
        padding: Padding,
    ) -> Result<Self> {
        let [n, in_h, in_w, cin] = input;
        let [kh, kw, kcin, cout] = kernel;
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(shape_err!("kernel extents must be odd, got {kh}x{kw}"));
        }
        if stride == 0 {
            return Err(shape_err!("stride must be >= 1"));
        }
        if kcin != cin {
            return Err(shape_err!("kernel expects {kcin} input channels, input has {cin}"));
        }
        let (out_h, pad_top, out_w, pad_left) = match padding {
            Padding::Same => {
                let (oh, pt) = same_extent(in_h, kh, stride);
                let (ow, pl) = same_extent(in_w, kw, stride);
                (oh, pt, ow, pl)
            }
            Padding::Valid => {
                if in_h < kh || in_w < kw {
                    return Err(shape_err!("valid conv: input {in_h}x{in_w} smaller than kernel"));
                }
                ((in_h - kh) / stride + 1, 0, (in_w - kw) / stride + 1, 0)
            }
        };
        Ok(Self {
            n,
            in_h,
            in_w,
            cin,
            kh,
            kw,
            cout,
            stride,
            pad_top,
            pad_left,
            out_h,
            out_w,
        })
    }

    pub fn patch_len(&self) -> usize {
        self.kh * self.kw * self.cin
    }

    pub fn out_rows(&self) -> usize {
        self.n * self.out_h * self.out_w
    }

    pub fn in_rows(&self) -> usize {
        self.n * self.in_h * self.in_w
    }

    fn pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.pad_top == 0 && self.pad_left == 0
    }

    pub fn input_dims(&self) -> [usize; 4] {
        [self.n, self.in_h, self.in_w, self.cin]
    }

    pub fn output_dims(&self) -> [usize; 4] {
        [self.n, self.out_h, self.out_w, self.cout]
    }
}

/// Geometry of the strided convolution whose input-adjoint is a transposed
/// convolution upsampling `x` (`n x h x w x cin_t`) by `stride` with a
/// `kh x kw x cout_t x cin_t` kernel: the conv maps `stride*h x stride*w x
/// cout_t` down to `h x w x cin_t`.
pub fn conv_transpose_geometry(x: [usize; 4], kernel: [usize; 4], stride: usize) -> Result<ConvGeometry> {
    let [n, h, w, cin_t] = x;
    let [kh, kw, cout_t, kcin] = kernel;
    if kcin != cin_t {
        return Err(shape_err!("transposed kernel expects {kcin} input channels, input has {cin_t}"));
    }
    let g = ConvGeometry::new(
        [n, h * stride, w * stride, cout_t],
        [kh, kw, cout_t, cin_t],
        stride,
        Padding::Same,
    )?;
    debug_assert_eq!((g.out_h, g.out_w), (h, w));
    Ok(g)
}

/// Gathers receptive fields of output rows `r0..r0+rows` into `col`
/// (`rows x patch_len`), zero outside the input.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeometry, r0: usize, rows: usize, col: &mut [T]) {
    let k = g.patch_len();
    let plane = g.out_h * g.out_w;
    for r in 0..rows {
        let row = r0 + r;
        let ni = row / plane;
        let oy = (row % plane) / g.out_w;
        let ox = row % g.out_w;
        let dst = &mut col[r * k..(r + 1) * k];
        for ky in 0..g.kh {
            let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
            for kx in 0..g.kw {
                let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                let seg = &mut dst[(ky * g.kw + kx) * g.cin..][..g.cin];
                if iy < 0 || ix < 0 || iy as usize >= g.in_h || ix as usize >= g.in_w {
                    seg.fill(T::zero());
                } else {
                    let src = ((ni * g.in_h + iy as usize) * g.in_w + ix as usize) * g.cin;
                    seg.copy_from_slice(&x[src..src + g.cin]);
                }
            }
        }
    }
}

/// For input rows `r0..r0+rows`, gathers the output-gradient rows that each
/// kernel tap connects them to (`rows x (kh*kw*cout)`).
fn col2im_gather<T: Scalar>(dy: &[T], g: &ConvGeometry, r0: usize, rows: usize, col: &mut [T]) {
    let k = g.kh * g.kw * g.cout;
    let plane = g.in_h * g.in_w;
    for r in 0..rows {
        let row = r0 + r;
        let ni = row / plane;
        let iy = (row % plane) / g.in_w;
        let ix = row % g.in_w;
        let dst = &mut col[r * k..(r + 1) * k];
        for ky in 0..g.kh {
            let ty = (iy + g.pad_top) as isize - ky as isize;
            let oy = ty / g.stride as isize;
            let row_ok = ty >= 0 && ty % g.stride as isize == 0 && (oy as usize) < g.out_h;
            for kx in 0..g.kw {
                let tx = (ix + g.pad_left) as isize - kx as isize;
                let ox = tx / g.stride as isize;
                let seg = &mut dst[(ky * g.kw + kx) * g.cout..][..g.cout];
                if row_ok && tx >= 0 && tx % g.stride as isize == 0 && (ox as usize) < g.out_w {
                    let src = ((ni * g.out_h + oy as usize) * g.out_w + ox as usize) * g.cout;
                    seg.copy_from_slice(&dy[src..src + g.cout]);
                } else {
                    seg.fill(T::zero());
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(x: &[T], w: &[T], bias: Option<&[T]>, g: &ConvGeometry) -> Vec<T> {
    assert_eq!(x.len(), g.in_rows() * g.cin);
    assert_eq!(w.len(), g.patch_len() * g.cout);
    let k = g.patch_len();
    let cout = g.cout;
    let mut y = vec![T::zero(); g.out_rows() * cout];
    y.par_chunks_mut(ROW_CHUNK * cout)
        .enumerate()
        .for_each(|(chunk, out)| {
            let r0 = chunk * ROW_CHUNK;
            let rows = out.len() / cout;
            let beta = match bias {
                Some(b) => {
                    for row in out.chunks_exact_mut(cout) {
                        row.copy_from_slice(b);
                    }
                    T::one()
                }
                None => T::zero(),
            };
            if g.pointwise() {
                T::gemm(rows, k, cout, &x[r0 * k..], k, 1, w, cout, 1, beta, out, cout, 1);
            } else {
                let mut col = vec![T::zero(); rows * k];
                im2col(x, g, r0, rows, &mut col);
                T::gemm(rows, k, cout, &col, k, 1, w, cout, 1, beta, out, cout, 1);
            }
        });
    y
}

/// Gradient with respect to the convolution input; also the forward pass of
/// the transposed convolution.
pub fn conv2d_backward_input<T: Scalar>(dy: &[T], w: &[T], g: &ConvGeometry) -> Vec<T> {
    assert_eq!(dy.len(), g.out_rows() * g.cout);
    assert_eq!(w.len(), g.patch_len() * g.cout);
    let cin = g.cin;
    let cout = g.cout;
    let mut dx = vec![T::zero(); g.in_rows() * cin];
    if g.pointwise() {
        // dx = dy * w^T
        dx.par_chunks_mut(ROW_CHUNK * cin)
            .enumerate()
            .for_each(|(chunk, out)| {
                let r0 = chunk * ROW_CHUNK;
                let rows = out.len() / cin;
                T::gemm(rows, cout, cin, &dy[r0 * cout..], cout, 1, w, 1, cout, T::zero(), out, cin, 1);
            });
        return dx;
    }
    let taps = g.kh * g.kw;
    // wt[(tap, co), ci] = w[(tap, ci), co]
    let mut wt = vec![T::zero(); taps * cout * cin];
    for tap in 0..taps {
        for ci in 0..cin {
            for co in 0..cout {
                wt[(tap * cout + co) * cin + ci] = w[(tap * cin + ci) * cout + co];
            }
        }
    }
    let k = taps * cout;
    dx.par_chunks_mut(ROW_CHUNK * cin)
        .enumerate()
        .for_each(|(chunk, out)| {
            let r0 = chunk * ROW_CHUNK;
            let rows = out.len() / cin;
            let mut col = vec![T::zero(); rows * k];
            col2im_gather(dy, g, r0, rows, &mut col);
            T::gemm(rows, k, cin, &col, k, 1, &wt, cin, 1, T::zero(), out, cin, 1);
        });
    dx
}

/// Gradients with respect to the kernel and the bias.
pub fn conv2d_backward_weight<T: Scalar>(x: &[T], dy: &[T], g: &ConvGeometry) -> (Vec<T>, Vec<T>) {
    assert_eq!(x.len(), g.in_rows() * g.cin);
    assert_eq!(dy.len(), g.out_rows() * g.cout);
    let k = g.patch_len();
    let cout = g.cout;
    let rows_total = g.out_rows();
    let chunks = rows_total.div_ceil(ROW_CHUNK);
    let partials: Vec<Vec<T>> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let r0 = chunk * ROW_CHUNK;
            let rows = ROW_CHUNK.min(rows_total - r0);
            let mut part = vec![T::zero(); k * cout];
            let d = &dy[r0 * cout..(r0 + rows) * cout];
            if g.pointwise() {
                T::gemm(k, rows, cout, &x[r0 * k..], 1, k, d, cout, 1, T::zero(), &mut part, cout, 1);
            } else {
                let mut col = vec![T::zero(); rows * k];
                im2col(x, g, r0, rows, &mut col);
                T::gemm(k, rows, cout, &col, 1, k, d, cout, 1, T::zero(), &mut part, cout, 1);
            }
            part
        })
        .collect();
    let mut dw = vec![T::zero(); k * cout];
    for part in &partials {
        for (a, &b) in dw.iter_mut().zip(part) {
            *a += b;
        }
    }
    let mut db = vec![T::zero(); cout];
    for row in dy.chunks_exact(cout) {
        for (a, &b) in db.iter_mut().zip(row) {
            *a += b;
        }
    }
    (dw, db)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Direct sliding-window evaluation.
    fn naive_conv(x: &[f64], w: &[f64], g: &ConvGeometry) -> Vec<f64> {
        let mut y = vec![0.0; g.out_rows() * g.cout];
        for n in 0..g.n {
            for oy in 0..g.out_h {
                for ox in 0..g.out_w {
                    for co in 0..g.cout {
                        let mut acc = 0.0;
                        for ky in 0..g.kh {
                            for kx in 0..g.kw {
                                let iy = (oy * g.stride + ky) as isize - g.pad_top as isize;
                                let ix = (ox * g.stride + kx) as isize - g.pad_left as isize;
                                if iy < 0 || ix < 0 || iy as usize >= g.in_h || ix as usize >= g.in_w {
                                    continue;
                                }
                                for ci in 0..g.cin {
                                    let xv = x[((n * g.in_h + iy as usize) * g.in_w + ix as usize) * g.cin + ci];
                                    acc += xv * w[((ky * g.kw + kx) * g.cin + ci) * g.cout + co];
                                }
                            }
                        }
                        y[((n * g.out_h + oy) * g.out_w + ox) * g.cout + co] = acc;
                    }
                }
            }
        }
        y
    }

    fn pseudo(n: usize, seed: f64) -> Vec<f64> {
        (0..n).map(|i| ((i as f64 + 1.0) * seed).sin()).collect()
    }

    #[test]
    fn ones_5x5_same_3x3() {
        let g = ConvGeometry::new([1, 5, 5, 1], [3, 3, 1, 1], 1, Padding::Same).unwrap();
        let y = conv2d_forward(&[1.0f64; 25], &[1.0; 9], None, &g);
        assert_eq!(y[12], 9.0);
        for c in [0, 4, 20, 24] {
            assert_eq!(y[c], 4.0);
        }
        for e in [2, 10, 14, 22] {
            assert_eq!(y[e], 6.0);
        }
    }

    #[test]
    fn matches_naive_over_configs() {
        for &(n, h, w, cin, k, cout, stride, pad) in &[
            (2, 7, 6, 3, 3, 4, 1, Padding::Same),
            (1, 9, 9, 2, 5, 3, 1, Padding::Same),
            (1, 8, 8, 3, 3, 2, 2, Padding::Same),
            (2, 7, 9, 2, 3, 3, 2, Padding::Valid),
            (1, 40, 33, 3, 3, 5, 1, Padding::Same),
            (1, 6, 6, 4, 1, 3, 1, Padding::Same),
        ] {
            let g = ConvGeometry::new([n, h, w, cin], [k, k, cin, cout], stride, pad).unwrap();
            let x = pseudo(g.in_rows() * cin, 0.71);
            let wt = pseudo(g.patch_len() * cout, 1.37);
            let got = conv2d_forward(&x, &wt, None, &g);
            let want = naive_conv(&x, &wt, &g);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "{g:?}");
            }
        }
    }

    #[test]
    fn backward_input_is_adjoint() {
        for &(h, w, cin, k, cout, stride) in &[(6, 5, 2, 3, 3, 1), (8, 8, 3, 3, 2, 2), (7, 7, 2, 5, 2, 1), (5, 5, 3, 1, 4, 1)] {
            let g = ConvGeometry::new([2, h, w, cin], [k, k, cin, cout], stride, Padding::Same).unwrap();
            let x = pseudo(g.in_rows() * cin, 0.3);
            let wt = pseudo(g.patch_len() * cout, 0.9);
            let dy = pseudo(g.out_rows() * cout, 1.7);
            let y = conv2d_forward(&x, &wt, None, &g);
            let dx = conv2d_backward_input(&dy, &wt, &g);
            let lhs: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&dx).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0), "{g:?}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn backward_weight_matches_bilinear_form() {
        // <conv(x; w), dy> is linear in w, so d/dw equals the form's coefficients.
        let g = ConvGeometry::new([2, 6, 7, 2], [3, 3, 2, 3], 1, Padding::Same).unwrap();
        let x = pseudo(g.in_rows() * 2, 0.45);
        let dy = pseudo(g.out_rows() * 3, 0.8);
        let (dw, db) = conv2d_backward_weight(&x, &dy, &g);
        for idx in 0..dw.len() {
            let mut e = vec![0.0; dw.len()];
            e[idx] = 1.0;
            let y = naive_conv(&x, &e, &g);
            let want: f64 = y.iter().zip(&dy).map(|(a, b)| a * b).sum();
            assert!((dw[idx] - want).abs() < 1e-10);
        }
        for co in 0..3 {
            let want: f64 = dy.iter().skip(co).step_by(3).sum();
            assert!((db[co] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn transpose_geometry_doubles() {
        let g = conv_transpose_geometry([1, 16, 16, 8], [3, 3, 4, 8], 2).unwrap();
        assert_eq!((g.in_h, g.in_w, g.cin), (32, 32, 4));
        assert_eq!((g.out_h, g.out_w, g.cout), (16, 16, 8));
        assert_eq!(g.pad_top, 0);
    }

    #[test]
    fn rejects_bad_kernels() {
        assert!(ConvGeometry::new([1, 4, 4, 1], [2, 2, 1, 1], 1, Padding::Same).is_err());
        assert!(ConvGeometry::new([1, 4, 4, 2], [3, 3, 1, 1], 1, Padding::Same).is_err());
        assert!(ConvGeometry::new([1, 4, 4, 1], [3, 3, 1, 1], 0, Padding::Same).is_err());
    }
}
