//! Reverse-mode gradient tape.
//!
//! Every op appends a node holding its output value and enough context to
//! push gradients back to its inputs. `backward` walks the node list once,
//! in reverse execution order.

use crate::error::shape_err;
use crate::ops::{self, BatchStats, ConvGeometry, Padding};
use crate::{Error, Result, Scalar, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Batch normalization statistics source.
#[derive(Clone, Debug)]
pub enum BnMode<'a, T> {
    /// Normalize with the batch's own statistics.
    Train { eps: T },
    /// Normalize with fixed running statistics.
    Infer { mean: &'a [T], var: &'a [T], eps: T },
}

enum Op<T> {
    Leaf,
    Conv2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    ConvTranspose2d {
        x: Var,
        w: Var,
        b: Option<Var>,
        geom: ConvGeometry,
    },
    MaxPool {
        x: Var,
        argmax: Vec<u32>,
    },
    BatchNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        mean: Vec<T>,
        inv_std: Vec<T>,
        batch_stats: bool,
    },
    Relu(Var),
    Sigmoid(Var),
    Concat {
        a: Var,
        b: Var,
    },
    GlobalAvgPool(Var),
    Dense {
        x: Var,
        w: Var,
        b: Var,
    },
    ScaleChannels {
        x: Var,
        gate: Var,
    },
    ScaleSites {
        x: Var,
        gate: Var,
    },
    Add(Var, Var),
    Mul(Var, Var),
    Maximum(Var, Var),
    Scale(Var, T),
    Sum(Var),
    Mean(Var),
    Bce {
        p: Var,
        target: Vec<T>,
    },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every node that required them.
pub struct Gradients<T> {
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

pub const BCE_CLAMP: f64 = 1e-7;

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite output at node {} ({})",
                self.nodes.len(),
                op_name(&op)
            )));
        }
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Ok(Var(self.nodes.len() - 1))
    }

    /// A differentiable input (parameter or checked input).
    pub fn leaf(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Leaf, true)
    }

    /// A constant input; no gradient is computed for it.
    pub fn constant(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push(t, Op::Leaf, false)
    }

    fn dims4(&self, v: Var) -> Result<[usize; 4]> {
        self.value(v).nhwc()
    }

    pub fn conv2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize, padding: Padding) -> Result<Var> {
        let xd = self.dims4(x)?;
        let wd = self.dims4(w)?;
        let geom = ConvGeometry::new(xd, wd, stride, padding)?;
        if let Some(b) = b {
            if self.value(b).len() != geom.cout {
                return Err(shape_err!("conv bias has {} values, need {}", self.value(b).len(), geom.cout));
            }
        }
        let y = ops::conv2d_forward(
            self.value(x).data(),
            self.value(w).data(),
            b.map(|b| self.value(b).data()),
            &geom,
        );
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(Tensor::new(geom.output_dims(), y)?, Op::Conv2d { x, w, b, geom }, rg)
    }

    /// Transposed convolution, kernel `kh x kw x cout x cin`; output spatial
    /// dims are `stride` times the input's.
    pub fn conv_transpose2d(&mut self, x: Var, w: Var, b: Option<Var>, stride: usize) -> Result<Var> {
        let xd = self.dims4(x)?;
        let wd = self.dims4(w)?;
        let geom = ops::conv_transpose_geometry(xd, wd, stride)?;
        let mut y = ops::conv2d_backward_input(self.value(x).data(), self.value(w).data(), &geom);
        if let Some(b) = b {
            let bv = self.value(b).data();
            if bv.len() != geom.cin {
                return Err(shape_err!("transposed conv bias has {} values, need {}", bv.len(), geom.cin));
            }
            for row in y.chunks_exact_mut(geom.cin) {
                for (v, &bb) in row.iter_mut().zip(bv) {
                    *v += bb;
                }
            }
        }
        let rg = self.rg(x) || self.rg(w) || b.is_some_and(|b| self.rg(b));
        self.push(Tensor::new(geom.input_dims(), y)?, Op::ConvTranspose2d { x, w, b, geom }, rg)
    }

    pub fn maxpool2x2(&mut self, x: Var) -> Result<Var> {
        let [n, h, w, c] = self.dims4(x)?;
        let (y, argmax) = ops::maxpool2x2_forward(self.value(x).data(), [n, h, w, c])?;
        let rg = self.rg(x);
        self.push(Tensor::new(vec![n, h / 2, w / 2, c], y)?, Op::MaxPool { x, argmax }, rg)
    }

    /// Per-channel batch normalization over all leading axes. In training
    /// mode also returns the batch statistics for running-average updates.
    pub fn batchnorm(
        &mut self,
        x: Var,
        gamma: Var,
        beta: Var,
        mode: BnMode<'_, T>,
    ) -> Result<(Var, Option<BatchStats<T>>)> {
        let xv = self.value(x);
        let c = *xv.dims().last().unwrap();
        if self.value(gamma).len() != c || self.value(beta).len() != c {
            return Err(shape_err!("batchnorm affine params do not match {c} channels"));
        }
        let (stats, eps, batch_stats) = match mode {
            BnMode::Train { eps } => (ops::channel_stats(xv.data(), c), eps, true),
            BnMode::Infer { mean, var, eps } => {
                if mean.len() != c || var.len() != c {
                    return Err(shape_err!("batchnorm running stats do not match {c} channels"));
                }
                (
                    BatchStats {
                        mean: mean.to_vec(),
                        var: var.to_vec(),
                    },
                    eps,
                    false,
                )
            }
        };
        let (y, inv_std) = ops::batchnorm_forward(
            xv.data(),
            c,
            &stats.mean,
            &stats.var,
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        );
        let dims = xv.dims().to_vec();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        let out = self.push(
            Tensor::new(dims, y)?,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean: stats.mean.clone(),
                inv_std,
                batch_stats,
            },
            rg,
        )?;
        Ok((out, batch_stats.then_some(stats)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.value(x).map(|v| v.max(T::zero()));
        let rg = self.rg(x);
        self.push(y, Op::Relu(x), rg)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        // keep the output strictly inside (0, 1) where the float rounds to an end
        let hi = T::one() - T::epsilon() / T::lit(2.0);
        let lo = T::min_positive_value();
        let y = self.value(x).map(|v| (T::one() / (T::one() + (-v).exp())).min(hi).max(lo));
        let rg = self.rg(x);
        self.push(y, Op::Sigmoid(x), rg)
    }

    /// Stacks `a` then `b` along the last axis.
    pub fn concat_channels(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ad, bd) = (self.value(a).dims(), self.value(b).dims());
        if ad.len() != bd.len() || ad[..ad.len() - 1] != bd[..bd.len() - 1] {
            return Err(shape_err!("concat: {ad:?} vs {bd:?}"));
        }
        let ca = *ad.last().unwrap();
        let cb = *bd.last().unwrap();
        let mut dims = ad.to_vec();
        *dims.last_mut().unwrap() = ca + cb;
        let mut data = Vec::with_capacity(self.value(a).len() + self.value(b).len());
        for (ra, rb) in self
            .value(a)
            .data()
            .chunks_exact(ca)
            .zip(self.value(b).data().chunks_exact(cb))
        {
            data.extend_from_slice(ra);
            data.extend_from_slice(rb);
        }
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::new(dims, data)?, Op::Concat { a, b }, rg)
    }

    /// Spatial mean per channel: `n x h x w x c -> n x 1 x 1 x c`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var> {
        let [n, h, w, c] = self.dims4(x)?;
        let inv = T::one() / T::lit((h * w) as f64);
        let mut y = vec![T::zero(); n * c];
        for (i, row) in self.value(x).data().chunks_exact(c).enumerate() {
            let ni = i / (h * w);
            for (ch, &v) in row.iter().enumerate() {
                y[ni * c + ch] += v;
            }
        }
        y.iter_mut().for_each(|v| *v *= inv);
        let rg = self.rg(x);
        self.push(Tensor::new(vec![n, 1, 1, c], y)?, Op::GlobalAvgPool(x), rg)
    }

    /// Affine map on the last axis: `x (.. x C) * w (C x K) + b (K)`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let xv = self.value(x);
        let c = *xv.dims().last().unwrap();
        let wd = self.value(w).dims();
        if wd.len() != 2 || wd[0] != c {
            return Err(shape_err!("dense weight {wd:?} incompatible with input {:?}", xv.dims()));
        }
        let k = wd[1];
        if self.value(b).len() != k {
            return Err(shape_err!("dense bias must have {k} values"));
        }
        let rows = xv.len() / c;
        let mut y: Vec<T> = self.value(b).data().iter().copied().cycle().take(rows * k).collect();
        T::gemm(rows, c, k, xv.data(), c, 1, self.value(w).data(), k, 1, T::one(), &mut y, k, 1);
        let mut dims = xv.dims().to_vec();
        *dims.last_mut().unwrap() = k;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(Tensor::new(dims, y)?, Op::Dense { x, w, b }, rg)
    }

    /// `x[n,h,w,c] * gate[n,0,0,c]`
    pub fn scale_channels(&mut self, x: Var, gate: Var) -> Result<Var> {
        let [n, h, w, c] = self.dims4(x)?;
        if self.value(gate).dims() != [n, 1, 1, c] {
            return Err(shape_err!("channel gate {:?} for input {:?}", self.value(gate).dims(), [n, h, w, c]));
        }
        let g = self.value(gate).data();
        let y: Vec<T> = self
            .value(x)
            .data()
            .chunks_exact(c)
            .enumerate()
            .flat_map(|(i, row)| {
                let gr = &g[(i / (h * w)) * c..][..c];
                row.iter().zip(gr).map(|(&a, &b)| a * b)
            })
            .collect();
        let rg = self.rg(x) || self.rg(gate);
        self.push(Tensor::new(vec![n, h, w, c], y)?, Op::ScaleChannels { x, gate }, rg)
    }

    /// `x[n,h,w,c] * gate[n,h,w,0]`
    pub fn scale_sites(&mut self, x: Var, gate: Var) -> Result<Var> {
        let [n, h, w, c] = self.dims4(x)?;
        if self.value(gate).dims() != [n, h, w, 1] {
            return Err(shape_err!("spatial gate {:?} for input {:?}", self.value(gate).dims(), [n, h, w, c]));
        }
        let g = self.value(gate).data();
        let y: Vec<T> = self
            .value(x)
            .data()
            .chunks_exact(c)
            .zip(g)
            .flat_map(|(row, &s)| row.iter().map(move |&a| a * s))
            .collect();
        let rg = self.rg(x) || self.rg(gate);
        self.push(Tensor::new(vec![n, h, w, c], y)?, Op::ScaleSites { x, gate }, rg)
    }

    fn zip_same(&self, a: Var, b: Var, what: &str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.dims() != bv.dims() {
            return Err(shape_err!("{what}: {:?} vs {:?}", av.dims(), bv.dims()));
        }
        Tensor::new(
            av.dims().to_vec(),
            av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect(),
        )
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_same(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Add(a, b), rg)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Mul(a, b), rg)
    }

    /// Elementwise maximum; ties route the gradient to `a`.
    pub fn maximum(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = self.zip_same(a, b, "maximum", |x, y| if y > x { y } else { x })?;
        let rg = self.rg(a) || self.rg(b);
        self.push(y, Op::Maximum(a, b), rg)
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let y = self.value(x).map(|v| v * c);
        let rg = self.rg(x);
        self.push(y, Op::Scale(x, c), rg)
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Sum(x), rg)
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let xv = self.value(x);
        let s: T = xv.data().iter().copied().sum::<T>() / T::lit(xv.len() as f64);
        let rg = self.rg(x);
        self.push(Tensor::scalar(s), Op::Mean(x), rg)
    }

    /// Mean binary cross-entropy of probabilities `p` against `target`,
    /// with `p` clamped to `[1e-7, 1 - 1e-7]`.
    pub fn bce(&mut self, p: Var, target: &Tensor<T>) -> Result<Var> {
        let pv = self.value(p);
        if pv.dims() != target.dims() {
            return Err(shape_err!("bce: prediction {:?} vs target {:?}", pv.dims(), target.dims()));
        }
        let loss = bce_value(pv.data(), target.data());
        let rg = self.rg(p);
        self.push(
            Tensor::scalar(loss),
            Op::Bce {
                p,
                target: target.data().to_vec(),
            },
            rg,
        )
    }

    /// Gradients of the scalar `loss` with respect to every node that
    /// requires them.
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        if self.value(loss).len() != 1 {
            return Err(Error::Usage(format!(
                "backward needs a scalar loss, got dims {:?}",
                self.value(loss).dims()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::scalar(T::one()));
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.backprop_node(i, &g, &mut grads)?;
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn acc(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Vec<T>) -> Result<()> {
        if !self.rg(v) {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => {
                for (a, b) in existing.data_mut().iter_mut().zip(g) {
                    *a += b;
                }
            }
            slot @ None => *slot = Some(Tensor::new(self.value(v).dims().to_vec(), g)?),
        }
        Ok(())
    }

    fn backprop_node(&self, i: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[i];
        let gd = g.data();
        match &node.op {
            Op::Leaf => {}
            Op::Conv2d { x, w, b, geom } => {
                if self.rg(*x) {
                    let dx = ops::conv2d_backward_input(gd, self.value(*w).data(), geom);
                    self.acc(grads, *x, dx)?;
                }
                if self.rg(*w) || b.is_some_and(|b| self.rg(b)) {
                    let (dw, db) = ops::conv2d_backward_weight(self.value(*x).data(), gd, geom);
                    self.acc(grads, *w, dw)?;
                    if let Some(b) = b {
                        self.acc(grads, *b, db)?;
                    }
                }
            }
            Op::ConvTranspose2d { x, w, b, geom } => {
                // forward was the input-adjoint of `geom`'s convolution
                if self.rg(*x) {
                    let dx = ops::conv2d_forward(gd, self.value(*w).data(), None, geom);
                    self.acc(grads, *x, dx)?;
                }
                if self.rg(*w) {
                    let (dw, _) = ops::conv2d_backward_weight(gd, self.value(*x).data(), geom);
                    self.acc(grads, *w, dw)?;
                }
                if let Some(b) = b {
                    let mut db = vec![T::zero(); geom.cin];
                    for row in gd.chunks_exact(geom.cin) {
                        for (a, &v) in db.iter_mut().zip(row) {
                            *a += v;
                        }
                    }
                    self.acc(grads, *b, db)?;
                }
            }
            Op::MaxPool { x, argmax } => {
                let dx = ops::maxpool2x2_backward(gd, argmax, self.value(*x).len());
                self.acc(grads, *x, dx)?;
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                mean,
                inv_std,
                batch_stats,
            } => {
                let c = mean.len();
                let (dx, dgamma, dbeta) = ops::batchnorm_backward(
                    self.value(*x).data(),
                    gd,
                    c,
                    mean,
                    inv_std,
                    self.value(*gamma).data(),
                    *batch_stats,
                );
                self.acc(grads, *x, dx)?;
                self.acc(grads, *gamma, dgamma)?;
                self.acc(grads, *beta, dbeta)?;
            }
            Op::Relu(x) => {
                let dx = self
                    .value(*x)
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&v, &g)| if v > T::zero() { g } else { T::zero() })
                    .collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Sigmoid(x) => {
                let dx = node
                    .value
                    .data()
                    .iter()
                    .zip(gd)
                    .map(|(&s, &g)| g * s * (T::one() - s))
                    .collect();
                self.acc(grads, *x, dx)?;
            }
            Op::Concat { a, b } => {
                let ca = *self.value(*a).dims().last().unwrap();
                let cb = *self.value(*b).dims().last().unwrap();
                let mut da = Vec::with_capacity(self.value(*a).len());
                let mut db = Vec::with_capacity(self.value(*b).len());
                for row in gd.chunks_exact(ca + cb) {
                    da.extend_from_slice(&row[..ca]);
                    db.extend_from_slice(&row[ca..]);
                }
                self.acc(grads, *a, da)?;
                self.acc(grads, *b, db)?;
            }
            Op::GlobalAvgPool(x) => {
                let [_, h, w, c] = self.dims4(*x)?;
                let inv = T::one() / T::lit((h * w) as f64);
                let mut dx = Vec::with_capacity(self.value(*x).len());
                for i in 0..self.value(*x).len() / c {
                    let ni = i / (h * w);
                    dx.extend(gd[ni * c..(ni + 1) * c].iter().map(|&v| v * inv));
                }
                self.acc(grads, *x, dx)?;
            }
            Op::Dense { x, w, b } => {
                let xv = self.value(*x);
                let c = *xv.dims().last().unwrap();
                let k = self.value(*w).dims()[1];
                let rows = xv.len() / c;
                if self.rg(*x) {
                    let mut dx = vec![T::zero(); rows * c];
                    T::gemm(rows, k, c, gd, k, 1, self.value(*w).data(), 1, k, T::zero(), &mut dx, c, 1);
                    self.acc(grads, *x, dx)?;
                }
                if self.rg(*w) {
                    let mut dw = vec![T::zero(); c * k];
                    T::gemm(c, rows, k, xv.data(), 1, c, gd, k, 1, T::zero(), &mut dw, k, 1);
                    self.acc(grads, *w, dw)?;
                }
                let mut db = vec![T::zero(); k];
                for row in gd.chunks_exact(k) {
                    for (a, &v) in db.iter_mut().zip(row) {
                        *a += v;
                    }
                }
                self.acc(grads, *b, db)?;
            }
            Op::ScaleChannels { x, gate } => {
                let [_, h, w, c] = self.dims4(*x)?;
                let xv = self.value(*x).data();
                let gv = self.value(*gate).data();
                let mut dx = Vec::with_capacity(xv.len());
                let mut dgate = vec![T::zero(); gv.len()];
                for (i, (xr, gr)) in xv.chunks_exact(c).zip(gd.chunks_exact(c)).enumerate() {
                    let base = (i / (h * w)) * c;
                    for ch in 0..c {
                        dx.push(gr[ch] * gv[base + ch]);
                        dgate[base + ch] += gr[ch] * xr[ch];
                    }
                }
                self.acc(grads, *x, dx)?;
                self.acc(grads, *gate, dgate)?;
            }
            Op::ScaleSites { x, gate } => {
                let c = *self.value(*x).dims().last().unwrap();
                let xv = self.value(*x).data();
                let gv = self.value(*gate).data();
                let mut dx = Vec::with_capacity(xv.len());
                let mut dgate = Vec::with_capacity(gv.len());
                for ((xr, gr), &s) in xv.chunks_exact(c).zip(gd.chunks_exact(c)).zip(gv) {
                    let mut acc = T::zero();
                    for ch in 0..c {
                        dx.push(gr[ch] * s);
                        acc += gr[ch] * xr[ch];
                    }
                    dgate.push(acc);
                }
                self.acc(grads, *x, dx)?;
                self.acc(grads, *gate, dgate)?;
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, gd.to_vec())?;
                self.acc(grads, *b, gd.to_vec())?;
            }
            Op::Mul(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                self.acc(grads, *a, gd.iter().zip(bv).map(|(&g, &y)| g * y).collect())?;
                self.acc(grads, *b, gd.iter().zip(av).map(|(&g, &x)| g * x).collect())?;
            }
            Op::Maximum(a, b) => {
                let av = self.value(*a).data();
                let bv = self.value(*b).data();
                let mut da = Vec::with_capacity(gd.len());
                let mut db = Vec::with_capacity(gd.len());
                for ((&g, &x), &y) in gd.iter().zip(av).zip(bv) {
                    if y > x {
                        da.push(T::zero());
                        db.push(g);
                    } else {
                        da.push(g);
                        db.push(T::zero());
                    }
                }
                self.acc(grads, *a, da)?;
                self.acc(grads, *b, db)?;
            }
            Op::Scale(x, c) => {
                self.acc(grads, *x, gd.iter().map(|&g| g * *c).collect())?;
            }
            Op::Sum(x) => {
                self.acc(grads, *x, vec![gd[0]; self.value(*x).len()])?;
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.acc(grads, *x, vec![gd[0] / T::lit(n as f64); n])?;
            }
            Op::Bce { p, target } => {
                let pv = self.value(*p).data();
                let lo = T::lit(BCE_CLAMP);
                let hi = T::one() - lo;
                let scale = gd[0] / T::lit(pv.len() as f64);
                let dp = pv
                    .iter()
                    .zip(target)
                    .map(|(&pp, &y)| {
                        if pp > lo && pp < hi {
                            scale * (pp - y) / (pp * (T::one() - pp))
                        } else {
                            T::zero()
                        }
                    })
                    .collect();
                self.acc(grads, *p, dp)?;
            }
        }
        Ok(())
    }
}

/// Mean clamped binary cross-entropy, accumulated in the element type.
pub fn bce_value<T: Scalar>(p: &[T], y: &[T]) -> T {
    let lo = T::lit(BCE_CLAMP);
    let hi = T::one() - lo;
    let total: T = p
        .iter()
        .zip(y)
        .map(|(&pp, &yy)| {
            let pc = pp.max(lo).min(hi);
            -(yy * pc.ln() + (T::one() - yy) * (T::one() - pc).ln())
        })
        .sum();
    total / T::lit(p.len() as f64)
}

fn op_name<T>(op: &Op<T>) -> &'static str {
    match op {
        Op::Leaf => "leaf",
        Op::Conv2d { .. } => "conv2d",
        Op::ConvTranspose2d { .. } => "conv_transpose2d",
        Op::MaxPool { .. } => "maxpool2x2",
        Op::BatchNorm { .. } => "batchnorm",
        Op::Relu(_) => "relu",
        Op::Sigmoid(_) => "sigmoid",
        Op::Concat { .. } => "concat",
        Op::GlobalAvgPool(_) => "global_avg_pool",
        Op::Dense { .. } => "dense",
        Op::ScaleChannels { .. } => "scale_channels",
        Op::ScaleSites { .. } => "scale_sites",
        Op::Add(..) => "add",
        Op::Mul(..) => "mul",
        Op::Maximum(..) => "maximum",
        Op::Scale(..) => "scale",
        Op::Sum(_) => "sum",
        Op::Mean(_) => "mean",
        Op::Bce { .. } => "bce",
    }
}
