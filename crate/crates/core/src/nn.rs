//! Parameter storage and the composite blocks: conv-BN-relu (3x3, or the
//! mixed 3x3/5x5 variant), channel/spatial squeeze-excitation and the
//! transposed-conv upsampler.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ops::{BatchStats, Padding};
use crate::tape::{BnMode, Tape, Var};
use crate::{Error, Result, Scalar, Tensor};

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.99;

/// Number of 5x5 filters in a mixed-kernel block.
pub const WIDE_FILTERS: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
}

/// Running statistics of one batchnorm layer; its affine terms live in the
/// parameter list.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormState<T> {
    pub name: String,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
}

impl<T: Scalar> BatchNormState<T> {
    pub fn new(name: impl Into<String>, channels: usize) -> Self {
        Self {
            name: name.into(),
            running_mean: vec![T::zero(); channels],
            running_var: vec![T::one(); channels],
        }
    }

    /// `running = momentum * running + (1 - momentum) * batch`
    pub fn update(&mut self, batch: &BatchStats<T>) {
        let m = T::lit(BN_MOMENTUM);
        let k = T::one() - m;
        for (r, &b) in self.running_mean.iter_mut().zip(&batch.mean) {
            *r = m * *r + k * b;
        }
        for (r, &b) in self.running_var.iter_mut().zip(&batch.var) {
            *r = (m * *r + k * b).max(T::zero());
        }
    }
}

/// Ordered, uniquely named parameters plus batchnorm running state.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    bn: Vec<BatchNormState<T>>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self {
            params: Vec::new(),
            bn: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn params(&self) -> &[Parameter<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter<T>] {
        &mut self.params
    }

    pub fn bn_states(&self) -> &[BatchNormState<T>] {
        &self.bn
    }

    pub fn bn_states_mut(&mut self) -> &mut [BatchNormState<T>] {
        &mut self.bn
    }

    pub fn get(&self, name: &str) -> Option<&Parameter<T>> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn add(&mut self, name: String, value: Tensor<T>) -> Result<usize> {
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter name {name}")));
        }
        self.index.insert(name.clone(), self.params.len());
        self.params.push(Parameter { name, value });
        Ok(self.params.len() - 1)
    }

    fn add_bn(&mut self, name: String, c: usize) -> usize {
        self.bn.push(BatchNormState::new(name, c));
        self.bn.len() - 1
    }

    /// Registers every parameter on `tape` as a differentiable leaf.
    pub fn leaves(&self, tape: &mut Tape<T>) -> Result<Vec<Var>> {
        self.params.iter().map(|p| tape.leaf(p.value.clone())).collect()
    }

    /// Registers every parameter on `tape` as a constant.
    pub fn constants(&self, tape: &mut Tape<T>) -> Result<Vec<Var>> {
        self.params.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                })
                .collect(),
            bn: self
                .bn
                .iter()
                .map(|b| BatchNormState {
                    name: b.name.clone(),
                    running_mean: b.running_mean.iter().map(|&v| U::lit(v.as_f64())).collect(),
                    running_var: b.running_var.iter().map(|&v| U::lit(v.as_f64())).collect(),
                })
                .collect(),
            index: self.index.clone(),
        }
    }
}

/// Creates parameters with He-uniform weights, zero biases, unit gamma and
/// zero beta.
pub struct Initializer<'a, T> {
    pub store: &'a mut ParamStore<T>,
    pub rng: &'a mut ChaCha8Rng,
}

impl<T: Scalar> Initializer<'_, T> {
    fn he_uniform(&mut self, name: String, dims: Vec<usize>, fan_in: usize) -> Result<usize> {
        let limit = (6.0 / fan_in as f64).sqrt();
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| T::lit(self.rng.random_range(-limit..limit))).collect();
        self.store.add(name, Tensor::new(dims, data)?)
    }

    fn constant(&mut self, name: String, dims: Vec<usize>, v: f64) -> Result<usize> {
        self.store.add(name, Tensor::full(dims, T::lit(v))?)
    }

    pub fn conv(&mut self, name: &str, k: usize, cin: usize, cout: usize) -> Result<Conv> {
        Ok(Conv {
            w: self.he_uniform(format!("{name}.w"), vec![k, k, cin, cout], k * k * cin)?,
            b: self.constant(format!("{name}.b"), vec![cout], 0.0)?,
        })
    }

    pub fn conv_transpose(&mut self, name: &str, cin: usize, cout: usize) -> Result<ConvTranspose> {
        Ok(ConvTranspose {
            w: self.he_uniform(format!("{name}.w"), vec![3, 3, cout, cin], 9 * cin)?,
            b: self.constant(format!("{name}.b"), vec![cout], 0.0)?,
        })
    }

    pub fn dense(&mut self, name: &str, cin: usize, cout: usize) -> Result<Dense> {
        Ok(Dense {
            w: self.he_uniform(format!("{name}.w"), vec![cin, cout], cin)?,
            b: self.constant(format!("{name}.b"), vec![cout], 0.0)?,
        })
    }

    pub fn batchnorm(&mut self, name: &str, c: usize) -> Result<BatchNorm> {
        Ok(BatchNorm {
            gamma: self.constant(format!("{name}.gamma"), vec![c], 1.0)?,
            beta: self.constant(format!("{name}.beta"), vec![c], 0.0)?,
            state: self.store.add_bn(name.to_string(), c),
        })
    }
}

/// Everything a forward pass needs: the tape, one var per parameter (in
/// store order), running stats and the mode. Batch statistics gathered in
/// training mode are collected per batchnorm layer.
pub struct Ctx<'a, T> {
    pub tape: &'a mut Tape<T>,
    pub params: &'a [Var],
    pub bn: &'a [BatchNormState<T>],
    pub mode: Mode,
    pub batch_stats: Vec<Option<BatchStats<T>>>,
}

impl<'a, T: Scalar> Ctx<'a, T> {
    pub fn new(tape: &'a mut Tape<T>, params: &'a [Var], bn: &'a [BatchNormState<T>], mode: Mode) -> Self {
        Self {
            tape,
            params,
            bn,
            mode,
            batch_stats: vec![None; bn.len()],
        }
    }
}

#[derive(Clone, Debug)]
pub struct Conv {
    pub w: usize,
    pub b: usize,
}

impl Conv {
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        cx.tape
            .conv2d(x, cx.params[self.w], Some(cx.params[self.b]), 1, Padding::Same)
    }
}

#[derive(Clone, Debug)]
pub struct ConvTranspose {
    pub w: usize,
    pub b: usize,
}

impl ConvTranspose {
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        cx.tape
            .conv_transpose2d(x, cx.params[self.w], Some(cx.params[self.b]), 2)
    }
}

#[derive(Clone, Debug)]
pub struct Dense {
    pub w: usize,
    pub b: usize,
}

impl Dense {
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        cx.tape.dense(x, cx.params[self.w], cx.params[self.b])
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm {
    pub gamma: usize,
    pub beta: usize,
    pub state: usize,
}

impl BatchNorm {
    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let eps = T::lit(BN_EPS);
        let st = &cx.bn[self.state];
        let mode = match cx.mode {
            Mode::Train => BnMode::Train { eps },
            Mode::Infer => BnMode::Infer {
                mean: &st.running_mean,
                var: &st.running_var,
                eps,
            },
        };
        let (y, stats) = cx
            .tape
            .batchnorm(x, cx.params[self.gamma], cx.params[self.beta], mode)?;
        if stats.is_some() {
            cx.batch_stats[self.state] = stats;
        }
        Ok(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    /// 3x3 convolution only.
    M1,
    /// `out - 4` filters at 3x3 and 4 filters at 5x5, concatenated.
    M2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvBlockSpec {
    pub kind: BlockKind,
    pub out_channels: usize,
}

impl ConvBlockSpec {
    pub fn validate(&self) -> Result<()> {
        if self.out_channels == 0 {
            return Err(Error::Config("conv block needs at least one output channel".into()));
        }
        if self.kind == BlockKind::M2 && self.out_channels < 2 * WIDE_FILTERS {
            return Err(Error::Config(format!(
                "mixed-kernel block needs at least {} output channels, got {}",
                2 * WIDE_FILTERS,
                self.out_channels
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
enum BlockConvs {
    M1(Conv),
    M2 { narrow: Conv, wide: Conv },
}

/// conv -> batchnorm -> relu.
#[derive(Clone, Debug)]
pub struct ConvBlock {
    convs: BlockConvs,
    bn: BatchNorm,
}

impl ConvBlock {
    pub fn new<T: Scalar>(init: &mut Initializer<'_, T>, name: &str, cin: usize, spec: ConvBlockSpec) -> Result<Self> {
        spec.validate()?;
        let convs = match spec.kind {
            BlockKind::M1 => BlockConvs::M1(init.conv(&format!("{name}.conv"), 3, cin, spec.out_channels)?),
            BlockKind::M2 => BlockConvs::M2 {
                narrow: init.conv(&format!("{name}.conv3"), 3, cin, spec.out_channels - WIDE_FILTERS)?,
                wide: init.conv(&format!("{name}.conv5"), 5, cin, WIDE_FILTERS)?,
            },
        };
        let bn = init.batchnorm(&format!("{name}.bn"), spec.out_channels)?;
        Ok(Self { convs, bn })
    }

    /// The convolution part alone, before normalization.
    pub fn convolve<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        match &self.convs {
            BlockConvs::M1(c) => c.forward(cx, x),
            BlockConvs::M2 { narrow, wide } => {
                let a = narrow.forward(cx, x)?;
                let b = wide.forward(cx, x)?;
                cx.tape.concat_channels(a, b)
            }
        }
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let y = self.convolve(cx, x)?;
        let y = self.bn.forward(cx, y)?;
        cx.tape.relu(y)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Combine {
    #[default]
    Add,
    Max,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScseSpec {
    pub reduction: usize,
    #[serde(default)]
    pub combine: Combine,
}

impl Default for ScseSpec {
    fn default() -> Self {
        Self {
            reduction: 2,
            combine: Combine::Add,
        }
    }
}

impl ScseSpec {
    pub fn hidden(&self, channels: usize) -> Result<usize> {
        if self.reduction == 0 || channels / self.reduction == 0 {
            return Err(Error::Config(format!(
                "reduction {} leaves no hidden units at width {channels}",
                self.reduction
            )));
        }
        Ok(channels / self.reduction)
    }
}

/// Concurrent channel and spatial squeeze-excitation.
#[derive(Clone, Debug)]
pub struct Scse {
    fc1: Dense,
    fc2: Dense,
    spatial: Conv,
    combine: Combine,
}

impl Scse {
    pub fn new<T: Scalar>(init: &mut Initializer<'_, T>, name: &str, c: usize, spec: ScseSpec) -> Result<Self> {
        let hidden = spec.hidden(c)?;
        Ok(Self {
            fc1: init.dense(&format!("{name}.cse.fc1"), c, hidden)?,
            fc2: init.dense(&format!("{name}.cse.fc2"), hidden, c)?,
            spatial: init.conv(&format!("{name}.sse"), 1, c, 1)?,
            combine: spec.combine,
        })
    }

    /// Per-channel gate in (0,1), shape `n x 1 x 1 x c`.
    pub fn channel_gate<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let s = cx.tape.global_avg_pool(x)?;
        let h = self.fc1.forward(cx, s)?;
        let h = cx.tape.relu(h)?;
        let g = self.fc2.forward(cx, h)?;
        cx.tape.sigmoid(g)
    }

    /// Per-site gate in (0,1), shape `n x h x w x 1`.
    pub fn spatial_gate<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let g = self.spatial.forward(cx, x)?;
        cx.tape.sigmoid(g)
    }

    pub fn cse<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let g = self.channel_gate(cx, x)?;
        cx.tape.scale_channels(x, g)
    }

    pub fn sse<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let g = self.spatial_gate(cx, x)?;
        cx.tape.scale_sites(x, g)
    }

    pub fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let c = self.cse(cx, x)?;
        let s = self.sse(cx, x)?;
        match self.combine {
            Combine::Add => cx.tape.add(c, s),
            Combine::Max => cx.tape.maximum(c, s),
        }
    }
}
