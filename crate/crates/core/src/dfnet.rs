//! The U-shaped segmentation network in its two variants, full-image
//! prediction and fusion.

use forgenet_imaging::{resize_plane_bilinear, ImageRgb8};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::shape_err;
use crate::mask::ProbabilityMask;
use crate::nn::{Conv, ConvBlock, ConvBlockSpec, ConvTranspose, Ctx, Initializer, Mode, ParamStore, Scse, ScseSpec};
use crate::ops::BatchStats;
use crate::tape::{Tape, Var};
use crate::{Error, Result, Scalar, Tensor};

pub use crate::nn::BlockKind as Arch;

/// Number of downsampling stages.
pub const DEPTH: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArchConfig {
    pub arch: Arch,
    pub input_size: usize,
    /// Four encoder widths followed by the bottleneck width.
    pub stage_widths: Vec<usize>,
    #[serde(default)]
    pub scse: ScseSpec,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::new(Arch::M1)
    }
}

impl ArchConfig {
    pub fn new(arch: Arch) -> Self {
        Self {
            arch,
            input_size: 256,
            stage_widths: vec![16, 32, 64, 128, 256],
            scse: ScseSpec::default(),
            seed: 0,
        }
    }

    /// Small widths for tests and desk-scale experiments.
    pub fn toy(arch: Arch, input_size: usize) -> Self {
        Self {
            input_size,
            stage_widths: vec![8, 16, 32, 64, 128],
            ..Self::new(arch)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || !self.input_size.is_multiple_of(1 << DEPTH) {
            return Err(Error::Config(format!(
                "input size {} must be a positive multiple of {}",
                self.input_size,
                1 << DEPTH
            )));
        }
        if self.stage_widths.len() != DEPTH + 1 {
            return Err(Error::Config(format!(
                "expected {} stage widths, got {}",
                DEPTH + 1,
                self.stage_widths.len()
            )));
        }
        if self.stage_widths[0] == 0 || self.stage_widths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config(format!(
                "stage widths must be positive and strictly increasing: {:?}",
                self.stage_widths
            )));
        }
        for &w in &self.stage_widths {
            ConvBlockSpec {
                kind: self.arch,
                out_channels: w,
            }
            .validate()?;
            self.scse.hidden(w)?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
struct Stage {
    blocks: [ConvBlock; 2],
    scse: Scse,
}

impl Stage {
    fn new<T: Scalar>(init: &mut Initializer<'_, T>, name: &str, cin: usize, width: usize, cfg: &ArchConfig) -> Result<Self> {
        let spec = ConvBlockSpec {
            kind: cfg.arch,
            out_channels: width,
        };
        Ok(Self {
            blocks: [
                ConvBlock::new(init, &format!("{name}.block1"), cin, spec)?,
                ConvBlock::new(init, &format!("{name}.block2"), width, spec)?,
            ],
            scse: Scse::new(init, &format!("{name}.scse"), width, cfg.scse)?,
        })
    }

    fn forward<T: Scalar>(&self, cx: &mut Ctx<'_, T>, x: Var) -> Result<Var> {
        let y = self.blocks[0].forward(cx, x)?;
        let y = self.blocks[1].forward(cx, y)?;
        self.scse.forward(cx, y)
    }
}

#[derive(Clone, Debug)]
struct Network {
    encoder: Vec<Stage>,
    bottleneck: Stage,
    up: Vec<ConvTranspose>,
    decoder: Vec<Stage>,
    head: Conv,
}

/// A network instance: configuration, parameters and running statistics.
#[derive(Clone, Debug)]
pub struct Model<T> {
    config: ArchConfig,
    store: ParamStore<T>,
    net: Network,
}

impl<T: Scalar> Model<T> {
    /// Builds a freshly initialized network from `config`.
    pub fn build(config: ArchConfig) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut init = Initializer {
            store: &mut store,
            rng: &mut rng,
        };
        let w = &config.stage_widths;
        let mut encoder = Vec::with_capacity(DEPTH);
        let mut cin = 3;
        for (i, &width) in w[..DEPTH].iter().enumerate() {
            encoder.push(Stage::new(&mut init, &format!("enc{i}"), cin, width, &config)?);
            cin = width;
        }
        let bottleneck = Stage::new(&mut init, "bottleneck", cin, w[DEPTH], &config)?;
        let mut up = Vec::with_capacity(DEPTH);
        let mut decoder = Vec::with_capacity(DEPTH);
        let mut cin = w[DEPTH];
        for i in (0..DEPTH).rev() {
            up.push(init.conv_transpose(&format!("dec{i}.up"), cin, w[i])?);
            decoder.push(Stage::new(&mut init, &format!("dec{i}"), 2 * w[i], w[i], &config)?);
            cin = w[i];
        }
        let head = init.conv("head", 1, w[0], 1)?;
        Ok(Self {
            config,
            store,
            net: Network {
                encoder,
                bottleneck,
                up,
                decoder,
                head,
            },
        })
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore<T> {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.store
    }

    pub fn num_parameters(&self) -> usize {
        self.store.params().iter().map(|p| p.value.len()).sum()
    }

    /// Same network in another precision.
    pub fn cast<U: Scalar>(&self) -> Model<U> {
        Model {
            config: self.config.clone(),
            store: self.store.cast(),
            net: self.net.clone(),
        }
    }

    /// Records the forward pass for `x` (`n x h x w x 3`, spatial dims
    /// multiples of 16) with `params` standing for the store's parameters
    /// in order. Returns the probability map (`n x h x w x 1`) and, in
    /// training mode, the batch statistics of every batchnorm layer.
    pub fn graph(
        &self,
        tape: &mut Tape<T>,
        params: &[Var],
        x: Var,
        mode: Mode,
    ) -> Result<(Var, Vec<Option<BatchStats<T>>>)> {
        if params.len() != self.store.len() {
            return Err(Error::Usage(format!(
                "{} parameter vars for {} parameters",
                params.len(),
                self.store.len()
            )));
        }
        let [_, h, w, c] = tape.value(x).nhwc()?;
        let m = 1 << DEPTH;
        if c != 3 || h % m != 0 || w % m != 0 {
            return Err(shape_err!("network input must be n x h x w x 3 with h, w multiples of {m}, got {:?}", tape.value(x).dims()));
        }
        let mut cx = Ctx::new(tape, params, self.store.bn_states(), mode);
        let net = &self.net;
        let mut skips = Vec::with_capacity(DEPTH);
        let mut y = x;
        for stage in &net.encoder {
            let s = stage.forward(&mut cx, y)?;
            skips.push(s);
            y = cx.tape.maxpool2x2(s)?;
        }
        y = net.bottleneck.forward(&mut cx, y)?;
        for ((up, stage), skip) in net.up.iter().zip(&net.decoder).zip(skips.iter().rev()) {
            let u = up.forward(&mut cx, y)?;
            let (ud, sd) = (cx.tape.value(u).dims(), cx.tape.value(*skip).dims());
            if ud != sd {
                return Err(shape_err!("decoder upsample {ud:?} does not match skip {sd:?}"));
            }
            let cat = cx.tape.concat_channels(u, *skip)?;
            y = stage.forward(&mut cx, cat)?;
        }
        let logits = net.head.forward(&mut cx, y)?;
        let p = cx.tape.sigmoid(logits)?;
        Ok((p, cx.batch_stats))
    }

    /// Forward pass without gradients.
    pub fn forward(&self, x: &Tensor<T>, mode: Mode) -> Result<Tensor<T>> {
        x.ensure_finite("network input")?;
        let mut tape = Tape::new();
        let params = self.store.constants(&mut tape)?;
        let xv = tape.constant(x.clone())?;
        let (p, _) = self.graph(&mut tape, &params, xv, mode)?;
        Ok(tape.value(p).clone())
    }

    /// Folds batch statistics from a training step into the running means.
    pub fn update_running_stats(&mut self, stats: &[Option<BatchStats<T>>]) {
        for (st, b) in self.store.bn_states_mut().iter_mut().zip(stats) {
            if let Some(b) = b {
                st.update(b);
            }
        }
    }

    /// Network input tensor for one image at its own resolution, scaled to
    /// `[0, 1]`.
    pub fn image_tensor(img: &ImageRgb8) -> Tensor<T> {
        let (h, w) = img.dims();
        let data = img.as_raw().iter().map(|&v| T::lit(v as f64 / 255.0)).collect();
        Tensor::new(vec![1, h, w, 3], data).expect("image dims are positive")
    }

    fn run_single(&self, data: Vec<f32>, h: usize, w: usize) -> Result<Vec<f32>> {
        let x = Tensor::new(vec![1, h, w, 3], data.into_iter().map(|v| T::lit(v as f64)).collect())?;
        let p = self.forward(&x, Mode::Infer)?;
        Ok(p.data().iter().map(|v| v.as_f64() as f32).collect())
    }

    /// Whole-image prediction: resize to the network input, infer, resize
    /// the mask back to the image's size.
    pub fn predict(&self, img: &ImageRgb8) -> Result<ProbabilityMask> {
        let (h, w) = img.dims();
        let s = self.config.input_size;
        let p = self.run_single(prescale(img, s), s, s)?;
        let back = resize_plane_bilinear(&p, s, s, 1, h, w);
        ProbabilityMask::from_clamped(h, w, back)
    }

    /// The network input `predict` builds for `img`: a `[1, s, s, 3]`
    /// bilinear downscale in `[0, 1]`.
    pub fn prescale_input(&self, img: &ImageRgb8) -> Tensor<T> {
        let s = self.config.input_size;
        let data = prescale(img, s).into_iter().map(|v| T::lit(v as f64)).collect();
        Tensor::new(vec![1, s, s, 3], data).expect("prescaled dims match")
    }

    /// Sliding-window prediction at native resolution with tiles of the
    /// network input size; overlapping tiles are averaged. Images smaller
    /// than a tile are reflect-padded.
    pub fn predict_tiled(&self, img: &ImageRgb8, overlap: usize) -> Result<ProbabilityMask> {
        let t = self.config.input_size;
        if overlap >= t {
            return Err(Error::Usage(format!("overlap {overlap} must be smaller than the tile size {t}")));
        }
        let (h, w) = img.dims();
        let (ph, pw) = (h.max(t), w.max(t));
        let raw = img.as_raw();
        let mut padded = vec![0f32; ph * pw * 3];
        for y in 0..ph {
            let sy = reflect(y, h);
            for x in 0..pw {
                let sx = reflect(x, w);
                for c in 0..3 {
                    padded[(y * pw + x) * 3 + c] = raw[(sy * w + sx) * 3 + c] as f32 / 255.0;
                }
            }
        }
        let stride = t - overlap;
        let mut sum = vec![0f32; ph * pw];
        let mut count = vec![0u16; ph * pw];
        for &oy in &tile_origins(ph, t, stride) {
            for &ox in &tile_origins(pw, t, stride) {
                let mut tile = Vec::with_capacity(t * t * 3);
                for y in oy..oy + t {
                    tile.extend_from_slice(&padded[(y * pw + ox) * 3..(y * pw + ox + t) * 3]);
                }
                let p = self.run_single(tile, t, t)?;
                for y in 0..t {
                    let row = (oy + y) * pw + ox;
                    for x in 0..t {
                        sum[row + x] += p[y * t + x];
                        count[row + x] += 1;
                    }
                }
            }
        }
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                out.push(sum[y * pw + x] / count[y * pw + x] as f32);
            }
        }
        ProbabilityMask::from_clamped(h, w, out)
    }
}

/// Index into `0..len` under mirror reflection without edge repetition.
fn reflect(i: usize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len - 1);
    let r = i % period;
    if r < len {
        r
    } else {
        period - r
    }
}

/// Window origins along an axis of length `len >= tile`: every `stride`
/// steps, plus a final window flush with the end.
fn prescale(img: &ImageRgb8, s: usize) -> Vec<f32> {
    let (h, w) = img.dims();
    let src: Vec<f32> = img.as_raw().iter().map(|&v| v as f32).collect();
    resize_plane_bilinear(&src, h, w, 3, s, s).into_iter().map(|v| v / 255.0).collect()
}

pub fn tile_origins(len: usize, tile: usize, stride: usize) -> Vec<usize> {
    let mut v = Vec::new();
    let mut o = 0;
    while o + tile < len {
        v.push(o);
        o += stride;
    }
    v.push(len - tile);
    v
}

/// Number of forward passes `predict_tiled` runs for an `h x w` image.
pub fn tile_count(h: usize, w: usize, tile: usize, overlap: usize) -> usize {
    let stride = tile - overlap;
    tile_origins(h.max(tile), tile, stride).len() * tile_origins(w.max(tile), tile, stride).len()
}

pub fn build_model(config: ArchConfig) -> Result<Model<f32>> {
    Model::build(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origins_cover_axis() {
        assert_eq!(tile_origins(256, 256, 256), vec![0]);
        assert_eq!(tile_origins(512, 256, 256), vec![0, 256]);
        assert_eq!(tile_origins(600, 256, 256), vec![0, 256, 344]);
        assert_eq!(tile_origins(512, 256, 192), vec![0, 192, 256]);
        assert_eq!(tile_count(512, 512, 256, 0), 4);
    }

    #[test]
    fn reflect_indices() {
        let v: Vec<usize> = (0..8).map(|i| reflect(i, 3)).collect();
        assert_eq!(v, vec![0, 1, 2, 1, 0, 1, 2, 1]);
        assert_eq!(reflect(5, 1), 0);
    }

    #[test]
    fn config_validation() {
        ArchConfig::default().validate().unwrap();
        let mut c = ArchConfig::default();
        c.input_size = 100;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = ArchConfig::default();
        c.stage_widths = vec![16, 16, 32, 64, 128];
        assert!(c.validate().is_err());
        let mut c = ArchConfig::new(Arch::M2);
        c.stage_widths = vec![4, 16, 32, 64, 128];
        assert!(c.validate().is_err());
    }
}
