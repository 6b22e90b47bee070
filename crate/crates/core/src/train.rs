//! Minibatch training: clamped BCE, Adam, validation-driven learning-rate
//! halving and early stopping.

use std::fmt::Write as _;

use forgenet_imaging::{resize_gray_nearest, resize_plane_bilinear};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{ForgeryKind, LabeledImage};
use crate::dfnet::Model;
use crate::nn::{Mode, Parameter};
use crate::tape::{bce_value, Tape};
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub lr0: f64,
    pub batch: usize,
    pub steps_per_epoch: usize,
    pub lr_patience: usize,
    pub stop_patience: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub seed: u64,
    /// Hard cap on epochs (unbounded when `None`).
    pub max_epochs: Option<usize>,
    /// Hard cap on optimizer steps over the whole run.
    pub max_steps: Option<usize>,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            batch: 32,
            steps_per_epoch: 1000,
            lr_patience: 10,
            stop_patience: 35,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            seed: 0,
            max_epochs: None,
            max_steps: None,
        }
    }
}

impl Hyperparams {
    pub fn validate(&self) -> Result<()> {
        let pos = |v: f64| v.is_finite() && v > 0.0;
        if !pos(self.lr0) || !pos(self.eps) {
            return Err(Error::Config("learning rate and epsilon must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || self.beta1 == 0.0 {
            return Err(Error::Config("Adam betas must lie in (0, 1)".into()));
        }
        if self.batch == 0 || self.steps_per_epoch == 0 || self.lr_patience == 0 {
            return Err(Error::Config("batch, steps per epoch and patience must be positive".into()));
        }
        if self.stop_patience < self.lr_patience {
            return Err(Error::Config(format!(
                "stop patience {} is below lr patience {}",
                self.stop_patience, self.lr_patience
            )));
        }
        if self.max_epochs == Some(0) || self.max_steps == Some(0) {
            return Err(Error::Config("caps on epochs or steps must be positive".into()));
        }
        Ok(())
    }
}

/// Mean clamped binary cross-entropy of `pred` against `gt`.
pub fn bce_loss(pred: &[f32], gt: &[f32]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(Error::Shape(format!("bce over {} predictions and {} targets", pred.len(), gt.len())));
    }
    let p: Vec<f64> = pred.iter().map(|&v| v as f64).collect();
    let y: Vec<f64> = gt.iter().map(|&v| v as f64).collect();
    Ok(bce_value(&p, &y))
}

/// First and second moment estimates for every parameter tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f32>>,
    pub v: Vec<Vec<f32>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(params: &[Parameter<f32>]) -> Self {
        Self {
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            t: 0,
        }
    }
}

/// One bias-corrected Adam update. Fails without touching anything if a
/// gradient is not finite.
pub fn adam_step(
    state: &mut AdamState,
    hp: &Hyperparams,
    lr: f64,
    params: &mut [Parameter<f32>],
    grads: &[Tensor<f32>],
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Usage("gradient list does not match the parameters".into()));
    }
    for (p, g) in params.iter().zip(grads) {
        if g.dims() != p.value.dims() {
            return Err(Error::Shape(format!("gradient for {} has dims {:?}", p.name, g.dims())));
        }
        if !g.all_finite() {
            return Err(Error::Numeric(format!("non-finite gradient for {}", p.name)));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - hp.beta1.powi(t);
    let c2 = 1.0 - hp.beta2.powi(t);
    for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[k], &mut state.v[k]);
        for (i, (w, &gi)) in p.value.data_mut().iter_mut().zip(g.data()).enumerate() {
            let gi = gi as f64;
            let mi = hp.beta1 * m[i] as f64 + (1.0 - hp.beta1) * gi;
            let vi = hp.beta2 * v[i] as f64 + (1.0 - hp.beta2) * gi * gi;
            m[i] = mi as f32;
            v[i] = vi as f32;
            let upd = lr * (mi / c1) / ((vi / c2).sqrt() + hp.eps);
            *w = (*w as f64 - upd) as f32;
        }
    }
    Ok(())
}

/// Learning-rate and early-stopping bookkeeping across epochs.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub adam: AdamState,
    pub lr: f64,
    pub halvings: u32,
    pub best_val: Option<f64>,
    pub best_epoch: Option<usize>,
    /// Epochs without improvement since the last improvement or halving.
    pub lr_counter: usize,
    /// Epochs without improvement since the last improvement.
    pub stagnant: usize,
    pub epoch: usize,
}

impl TrainState {
    pub fn new(hp: &Hyperparams, params: &[Parameter<f32>]) -> Self {
        Self {
            adam: AdamState::new(params),
            lr: hp.lr0,
            halvings: 0,
            best_val: None,
            best_epoch: None,
            lr_counter: 0,
            stagnant: 0,
            epoch: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub struct ScheduleEvent {
    pub improved: bool,
    pub halved: bool,
    pub stop: bool,
}

/// End-of-epoch update. Improvement means a strictly lower validation loss
/// than the best so far.
pub fn lr_schedule(state: &mut TrainState, hp: &Hyperparams, val_loss: f64) -> ScheduleEvent {
    let epoch = state.epoch;
    state.epoch += 1;
    let mut ev = ScheduleEvent::default();
    if state.best_val.is_none_or(|b| val_loss < b) {
        state.best_val = Some(val_loss);
        state.best_epoch = Some(epoch);
        state.lr_counter = 0;
        state.stagnant = 0;
        ev.improved = true;
        return ev;
    }
    state.lr_counter += 1;
    state.stagnant += 1;
    if state.lr_counter >= hp.lr_patience {
        state.lr *= 0.5;
        state.halvings += 1;
        state.lr_counter = 0;
        ev.halved = true;
    }
    ev.stop = state.stagnant >= hp.stop_patience;
    ev
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Stage {
    /// Training from the given (usually fresh) weights on every kind.
    #[default]
    Initial,
    /// Fine-tuning loaded weights, optionally on one forgery kind only.
    Refine { kind: Option<ForgeryKind> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub lr: f64,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,train_loss,val_loss,lr\n");
    for r in history {
        let _ = writeln!(s, "{},{},{},{}", r.epoch, r.train_loss, r.val_loss, r.lr);
    }
    s
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    /// Weights with the lowest validation loss.
    pub model: Model<f32>,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    pub steps: usize,
    pub early_stopped: bool,
    /// Set when a non-finite loss or gradient ended the run.
    pub aborted: Option<String>,
}

/// Network-resolution tensors for one sample.
struct Prepared {
    x: Vec<f32>,
    y: Vec<f32>,
}

fn prepare(item: &LabeledImage, size: usize) -> Result<Prepared> {
    let (h, w) = item.image.dims();
    let src: Vec<f32> = item.image.as_raw().iter().map(|&v| v as f32).collect();
    let x = resize_plane_bilinear(&src, h, w, 3, size, size)
        .into_iter()
        .map(|v| v / 255.0)
        .collect();
    let gt = resize_gray_nearest(&item.mask.to_gray8(), size, size)?;
    Ok(Prepared {
        x,
        y: gt.as_raw().iter().map(|&v| f32::from(v > 127)).collect(),
    })
}

fn stack(items: &[&Prepared], size: usize) -> Result<(Tensor<f32>, Tensor<f32>)> {
    let n = items.len();
    let x = items.iter().flat_map(|p| p.x.iter().copied()).collect();
    let y = items.iter().flat_map(|p| p.y.iter().copied()).collect();
    Ok((
        Tensor::new(vec![n, size, size, 3], x)?,
        Tensor::new(vec![n, size, size, 1], y)?,
    ))
}

/// One optimizer step on a batch; returns the batch loss.
fn train_step(
    model: &mut Model<f32>,
    state: &mut TrainState,
    hp: &Hyperparams,
    x: Tensor<f32>,
    y: &Tensor<f32>,
) -> Result<f64> {
    let mut tape = Tape::new();
    let params = model.store().leaves(&mut tape)?;
    let xv = tape.constant(x)?;
    let (p, stats) = model.graph(&mut tape, &params, xv, Mode::Train)?;
    let loss = tape.bce(p, y)?;
    let loss_value = tape.value(loss).item()? as f64;
    let mut grads = tape.backward(loss)?;
    let g: Vec<Tensor<f32>> = params
        .iter()
        .zip(model.store().params())
        .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.value.dims().to_vec()).expect("param dims")))
        .collect();
    let lr = state.lr;
    adam_step(&mut state.adam, hp, lr, model.store_mut().params_mut(), &g)?;
    model.update_running_stats(&stats);
    Ok(loss_value)
}

/// Mean per-pixel validation loss in inference mode.
pub fn validation_loss(model: &Model<f32>, items: &[LabeledImage], batch: usize) -> Result<f64> {
    let size = model.config().input_size;
    let prepared = items.iter().map(|it| prepare(it, size)).collect::<Result<Vec<_>>>()?;
    val_loss_prepared(model, &prepared, batch)
}

fn val_loss_prepared(model: &Model<f32>, prepared: &[Prepared], batch: usize) -> Result<f64> {
    let size = model.config().input_size;
    let mut total = 0.0;
    for chunk in prepared.chunks(batch.max(1)) {
        let refs: Vec<&Prepared> = chunk.iter().collect();
        let (x, y) = stack(&refs, size)?;
        let p = model.forward(&x, Mode::Infer)?;
        total += bce_loss(p.data(), y.data())? * chunk.len() as f64;
    }
    Ok(total / prepared.len() as f64)
}

fn is_numeric(e: &Error) -> bool {
    matches!(e, Error::Numeric(_))
}

/// Runs the training recipe and returns the best-validation weights with
/// the per-epoch history.
pub fn train(
    model: Model<f32>,
    train_set: &[LabeledImage],
    val_set: &[LabeledImage],
    hp: &Hyperparams,
    stage: Stage,
) -> Result<TrainOutcome> {
    hp.validate()?;
    let keep = |it: &&LabeledImage| match stage {
        Stage::Refine { kind: Some(k) } => it.kind == k,
        _ => true,
    };
    let train_items: Vec<&LabeledImage> = train_set.iter().filter(keep).collect();
    let val_items: Vec<&LabeledImage> = val_set.iter().filter(keep).collect();
    if train_items.is_empty() {
        return Err(Error::Usage("training set is empty".into()));
    }
    if val_items.is_empty() {
        return Err(Error::Usage("validation set is empty".into()));
    }
    let size = model.config().input_size;
    let train_data = train_items.iter().map(|it| prepare(it, size)).collect::<Result<Vec<_>>>()?;
    let val_data = val_items.iter().map(|it| prepare(it, size)).collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(hp.seed);
    let mut model = model;
    let mut state = TrainState::new(hp, model.store().params());
    let mut best = model.clone();
    let mut history = Vec::new();
    let mut steps = 0usize;
    let mut early_stopped = false;
    let mut aborted = None;
    let n = train_data.len();
    let with_replacement = n < hp.batch * hp.steps_per_epoch;

    'epochs: loop {
        if hp.max_epochs.is_some_and(|m| state.epoch >= m) || hp.max_steps.is_some_and(|m| steps >= m) {
            break;
        }
        let order: Vec<usize> = if with_replacement {
            (0..hp.batch * hp.steps_per_epoch).map(|_| rng.random_range(0..n)).collect()
        } else {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        };
        let lr = state.lr;
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for idx in order.chunks_exact(hp.batch).take(hp.steps_per_epoch) {
            if hp.max_steps.is_some_and(|m| steps >= m) {
                break;
            }
            let refs: Vec<&Prepared> = idx.iter().map(|&i| &train_data[i]).collect();
            let (x, y) = stack(&refs, size)?;
            match train_step(&mut model, &mut state, hp, x, &y) {
                Ok(l) if l.is_finite() => {
                    loss_sum += l;
                    batches += 1;
                    steps += 1;
                }
                Ok(l) => {
                    aborted = Some(format!("loss became {l} at step {steps}"));
                    break 'epochs;
                }
                Err(e) if is_numeric(&e) => {
                    aborted = Some(format!("{e} at step {steps}"));
                    break 'epochs;
                }
                Err(e) => return Err(e),
            }
        }
        if batches == 0 {
            break;
        }
        let val_loss = match val_loss_prepared(&model, &val_data, hp.batch) {
            Ok(v) if v.is_finite() => v,
            Ok(v) => {
                aborted = Some(format!("validation loss became {v}"));
                break;
            }
            Err(e) if is_numeric(&e) => {
                aborted = Some(format!("validation: {e}"));
                break;
            }
            Err(e) => return Err(e),
        };
        history.push(EpochRecord {
            epoch: state.epoch,
            train_loss: loss_sum / batches as f64,
            val_loss,
            lr,
        });
        let ev = lr_schedule(&mut state, hp, val_loss);
        if ev.improved {
            best = model.clone();
        }
        if ev.stop {
            early_stopped = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch: state.best_epoch,
        steps,
        early_stopped,
        aborted,
    })
}
