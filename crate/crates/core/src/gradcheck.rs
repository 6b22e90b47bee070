//! Finite-difference verification of tape gradients (64-bit).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::tape::{Tape, Var};
use crate::{Error, Result, Tensor};

#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Central-difference step.
    pub step: f64,
    /// Check at most this many coordinates per input (all if `None`).
    pub max_coords_per_input: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_coords_per_input: None,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// Largest `|analytic - numeric| / max(1, |numeric|)` seen.
    pub max_error: f64,
    /// `(input, flat index)` where it occurred.
    pub worst: (usize, usize),
    pub coords_checked: usize,
}

/// Compares reverse-mode gradients of the scalar built by `f` against
/// central differences, for every input in `inputs`.
pub fn grad_check<F>(inputs: &[Tensor<f64>], f: F, opts: &GradCheckOptions) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape<f64>, &[Var]) -> Result<Var>,
{
    let eval = |vals: &[Tensor<f64>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars = vals.iter().map(|t| tape.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
        let out = f(&mut tape, &vars)?;
        tape.value(out).item()
    };

    let mut tape = Tape::new();
    let vars = inputs.iter().map(|t| tape.leaf(t.clone())).collect::<Result<Vec<_>>>()?;
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut work = inputs.to_vec();
    let mut report = GradCheckReport {
        max_error: 0.0,
        worst: (0, 0),
        coords_checked: 0,
    };
    for (k, &v) in vars.iter().enumerate() {
        let n = inputs[k].len();
        let zeros;
        let analytic = match grads.get(v) {
            Some(g) => g.data(),
            None => {
                zeros = vec![0.0; n];
                &zeros
            }
        };
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(m) if m < n => {
                let mut c = sample(&mut rng, n, m).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..n).collect(),
        };
        for i in coords {
            let orig = work[k].data()[i];
            work[k].data_mut()[i] = orig + opts.step;
            let up = eval(&work)?;
            work[k].data_mut()[i] = orig - opts.step;
            let down = eval(&work)?;
            work[k].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * opts.step);
            let err = (analytic[i] - numeric).abs() / numeric.abs().max(1.0);
            if !err.is_finite() {
                return Err(Error::Numeric(format!("grad check produced {err} at input {k} index {i}")));
            }
            if err > report.max_error {
                report.max_error = err;
                report.worst = (k, i);
            }
            report.coords_checked += 1;
        }
    }
    Ok(report)
}
