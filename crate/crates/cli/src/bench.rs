//! Wall-clock comparison of whole-image pre-scaling against native
//! resolution tiling.

use std::fmt::Write as _;
use std::time::Instant;

use forgenet_core::{Error, Mode, Model32, Result};
use forgenet_datagen::procedural_base;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Prescale,
    Tile,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Prescale => "prescale",
            Strategy::Tile => "tile",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "prescale" => Ok(Strategy::Prescale),
            "tile" => Ok(Strategy::Tile),
            _ => Err(Error::Usage(format!("unknown strategy {s:?} (prescale|tile)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImageTiming {
    pub height: usize,
    pub width: usize,
    pub repeat: usize,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub strategy: Strategy,
    pub images: Vec<ImageTiming>,
    pub total_seconds: f64,
}

impl TimingReport {
    /// Median time over the repeats at one size.
    pub fn median(&self, size: (usize, usize)) -> Option<f64> {
        let mut t: Vec<f64> = self
            .images
            .iter()
            .filter(|i| (i.height, i.width) == size)
            .map(|i| i.seconds)
            .collect();
        if t.is_empty() {
            return None;
        }
        t.sort_by(f64::total_cmp);
        let m = t.len() / 2;
        Some(if t.len() % 2 == 1 { t[m] } else { (t[m - 1] + t[m]) / 2.0 })
    }
}

#[derive(Clone, Debug)]
pub struct BenchOptions {
    pub strategies: Vec<Strategy>,
    /// Square image sides.
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub overlap: usize,
    pub seed: u64,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            strategies: vec![Strategy::Prescale, Strategy::Tile],
            sizes: vec![512, 1024, 2048, 4096],
            repeats: 3,
            overlap: 0,
            seed: 0,
        }
    }
}

/// Times each strategy on one synthetic image per size. Pre-scaling is
/// timed on the network pass alone; the downscale is done beforehand.
pub fn run_bench(model: &Model32, opts: &BenchOptions) -> Result<Vec<TimingReport>> {
    if opts.sizes.is_empty() || opts.repeats == 0 {
        return Err(Error::Usage("bench needs at least one size and one repeat".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let images: Vec<_> = opts.sizes.iter().map(|&s| procedural_base(&mut rng, s, s)).collect();
    // one untimed pass so allocation warm-up does not land on the first size
    model.forward(&model.prescale_input(&images[0]), Mode::Infer)?;
    let mut reports = Vec::new();
    for &strategy in &opts.strategies {
        // repeats run round-robin over the sizes so slow drift hits every size alike
        let mut per_size: Vec<Vec<ImageTiming>> = vec![Vec::new(); images.len()];
        for repeat in 0..opts.repeats {
            for (slot, img) in per_size.iter_mut().zip(&images) {
                let (height, width) = img.dims();
                let seconds = match strategy {
                    Strategy::Prescale => {
                        let x = model.prescale_input(img);
                        let t0 = Instant::now();
                        model.forward(&x, Mode::Infer)?;
                        t0.elapsed().as_secs_f64()
                    }
                    Strategy::Tile => {
                        let t0 = Instant::now();
                        model.predict_tiled(img, opts.overlap)?;
                        t0.elapsed().as_secs_f64()
                    }
                };
                slot.push(ImageTiming {
                    height,
                    width,
                    repeat,
                    seconds,
                });
            }
        }
        let timings: Vec<ImageTiming> = per_size.into_iter().flatten().collect();
        reports.push(TimingReport {
            strategy,
            total_seconds: timings.iter().map(|t| t.seconds).sum(),
            images: timings,
        });
    }
    Ok(reports)
}

pub fn timing_csv(reports: &[TimingReport]) -> String {
    let mut out = String::from("strategy,height,width,repeat,seconds\n");
    for r in reports {
        for t in &r.images {
            let _ = writeln!(out, "{},{},{},{},{:.6}", r.strategy.as_str(), t.height, t.width, t.repeat, t.seconds);
        }
    }
    out
}

/// Seconds per image size and strategy (medians over repeats), with the
/// growth between the smallest and largest size.
pub fn summary_table(reports: &[TimingReport], sizes: &[usize]) -> String {
    let mut out = format!("{:<12}", "Size");
    for r in reports {
        let _ = write!(out, " {:>14}", format!("{} t (s)", r.strategy.as_str()));
    }
    out.push('\n');
    for &s in sizes {
        let _ = write!(out, "{:<12}", format!("{s}x{s}"));
        for r in reports {
            let _ = write!(out, " {:>14.4}", r.median((s, s)).unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<12}", "Total");
    for r in reports {
        let _ = write!(out, " {:>14.4}", r.total_seconds);
    }
    out.push('\n');
    if let (Some(&lo), Some(&hi)) = (sizes.iter().min(), sizes.iter().max()) {
        let _ = write!(out, "{:<12}", format!("{hi}/{lo}"));
        for r in reports {
            let ratio = r.median((hi, hi)).unwrap_or(f64::NAN) / r.median((lo, lo)).unwrap_or(f64::NAN);
            let _ = write!(out, " {:>13.2}x", ratio);
        }
        out.push('\n');
    }
    out
}
