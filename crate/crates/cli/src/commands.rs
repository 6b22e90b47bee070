use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use forgenet_core::checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint};
use forgenet_core::dataset::{image_path, load_split, mask_path, ForgeryKind, Manifest, Split};
use forgenet_core::metrics::{degrade_sample, evaluate_dataset, format_table, DatasetReport, EvalOptions, Fusion};
use forgenet_core::nn::{Combine, ScseSpec};
use forgenet_core::train::{history_csv, train, Hyperparams, Stage};
use forgenet_core::{Arch, ArchConfig, BinaryMask, Error, Model32, ProbabilityMask, Result};
use forgenet_datagen::{build_dataset, DatasetConfig, ForgerySpec, RegionShape, TransformSet};
use forgenet_imaging::{degrade, io, OsnProfile};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::bench::{run_bench, summary_table, timing_csv, BenchOptions, Strategy};
use crate::chart::render_svg;

#[derive(Parser, Debug)]
#[command(name = "forgenet", version, about = "Forgery localization toolkit")]
pub struct Cli {
    /// Worker threads; defaults to FORGENET_THREADS, then the CPU count.
    #[arg(long, global = true, env = "FORGENET_THREADS")]
    pub threads: Option<usize>,

    /// Seed for the command's random generator.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Fixed reduction order. Kernels always run this way; the flag is
    /// accepted so scripts can state it.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic forgery dataset.
    Generate(GenerateArgs),
    /// Train a network, or refine a checkpoint.
    Train(TrainArgs),
    /// Predict a forgery mask for one image.
    Predict(PredictArgs),
    /// Score one model, or a fused pair, on a dataset.
    Evaluate(EvaluateArgs),
    /// Pass a dataset through an OSN degradation profile.
    Degrade(DegradeArgs),
    /// Time pre-scaling against tiling.
    Bench(BenchArgs),
    /// Render evaluation reports as a stacked bar chart.
    Chart(ChartArgs),
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<T>()
                .map_err(|e| Error::Usage(format!("bad {what} entry {p:?}: {e}")))
        })
        .collect()
}

fn parse_range(s: &str) -> std::result::Result<(u8, u8), String> {
    let (a, b) = s.split_once('-').unwrap_or((s, s));
    let a = a.trim().parse::<u8>().map_err(|e| e.to_string())?;
    let b = b.trim().parse::<u8>().map_err(|e| e.to_string())?;
    Ok((a, b))
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 100)]
    pub count: usize,
    /// Comma-separated subset of copy_move, splice, removal.
    #[arg(long, default_value = "copy_move,splice")]
    pub kinds: String,
    /// Directory of base photos; procedural bases otherwise.
    #[arg(long)]
    pub bases: Option<PathBuf>,
    /// Side of procedural bases.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 0.1)]
    pub val_fraction: f64,
    #[arg(long, default_value_t = 0.01)]
    pub area_min: f64,
    #[arg(long, default_value_t = 0.25)]
    pub area_max: f64,
    /// rect, polygon or any.
    #[arg(long, default_value = "any")]
    pub shape: String,
    #[arg(long)]
    pub no_transforms: bool,
    /// Quality range for a final JPEG pass, e.g. 70-95.
    #[arg(long, value_parser = parse_range)]
    pub post_jpeg: Option<(u8, u8)>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Checkpoint to write.
    #[arg(long)]
    pub out: PathBuf,
    /// m1 or m2.
    #[arg(long, default_value = "m1")]
    pub arch: String,
    #[arg(long, default_value_t = 256)]
    pub input_size: usize,
    /// Four encoder widths and the bottleneck width.
    #[arg(long)]
    pub widths: Option<String>,
    /// Small widths 8,16,32,64,128.
    #[arg(long, conflicts_with = "widths")]
    pub toy: bool,
    /// add or max.
    #[arg(long, default_value = "add")]
    pub scse_combine: String,
    #[arg(long, default_value_t = 2)]
    pub scse_reduction: usize,
    /// Start from this checkpoint instead of fresh weights.
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Refine on one forgery kind only (needs --init).
    #[arg(long)]
    pub refine_kind: Option<ForgeryKind>,
    /// Initial learning rate of this stage.
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 32)]
    pub batch: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps_per_epoch: usize,
    #[arg(long, default_value_t = 10)]
    pub lr_patience: usize,
    #[arg(long, default_value_t = 35)]
    pub stop_patience: usize,
    #[arg(long)]
    pub max_epochs: Option<usize>,
    #[arg(long)]
    pub max_steps: Option<usize>,
    /// Validate on the training images (for sets without a val split).
    #[arg(long)]
    pub val_on_train: bool,
    /// History CSV; defaults to the checkpoint path with `.history.csv`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct FusionArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub model2: Option<PathBuf>,
    /// max or avg; defaults to max with --model2.
    #[arg(long, requires = "model2")]
    pub fuse: Option<Fusion>,
}

impl FusionArgs {
    fn fusion(&self) -> Fusion {
        match (&self.model2, self.fuse) {
            (None, _) => Fusion::None,
            (Some(_), Some(f)) => f,
            (Some(_), None) => Fusion::Max,
        }
    }

    fn load(&self) -> Result<Vec<Model32>> {
        let mut v = vec![load_checkpoint(&self.model)?];
        if let Some(p) = &self.model2 {
            v.push(load_checkpoint(p)?);
        }
        Ok(v)
    }

    fn model_id(&self) -> String {
        let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
        match &self.model2 {
            None => stem(&self.model),
            Some(p) => format!("{}({},{})", self.fusion().as_str(), stem(&self.model), stem(p)),
        }
    }
}

#[derive(Args, Debug)]
pub struct PredictArgs {
    #[command(flatten)]
    pub models: FusionArgs,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// prescale or tile.
    #[arg(long, default_value = "prescale")]
    pub strategy: Strategy,
    #[arg(long, default_value_t = 0)]
    pub overlap: usize,
    /// Write the probability map instead of the 0/255 mask.
    #[arg(long)]
    pub probability: bool,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[command(flatten)]
    pub models: FusionArgs,
    /// Built-in profile name or profile JSON file.
    #[arg(long)]
    pub osn: Option<String>,
    /// all, train or val.
    #[arg(long, default_value = "all")]
    pub split: String,
    /// Dataset name in the report; defaults to the directory name.
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub model_id: Option<String>,
    /// Report JSON path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Per-image CSV path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Also score each sub-model and both fusion rules (needs --model2).
    #[arg(long, requires = "model2")]
    pub ablation: bool,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    /// Built-in profile name or profile JSON file.
    #[arg(long)]
    pub profile: String,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// prescale, tile or both.
    #[arg(long, default_value = "both")]
    pub strategy: String,
    #[arg(long, default_value = "512,1024,2048,4096")]
    pub sizes: String,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    #[arg(long, default_value_t = 0)]
    pub overlap: usize,
    /// Timing CSV path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Timing report JSON path.
    #[arg(long)]
    pub json: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ChartArgs {
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn threads(cli: &Cli) -> usize {
    cli.threads
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate(a) => generate(a, cli.seed),
        Command::Train(a) => train_cmd(a, cli.seed),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Degrade(a) => degrade_cmd(a),
        Command::Bench(a) => bench(a, cli.seed),
        Command::Chart(a) => chart(a),
    }
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    Ok(())
}

fn generate(a: &GenerateArgs, seed: u64) -> Result<()> {
    let shape = match a.shape.as_str() {
        "rect" => RegionShape::Rect,
        "polygon" => RegionShape::Polygon,
        "any" => RegionShape::Any,
        s => return Err(Error::Usage(format!("unknown region shape {s:?} (rect|polygon|any)"))),
    };
    let spec = ForgerySpec {
        area: (a.area_min, a.area_max),
        shape,
        transforms: if a.no_transforms {
            TransformSet::none()
        } else {
            TransformSet::default()
        },
        post_jpeg: a.post_jpeg,
        ..ForgerySpec::new(ForgeryKind::CopyMove)
    };
    let cfg = DatasetConfig {
        count: a.count,
        seed,
        kinds: parse_list("kind", &a.kinds)?,
        spec,
        bases: a.bases.clone(),
        size: (a.size, a.size),
        val_fraction: a.val_fraction,
    };
    let m = build_dataset(&cfg, &a.out)?;
    let val = m.entries.iter().filter(|e| e.split == Split::Val).count();
    println!(
        "{{\"samples\":{},\"train\":{},\"val\":{},\"out\":{}}}",
        m.entries.len(),
        m.entries.len() - val,
        val,
        serde_json::to_string(&a.out.display().to_string())?
    );
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: u64) -> Result<()> {
    if a.refine_kind.is_some() && a.init.is_none() {
        return Err(Error::Usage("--refine-kind needs a checkpoint to refine (--init)".into()));
    }
    let arch: Arch = match a.arch.as_str() {
        "m1" => Arch::M1,
        "m2" => Arch::M2,
        s => return Err(Error::Usage(format!("unknown architecture {s:?} (m1|m2)"))),
    };
    let combine = match a.scse_combine.as_str() {
        "add" => Combine::Add,
        "max" => Combine::Max,
        s => return Err(Error::Usage(format!("unknown scSE combination {s:?} (add|max)"))),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (model, stage) = match &a.init {
        Some(p) => (load_checkpoint_as(p, arch)?, Stage::Refine { kind: a.refine_kind }),
        None => {
            let widths = match (&a.widths, a.toy) {
                (Some(w), _) => parse_list("width", w)?,
                (None, true) => ArchConfig::toy(arch, a.input_size).stage_widths,
                (None, false) => ArchConfig::new(arch).stage_widths,
            };
            let cfg = ArchConfig {
                arch,
                input_size: a.input_size,
                stage_widths: widths,
                scse: ScseSpec {
                    reduction: a.scse_reduction,
                    combine,
                },
                seed: rng.random(),
            };
            (Model32::build(cfg)?, Stage::Initial)
        }
    };
    let hp = Hyperparams {
        lr0: a.lr,
        batch: a.batch,
        steps_per_epoch: a.steps_per_epoch,
        lr_patience: a.lr_patience,
        stop_patience: a.stop_patience,
        seed: rng.random(),
        max_epochs: a.max_epochs,
        max_steps: a.max_steps,
        ..Hyperparams::default()
    };
    hp.validate()?;
    let train_set = load_split(&a.data, Some(Split::Train))?;
    let val_set = if a.val_on_train {
        train_set.clone()
    } else {
        load_split(&a.data, Some(Split::Val))?
    };
    let out = train(model, &train_set, &val_set, &hp, stage)?;
    save_checkpoint(&out.model, &a.out)?;
    let history = a.history.clone().unwrap_or_else(|| a.out.with_extension("history.csv"));
    write(&history, history_csv(&out.history))?;
    let best_val = out.best_epoch.map(|e| out.history[e].val_loss);
    println!(
        "{}",
        serde_json::json!({
            "epochs": out.history.len(),
            "steps": out.steps,
            "best_epoch": out.best_epoch,
            "best_val_loss": best_val,
            "early_stopped": out.early_stopped,
            "aborted": out.aborted,
        })
    );
    Ok(())
}

fn predict_one(model: &Model32, img: &forgenet_imaging::ImageRgb8, a: &PredictArgs) -> Result<ProbabilityMask> {
    match a.strategy {
        Strategy::Prescale => model.predict(img),
        Strategy::Tile => model.predict_tiled(img, a.overlap),
    }
}

fn predict(a: &PredictArgs) -> Result<()> {
    let models = a.models.load()?;
    let img = io::read_image(&a.input)?;
    let mut p = predict_one(&models[0], &img, a)?;
    if let Some(m2) = models.get(1) {
        p = a.models.fusion().apply(&p, &predict_one(m2, &img, a)?)?;
    }
    let gray = if a.probability {
        p.to_gray8()
    } else {
        p.binarize(forgenet_core::metrics::THRESHOLD).to_gray8()
    };
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    io::write_png_gray(&a.out, &gray)?;
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Result<()> {
    let split = match a.split.as_str() {
        "all" => None,
        s => Some(s.parse::<Split>()?),
    };
    let osn = a.osn.as_deref().map(OsnProfile::resolve).transpose()?;
    let name = a.name.clone().unwrap_or_else(|| {
        a.data
            .file_name()
            .and_then(|s| s.to_str())
            .unwrap_or("dataset")
            .to_string()
    });
    let models = a.models.load()?;
    let refs: Vec<&Model32> = models.iter().collect();
    let opts = EvalOptions {
        dataset_name: name,
        model_id: a.model_id.clone().unwrap_or_else(|| a.models.model_id()),
        fusion: a.models.fusion(),
        osn,
        split,
    };
    let report = evaluate_dataset(&refs, &a.data, &opts)?;
    let mut rows = Vec::new();
    if a.ablation {
        let stem = |p: &Path| p.file_stem().and_then(|s| s.to_str()).unwrap_or("model").to_string();
        let path2 = a.models.model2.as_deref().expect("clap enforces --model2");
        for (m, path) in [(&models[0], a.models.model.as_path()), (&models[1], path2)] {
            let single = EvalOptions {
                model_id: stem(path),
                fusion: Fusion::None,
                ..opts.clone()
            };
            rows.push(evaluate_dataset(&[m], &a.data, &single)?);
        }
        for f in [Fusion::Max, Fusion::Avg] {
            if f != opts.fusion {
                let other = EvalOptions {
                    model_id: format!("{}({},{})", f.as_str(), stem(&a.models.model), stem(path2)),
                    fusion: f,
                    ..opts.clone()
                };
                rows.push(evaluate_dataset(&refs, &a.data, &other)?);
            }
        }
    }
    rows.push(report.clone());
    if let Some(p) = &a.out {
        write(p, report.to_json()?)?;
    }
    if let Some(p) = &a.csv {
        write(p, report.to_csv())?;
    }
    print!("{}", format_table(&rows));
    if let Some(w) = report.fusion_wins {
        println!("fused AUC above both sub-models: {w} of {} images", report.per_image.len());
    }
    for e in &report.errors {
        eprintln!("{}", serde_json::json!({"warning": "skipped", "id": e.id, "message": e.message}));
    }
    Ok(())
}

fn degrade_cmd(a: &DegradeArgs) -> Result<()> {
    let profile = OsnProfile::resolve(&a.profile)?;
    let mut manifest = Manifest::load(&a.input)?;
    fs::create_dir_all(a.out.join("images"))?;
    fs::create_dir_all(a.out.join("masks"))?;
    manifest.entries.par_iter().try_for_each(|e| -> Result<()> {
        let img = io::read_image(image_path(&a.input, &e.id)?)?;
        let out_img = a.out.join("images").join(format!("{}.png", e.id));
        let mp = mask_path(&a.input, &e.id);
        if mp.is_file() {
            let mask = BinaryMask::from_gray8(&io::read_gray_png(&mp)?);
            let item = forgenet_core::dataset::LabeledImage {
                id: e.id.clone(),
                kind: e.kind,
                image: img,
                mask,
            };
            let d = degrade_sample(&item, &profile)?;
            io::write_png_rgb(out_img, &d.image)?;
            io::write_png_gray(mask_path(&a.out, &e.id), &d.mask.to_gray8())?;
        } else {
            // keep the image so evaluation reports the missing mask
            io::write_png_rgb(out_img, &degrade(&img, &profile)?)?;
        }
        Ok(())
    })?;
    manifest.osn_profile = Some(match manifest.osn_profile.take() {
        Some(prev) => format!("{prev}+{}", profile.name),
        None => profile.name.clone(),
    });
    manifest.save(&a.out)?;
    Ok(())
}

fn bench(a: &BenchArgs, seed: u64) -> Result<()> {
    let strategies = match a.strategy.as_str() {
        "both" => vec![Strategy::Prescale, Strategy::Tile],
        s => vec![s.parse()?],
    };
    let sizes: Vec<usize> = parse_list("size", &a.sizes)?;
    let model = load_checkpoint(&a.model)?;
    let opts = BenchOptions {
        strategies,
        sizes: sizes.clone(),
        repeats: a.repeats,
        overlap: a.overlap,
        seed,
    };
    let reports = run_bench(&model, &opts)?;
    if let Some(p) = &a.out {
        write(p, timing_csv(&reports))?;
    }
    if let Some(p) = &a.json {
        write(p, serde_json::to_string_pretty(&reports)? + "\n")?;
    }
    print!("{}", summary_table(&reports, &sizes));
    Ok(())
}

fn chart(a: &ChartArgs) -> Result<()> {
    let reports = a
        .reports
        .iter()
        .map(|p| {
            let s = fs::read_to_string(p).map_err(|e| Error::Input(format!("{}: {e}", p.display())))?;
            DatasetReport::from_json(&s).map_err(|e| Error::Input(format!("{}: {e}", p.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    write(&a.out, render_svg(&reports)?)?;
    Ok(())
}
