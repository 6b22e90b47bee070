//! Pixel-level localization metrics and dataset reports.

use std::fmt::Write as _;
use std::path::Path;

use forgenet_imaging::{degrade, resize_gray_nearest, OsnProfile};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{load_entry, LabeledImage, Manifest, Split};
use crate::error::shape_err;
use crate::mask::{fuse_avg, fuse_max, BinaryMask, ProbabilityMask};
use crate::{Error, Model, Result};

/// Default binarization threshold for network outputs.
pub const THRESHOLD: f32 = 0.5;

/// Above this many pixels `pixel_auc` switches to the histogram method.
pub const HISTOGRAM_MIN_PIXELS: usize = 1 << 20;

pub const HISTOGRAM_BINS: usize = 65536;

pub const FLAG_AUC_UNDEFINED: &str = "auc_undefined";

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(shape_err!("mask dims {:?} vs ground truth {:?}", a, b));
    }
    Ok(())
}

/// ROC AUC of per-pixel scores against a binary ground truth.
///
/// Returns `None` when the ground truth contains a single class.
pub fn pixel_auc(scores: &ProbabilityMask, gt: &BinaryMask) -> Result<Option<f64>> {
    if gt.values().len() >= HISTOGRAM_MIN_PIXELS {
        pixel_auc_histogram(scores, gt)
    } else {
        pixel_auc_rank(scores, gt)
    }
}

/// Mann-Whitney AUC with midranks for tied scores.
pub fn pixel_auc_rank(scores: &ProbabilityMask, gt: &BinaryMask) -> Result<Option<f64>> {
    check_dims(scores.dims(), gt.dims())?;
    let s = scores.values();
    let g = gt.values();
    let pos = gt.count();
    let neg = g.len() - pos;
    if pos == 0 || neg == 0 {
        return Ok(None);
    }
    let mut order: Vec<u32> = (0..s.len() as u32).collect();
    order.sort_unstable_by(|&a, &b| s[a as usize].total_cmp(&s[b as usize]));
    let mut rank_sum = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let v = s[order[i] as usize];
        let mut j = i + 1;
        while j < order.len() && s[order[j] as usize] == v {
            j += 1;
        }
        // ranks i+1 ..= j
        let mid = (i + 1 + j) as f64 / 2.0;
        let npos = order[i..j].iter().filter(|&&k| g[k as usize] == 1).count();
        rank_sum += mid * npos as f64;
        i = j;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok(Some((rank_sum - p * (p + 1.0) / 2.0) / (p * n)))
}

/// Twice the number of (positive, negative) pairs ordered correctly,
/// counting ties as one.
fn pair_count_sorted(mut items: Vec<(f32, bool)>) -> u64 {
    items.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
    let mut twice = 0u64;
    let mut neg_below = 0u64;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        let (mut tp, mut tn) = (0u64, 0u64);
        while j < items.len() && items[j].0 == items[i].0 {
            if items[j].1 {
                tp += 1;
            } else {
                tn += 1;
            }
            j += 1;
        }
        twice += 2 * tp * neg_below + tp * tn;
        neg_below += tn;
        i = j;
    }
    twice
}

/// Streaming AUC over a fixed score histogram.
///
/// Pairs falling in different bins are ordered by bin; only bins holding
/// both classes are resolved by sorting their members, so the result
/// equals the rank method.
pub fn pixel_auc_histogram(scores: &ProbabilityMask, gt: &BinaryMask) -> Result<Option<f64>> {
    check_dims(scores.dims(), gt.dims())?;
    let bin = |v: f32| ((v as f64 * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
    let s = scores.values();
    let g = gt.values();
    let mut pos = vec![0u64; HISTOGRAM_BINS];
    let mut neg = vec![0u64; HISTOGRAM_BINS];
    for (&v, &y) in s.iter().zip(g) {
        if y == 1 {
            pos[bin(v)] += 1;
        } else {
            neg[bin(v)] += 1;
        }
    }
    let (p, n): (u64, u64) = (pos.iter().sum(), neg.iter().sum());
    if p == 0 || n == 0 {
        return Ok(None);
    }
    let mut twice = 0u64;
    let mut neg_below = 0u64;
    let mut mixed: Vec<Option<Vec<(f32, bool)>>> = vec![None; HISTOGRAM_BINS];
    for b in 0..HISTOGRAM_BINS {
        twice += 2 * pos[b] * neg_below;
        neg_below += neg[b];
        if pos[b] > 0 && neg[b] > 0 {
            mixed[b] = Some(Vec::with_capacity((pos[b] + neg[b]) as usize));
        }
    }
    for (&v, &y) in s.iter().zip(g) {
        if let Some(m) = mixed[bin(v)].as_mut() {
            m.push((v, y == 1));
        }
    }
    twice += mixed.into_iter().flatten().map(pair_count_sorted).sum::<u64>();
    Ok(Some(twice as f64 / (2.0 * p as f64 * n as f64)))
}

pub fn binarize(scores: &ProbabilityMask, threshold: f32) -> BinaryMask {
    scores.binarize(threshold)
}

/// True positive, false positive and false negative pixel counts.
pub fn confusion(pred: &BinaryMask, gt: &BinaryMask) -> Result<(u64, u64, u64)> {
    check_dims(pred.dims(), gt.dims())?;
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for (&p, &g) in pred.values().iter().zip(gt.values()) {
        match (p, g) {
            (1, 1) => tp += 1,
            (1, 0) => fp += 1,
            (0, 1) => fn_ += 1,
            _ => {}
        }
    }
    Ok((tp, fp, fn_))
}

/// F1 score; two empty masks score 1.
pub fn f1(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (tp, fp, fn_) = confusion(pred, gt)?;
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * tp as f64 / (2 * tp + fp + fn_) as f64)
}

/// Intersection over union; two empty masks score 1.
pub fn iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let (tp, fp, fn_) = confusion(pred, gt)?;
    if tp + fp + fn_ == 0 {
        return Ok(1.0);
    }
    Ok(tp as f64 / (tp + fp + fn_) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub id: String,
    pub auc: Option<f64>,
    pub f1: f64,
    pub iou: f64,
    #[serde(default)]
    pub flags: Vec<String>,
}

/// Scores one prediction, upscaling it to the ground truth when needed.
pub fn evaluate_mask(id: &str, scores: &ProbabilityMask, gt: &BinaryMask) -> Result<MetricsRecord> {
    let (h, w) = gt.dims();
    let resized;
    let scores = if scores.dims() == (h, w) {
        scores
    } else {
        resized = scores.resize_bilinear(h, w)?;
        &resized
    };
    let auc = pixel_auc(scores, gt)?;
    let pred = binarize(scores, THRESHOLD);
    let mut flags = Vec::new();
    if auc.is_none() {
        flags.push(FLAG_AUC_UNDEFINED.to_string());
    }
    Ok(MetricsRecord {
        id: id.to_string(),
        auc,
        f1: f1(&pred, gt)?,
        iou: iou(&pred, gt)?,
        flags,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub auc: Option<f64>,
    pub f1: f64,
    pub iou: f64,
    pub mean: f64,
}

impl Aggregate {
    /// Per-image means; undefined AUCs are skipped.
    pub fn from_records(records: &[MetricsRecord]) -> Self {
        let mean = |v: Vec<f64>| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let auc = mean(records.iter().filter_map(|r| r.auc).collect());
        let f1 = mean(records.iter().map(|r| r.f1).collect()).unwrap_or(0.0);
        let iou = mean(records.iter().map(|r| r.iou).collect()).unwrap_or(0.0);
        let parts: Vec<f64> = auc.into_iter().chain([f1, iou]).collect();
        Aggregate {
            auc,
            f1,
            iou,
            mean: parts.iter().sum::<f64>() / parts.len() as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Fusion {
    #[default]
    None,
    Max,
    Avg,
}

impl Fusion {
    pub fn as_str(self) -> &'static str {
        match self {
            Fusion::None => "none",
            Fusion::Max => "max",
            Fusion::Avg => "avg",
        }
    }

    pub fn apply(self, a: &ProbabilityMask, b: &ProbabilityMask) -> Result<ProbabilityMask> {
        match self {
            Fusion::None => Err(Error::Usage("fusion mode none takes a single model".into())),
            Fusion::Max => fuse_max(a, b),
            Fusion::Avg => fuse_avg(a, b),
        }
    }
}

impl std::str::FromStr for Fusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Fusion::None),
            "max" => Ok(Fusion::Max),
            "avg" => Ok(Fusion::Avg),
            _ => Err(Error::Usage(format!("unknown fusion mode {s:?} (none|max|avg)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportError {
    pub id: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub dataset: String,
    pub model: String,
    pub fusion: Fusion,
    pub osn_profile: Option<String>,
    pub per_image: Vec<MetricsRecord>,
    pub aggregate: Aggregate,
    /// Images where the fused AUC beats both sub-models.
    pub fusion_wins: Option<usize>,
    #[serde(default)]
    pub errors: Vec<ReportError>,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

impl DatasetReport {
    pub fn from_records(
        dataset: &str,
        model: &str,
        fusion: Fusion,
        osn_profile: Option<String>,
        per_image: Vec<MetricsRecord>,
    ) -> Self {
        DatasetReport {
            dataset: dataset.to_string(),
            model: model.to_string(),
            fusion,
            osn_profile,
            aggregate: Aggregate::from_records(&per_image),
            per_image,
            fusion_wins: None,
            errors: Vec::new(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Input(format!("malformed report: {e}")))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,auc,f1,iou,flags\n");
        for r in &self.per_image {
            let _ = writeln!(out, "{},{},{:.6},{:.6},{}", r.id, fmt_opt(r.auc), r.f1, r.iou, r.flags.join(";"));
        }
        out
    }

    pub fn profile_label(&self) -> &str {
        self.osn_profile.as_deref().unwrap_or("pristine")
    }
}

/// Text table with one row per report: Dataset, Model, Profile, AUC, F1, IoU, Mean.
pub fn format_table(reports: &[DatasetReport]) -> String {
    let mut out = format!(
        "{:<16} {:<24} {:<16} {:>6} {:>6} {:>6} {:>6}\n",
        "Dataset", "Model", "Profile", "AUC", "F1", "IoU", "Mean"
    );
    for r in reports {
        let a = &r.aggregate;
        let auc = a.auc.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into());
        let _ = writeln!(
            out,
            "{:<16} {:<24} {:<16} {:>6} {:>6.3} {:>6.3} {:>6.3}",
            r.dataset,
            r.model,
            r.profile_label(),
            auc,
            a.f1,
            a.iou,
            a.mean
        );
    }
    out
}

#[derive(Debug, Clone, Default)]
pub struct EvalOptions {
    pub dataset_name: String,
    pub model_id: String,
    pub fusion: Fusion,
    pub osn: Option<OsnProfile>,
    pub split: Option<Split>,
}

/// Applies an OSN profile to a labeled sample; the mask follows with
/// nearest-neighbour resizing.
pub fn degrade_sample(item: &LabeledImage, profile: &OsnProfile) -> Result<LabeledImage> {
    let image = degrade(&item.image, profile)?;
    let (h, w) = image.dims();
    let mask = BinaryMask::from_gray8(&resize_gray_nearest(&item.mask.to_gray8(), h, w)?);
    Ok(LabeledImage {
        id: item.id.clone(),
        kind: item.kind,
        image,
        mask,
    })
}

struct Scored {
    record: MetricsRecord,
    fused_win: bool,
}

fn score_item(models: &[&Model<f32>], item: &LabeledImage, fusion: Fusion) -> Result<Scored> {
    let first = models[0].predict(&item.image)?;
    if models.len() == 1 {
        return Ok(Scored {
            record: evaluate_mask(&item.id, &first, &item.mask)?,
            fused_win: false,
        });
    }
    let second = models[1].predict(&item.image)?;
    let fused = fusion.apply(&first, &second)?;
    let record = evaluate_mask(&item.id, &fused, &item.mask)?;
    let a1 = pixel_auc(&first, &item.mask)?;
    let a2 = pixel_auc(&second, &item.mask)?;
    let fused_win = matches!((record.auc, a1, a2), (Some(f), Some(x), Some(y)) if f > x && f > y);
    Ok(Scored { record, fused_win })
}

/// A dataset that was degraded on disk keeps its profile name; degrading
/// again on the fly appends the second one.
fn profile_label(on_disk: Option<&str>, extra: Option<&OsnProfile>) -> Option<String> {
    match (on_disk, extra) {
        (Some(a), Some(b)) => Some(format!("{a}+{}", b.name)),
        (Some(a), None) => Some(a.to_string()),
        (None, b) => b.map(|p| p.name.clone()),
    }
}

/// Scores one or two models over a dataset directory.
///
/// Two models require a fusion mode and add the fusion win count.
/// Images that fail to load are listed in `errors` and skipped.
pub fn evaluate_dataset(models: &[&Model<f32>], root: &Path, opts: &EvalOptions) -> Result<DatasetReport> {
    match (models.len(), opts.fusion) {
        (1, Fusion::None) | (2, Fusion::Max | Fusion::Avg) => {}
        (n, f) => {
            return Err(Error::Usage(format!(
                "{n} model(s) with fusion {}: use one model without fusion or two with max|avg",
                f.as_str()
            )))
        }
    }
    let manifest = Manifest::load(root)?;
    let mut entries: Vec<_> = manifest
        .entries
        .iter()
        .filter(|e| opts.split.is_none_or(|s| e.split == s))
        .collect();
    entries.sort_by(|a, b| a.id.cmp(&b.id));
    let results: Vec<(String, Result<Scored>)> = entries
        .par_iter()
        .map(|e| {
            let r = load_entry(root, e).and_then(|item| {
                let item = match &opts.osn {
                    Some(p) => degrade_sample(&item, p)?,
                    None => item,
                };
                score_item(models, &item, opts.fusion)
            });
            (e.id.clone(), r)
        })
        .collect();

    let mut per_image = Vec::new();
    let mut errors = Vec::new();
    let mut wins = 0;
    for (id, r) in results {
        match r {
            Ok(s) => {
                wins += s.fused_win as usize;
                per_image.push(s.record);
            }
            Err(e @ (Error::Input(_) | Error::Image(_) | Error::Io(_))) => errors.push(ReportError {
                id,
                message: e.to_string(),
            }),
            Err(e) => return Err(e),
        }
    }
    let mut report = DatasetReport::from_records(
        &opts.dataset_name,
        &opts.model_id,
        opts.fusion,
        profile_label(manifest.osn_profile.as_deref(), opts.osn.as_ref()),
        per_image,
    );
    if models.len() == 2 {
        report.fusion_wins = Some(wins);
    }
    report.errors = errors;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bm(v: &[u8]) -> BinaryMask {
        BinaryMask::new(1, v.len(), v.to_vec()).unwrap()
    }

    fn pm(v: &[f32]) -> ProbabilityMask {
        ProbabilityMask::new(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn separable_and_tied_scores() {
        let gt = bm(&[0, 0, 1, 1, 0]);
        assert_eq!(pixel_auc_rank(&pm(&[0.1, 0.2, 0.8, 0.9, 0.3]), &gt).unwrap(), Some(1.0));
        assert_eq!(pixel_auc_rank(&pm(&[0.4; 5]), &gt).unwrap(), Some(0.5));
        assert_eq!(pixel_auc_histogram(&pm(&[0.4; 5]), &gt).unwrap(), Some(0.5));
        assert_eq!(pixel_auc_rank(&pm(&[0.9, 0.8, 0.1, 0.2, 0.7]), &gt).unwrap(), Some(0.0));
        assert_eq!(pixel_auc(&pm(&[0.4; 3]), &bm(&[1, 1, 1])).unwrap(), None);
        assert_eq!(pixel_auc_histogram(&pm(&[0.4; 3]), &bm(&[0, 0, 0])).unwrap(), None);
    }

    #[test]
    fn overlap_counts() {
        let gt = BinaryMask::from_fn(20, 20, |y, x| y < 10 && x < 10).unwrap();
        let pred = BinaryMask::from_fn(20, 20, |y, x| y < 10 && (5..15).contains(&x)).unwrap();
        assert!((iou(&pred, &gt).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(f1(&pred, &gt).unwrap(), 0.5);
    }

    #[test]
    fn empty_conventions() {
        let empty = bm(&[0, 0, 0]);
        assert_eq!(f1(&empty, &empty).unwrap(), 1.0);
        assert_eq!(iou(&empty, &empty).unwrap(), 1.0);
        assert_eq!(f1(&bm(&[0, 1, 0]), &empty).unwrap(), 0.0);
        assert_eq!(iou(&bm(&[0, 1, 0]), &empty).unwrap(), 0.0);
        assert!(matches!(f1(&bm(&[0, 1]), &empty), Err(Error::Shape(_))));
    }

    #[test]
    fn aggregate_skips_undefined_auc() {
        let recs = vec![
            MetricsRecord {
                id: "a".into(),
                auc: Some(0.8),
                f1: 0.5,
                iou: 0.2,
                flags: vec![],
            },
            MetricsRecord {
                id: "b".into(),
                auc: None,
                f1: 1.0,
                iou: 1.0,
                flags: vec![FLAG_AUC_UNDEFINED.into()],
            },
        ];
        let a = Aggregate::from_records(&recs);
        assert_eq!(a.auc, Some(0.8));
        assert_eq!(a.f1, 0.75);
        assert_eq!(a.iou, 0.6);
        assert!((a.mean - (0.8 + 0.75 + 0.6) / 3.0).abs() < 1e-15);
    }

    #[test]
    fn record_upscales_prediction() {
        let gt = BinaryMask::from_fn(8, 8, |_, x| x >= 4).unwrap();
        let small = ProbabilityMask::new(2, 2, vec![0.0, 1.0, 0.0, 1.0]).unwrap();
        let r = evaluate_mask("x", &small, &gt).unwrap();
        assert_eq!(r.auc, Some(1.0));
        assert!(r.flags.is_empty());
    }

    #[test]
    fn fusion_parse() {
        assert_eq!("max".parse::<Fusion>().unwrap(), Fusion::Max);
        assert!("min".parse::<Fusion>().is_err());
        assert_eq!(serde_json::to_string(&Fusion::Avg).unwrap(), "\"avg\"");
    }
}
