use std::path::Path;

use forgenet_core::dataset::{mask_path, ForgeryKind, Manifest, ManifestEntry, Split};
use forgenet_core::metrics::{
    evaluate_dataset, f1, format_table, iou, pixel_auc, pixel_auc_histogram, pixel_auc_rank, Aggregate,
    DatasetReport, EvalOptions, Fusion, MetricsRecord,
};
use forgenet_core::{fuse_max, Arch, ArchConfig, BinaryMask, Error, Model32, ProbabilityMask};
use forgenet_imaging::{io, ImageRgb8, OsnProfile};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Trapezoidal area under the ROC curve, sweeping every distinct score
/// as a threshold from the top down.
fn sweep_auc(scores: &[f32], gt: &[u8]) -> f64 {
    let p = gt.iter().filter(|&&g| g == 1).count() as f64;
    let n = gt.len() as f64 - p;
    let mut thresholds: Vec<f32> = scores.to_vec();
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();
    let (mut fpr0, mut tpr0) = (0.0, 0.0);
    let mut area = 0.0;
    for t in thresholds {
        let tp = scores.iter().zip(gt).filter(|(&s, &g)| s >= t && g == 1).count() as f64;
        let fp = scores.iter().zip(gt).filter(|(&s, &g)| s >= t && g == 0).count() as f64;
        let (fpr, tpr) = (fp / n, tp / p);
        area += (fpr - fpr0) * (tpr + tpr0) / 2.0;
        fpr0 = fpr;
        tpr0 = tpr;
    }
    area
}

fn random_instance(rng: &mut ChaCha8Rng, max_side: usize) -> (ProbabilityMask, BinaryMask) {
    loop {
        let h = rng.random_range(1..=max_side);
        let w = rng.random_range(2..=max_side);
        let levels: u32 = [4, 50, 1 << 20][rng.random_range(0..3)];
        let rate = rng.random_range(0.05..0.95);
        let gt: Vec<u8> = (0..h * w).map(|_| rng.random_bool(rate) as u8).collect();
        let s: Vec<f32> = gt
            .iter()
            .map(|&g| {
                let shift = if g == 1 { 0.2 } else { 0.0 };
                let v: f64 = (rng.random::<f64>() * 0.8 + shift) * levels as f64;
                (v.floor() / levels as f64) as f32
            })
            .collect();
        let gt = BinaryMask::new(h, w, gt).unwrap();
        if gt.count() > 0 && gt.count() < h * w {
            return (ProbabilityMask::new(h, w, s).unwrap(), gt);
        }
    }
}

#[test]
fn rank_auc_matches_threshold_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let (s, gt) = random_instance(&mut rng, 64);
        let want = sweep_auc(s.values(), gt.values());
        let got = pixel_auc_rank(&s, &gt).unwrap().unwrap();
        worst = worst.max((got - want).abs());
    }
    assert!(worst <= 1e-9, "max deviation {worst:e}");
}

#[test]
fn histogram_auc_matches_rank() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..50 {
        let (s, gt) = random_instance(&mut rng, 96);
        let a = pixel_auc_rank(&s, &gt).unwrap();
        let b = pixel_auc_histogram(&s, &gt).unwrap();
        assert!((a.unwrap() - b.unwrap()).abs() <= 1e-6);
    }
    // multi-megapixel, continuous scores clustered into few bins
    let (h, w) = (1500, 1400);
    let gt = BinaryMask::from_fn(h, w, |y, x| (y / 37 + x / 53) % 3 == 0).unwrap();
    let s: Vec<f32> = (0..h * w)
        .map(|i| {
            let base = if gt.values()[i] == 1 { 0.55 } else { 0.5 };
            base + rng.random::<f32>() * 0.05
        })
        .collect();
    let s = ProbabilityMask::new(h, w, s).unwrap();
    let a = pixel_auc_rank(&s, &gt).unwrap().unwrap();
    let b = pixel_auc_histogram(&s, &gt).unwrap().unwrap();
    assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
    assert_eq!(pixel_auc(&s, &gt).unwrap(), Some(b));
}

#[test]
fn auc_invariant_under_monotone_maps() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for _ in 0..100 {
        let h = rng.random_range(4..40);
        let w = rng.random_range(4..40);
        let gt = BinaryMask::from_fn(h, w, |y, x| (y * 7 + x * 3) % 5 < 2).unwrap();
        let s: Vec<f32> = (0..h * w).map(|_| rng.random_range(0..1000) as f32 / 1000.0).collect();
        let base = pixel_auc(&ProbabilityMask::new(h, w, s.clone()).unwrap(), &gt).unwrap().unwrap();
        let maps: [fn(f32) -> f32; 2] = [|x| x * x * x, |x| 1.0 / (1.0 + (-x).exp())];
        for f in maps {
            let t: Vec<f32> = s.iter().map(|&x| f(x)).collect();
            // the map must stay strictly increasing after rounding
            let mut pairs: Vec<(f32, f32)> = s.iter().copied().zip(t.iter().copied()).collect();
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            assert!(pairs.windows(2).all(|p| (p[0].0 < p[1].0) == (p[0].1 < p[1].1)));
            let other = pixel_auc(&ProbabilityMask::new(h, w, t).unwrap(), &gt).unwrap().unwrap();
            assert!((base - other).abs() <= 1e-12);
        }
    }
}

#[test]
fn f1_iou_identity_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..1000 {
        let (h, w) = (rng.random_range(1..24), rng.random_range(1..24));
        let (pa, pb) = (rng.random::<f64>(), rng.random::<f64>());
        let a = BinaryMask::new(h, w, (0..h * w).map(|_| rng.random_bool(pa) as u8).collect()).unwrap();
        let b = BinaryMask::new(h, w, (0..h * w).map(|_| rng.random_bool(pb) as u8).collect()).unwrap();
        let (fv, iv) = (f1(&a, &b).unwrap(), iou(&a, &b).unwrap());
        assert!((fv - 2.0 * iv / (1.0 + iv)).abs() <= 1e-12);
        assert_eq!(fv, f1(&b, &a).unwrap());
        assert_eq!(iv, iou(&b, &a).unwrap());
        assert!((0.0..=1.0).contains(&iv) && iv <= fv && fv <= 1.0);
    }
}

proptest! {
    #[test]
    fn metric_bounds(bits in proptest::collection::vec(0u8..4, 1..300)) {
        let n = bits.len();
        let a = BinaryMask::new(1, n, bits.iter().map(|b| b & 1).collect()).unwrap();
        let b = BinaryMask::new(1, n, bits.iter().map(|b| b >> 1).collect()).unwrap();
        let (fv, iv) = (f1(&a, &b).unwrap(), iou(&a, &b).unwrap());
        prop_assert!(0.0 <= iv && iv <= fv && fv <= 1.0);
        prop_assert!((fv - 2.0 * iv / (1.0 + iv)).abs() <= 1e-12);
    }
}

#[test]
fn disjoint_and_identical_masks() {
    let a = BinaryMask::from_fn(6, 6, |y, _| y < 3).unwrap();
    let b = BinaryMask::from_fn(6, 6, |y, _| y >= 3).unwrap();
    assert_eq!((f1(&a, &a).unwrap(), iou(&a, &a).unwrap()), (1.0, 1.0));
    assert_eq!((f1(&a, &b).unwrap(), iou(&a, &b).unwrap()), (0.0, 0.0));
}

fn record(id: &str, auc: f64, f1: f64, iou: f64) -> MetricsRecord {
    MetricsRecord {
        id: id.into(),
        auc: Some(auc),
        f1,
        iou,
        flags: vec![],
    }
}

#[test]
fn perfect_single_image_report() {
    let r = DatasetReport::from_records("d", "m", Fusion::None, None, vec![record("a", 1.0, 1.0, 1.0)]);
    assert_eq!(
        r.aggregate,
        Aggregate {
            auc: Some(1.0),
            f1: 1.0,
            iou: 1.0,
            mean: 1.0
        }
    );
    let back = DatasetReport::from_json(&r.to_json().unwrap()).unwrap();
    assert_eq!(back, r);
    assert_eq!(r.to_csv(), "id,auc,f1,iou,flags\na,1.000000,1.000000,1.000000,\n");
    let v: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    for key in ["dataset", "model", "fusion", "osn_profile", "per_image", "aggregate", "fusion_wins"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert!(matches!(DatasetReport::from_json("{\"dataset\": 1}"), Err(Error::Input(_))));
}

#[test]
fn table_row_mean() {
    // four datasets averaged per metric, then AUC/F1/IoU averaged
    let rows = [(0.91, 0.59, 0.50), (0.88, 0.76, 0.68), (0.77, 0.36, 0.25), (0.79, 0.30, 0.23)];
    let auc = rows.iter().map(|r| r.0).sum::<f64>() / 4.0;
    let f = rows.iter().map(|r| r.1).sum::<f64>() / 4.0;
    let i = rows.iter().map(|r| r.2).sum::<f64>() / 4.0;
    let r = DatasetReport::from_records("overall", "max(M1,M2)", Fusion::Max, None, vec![record("all", auc, f, i)]);
    let table = format_table(&[r]);
    let line = table.lines().nth(1).unwrap();
    let cols: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(&cols[3..], ["0.838", "0.502", "0.415", "0.585"]);
    assert!(table.starts_with("Dataset"));
    // the published overall row: .837 / .501 / .411 -> .583
    let published = Aggregate::from_records(&[record("x", 0.837, 0.501, 0.411)]);
    assert_eq!(format!("{:.3}", published.mean), "0.583");
}

fn write_dataset(root: &Path, n: usize, drop_mask: Option<usize>) {
    std::fs::create_dir_all(root.join("images")).unwrap();
    std::fs::create_dir_all(root.join("masks")).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let mut entries = Vec::new();
    for i in 0..n {
        let id = format!("s{i:02}");
        let (h, w) = (40 + 8 * (i % 3), 48);
        let img = ImageRgb8::from_fn(h, w, |y, x| {
            let v = ((y * 5 + x * 3) % 256) as u8;
            [v, rng.random(), 255 - v]
        })
        .unwrap();
        let mask = BinaryMask::from_fn(h, w, |y, x| y > 10 + i && x > 20).unwrap();
        io::write_png_rgb(root.join("images").join(format!("{id}.png")), &img).unwrap();
        if drop_mask != Some(i) {
            io::write_png_gray(mask_path(root, &id), &mask.to_gray8()).unwrap();
        }
        entries.push(ManifestEntry {
            id,
            kind: ForgeryKind::Splice,
            split: Split::Val,
            seed: i as u64,
        });
    }
    entries.reverse();
    Manifest {
        seed: 0,
        osn_profile: None,
        entries,
    }
    .save(root)
    .unwrap();
}

fn model(arch: Arch, seed: u64) -> Model32 {
    Model32::build(ArchConfig {
        seed,
        ..ArchConfig::toy(arch, 32)
    })
    .unwrap()
}

#[test]
fn dataset_evaluation_and_fusion_wins() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 10, Some(3));
    let (m1, m2) = (model(Arch::M1, 1), model(Arch::M2, 2));
    let opts = EvalOptions {
        dataset_name: "synthetic".into(),
        model_id: "max".into(),
        fusion: Fusion::Max,
        ..Default::default()
    };
    let rep = evaluate_dataset(&[&m1, &m2], dir.path(), &opts).unwrap();
    assert_eq!(rep.per_image.len(), 9);
    assert_eq!(rep.errors.len(), 1);
    assert_eq!(rep.errors[0].id, "s03");
    let ids: Vec<&str> = rep.per_image.iter().map(|r| r.id.as_str()).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);

    // manual per-image comparison
    let mut wins = 0;
    for r in &rep.per_image {
        let img = io::read_image(dir.path().join("images").join(format!("{}.png", r.id))).unwrap();
        let gt = BinaryMask::from_gray8(&io::read_gray_png(mask_path(dir.path(), &r.id)).unwrap());
        let (p1, p2) = (m1.predict(&img).unwrap(), m2.predict(&img).unwrap());
        let fused = fuse_max(&p1, &p2).unwrap();
        let a = [&p1, &p2, &fused].map(|p| pixel_auc(p, &gt).unwrap().unwrap());
        assert_eq!(r.auc, Some(a[2]));
        wins += (a[2] > a[0] && a[2] > a[1]) as usize;
    }
    assert_eq!(rep.fusion_wins, Some(wins));

    let again = evaluate_dataset(&[&m1, &m2], dir.path(), &opts).unwrap();
    assert_eq!(again.to_json().unwrap(), rep.to_json().unwrap());

    let single = EvalOptions {
        fusion: Fusion::None,
        ..opts.clone()
    };
    let r1 = evaluate_dataset(&[&m1], dir.path(), &single).unwrap();
    assert_eq!(r1.fusion_wins, None);
    assert!(matches!(evaluate_dataset(&[&m1, &m2], dir.path(), &single), Err(Error::Usage(_))));
    assert!(matches!(evaluate_dataset(&[&m1], dir.path(), &opts), Err(Error::Usage(_))));
}

#[test]
fn degraded_evaluation_keeps_native_dims() {
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), 3, None);
    let m = model(Arch::M1, 3);
    let opts = EvalOptions {
        osn: Some(OsnProfile::builtin("whatsapp-like").unwrap()),
        ..Default::default()
    };
    let rep = evaluate_dataset(&[&m], dir.path(), &opts).unwrap();
    assert_eq!(rep.osn_profile.as_deref(), Some("whatsapp-like"));
    assert_eq!(rep.per_image.len(), 3);
    assert!(rep.errors.is_empty());
}
