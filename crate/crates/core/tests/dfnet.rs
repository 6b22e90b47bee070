use forgenet_core::checkpoint::{from_bytes, load_checkpoint, load_checkpoint_as, save_checkpoint, to_bytes};
use forgenet_core::dfnet::tile_count;
use forgenet_core::{fuse_avg, fuse_max, Arch, ArchConfig, Error, Mode, Model32, ProbabilityMask, Tensor32};
use forgenet_imaging::ImageRgb8;
use proptest::prelude::*;

fn toy(arch: Arch, size: usize, seed: u64) -> Model32 {
    Model32::build(ArchConfig {
        seed,
        ..ArchConfig::toy(arch, size)
    })
    .unwrap()
}

fn test_image(h: usize, w: usize) -> ImageRgb8 {
    ImageRgb8::from_fn(h, w, |y, x| {
        [
            (x * 255 / w.max(1)) as u8,
            (y * 255 / h.max(1)) as u8,
            ((x * 7 + y * 13) % 256) as u8,
        ]
    })
    .unwrap()
}

#[test]
fn default_configs_map_rgb_to_probabilities() {
    for arch in [Arch::M1, Arch::M2] {
        let m = Model32::build(ArchConfig::new(arch)).unwrap();
        let x = Tensor32::from_fn(vec![1, 256, 256, 3], |i| ((i * 31) % 255) as f32 / 255.0).unwrap();
        let y = m.forward(&x, Mode::Infer).unwrap();
        assert_eq!(y.dims(), &[1, 256, 256, 1]);
        assert!(y.data().iter().all(|&p| p > 0.0 && p < 1.0));
    }
}

#[test]
fn m2_has_four_wide_filters_per_block() {
    let m = Model32::build(ArchConfig::new(Arch::M2)).unwrap();
    let params = m.store().params();
    let blocks: Vec<&str> = params
        .iter()
        .filter_map(|p| p.name.strip_suffix(".bn.gamma"))
        .collect();
    // 9 stages with two blocks each
    assert_eq!(blocks.len(), 18);
    for b in blocks {
        let wide: Vec<_> = params
            .iter()
            .filter(|p| p.name.starts_with(b) && p.value.rank() == 4 && p.value.dims()[0] == 5)
            .collect();
        assert_eq!(wide.len(), 1, "{b}");
        assert_eq!(wide[0].value.dims()[1], 5);
        assert_eq!(wide[0].value.dims()[3], 4, "{b}");
    }
    let m1 = Model32::build(ArchConfig::new(Arch::M1)).unwrap();
    assert!(m1.store().params().iter().all(|p| p.value.rank() != 4 || p.value.dims()[0] != 5));
}

#[test]
fn init_is_seed_deterministic() {
    let a = toy(Arch::M2, 32, 5);
    let b = toy(Arch::M2, 32, 5);
    let c = toy(Arch::M2, 32, 6);
    assert_eq!(a.store(), b.store());
    assert_ne!(a.store(), c.store());
    let mut names: Vec<_> = a.store().params().iter().map(|p| p.name.clone()).collect();
    let n = names.len();
    names.sort();
    names.dedup();
    assert_eq!(names.len(), n);
}

#[test]
fn input_dims_must_fit_the_pyramid() {
    let m = toy(Arch::M1, 32, 0);
    let x = Tensor32::zeros(vec![1, 40, 32, 3]).unwrap();
    assert!(matches!(m.forward(&x, Mode::Infer), Err(Error::Shape(_))));
    let x = Tensor32::zeros(vec![1, 32, 32, 1]).unwrap();
    assert!(matches!(m.forward(&x, Mode::Infer), Err(Error::Shape(_))));
}

#[test]
fn predict_at_input_size_skips_resizing() {
    let m = toy(Arch::M1, 64, 1);
    let img = test_image(64, 64);
    let p = m.predict(&img).unwrap();
    let direct = m.forward(&Model32::image_tensor(&img), Mode::Infer).unwrap();
    assert_eq!(p.values(), direct.data());
    let tiled = m.predict_tiled(&img, 0).unwrap();
    assert_eq!(tiled, p);
}

#[test]
fn predict_keeps_native_dims() {
    let m = toy(Arch::M1, 32, 2);
    for &(h, w) in &[(5616, 3744), (37, 91), (1, 1)] {
        let img = test_image(h, w);
        let p = m.predict(&img).unwrap();
        assert_eq!(p.dims(), (h, w));
        assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn constant_image_mask_in_range() {
    let m = toy(Arch::M2, 32, 3);
    let img = ImageRgb8::filled(90, 70, [120, 30, 200]).unwrap();
    let p = m.predict(&img).unwrap();
    assert!(p.values().iter().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn tiled_prediction_counts_and_averages() {
    assert_eq!(tile_count(512, 512, 256, 0), 4);
    assert_eq!(tile_count(4096, 4096, 256, 0), 256);
    let m = toy(Arch::M1, 32, 4);
    let img = test_image(32, 48);
    // tiles at x = 0 and x = 16 overlap on columns 16..32
    let p = m.predict_tiled(&img, 16).unwrap();
    let left = m.predict(&img.crop(0, 0, 32, 32).unwrap()).unwrap();
    let right = m.predict(&img.crop(0, 16, 32, 32).unwrap()).unwrap();
    for y in 0..32 {
        for x in 0..48 {
            let want = match x {
                0..16 => left.get(y, x),
                16..32 => (left.get(y, x) + right.get(y, x - 16)) / 2.0,
                _ => right.get(y, x - 16),
            };
            assert!((p.get(y, x) - want).abs() < 1e-6);
        }
    }
    // smaller than a tile: reflect padding, native dims out
    let small = m.predict_tiled(&test_image(10, 20), 0).unwrap();
    assert_eq!(small.dims(), (10, 20));
    assert!(matches!(m.predict_tiled(&img, 32), Err(Error::Usage(_))));
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let mut m = toy(Arch::M2, 32, 7);
    m.store_mut().bn_states_mut()[3].running_mean[1] = 0.25;
    let a = dir.path().join("a.dfnw");
    let b = dir.path().join("b.dfnw");
    save_checkpoint(&m, &a).unwrap();
    let loaded = load_checkpoint(&a).unwrap();
    assert_eq!(loaded.store(), m.store());
    assert_eq!(loaded.config(), m.config());
    save_checkpoint(&loaded, &b).unwrap();
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let bytes = to_bytes(&m).unwrap();
    for cut in [0, 3, 8, 100, bytes.len() / 2, bytes.len() - 1] {
        assert!(matches!(from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
    }
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(matches!(from_bytes(&extra), Err(Error::Format(_))));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(from_bytes(&bad), Err(Error::Format(_))));
    let mut ver = bytes.clone();
    ver[4] = 9;
    assert!(matches!(from_bytes(&ver), Err(Error::Format(_))));

    assert!(matches!(load_checkpoint_as(&a, Arch::M1), Err(Error::Config(_))));
    assert!(load_checkpoint_as(&a, Arch::M2).is_ok());
}

#[test]
fn f64_cast_is_exact_for_f32_models() {
    let m = toy(Arch::M1, 32, 8);
    let back: Model32 = m.cast::<f64>().cast::<f32>();
    assert_eq!(back.store(), m.store());
}

fn masks() -> impl Strategy<Value = (ProbabilityMask, ProbabilityMask)> {
    (1usize..6, 1usize..6).prop_flat_map(|(h, w)| {
        (
            proptest::collection::vec(0.0f32..=1.0, h * w),
            proptest::collection::vec(0.0f32..=1.0, h * w),
        )
            .prop_map(move |(a, b)| (ProbabilityMask::new(h, w, a).unwrap(), ProbabilityMask::new(h, w, b).unwrap()))
    })
}

proptest! {
    #[test]
    fn fusion_invariants((a, b) in masks()) {
        let mx = fuse_max(&a, &b).unwrap();
        let av = fuse_avg(&a, &b).unwrap();
        for i in 0..a.values().len() {
            let (p, q, m, v) = (a.values()[i], b.values()[i], mx.values()[i], av.values()[i]);
            prop_assert!(m >= p && m >= q);
            prop_assert!(m == p || m == q);
            prop_assert!(v <= m);
            if p == q {
                prop_assert_eq!(v, m);
            }
        }
        prop_assert_eq!(fuse_max(&a, &a).unwrap(), a);
    }
}
