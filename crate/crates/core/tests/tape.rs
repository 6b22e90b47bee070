use forgenet_core::ops::Padding;
use forgenet_core::tape::{BnMode, Tape};
use forgenet_core::{Error, Tensor32, Tensor64};
use proptest::prelude::*;

#[test]
fn sum_gradient_is_ones() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor32::from_fn(vec![2, 3], |i| i as f32 - 2.0).unwrap()).unwrap();
    let s = t.sum(x).unwrap();
    let g = t.backward(s).unwrap();
    assert!(g.get(x).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn relu_of_negatives_has_zero_grad() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor32::full(vec![4], -0.5).unwrap()).unwrap();
    let r = t.relu(x).unwrap();
    assert!(t.value(r).data().iter().all(|&v| v == 0.0));
    let s = t.sum(r).unwrap();
    let g = t.backward(s).unwrap();
    assert!(g.get(x).unwrap().data().iter().all(|&v| v == 0.0));
}

#[test]
fn non_scalar_loss_is_usage_error() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor32::zeros(vec![2]).unwrap()).unwrap();
    assert!(matches!(t.backward(x), Err(Error::Usage(_))));
}

#[test]
fn shared_input_accumulates() {
    // d/dx sum(x * x + x) = 2x + 1
    let mut t = Tape::new();
    let x = t.leaf(Tensor64::new(vec![3], vec![1.0, -2.0, 0.5]).unwrap()).unwrap();
    let sq = t.mul(x, x).unwrap();
    let y = t.add(sq, x).unwrap();
    let s = t.sum(y).unwrap();
    let g = t.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[3.0, -3.0, 2.0]);
}

#[test]
fn constants_get_no_gradient() {
    let mut t = Tape::new();
    let c = t.constant(Tensor32::full(vec![2], 3.0).unwrap()).unwrap();
    let x = t.leaf(Tensor32::full(vec![2], 1.0).unwrap()).unwrap();
    let y = t.mul(c, x).unwrap();
    let s = t.sum(y).unwrap();
    let g = t.backward(s).unwrap();
    assert!(g.get(c).is_none());
    assert_eq!(g.get(x).unwrap().data(), &[3.0, 3.0]);
}

#[test]
fn identity_kernel_conv() {
    let mut t = Tape::new();
    let x = t.constant(Tensor32::from_fn(vec![1, 3, 4, 2], |i| i as f32 * 0.1).unwrap()).unwrap();
    let w = t.constant(Tensor32::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
    let y = t.conv2d(x, w, None, 1, Padding::Same).unwrap();
    assert_eq!(t.value(y), t.value(x));
}

#[test]
fn ones_conv_counts_receptive_field() {
    let mut t = Tape::new();
    let x = t.constant(Tensor32::full(vec![1, 5, 5, 1], 1.0).unwrap()).unwrap();
    let w = t.constant(Tensor32::full(vec![3, 3, 1, 1], 1.0).unwrap()).unwrap();
    let y = t.conv2d(x, w, None, 1, Padding::Same).unwrap();
    let v = t.value(y);
    assert_eq!(v.at(&[0, 2, 2, 0]), 9.0);
    assert_eq!(v.at(&[0, 0, 0, 0]), 4.0);
    assert_eq!(v.at(&[0, 0, 2, 0]), 6.0);
    assert_eq!(v.at(&[0, 2, 4, 0]), 6.0);
}

#[test]
fn paper_scale_conv_shape() {
    let mut t = Tape::new();
    let x = t.constant(Tensor32::zeros(vec![1, 256, 256, 3]).unwrap()).unwrap();
    let w = t.constant(Tensor32::zeros(vec![3, 3, 3, 16]).unwrap()).unwrap();
    let b = t.constant(Tensor32::zeros(vec![16]).unwrap()).unwrap();
    let y = t.conv2d(x, w, Some(b), 1, Padding::Same).unwrap();
    assert_eq!(t.value(y).dims(), &[1, 256, 256, 16]);
}

#[test]
fn conv_errors() {
    let mut t = Tape::<f32>::new();
    let x = t.constant(Tensor32::zeros(vec![1, 4, 4, 2]).unwrap()).unwrap();
    let w = t.constant(Tensor32::zeros(vec![3, 3, 3, 1]).unwrap()).unwrap();
    assert!(matches!(t.conv2d(x, w, None, 1, Padding::Same), Err(Error::Shape(_))));
    let mut t = Tape::new();
    assert!(matches!(
        t.constant(Tensor32::full(vec![1, 2, 2, 1], f32::NAN).unwrap()),
        Err(Error::Numeric(_))
    ));
}

#[test]
fn transpose_of_unit_pixel_is_kernel_crop() {
    let mut t = Tape::new();
    let x = t.constant(Tensor32::full(vec![1, 1, 1, 1], 1.0).unwrap()).unwrap();
    let k: Vec<f32> = (1..=9).map(|v| v as f32).collect();
    let w = t.constant(Tensor32::new(vec![3, 3, 1, 1], k).unwrap()).unwrap();
    let y = t.conv_transpose2d(x, w, None, 2).unwrap();
    assert_eq!(t.value(y).dims(), &[1, 2, 2, 1]);
    // oracle: the adjoint of a stride-2 same conv from 2x2 to 1x1, whose only
    // window (pad_top = pad_left = 0) covers taps (0..2, 0..2) of the kernel
    assert_eq!(t.value(y).data(), &[1.0, 2.0, 4.0, 5.0]);
}

#[test]
fn transpose_shapes_and_zero() {
    let mut t = Tape::new();
    let x = t.constant(Tensor32::zeros(vec![1, 16, 16, 4]).unwrap()).unwrap();
    let w = t.constant(Tensor32::full(vec![3, 3, 6, 4], 0.3).unwrap()).unwrap();
    let y = t.conv_transpose2d(x, w, None, 2).unwrap();
    assert_eq!(t.value(y).dims(), &[1, 32, 32, 6]);
    assert!(t.value(y).data().iter().all(|&v| v == 0.0));
}

#[test]
fn maxpool_examples() {
    let mut t = Tape::new();
    let x = t.leaf(Tensor32::new(vec![1, 2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap()).unwrap();
    let y = t.maxpool2x2(x).unwrap();
    assert_eq!(t.value(y).data(), &[4.0]);

    let c = t.leaf(Tensor32::full(vec![1, 2, 2, 1], 7.0).unwrap()).unwrap();
    let y = t.maxpool2x2(c).unwrap();
    assert_eq!(t.value(y).data(), &[7.0]);
    let s = t.sum(y).unwrap();
    // tie goes to the first site in scan order
    assert_eq!(t.backward(s).unwrap().get(c).unwrap().data(), &[1.0, 0.0, 0.0, 0.0]);

    let odd = t.constant(Tensor32::zeros(vec![1, 3, 2, 1]).unwrap()).unwrap();
    assert!(matches!(t.maxpool2x2(odd), Err(Error::Shape(_))));
}

#[test]
fn maxpool_matches_window_scan() {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    let mut vals: Vec<f32> = (0..16).map(|v| v as f32).collect();
    vals.shuffle(&mut rng);
    let mut t = Tape::new();
    let x = t.constant(Tensor32::new(vec![1, 4, 4, 1], vals.clone()).unwrap()).unwrap();
    let y = t.maxpool2x2(x).unwrap();
    for oy in 0..2 {
        for ox in 0..2 {
            let mut m = f32::MIN;
            for dy in 0..2 {
                for dx in 0..2 {
                    m = m.max(vals[(2 * oy + dy) * 4 + 2 * ox + dx]);
                }
            }
            assert_eq!(t.value(y).at(&[0, oy, ox, 0]), m);
        }
    }
}

#[test]
fn batchnorm_examples() {
    let mut t = Tape::new();
    let x = Tensor64::from_fn(vec![2, 2, 2, 2], |i| (i as f64 * 0.37).sin()).unwrap();
    let xv = t.constant(x.clone()).unwrap();
    let g = t.constant(Tensor64::full(vec![2], 1.0).unwrap()).unwrap();
    let b = t.constant(Tensor64::full(vec![2], 0.0).unwrap()).unwrap();
    let mode = BnMode::Infer {
        mean: &[0.0, 0.0],
        var: &[1.0, 1.0],
        eps: 0.0,
    };
    let (y, stats) = t.batchnorm(xv, g, b, mode.clone()).unwrap();
    assert!(stats.is_none());
    assert_eq!(t.value(y), &x);

    // infer mode is affine: bn(x1) - bn(x2) = gamma * inv_std * (x1 - x2)
    let g2 = t.constant(Tensor64::new(vec![2], vec![2.0, -0.5]).unwrap()).unwrap();
    let b2 = t.constant(Tensor64::new(vec![2], vec![0.3, 0.1]).unwrap()).unwrap();
    let infer = BnMode::Infer {
        mean: &[0.2, -0.1],
        var: &[0.5, 2.0],
        eps: 1e-5,
    };
    let x2 = Tensor64::from_fn(vec![2, 2, 2, 2], |i| (i as f64 * 0.91).cos()).unwrap();
    let x2v = t.constant(x2.clone()).unwrap();
    let (y1, _) = t.batchnorm(xv, g2, b2, infer.clone()).unwrap();
    let (y2, _) = t.batchnorm(x2v, g2, b2, infer).unwrap();
    for i in 0..x.len() {
        let c = i % 2;
        let scale = [2.0, -0.5][c] / ([0.5f64, 2.0][c] + 1e-5).sqrt();
        let want = scale * (x.data()[i] - x2.data()[i]);
        let got = t.value(y1).data()[i] - t.value(y2).data()[i];
        assert!((want - got).abs() < 1e-12);
    }

    // zero-variance channel in train mode collapses to beta
    let flat = t.constant(Tensor64::full(vec![3, 2, 2, 2], 4.0).unwrap()).unwrap();
    let (y, stats) = t.batchnorm(flat, g2, b2, BnMode::Train { eps: 1e-5 }).unwrap();
    let stats = stats.unwrap();
    assert_eq!(stats.var, vec![0.0, 0.0]);
    for (i, &v) in t.value(y).data().iter().enumerate() {
        assert_eq!(v, [0.3, 0.1][i % 2]);
    }
}

#[test]
fn activation_examples() {
    let mut t = Tape::new();
    let z = t.constant(Tensor32::zeros(vec![1]).unwrap()).unwrap();
    let s = t.sigmoid(z).unwrap();
    assert_eq!(t.value(s).data(), &[0.5]);

    let a = t.constant(Tensor32::from_fn(vec![1, 2, 2, 2], |i| i as f32).unwrap()).unwrap();
    let b = t.constant(Tensor32::from_fn(vec![1, 2, 2, 3], |i| -(i as f32)).unwrap()).unwrap();
    let c = t.concat_channels(a, b).unwrap();
    assert_eq!(t.value(c).dims(), &[1, 2, 2, 5]);
    let cv = t.value(c).clone();
    for site in 0..4 {
        let row = &cv.data()[site * 5..site * 5 + 5];
        assert_eq!(&row[..2], &t.value(a).data()[site * 2..site * 2 + 2]);
        assert_eq!(&row[2..], &t.value(b).data()[site * 3..site * 3 + 3]);
    }
    let bad = t.constant(Tensor32::zeros(vec![1, 3, 2, 1]).unwrap()).unwrap();
    assert!(matches!(t.concat_channels(a, bad), Err(Error::Shape(_))));
}

#[test]
fn bce_closed_forms() {
    let mut t = Tape::new();
    let p = t.constant(Tensor64::full(vec![1, 4, 4, 1], 0.5).unwrap()).unwrap();
    let y = Tensor64::from_fn(vec![1, 4, 4, 1], |i| (i % 2) as f64).unwrap();
    let l = t.bce(p, &y).unwrap();
    assert!((t.value(l).data()[0] - std::f64::consts::LN_2).abs() < 1e-12);
    let exact = t.constant(y.clone()).unwrap();
    let l = t.bce(exact, &y).unwrap();
    let v = t.value(l).data()[0];
    assert!(v > 0.0 && v < 1e-6);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn shape_algebra(h in 1usize..6, w in 1usize..6, cin in 1usize..4, cout in 1usize..4, k in 0usize..3) {
        let k = 2 * k + 1;
        let (h2, w2) = (2 * h, 2 * w);
        let mut t = Tape::new();
        let x = t.constant(Tensor32::full(vec![1, h2, w2, cin], 0.5).unwrap()).unwrap();
        let wt = t.constant(Tensor32::full(vec![k, k, cin, cout], 0.1).unwrap()).unwrap();
        let y = t.conv2d(x, wt, None, 1, Padding::Same).unwrap();
        prop_assert_eq!(t.value(y).dims(), &[1, h2, w2, cout]);
        let p = t.maxpool2x2(x).unwrap();
        prop_assert_eq!(t.value(p).dims(), &[1, h, w, cin]);
        let wt2 = t.constant(Tensor32::full(vec![3, 3, cout, cin], 0.1).unwrap()).unwrap();
        let u = t.conv_transpose2d(p, wt2, None, 2).unwrap();
        prop_assert_eq!(t.value(u).dims(), &[1, h2, w2, cout]);
    }

    #[test]
    fn activation_ranges(vals in proptest::collection::vec(-200.0f32..200.0, 1..64)) {
        let n = vals.len();
        let mut t = Tape::new();
        let x = t.constant(Tensor32::new(vec![n], vals).unwrap()).unwrap();
        let s = t.sigmoid(x).unwrap();
        prop_assert!(t.value(s).data().iter().all(|&v| v > 0.0 && v < 1.0));
        let r = t.relu(x).unwrap();
        prop_assert!(t.value(r).data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn conv_is_linear(seed in 0u64..1000, alpha in -2.0f64..2.0, beta in -2.0f64..2.0) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut r = |d: &[usize]| Tensor64::from_fn(d.to_vec(), |_| rng.random_range(-1.0..1.0)).unwrap();
        let (x, y, w) = (r(&[1, 6, 5, 2]), r(&[1, 6, 5, 2]), r(&[3, 3, 2, 3]));
        let mut t = Tape::new();
        let comb = Tensor64::new(
            x.dims().to_vec(),
            x.data().iter().zip(y.data()).map(|(a, b)| alpha * a + beta * b).collect(),
        ).unwrap();
        let (xv, yv, cv, wv) = (t.constant(x).unwrap(), t.constant(y).unwrap(), t.constant(comb).unwrap(), t.constant(w).unwrap());
        let cx = t.conv2d(xv, wv, None, 1, Padding::Same).unwrap();
        let cy = t.conv2d(yv, wv, None, 1, Padding::Same).unwrap();
        let cc = t.conv2d(cv, wv, None, 1, Padding::Same).unwrap();
        for i in 0..t.value(cc).len() {
            let want = alpha * t.value(cx).data()[i] + beta * t.value(cy).data()[i];
            let got = t.value(cc).data()[i];
            prop_assert!((want - got).abs() <= 1e-5 * want.abs().max(1.0));
        }
    }
}
