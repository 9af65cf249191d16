mod common;

use addunet::tensor::{charbonnier, softplus, Eager, Ops, Tape, Tensor};
use common::{brute_conv, max_abs_diff, rng, uniform};
use proptest::prelude::*;

fn eager_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    Eager.conv2d(x, w, b, w.shape()[2] / 2).unwrap()
}

#[test]
fn conv_matches_brute_force_for_each_kernel_size() {
    for (k, seed) in [(1, 1), (3, 2), (5, 3), (7, 4), (9, 5)] {
        let mut r = rng(seed);
        let x = uniform(&[2, 3, 11, 10], -1.0, 1.0, &mut r);
        let w = uniform(&[4, 3, k, k], -1.0, 1.0, &mut r);
        let b = uniform(&[4], -1.0, 1.0, &mut r);
        let got = eager_conv(&x, &w, &b);
        let want = brute_conv(&x, &w, &b);
        assert_eq!(got.shape(), want.shape());
        assert!(max_abs_diff(got.data(), want.data()) < 1e-12, "k={k}");
    }
}

#[test]
fn conv_is_linear_in_its_input() {
    let mut r = rng(9);
    let x1 = uniform(&[1, 2, 8, 8], -1.0, 1.0, &mut r);
    let x2 = uniform(&[1, 2, 8, 8], -1.0, 1.0, &mut r);
    let w = uniform(&[3, 2, 3, 3], -1.0, 1.0, &mut r);
    let zero = Tensor::zeros([3]);
    let (a, b) = (0.7, -1.9);
    let mix: Vec<f64> = x1.data().iter().zip(x2.data()).map(|(p, q)| a * p + b * q).collect();
    let lhs = eager_conv(&Tensor::new([1, 2, 8, 8], mix).unwrap(), &w, &zero);
    let c1 = eager_conv(&x1, &w, &zero);
    let c2 = eager_conv(&x2, &w, &zero);
    let rhs: Vec<f64> = c1.data().iter().zip(c2.data()).map(|(p, q)| a * p + b * q).collect();
    assert!(max_abs_diff(lhs.data(), &rhs) < 1e-12);
}

#[test]
fn conv_delta_kernel_is_identity() {
    let x = uniform(&[1, 1, 6, 6], 0.0, 1.0, &mut rng(10));
    let mut w = Tensor::zeros([1, 1, 5, 5]);
    w.data_mut()[12] = 1.0;
    let y = eager_conv(&x, &w, &Tensor::zeros([1]));
    assert_eq!(y.data(), x.data());
}

#[test]
fn tape_and_eager_agree_bitwise() {
    let mut r = rng(11);
    let x = uniform(&[1, 2, 7, 7], -1.0, 1.0, &mut r);
    let w = uniform(&[2, 2, 3, 3], -1.0, 1.0, &mut r);
    let b = uniform(&[2], -1.0, 1.0, &mut r);
    let tape = Tape::new();
    let y = tape
        .leaf(&x)
        .conv2d(tape.leaf(&w), tape.leaf(&b), 1)
        .unwrap()
        .relu()
        .softplus();
    let eager = Eager.softplus(&Eager.relu(&eager_conv(&x, &w, &b)));
    assert_eq!(y.to_tensor().data(), eager.data());
}

#[test]
fn elementwise_examples() {
    let tape = Tape::new();
    let x = tape.constant(Tensor::new([2], vec![-1.5, 2.0]).unwrap());
    assert_eq!(x.relu().to_tensor().data(), &[0.0, 2.0]);
    assert_eq!(softplus(0.0), std::f64::consts::LN_2);
    // large arguments must neither overflow nor lose the linear tail
    assert_eq!(softplus(800.0), 800.0);
    assert!(softplus(-800.0) >= 0.0 && softplus(-800.0) < 1e-300);
    assert!((softplus(30.0) - 30.0).abs() < 1e-12);
}

#[test]
fn charbonnier_examples() {
    let z = Tensor::zeros([1, 1, 2, 2]);
    assert!((charbonnier(&z, &z, 1e-3).unwrap() - 1e-3).abs() < 1e-15);
    let one = Tensor::full([1, 1, 1, 1], 3e-3);
    let got = charbonnier(&one, &Tensor::zeros([1, 1, 1, 1]), 1e-3).unwrap();
    assert!((got - 3.16228e-3).abs() < 1e-8);
    assert!(charbonnier(&z, &z, 0.0).is_err());
}

#[test]
fn charbonnier_matches_scalar_loop() {
    let mut r = rng(12);
    let p = uniform(&[3, 1, 5, 5], 0.0, 1.0, &mut r);
    let q = uniform(&[3, 1, 5, 5], 0.0, 1.0, &mut r);
    let mut acc = 0.0;
    for i in 0..p.numel() {
        let d = p.data()[i] - q.data()[i];
        acc += (d * d + 1e-6).sqrt();
    }
    let want = acc / p.numel() as f64;
    let got = charbonnier(&p, &q, 1e-3).unwrap();
    assert!((got - want).abs() < 1e-15);
    let tape = Tape::new();
    let v = tape.constant(p).charbonnier(tape.constant(q), 1e-3).unwrap().item().unwrap();
    assert_eq!(v, got);
}

#[test]
fn shape_errors_are_reported() {
    let tape = Tape::new();
    let a = tape.constant(Tensor::zeros([2, 2]));
    let b = tape.constant(Tensor::zeros([4]));
    assert!(a.add(b).is_err());
    let x = tape.constant(Tensor::zeros([1, 2, 4, 4]));
    let w = tape.constant(Tensor::zeros([1, 3, 3, 3]));
    assert!(x.conv2d(w, tape.constant(Tensor::zeros([1])), 1).is_err());
    assert!(Tensor::new([2, 3], vec![0.0; 5]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn conv_matches_brute_force_on_random_shapes(
        batch in 1usize..3, cin in 1usize..4, cout in 1usize..4,
        h in 1usize..9, w in 1usize..9, half in 0usize..3, seed in any::<u64>(),
    ) {
        let k = 2 * half + 1;
        let mut r = rng(seed);
        let x = uniform(&[batch, cin, h, w], -1.0, 1.0, &mut r);
        let wt = uniform(&[cout, cin, k, k], -1.0, 1.0, &mut r);
        let b = uniform(&[cout], -1.0, 1.0, &mut r);
        let got = eager_conv(&x, &wt, &b);
        let want = brute_conv(&x, &wt, &b);
        prop_assert!(max_abs_diff(got.data(), want.data()) < 1e-12);
    }

    #[test]
    fn softplus_is_positive_and_above_relu(x in -700.0f64..700.0) {
        let s = softplus(x);
        prop_assert!(s >= x.max(0.0));
        prop_assert!(s.is_finite());
    }
}
