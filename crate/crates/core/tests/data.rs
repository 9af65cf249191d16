mod common;

use addunet::data::{
    add_noise, awgn, corrupt, decode_image, encode_pgm, extract_patches, load_dir, load_image, patch_corners,
    save_image, synth_collection, synth_image, GrayImage, SynthKind, CHECKER_HIGH, CHECKER_LOW,
};
use addunet::metrics::psnr_raw;
use addunet::Tensor;
use common::{rng, uniform};
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

#[test]
fn crop_corners_are_uniform() {
    // 12x12 image, 8x8 crops: 25 admissible corners
    let draws = 50_000;
    let corners = patch_corners(12, 12, 8, draws, 42).unwrap();
    let mut counts = [0usize; 25];
    for (r, c) in corners {
        assert!(r <= 4 && c <= 4);
        counts[r * 5 + c] += 1;
    }
    let expected = draws as f64 / 25.0;
    let chi2: f64 = counts.iter().map(|&n| (n as f64 - expected).powi(2) / expected).sum();
    let p = 1.0 - ChiSquared::new(24.0).unwrap().cdf(chi2);
    assert!(p > 1e-3, "chi2 {chi2}, p {p}");
}

#[test]
fn crops_copy_the_right_pixels() {
    let img = synth_image(SynthKind::GaussianBlobs { count: 4 }, 20, 24, 1).unwrap();
    let corners = patch_corners(20, 24, 7, 5, 9).unwrap();
    let crops = extract_patches(&img, 7, 5, 9).unwrap();
    for ((r0, c0), crop) in corners.iter().zip(&crops) {
        for r in 0..7 {
            for c in 0..7 {
                assert_eq!(crop.get(r, c), img.get(r0 + r, c0 + c));
            }
        }
    }
    assert!(extract_patches(&img, 21, 1, 0).is_err());
}

#[test]
fn noise_has_the_requested_spread() {
    let n = 1_000_000;
    for sigma in [15.0, 25.0, 50.0] {
        let noise = awgn(n, sigma, 77).unwrap();
        let mean = noise.iter().sum::<f64>() / n as f64;
        let var = noise.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let want = sigma / 255.0;
        assert!((var.sqrt() / want - 1.0).abs() < 5e-3, "sigma {sigma}: std {}", var.sqrt());
        assert!(mean.abs() < 5.0 * want / (n as f64).sqrt(), "mean {mean}");
    }
    assert!(awgn(4, 0.0, 0).is_err());
    assert!(awgn(4, f64::NAN, 0).is_err());
}

#[test]
fn noisy_psnr_matches_noise_level() {
    let clean = synth_image(SynthKind::GaussianBlobs { count: 6 }, 256, 256, 3).unwrap().to_tensor();
    for sigma in [15.0, 25.0, 50.0] {
        let noisy = add_noise(&clean, sigma, 100 + sigma as u64).unwrap();
        let got = psnr_raw(clean.data(), noisy.data()).unwrap();
        let want = 20.0 * (255.0f64 / sigma).log10();
        assert!((got - want).abs() < 0.3, "sigma {sigma}: {got} vs {want}");
    }
}

#[test]
fn noise_is_seed_deterministic() {
    assert_eq!(awgn(100, 25.0, 5).unwrap(), awgn(100, 25.0, 5).unwrap());
    assert_ne!(awgn(100, 25.0, 5).unwrap(), awgn(100, 25.0, 6).unwrap());
}

#[test]
fn corrupt_repeats_each_patch_per_realization() {
    let clean = uniform(&[3, 1, 4, 4], 0.0, 1.0, &mut rng(1));
    let batch = corrupt(&clean, 25.0, 2, 8).unwrap();
    assert_eq!(batch.clean.shape(), &[6, 1, 4, 4]);
    assert_eq!(batch.noisy.shape(), &[6, 1, 4, 4]);
    for b in 0..3 {
        let src = &clean.data()[b * 16..(b + 1) * 16];
        for k in 0..2 {
            let s = b * 2 + k;
            assert_eq!(&batch.clean.data()[s * 16..(s + 1) * 16], src);
        }
        // the two realizations of one patch see different noise
        assert_ne!(
            &batch.noisy.data()[b * 32..b * 32 + 16],
            &batch.noisy.data()[b * 32 + 16..b * 32 + 32]
        );
    }
    // noisy values are not clipped
    let hot = corrupt(&Tensor::full([1, 1, 16, 16], 1.0), 50.0, 1, 2).unwrap();
    assert!(hot.noisy.data().iter().any(|v| *v > 1.0));
    assert!(corrupt(&clean, 25.0, 0, 8).is_err());
}

#[test]
fn eight_bit_round_trip_stays_within_half_a_level() {
    let img = synth_image(SynthKind::GaussianBlobs { count: 5 }, 33, 47, 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    for ext in ["png", "pgm"] {
        let path = dir.path().join(format!("x.{ext}"));
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!((back.height(), back.width()), (33, 47));
        let worst = img
            .pixels()
            .iter()
            .zip(back.pixels())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 1.0 / 510.0 + 1e-12, "{ext}: {worst}");
    }
}

#[test]
fn pgm_header_with_comments_and_wide_samples() {
    let mut bytes = b"P5\n# made by hand\n2 1\n65535\n".to_vec();
    bytes.extend_from_slice(&[0xff, 0xff, 0x00, 0x00]);
    let img = decode_image(&bytes).unwrap();
    assert_eq!(img.pixels(), &[1.0, 0.0]);
    let round = decode_image(&encode_pgm(&GrayImage::new(1, 2, vec![0.0, 1.0]).unwrap())).unwrap();
    assert_eq!(round.pixels(), &[0.0, 1.0]);
    assert!(decode_image(b"P5\n2 2\n255\n\x00").is_err());
    assert!(decode_image(b"not an image").is_err());
}

#[test]
fn directory_loading_is_sorted_and_skips_other_files() {
    let dir = tempfile::tempdir().unwrap();
    let img = GrayImage::filled(16, 16, 0.5).unwrap();
    save_image(&img, dir.path().join("b.png")).unwrap();
    save_image(&img, dir.path().join("a.pgm")).unwrap();
    std::fs::write(dir.path().join("notes.txt"), "x").unwrap();
    let ids: Vec<String> = load_dir(dir.path()).unwrap().into_iter().map(|(id, _)| id).collect();
    assert_eq!(ids, ["a", "b"]);
    let empty = tempfile::tempdir().unwrap();
    assert!(load_dir(empty.path()).is_err());
    assert!(load_dir(dir.path().join("missing")).is_err());
}

#[test]
fn synthetic_images_follow_their_definitions() {
    let g = synth_image(SynthKind::Gradient, 16, 21, 0).unwrap();
    assert_eq!(g.get(0, 0), 0.0);
    assert_eq!(g.get(15, 20), 1.0);
    assert!((g.get(15, 0) - 0.5).abs() < 1e-15);

    let c = synth_image(SynthKind::Checkers { period: 8 }, 16, 16, 0).unwrap();
    assert_eq!(c.get(0, 0), CHECKER_LOW);
    assert_eq!(c.get(0, 4), CHECKER_HIGH);
    assert_eq!(c.get(4, 4), CHECKER_LOW);
    assert!(c.pixels().iter().all(|v| *v == CHECKER_LOW || *v == CHECKER_HIGH));

    let s = synth_image(SynthKind::Stripes { frequency: 0.25 }, 16, 16, 0).unwrap();
    for r in 0..16 {
        for col in 0..16 {
            let want = 0.5 + 0.4 * (std::f64::consts::TAU * 0.25 * col as f64).cos();
            assert!((s.get(r, col) - want).abs() < 1e-15);
        }
    }

    let b = synth_image(SynthKind::GaussianBlobs { count: 3 }, 32, 32, 5).unwrap();
    let (lo, hi) = b.pixels().iter().fold((1.0f64, 0.0f64), |(l, h), v| (l.min(*v), h.max(*v)));
    assert!((lo - 0.05).abs() < 1e-12 && (hi - 0.95).abs() < 1e-12);

    assert!(synth_image(SynthKind::Gradient, 8, 32, 0).is_err());
    assert!(synth_image(SynthKind::Checkers { period: 1 }, 16, 16, 0).is_err());
    assert!(synth_image(SynthKind::Stripes { frequency: 0.7 }, 16, 16, 0).is_err());
}

#[test]
fn synthetic_collection_is_reproducible() {
    let a = synth_collection(6, 24, 10).unwrap();
    let b = synth_collection(6, 24, 10).unwrap();
    assert_eq!(a, b);
    assert_eq!(a[0].0, "synth000_blobs");
    assert_ne!(a, synth_collection(6, 24, 11).unwrap());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn corners_always_fit(h in 1usize..40, w in 1usize..40, size in 1usize..40, seed in any::<u64>()) {
        let res = patch_corners(h, w, size, 20, seed);
        if size > h || size > w {
            prop_assert!(res.is_err());
        } else {
            for (r, c) in res.unwrap() {
                prop_assert!(r + size <= h && c + size <= w);
            }
        }
    }
}
