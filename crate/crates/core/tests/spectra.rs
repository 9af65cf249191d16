mod common;

use addunet::analysis::{
    dft2d, filter_spectra, linspace, spectral_centroid, sweep_gate, ChannelReduction, Spectrum,
};
use addunet::data::{synth_collection, synth_image, SynthKind};
use addunet::model::{ForwardOptions, Model, ModelConfig};
use addunet::EvalSet;
use common::{brute_dft, rng, uniform};
use proptest::prelude::*;

/// Centroid straight from the centred grid: each entry weighted by its
/// magnitude at its rounded (Nyquist-capped) radius.
fn centroid_oracle(s: &Spectrum) -> f64 {
    let n = s.size;
    let half = (n / 2) as f64;
    let (mut num, mut den) = (0.0, 0.0);
    for r in 0..n {
        for c in 0..n {
            let d = ((r as f64 - half).powi(2) + (c as f64 - half).powi(2)).sqrt().round().min(half);
            let m = s.magnitude[r * n + c];
            num += m * d / n as f64;
            den += m;
        }
    }
    num / den
}

fn centroid(s: &Spectrum) -> f64 {
    spectral_centroid(&s.radial_profile()).unwrap()
}

#[test]
fn fft_matches_direct_dft() {
    for (rows, cols, seed) in [(8, 8, 1), (5, 7, 2), (1, 6, 3)] {
        let x = uniform(&[rows * cols], -1.0, 1.0, &mut rng(seed));
        let got = dft2d(x.data(), rows, cols).unwrap();
        let want = brute_dft(x.data(), rows, cols);
        for (g, (re, im)) in got.iter().zip(want) {
            assert!((g.re - re).abs() < 1e-9 && (g.im - im).abs() < 1e-9);
        }
    }
    assert!(dft2d(&[1.0; 5], 2, 3).is_err());
}

#[test]
fn parseval_holds_after_padding() {
    let x = uniform(&[25], -1.0, 1.0, &mut rng(4));
    let s = Spectrum::of(x.data(), 5, 5, 32).unwrap();
    let spatial: f64 = x.data().iter().map(|v| v * v).sum();
    assert!((s.energy() / (32.0 * 32.0) - spatial).abs() < 1e-10);
}

#[test]
fn delta_has_flat_spectrum() {
    let mut k = vec![0.0; 9];
    k[4] = 1.0;
    let s = Spectrum::of(&k, 3, 3, 16).unwrap();
    assert!(s.magnitude.iter().all(|m| (m - 1.0).abs() < 1e-12));
    let p = s.radial_profile();
    assert!(p.iter().all(|b| (b.mean_magnitude - 1.0).abs() < 1e-12));
    // flat spectrum: centroid is the count-weighted mean radius
    let want: f64 = p.iter().map(|b| b.frequency * b.count as f64).sum::<f64>() / 256.0;
    assert!((centroid(&s) - want).abs() < 1e-12);
}

#[test]
fn box_filter_is_low_pass() {
    let s = Spectrum::of(&[1.0 / 9.0; 9], 3, 3, 32).unwrap();
    let dc = s.magnitude[16 * 32 + 16];
    assert!((dc - 1.0).abs() < 1e-12);
    assert!(s.magnitude.iter().all(|m| *m <= dc + 1e-12));
    let p = s.radial_profile();
    assert!(p[0].mean_magnitude > p[4].mean_magnitude && p[4].mean_magnitude > p[8].mean_magnitude);

    let mut delta = vec![0.0; 9];
    delta[4] = 1.0;
    let d = Spectrum::of(&delta, 3, 3, 32).unwrap();
    assert!(centroid(&s) < centroid(&d));
}

#[test]
fn centroids_match_grid_oracle() {
    for seed in 0..6 {
        let k = [1, 3, 5][seed % 3];
        let x = uniform(&[k * k], -1.0, 1.0, &mut rng(seed as u64));
        let s = Spectrum::of(x.data(), k, k, 16 + 8 * seed).unwrap();
        assert!((centroid(&s) - centroid_oracle(&s)).abs() < 1e-12);
    }
}

#[test]
fn stripes_peak_at_their_frequency() {
    let img = synth_image(SynthKind::Stripes { frequency: 0.25 }, 32, 32, 0).unwrap();
    let s = Spectrum::of_image(&img, true).unwrap();
    // a pure cosine on whole periods puts everything at radius 8 of 32
    assert!((centroid(&s) - 0.25).abs() < 1e-9);
}

#[test]
fn gabor_centroid_tracks_carrier() {
    let gabor = |f: f64| {
        let mut k = Vec::with_capacity(225);
        for r in 0..15 {
            for c in 0..15 {
                let (y, x) = (r as f64 - 7.0, c as f64 - 7.0);
                k.push((-(x * x + y * y) / 18.0).exp() * (std::f64::consts::TAU * f * x).cos());
            }
        }
        Spectrum::of(&k, 15, 15, 64).unwrap()
    };
    let (lo, hi) = (centroid(&gabor(0.1)), centroid(&gabor(0.3)));
    assert!((lo - 0.1).abs() < 0.05, "{lo}");
    assert!((hi - 0.3).abs() < 0.05, "{hi}");
}

#[test]
fn filter_spectra_of_a_model_layer() {
    let m = Model::new(ModelConfig::real_additive(4, &[3, 3], 5)).unwrap();
    let sum = filter_spectra(&m, "enc.0.conv1", 32, 3, ChannelReduction::Sum).unwrap();
    assert_eq!(sum.topk.len(), 3);
    assert!(sum.topk.windows(2).all(|w| w[0].energy >= w[1].energy));
    assert_eq!(sum.radial.len(), 17);
    assert!(sum.radial.iter().all(|b| b.mean_magnitude.is_finite()));
    assert!(spectral_centroid(&sum.radial).unwrap().is_finite());

    let per = filter_spectra(&m, "enc.0.conv1", 32, 100, ChannelReduction::PerChannel).unwrap();
    assert_eq!(per.topk.len(), 16);
    assert!(per.topk.iter().any(|f| f.filter_id == "3.2"));

    // the summed filter of output channel 0 against a hand-made sum
    let w = m.params().get("enc.0.conv1.weight").unwrap();
    let mut k = vec![0.0; 9];
    for ci in 0..4 {
        k.iter_mut().zip(&w.data()[ci * 9..(ci + 1) * 9]).for_each(|(a, b)| *a += b);
    }
    let all = filter_spectra(&m, "enc.0.conv1", 32, 4, ChannelReduction::Sum).unwrap();
    let f0 = all.topk.iter().find(|f| f.filter_id == "0").unwrap();
    assert_eq!(f0.spectrum, Spectrum::of(&k, 3, 3, 32).unwrap());

    assert!(filter_spectra(&m, "enc.0.conv1", 8, 3, ChannelReduction::Sum).is_err());
    assert!(filter_spectra(&m, "gate.0.beta", 32, 3, ChannelReduction::Sum).is_err());
    assert!(filter_spectra(&m, "nope", 32, 3, ChannelReduction::Sum).is_err());
}

fn small_eval_set() -> EvalSet {
    EvalSet::new(synth_collection(2, 24, 8).unwrap(), 3)
}

#[test]
fn sweep_leaves_model_untouched_and_reproduces_learned_gate() {
    let m = Model::new(ModelConfig::real_additive(3, &[3, 3], 6)).unwrap();
    let before = m.clone();
    let set = small_eval_set();
    let learned = m.gate_values().unwrap()[1];
    let values = [0.0, learned, 1.5];
    let res = sweep_gate(&m, 1, &values, &set, 25.0).unwrap();
    assert!(m.params().bitwise_eq(before.params()));
    assert_eq!(res.learned_alpha, learned);
    let (p, s) = set.mean_scores(&m, 25.0, &ForwardOptions::default()).unwrap();
    assert_eq!(res.psnr_curve[1], p);
    assert_eq!(res.ssim_curve[1], s);
    assert!(res.psnr_curve.iter().chain(&res.ssim_curve).all(|v| v.is_finite()));
    // an untrained model clips to a constant, so check the gate on raw outputs
    let x = set.noisy_input(0, 25.0).unwrap();
    let open = m.denoise_with(&x, &ForwardOptions::default().with_gate(1, 1.5)).unwrap();
    let shut = m.denoise_with(&x, &ForwardOptions::default().with_gate(1, 0.0)).unwrap();
    assert_ne!(open.data(), shut.data());

    let mut buf = Vec::new();
    res.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("alpha,psnr_db,ssim\n0,"));

    assert!(sweep_gate(&m, 2, &values, &set, 25.0).is_err());
    assert!(sweep_gate(&m, 0, &[-0.1], &set, 25.0).is_err());
    assert!(sweep_gate(&Model::new(ModelConfig::pseudo_additive(3, &[3], 0)).unwrap(), 0, &values, &set, 25.0).is_err());
}

#[test]
fn sweep_grid_helper() {
    let v = linspace(0.0, 2.0, 21);
    assert_eq!(v.len(), 21);
    assert_eq!(v[0], 0.0);
    assert_eq!(v[20], 2.0);
    assert!((v[10] - 1.0).abs() < 1e-15);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn radial_bins_partition_the_grid(size in 2usize..40, seed in any::<u64>()) {
        let x = uniform(&[1], -1.0, 1.0, &mut rng(seed));
        let s = Spectrum::of(x.data(), 1, 1, size).unwrap();
        let p = s.radial_profile();
        prop_assert_eq!(p.len(), size / 2 + 1);
        prop_assert_eq!(p.iter().map(|b| b.count).sum::<usize>(), size * size);
        for r in 0..size {
            for c in 0..size {
                prop_assert!(s.bin_of(r, c) <= size / 2);
            }
        }
        prop_assert!(p.windows(2).all(|w| w[0].frequency < w[1].frequency));
    }

    #[test]
    fn spectra_are_finite(k in 1usize..4, pad in 16usize..33, seed in any::<u64>()) {
        let kk = 2 * k - 1;
        let x = uniform(&[kk * kk], -10.0, 10.0, &mut rng(seed));
        let s = Spectrum::of(x.data(), kk, kk, pad).unwrap();
        prop_assert!(s.magnitude.iter().all(|m| m.is_finite() && *m >= 0.0));
        prop_assert!(centroid(&s).is_finite());
    }
}
