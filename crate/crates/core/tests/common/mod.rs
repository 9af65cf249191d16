//! Independent reference implementations shared by the integration tests.
//!
//! Nothing here calls into the library's numeric kernels: convolutions,
//! forward passes, DFTs and SSIM windows are re-derived with plain loops so
//! they can serve as oracles.
#![allow(dead_code)]

use addunet::model::{Model, ModelConfig, Variant};
use addunet::tensor::{Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Uniform in `[-hi, -lo] U [lo, hi]`, keeping ReLU inputs off the kink.
pub fn away_from_zero(shape: &[usize], lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = rng.random_range(lo..hi);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (numeric.abs() + 1e-8)
}

/// Compares tape gradients of a scalar function against central differences
/// at `probes` random coordinates per input. Returns the worst relative error.
pub fn grad_check<F>(inputs: &[Tensor], probes: usize, seed: u64, f: F) -> f64
where
    F: for<'t> Fn(&'t Tape, &[Var<'t>]) -> Var<'t>,
{
    let eval = |xs: &[Tensor]| -> f64 {
        let tape = Tape::new();
        let vars: Vec<Var> = xs.iter().map(|x| tape.constant(x.clone())).collect();
        f(&tape, &vars).item().unwrap()
    };
    let tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|x| tape.leaf(&x.clone().with_grad())).collect();
    let loss = f(&tape, &vars);
    let grads = tape.backward(loss).unwrap();

    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let g = grads.wrt(vars[i]).expect("every input reaches the loss").to_vec();
        for _ in 0..probes {
            let j = r.random_range(0..x.numel());
            let h = 1e-5 * x.data()[j].abs().max(1.0);
            let mut xs = inputs.to_vec();
            xs[i].data_mut()[j] += h;
            let up = eval(&xs);
            xs[i].data_mut()[j] -= 2.0 * h;
            let down = eval(&xs);
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(rel_err(g[j], numeric));
        }
    }
    worst
}

/// Direct "same" cross-correlation with zero padding.
pub fn brute_conv(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let (bsz, cin, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2], x.shape()[3]);
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let p = (k / 2) as isize;
    let mut out = vec![0.0; bsz * cout * h * wd];
    for n in 0..bsz {
        for co in 0..cout {
            for r in 0..h {
                for c in 0..wd {
                    let mut acc = b.data()[co];
                    for ci in 0..cin {
                        for u in 0..k {
                            for v in 0..k {
                                let rr = r as isize + u as isize - p;
                                let cc = c as isize + v as isize - p;
                                if rr < 0 || cc < 0 || rr >= h as isize || cc >= wd as isize {
                                    continue;
                                }
                                acc += w.data()[((co * cin + ci) * k + u) * k + v]
                                    * x.data()[((n * cin + ci) * h + rr as usize) * wd + cc as usize];
                            }
                        }
                    }
                    out[((n * cout + co) * h + r) * wd + c] = acc;
                }
            }
        }
    }
    Tensor::new([bsz, cout, h, wd], out).unwrap()
}

fn zip(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(x, y)| f(*x, *y)).collect();
    Tensor::new(a.shape().to_vec(), data).unwrap()
}

fn relu(a: &Tensor) -> Tensor {
    zip(a, a, |x, _| x.max(0.0))
}

fn softplus(x: f64) -> f64 {
    // ln(1 + e^x) without overflow
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn p<'a>(m: &'a Model, name: &str) -> &'a Tensor {
    m.params().get(name).unwrap_or_else(|| panic!("missing {name}"))
}

fn conv(m: &Model, name: &str, x: &Tensor) -> Tensor {
    brute_conv(x, p(m, &format!("{name}.weight")), p(m, &format!("{name}.bias")))
}

fn block(m: &Model, name: &str, x: &Tensor) -> Tensor {
    let h = relu(&conv(m, &format!("{name}.conv1"), x));
    conv(m, &format!("{name}.conv2"), &h)
}

/// Encoder residuals and decoder output of the additive U-Nets, with an
/// optional fixed value for every gate and optional plain (non-subtractive)
/// encoder chaining.
pub struct ReferencePass {
    pub stem: Tensor,
    pub residuals: Vec<Tensor>,
    pub bottleneck: Tensor,
    pub output: Tensor,
}

pub fn reference_unet(m: &Model, x: &Tensor, fixed_gate: Option<f64>, subtract: bool) -> ReferencePass {
    let cfg = m.config();
    let l = cfg.depth;
    let stem = conv(m, "stem", x);
    let mut state = stem.clone();
    let mut residuals = Vec::new();
    for i in 0..l {
        let r = block(m, &format!("enc.{i}"), &state);
        state = if subtract { zip(&state, &r, |a, b| a - b) } else { r.clone() };
        residuals.push(r);
    }
    let bottleneck = state.clone();
    let mut u = state;
    for j in 0..l {
        let alpha = fixed_gate.unwrap_or_else(|| softplus(p(m, &format!("gate.{j}.beta")).data()[0]));
        let skip = &residuals[l - 1 - j];
        let fused = zip(&u, skip, |a, b| a + alpha * b);
        u = block(m, &format!("dec.{j}"), &fused);
    }
    let output = conv(m, "head", &u);
    ReferencePass {
        stem,
        residuals,
        bottleneck,
        output,
    }
}

/// The model's forward pass recomputed from its parameters with plain loops.
pub fn reference_forward(m: &Model, x: &Tensor) -> Tensor {
    match m.config().variant {
        Variant::RealAdditive => reference_unet(m, x, None, true).output,
        Variant::PseudoAdditive => reference_unet(m, x, Some(1.0), false).output,
        Variant::DnCnn => {
            let depth = m.config().depth;
            let mut h = x.clone();
            for i in 0..depth {
                h = conv(m, &format!("layer.{i}"), &h);
                if i + 1 < depth {
                    h = relu(&h);
                }
            }
            zip(x, &h, |a, b| a - b)
        }
    }
}

/// Parameter count worked out by hand from the architecture description.
pub fn expected_param_count(cfg: &ModelConfig) -> usize {
    let c = cfg.channels;
    let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
    match cfg.variant {
        Variant::DnCnn => conv(1, c, 3) + (cfg.depth - 2) * conv(c, c, 3) + conv(c, 1, 3),
        Variant::RealAdditive | Variant::PseudoAdditive => {
            let ks = &cfg.kernel_schedule;
            let blocks: usize = ks.iter().map(|&k| 2 * 2 * conv(c, c, k)).sum();
            let gates = if cfg.variant == Variant::RealAdditive { ks.len() } else { 0 };
            conv(1, c, 3) + blocks + gates + conv(c, 1, 1)
        }
    }
}

/// Direct O(N^4) 2-D DFT, returned as `(re, im)` pairs.
pub fn brute_dft(x: &[f64], rows: usize, cols: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(rows * cols);
    for u in 0..rows {
        for v in 0..cols {
            let (mut re, mut im) = (0.0, 0.0);
            for r in 0..rows {
                for c in 0..cols {
                    let phase = -2.0
                        * std::f64::consts::PI
                        * ((u * r) as f64 / rows as f64 + (v * c) as f64 / cols as f64);
                    re += x[r * cols + c] * phase.cos();
                    im += x[r * cols + c] * phase.sin();
                }
            }
            out.push((re, im));
        }
    }
    out
}

/// SSIM computed one 11x11 window at a time with explicit weighted sums.
pub fn ssim_window_oracle(h: usize, w: usize, a: &[f64], b: &[f64]) -> f64 {
    let (c1, c2) = (1e-4, 9e-4);
    let g: Vec<f64> = (0..11)
        .map(|i| {
            let d = i as f64 - 5.0;
            (-d * d / (2.0 * 1.5 * 1.5)).exp()
        })
        .collect();
    let gs: f64 = g.iter().sum();
    let g: Vec<f64> = g.iter().map(|v| v / gs).collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for r0 in 0..=h - 11 {
        for c0 in 0..=w - 11 {
            let (mut ma, mut mb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for u in 0..11 {
                for v in 0..11 {
                    let wt = g[u] * g[v];
                    let x = a[(r0 + u) * w + c0 + v];
                    let y = b[(r0 + u) * w + c0 + v];
                    ma += wt * x;
                    mb += wt * y;
                    saa += wt * x * x;
                    sbb += wt * y * y;
                    sab += wt * x * y;
                }
            }
            let (va, vb, cov) = (saa - ma * ma, sbb - mb * mb, sab - ma * mb);
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
