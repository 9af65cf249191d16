use crate::data::GrayImage;
use crate::error::{Error, Result};

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

fn check_same(a: (usize, usize), b: (usize, usize)) -> Result<()> {
    if a != b {
        return Err(Error::Shape(format!(
            "images differ in size: {}x{} vs {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

pub fn mse(reference: &[f64], test: &[f64]) -> Result<f64> {
    if reference.len() != test.len() || reference.is_empty() {
        return Err(Error::Shape(format!(
            "cannot compare {} samples with {}",
            reference.len(),
            test.len()
        )));
    }
    let sum: f64 = reference.iter().zip(test).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(sum / reference.len() as f64)
}

/// PSNR in dB for unit peak value; `+inf` when the inputs are identical.
pub fn psnr_raw(reference: &[f64], test: &[f64]) -> Result<f64> {
    let mse = mse(reference, test)?;
    Ok(if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    })
}

pub fn psnr(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    check_same(
        (reference.height(), reference.width()),
        (test.height(), test.width()),
    )?;
    psnr_raw(reference.pixels(), test.pixels())
}

/// Normalised 1-D Gaussian taps; the 2-D window is their outer product.
pub fn gaussian_taps(size: usize, sigma: f64) -> Vec<f64> {
    let c = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| (-((i as f64 - c).powi(2)) / (2.0 * sigma * sigma)).exp())
        .collect();
    let sum: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / sum).collect()
}

/// Separable "valid" filtering: output is `(h-n+1) x (w-n+1)`.
fn filter_valid(src: &[f64], h: usize, w: usize, taps: &[f64]) -> Vec<f64> {
    let n = taps.len();
    let (oh, ow) = (h - n + 1, w - n + 1);
    let mut rows = vec![0.0; h * ow];
    for r in 0..h {
        let line = &src[r * w..(r + 1) * w];
        for c in 0..ow {
            rows[r * ow + c] = taps.iter().zip(&line[c..c + n]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for r in 0..oh {
        for c in 0..ow {
            out[r * ow + c] = taps.iter().enumerate().map(|(i, t)| t * rows[(r + i) * ow + c]).sum();
        }
    }
    out
}

/// Mean SSIM over every fully-contained 11x11 Gaussian window (sigma 1.5),
/// with `C1 = 0.01^2`, `C2 = 0.03^2` for unit dynamic range.
pub fn ssim_raw(height: usize, width: usize, a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != height * width || b.len() != height * width {
        return Err(Error::Shape("pixel buffers do not match the stated size".into()));
    }
    if height < SSIM_WINDOW || width < SSIM_WINDOW {
        return Err(Error::Shape(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {height}x{width}"
        )));
    }
    let taps = gaussian_taps(SSIM_WINDOW, SSIM_SIGMA);
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mu_a = filter_valid(a, height, width, &taps);
    let mu_b = filter_valid(b, height, width, &taps);
    let e_aa = filter_valid(&aa, height, width, &taps);
    let e_bb = filter_valid(&bb, height, width, &taps);
    let e_ab = filter_valid(&ab, height, width, &taps);

    let total: f64 = (0..mu_a.len())
        .map(|i| {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let va = e_aa[i] - ma * ma;
            let vb = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2))
        })
        .sum();
    Ok(total / mu_a.len() as f64)
}

pub fn ssim(reference: &GrayImage, test: &GrayImage) -> Result<f64> {
    check_same(
        (reference.height(), reference.width()),
        (test.height(), test.width()),
    )?;
    ssim_raw(reference.height(), reference.width(), reference.pixels(), test.pixels())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_identical_is_infinite() {
        let a = GrayImage::filled(4, 4, 0.3).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
    }

    #[test]
    fn psnr_uniform_offset() {
        let a = GrayImage::filled(8, 8, 0.2).unwrap();
        let b = GrayImage::filled(8, 8, 0.3).unwrap();
        assert!((psnr(&a, &b).unwrap() - 20.0).abs() < 1e-9);
    }

    #[test]
    fn size_mismatch() {
        let a = GrayImage::filled(12, 12, 0.2).unwrap();
        let b = GrayImage::filled(12, 13, 0.2).unwrap();
        assert!(psnr(&a, &b).is_err());
        assert!(ssim(&a, &b).is_err());
        let small = GrayImage::filled(10, 40, 0.2).unwrap();
        assert!(ssim(&small, &small).is_err());
    }

    #[test]
    fn taps_are_normalised_and_symmetric() {
        let t = gaussian_taps(11, 1.5);
        assert!((t.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(t[0], t[10]);
        assert!(t[5] > t[4]);
    }

    #[test]
    fn ssim_of_constant_images() {
        let a = GrayImage::filled(16, 16, 0.5).unwrap();
        assert_eq!(ssim(&a, &a).unwrap(), 1.0);
        let b = GrayImage::filled(16, 16, 0.6).unwrap();
        let s = ssim(&a, &b).unwrap();
        let c1 = 1e-4;
        let expected = (2.0 * 0.5 * 0.6 + c1) / (0.25 + 0.36 + c1);
        assert!((s - expected).abs() < 1e-9, "{s} vs {expected}");
    }
}
