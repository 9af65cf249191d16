use rand::Rng;

use super::GrayImage;
use crate::error::{Error, Result};
use crate::seed;

/// `count` top-left corners drawn uniformly so a `size`x`size` crop fits.
pub fn patch_corners(
    height: usize,
    width: usize,
    size: usize,
    count: usize,
    seed: u64,
) -> Result<Vec<(usize, usize)>> {
    if size == 0 || size > height || size > width {
        return Err(Error::InvalidArgument(format!(
            "patch size {size} does not fit a {height}x{width} image"
        )));
    }
    let mut rng = seed::rng(seed);
    Ok((0..count)
        .map(|_| (rng.random_range(0..=height - size), rng.random_range(0..=width - size)))
        .collect())
}

/// Random square crops of `img`, deterministic in `seed`.
pub fn extract_patches(img: &GrayImage, size: usize, count: usize, seed: u64) -> Result<Vec<GrayImage>> {
    patch_corners(img.height(), img.width(), size, count, seed)?
        .into_iter()
        .map(|(r, c)| img.crop(r, c, size))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn full_size_patch_is_the_image() {
        let img = GrayImage::new(4, 4, (0..16).map(|v| v as f64 / 16.0).collect()).unwrap();
        let patches = extract_patches(&img, 4, 3, 1).unwrap();
        assert_eq!(patches.len(), 3);
        assert!(patches.iter().all(|p| *p == img));
    }

    #[test]
    fn deterministic_corners() {
        let a = patch_corners(512, 768, 128, 50, 42).unwrap();
        assert_eq!(a, patch_corners(512, 768, 128, 50, 42).unwrap());
        assert_ne!(a, patch_corners(512, 768, 128, 50, 43).unwrap());
    }

    #[test]
    fn oversized_patch_is_rejected() {
        let img = GrayImage::filled(8, 16, 0.5).unwrap();
        assert!(extract_patches(&img, 9, 1, 0).is_err());
        assert!(extract_patches(&img, 0, 1, 0).is_err());
    }

    proptest! {
        #[test]
        fn corners_stay_in_bounds(h in 1usize..300, w in 1usize..300, frac in 0.0f64..=1.0, seed: u64) {
            let size = ((h.min(w) as f64 * frac) as usize).max(1);
            for (r, c) in patch_corners(h, w, size, 20, seed).unwrap() {
                prop_assert!(r + size <= h && c + size <= w);
            }
        }
    }
}
