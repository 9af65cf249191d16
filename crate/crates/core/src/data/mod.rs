//! Image ingestion, random crops, Gaussian corruption and synthetic images.
//!
//! Noise levels are given on the 0-255 scale and applied in the `[0, 1]`
//! domain as `sigma_255 / 255`. Noisy samples are never clipped.

mod image;
mod noise;
mod patches;
mod synth;

pub use image::{
    decode_image, encode_pgm, encode_png, list_images, load_dir, load_image, save_image, GrayImage,
};
pub use noise::{add_noise, awgn, corrupt, standard_normal, PatchBatch};
pub use patches::{extract_patches, patch_corners};
pub use synth::{synth_collection, synth_image, SynthKind, CHECKER_HIGH, CHECKER_LOW};
