use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Grayscale image with samples in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if pixels.len() != height * width {
            return Err(Error::Shape(format!(
                "{height}x{width} image needs {} pixels, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::InvalidArgument(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    /// Clamps every sample into `[0, 1]` (NaN maps to 0).
    pub fn from_clipped(height: usize, width: usize, mut pixels: Vec<f64>) -> Result<Self> {
        for p in &mut pixels {
            *p = if p.is_nan() { 0.0 } else { p.clamp(0.0, 1.0) };
        }
        Self::new(height, width, pixels)
    }

    /// Takes the single plane of a `[1,1,H,W]` tensor, clipping to `[0, 1]`.
    pub fn from_tensor_clipped(t: &Tensor) -> Result<Self> {
        let [b, c, h, w] = t.dims4()?;
        if b != 1 || c != 1 {
            return Err(Error::Shape(format!("expected a [1,1,H,W] tensor, got {:?}", t.shape())));
        }
        Self::from_clipped(h, w, t.data().to_vec())
    }

    pub fn filled(height: usize, width: usize, value: f64) -> Result<Self> {
        Self::new(height, width, vec![value; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    /// `[1, 1, H, W]` tensor view of the image.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 1, self.height, self.width], self.pixels.clone()).expect("consistent dims")
    }

    /// Copies the `size`x`size` window whose top-left corner is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, size: usize) -> Result<Self> {
        if row + size > self.height || col + size > self.width {
            return Err(Error::InvalidArgument(format!(
                "crop {size}x{size} at ({row}, {col}) exceeds {}x{} image",
                self.height, self.width
            )));
        }
        let mut pixels = Vec::with_capacity(size * size);
        for r in row..row + size {
            pixels.extend_from_slice(&self.pixels[r * self.width + col..r * self.width + col + size]);
        }
        Ok(Self {
            height: size,
            width: size,
            pixels,
        })
    }

    fn to_u8(&self) -> Vec<u8> {
        self.pixels.iter().map(|p| (p * 255.0).round() as u8).collect()
    }
}

/// Reads a PNG or binary PGM (`P5`) file, detected from its content.
pub fn load_image(path: impl AsRef<Path>) -> Result<GrayImage> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_image(&bytes).map_err(|e| match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn decode_image(bytes: &[u8]) -> Result<GrayImage> {
    if bytes.starts_with(b"\x89PNG") {
        decode_png(bytes)
    } else if bytes.starts_with(b"P5") {
        decode_pgm(bytes)
    } else {
        Err(Error::Format("unsupported image format (expected PNG or binary PGM)".into()))
    }
}

/// Writes 8-bit output, choosing PGM or PNG from the file extension.
pub fn save_image(img: &GrayImage, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()) {
        Some(e) if e == "pgm" => encode_pgm(img),
        Some(e) if e == "png" => encode_png(img)?,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "cannot infer image format from `{}` (use .png or .pgm)",
                path.display()
            )))
        }
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn encode_pgm(img: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", img.width, img.height).into_bytes();
    out.extend(img.to_u8());
    out
}

pub fn encode_png(img: &GrayImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc
            .write_header()
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
        writer
            .write_image_data(&img.to_u8())
            .map_err(|e| Error::Format(format!("png encode: {e}")))?;
    }
    Ok(out)
}

fn luma(r: f64, g: f64, b: f64) -> f64 {
    ((299.0 * r + 587.0 * g + 114.0 * b) / 1000.0).clamp(0.0, 1.0)
}

fn decode_png(bytes: &[u8]) -> Result<GrayImage> {
    let fmt = |e: png::DecodingError| Error::Format(format!("png: {e}"));
    let mut decoder = png::Decoder::new(Cursor::new(bytes));
    // palette -> RGB, sub-byte gray -> 8 bit, tRNS -> alpha
    decoder.set_transformations(png::Transformations::EXPAND);
    let mut reader = decoder.read_info().map_err(fmt)?;
    let mut buf = vec![0; reader.output_buffer_size().ok_or_else(|| Error::Format("png: image too large".into()))?];
    let info = reader.next_frame(&mut buf).map_err(fmt)?;
    let (w, h) = (info.width as usize, info.height as usize);
    let buf = &buf[..info.buffer_size()];

    let samples: Vec<f64> = match info.bit_depth {
        png::BitDepth::Sixteen => buf
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]) as f64 / 65535.0)
            .collect(),
        png::BitDepth::Eight => buf.iter().map(|&b| b as f64 / 255.0).collect(),
        other => return Err(Error::Format(format!("png: unexpected bit depth {other:?}"))),
    };
    let channels = info.color_type.samples();
    if samples.len() != w * h * channels {
        return Err(Error::Format("png: truncated pixel data".into()));
    }
    let pixels = samples
        .chunks_exact(channels)
        .map(|px| match info.color_type {
            png::ColorType::Grayscale | png::ColorType::GrayscaleAlpha => px[0],
            png::ColorType::Rgb | png::ColorType::Rgba => luma(px[0], px[1], px[2]),
            png::ColorType::Indexed => px[0],
        })
        .collect();
    GrayImage::new(h, w, pixels)
}

fn decode_pgm(bytes: &[u8]) -> Result<GrayImage> {
    let truncated = || Error::Format("pgm: truncated header".into());
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in &mut fields {
        // skip whitespace and comment lines
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(truncated()),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(|b| b.is_ascii_digit()) {
            pos += 1;
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Format("pgm: malformed header".into()))?;
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(|b| b.is_ascii_whitespace()) {
        return Err(truncated());
    }
    pos += 1;

    let [width, height, maxval] = fields;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Format(format!("pgm: invalid maxval {maxval}")));
    }
    let n = width * height;
    let raster = &bytes[pos..];
    let max = maxval as f64;
    let pixels: Vec<f64> = if maxval < 256 {
        if raster.len() < n {
            return Err(Error::Format("pgm: truncated raster".into()));
        }
        raster[..n].iter().map(|&b| (b as f64 / max).min(1.0)).collect()
    } else {
        if raster.len() < 2 * n {
            return Err(Error::Format("pgm: truncated raster".into()));
        }
        raster[..2 * n]
            .chunks_exact(2)
            .map(|c| (u16::from_be_bytes([c[0], c[1]]) as f64 / max).min(1.0))
            .collect()
    };
    GrayImage::new(height, width, pixels)
}

/// PNG and PGM files in `dir`, sorted by file name.
pub fn list_images(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase());
        if path.is_file() && matches!(ext.as_deref(), Some("png" | "pgm")) {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// Loads every image in `dir` as `(file stem, image)` pairs in name order.
pub fn load_dir(dir: impl AsRef<Path>) -> Result<Vec<(String, GrayImage)>> {
    let dir = dir.as_ref();
    let paths = list_images(dir)?;
    if paths.is_empty() {
        return Err(Error::Format(format!("no PNG or PGM images in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| {
            let id = p.file_stem().and_then(|s| s.to_str()).unwrap_or("image").to_string();
            load_image(&p).map(|img| (id, img))
        })
        .collect()
}
