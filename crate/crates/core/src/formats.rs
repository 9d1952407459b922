//! On-disk formats.
//!
//! TDSF field container, little-endian:
//!
//! ```text
//! offset  size      field
//! 0       4         magic "TDSF"
//! 4       4         u32 version (1)
//! 8       4         u32 nx
//! 12      4         u32 ny
//! 16      4*nx*ny   f32 values, row-major (element e = iy * nx + ix)
//! ```
//!
//! Images are 8-bit PGM (P5) for output; PGM and PNG are accepted as input.
//! Images use the judge polarity: dark pixels are material.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub const TDSF_MAGIC: &[u8; 4] = b"TDSF";
pub const TDSF_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {message}")]
    Invalid { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> FormatError + '_ {
    move |source| FormatError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn invalid(path: &Path, message: impl Into<String>) -> FormatError {
    FormatError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

/// A row-major scalar field as stored in a TDSF file.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub nx: usize,
    pub ny: usize,
    pub values: Vec<f64>,
}

impl Field {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), nx * ny, "field length");
        Self { nx, ny, values }
    }
}

pub fn tdsf_bytes(field: &Field) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 4 * field.values.len());
    out.extend_from_slice(TDSF_MAGIC);
    out.extend_from_slice(&TDSF_VERSION.to_le_bytes());
    out.extend_from_slice(&(field.nx as u32).to_le_bytes());
    out.extend_from_slice(&(field.ny as u32).to_le_bytes());
    for &v in &field.values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn parse_tdsf(path: &Path, bytes: &[u8]) -> Result<Field, FormatError> {
    if bytes.len() < 16 || &bytes[0..4] != TDSF_MAGIC {
        return Err(invalid(path, "not a TDSF file"));
    }
    let word = |i: usize| u32::from_le_bytes([bytes[i], bytes[i + 1], bytes[i + 2], bytes[i + 3]]);
    let version = word(4);
    if version != TDSF_VERSION {
        return Err(invalid(path, format!("unsupported TDSF version {version}")));
    }
    let (nx, ny) = (word(8) as usize, word(12) as usize);
    let n = nx
        .checked_mul(ny)
        .ok_or_else(|| invalid(path, "dimensions overflow"))?;
    if nx == 0 || ny == 0 || bytes.len() != 16 + 4 * n {
        return Err(invalid(
            path,
            format!("{nx}x{ny} field needs {} bytes, file has {}", 16 + 4 * n, bytes.len()),
        ));
    }
    let values = bytes[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok(Field { nx, ny, values })
}

pub fn write_tdsf(path: &Path, field: &Field) -> Result<(), FormatError> {
    fs::write(path, tdsf_bytes(field)).map_err(io_err(path))
}

pub fn read_tdsf(path: &Path) -> Result<Field, FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    parse_tdsf(path, &bytes)
}

/// 8-bit P5 PGM of a `[0, 1]` material field: `pixel = round(255 (1 - v))`.
pub fn pgm_bytes(field: &Field) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", field.nx, field.ny).into_bytes();
    out.extend(field.values.iter().map(|&v| material_to_gray(v)));
    out
}

pub fn material_to_gray(v: f64) -> u8 {
    (255.0 * (1.0 - v.clamp(0.0, 1.0))).round() as u8
}

pub fn write_pgm(path: &Path, field: &Field) -> Result<(), FormatError> {
    fs::write(path, pgm_bytes(field)).map_err(io_err(path))
}

/// Raw 8-bit grayscale image, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GrayImage {
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> Result<(), FormatError> {
        fs::write(path, self.to_pgm_bytes()).map_err(io_err(path))
    }
}

fn luminance(r: u8, g: u8, b: u8) -> f64 {
    0.299 * r as f64 + 0.587 * g as f64 + 0.114 * b as f64
}

/// Reads an 8-bit PGM or PNG as luminance in `[0, 255]`. RGB(A) inputs are
/// reduced with weights 0.299/0.587/0.114; alpha is ignored.
pub fn read_luminance(path: &Path) -> Result<(usize, usize, Vec<f64>), FormatError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let format = image::guess_format(&bytes).map_err(|e| invalid(path, e.to_string()))?;
    if !matches!(format, image::ImageFormat::Png | image::ImageFormat::Pnm) {
        return Err(invalid(path, format!("unsupported image format {format:?}")));
    }
    let img = image::load_from_memory_with_format(&bytes, format).map_err(|e| invalid(path, e.to_string()))?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    use image::DynamicImage as D;
    let values = match img {
        D::ImageLuma8(buf) => buf.into_raw().into_iter().map(f64::from).collect(),
        D::ImageLumaA8(buf) => buf.pixels().map(|p| p.0[0] as f64).collect(),
        D::ImageRgb8(buf) => buf.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        D::ImageRgba8(buf) => buf.pixels().map(|p| luminance(p.0[0], p.0[1], p.0[2])).collect(),
        other => return Err(invalid(path, format!("only 8-bit images are supported, got {:?}", other.color()))),
    };
    Ok((w, h, values))
}

/// Bilinear resize with pixel-center alignment and edge clamping.
/// Same-size input is returned unchanged.
pub fn resize_bilinear(src_w: usize, src_h: usize, src: &[f64], dst_w: usize, dst_h: usize) -> Vec<f64> {
    assert_eq!(src.len(), src_w * src_h, "source length");
    if (src_w, src_h) == (dst_w, dst_h) {
        return src.to_vec();
    }
    let axis = |dst: usize, n_src: usize, n_dst: usize| {
        let x = ((dst as f64 + 0.5) * n_src as f64 / n_dst as f64 - 0.5).clamp(0.0, (n_src - 1) as f64);
        let i0 = x.floor() as usize;
        let i1 = (i0 + 1).min(n_src - 1);
        (i0, i1, x - i0 as f64)
    };
    let mut out = Vec::with_capacity(dst_w * dst_h);
    for y in 0..dst_h {
        let (y0, y1, ty) = axis(y, src_h, dst_h);
        for x in 0..dst_w {
            let (x0, x1, tx) = axis(x, src_w, dst_w);
            let top = src[y0 * src_w + x0] * (1.0 - tx) + src[y0 * src_w + x1] * tx;
            let bottom = src[y1 * src_w + x0] * (1.0 - tx) + src[y1 * src_w + x1] * tx;
            out.push(top * (1.0 - ty) + bottom * ty);
        }
    }
    out
}

/// Loads an image as a material field at `nx` x `ny`: luminance, bilinear
/// resize, then `1 - pixel / 255` so dark pixels become material.
pub fn load_grayscale_image(path: &Path, nx: usize, ny: usize) -> Result<Field, FormatError> {
    if nx == 0 || ny == 0 {
        return Err(invalid(path, "target dimensions must be positive"));
    }
    let (w, h, lum) = read_luminance(path)?;
    let resized = resize_bilinear(w, h, &lum, nx, ny);
    let values = resized.iter().map(|p| (1.0 - p / 255.0).clamp(0.0, 1.0)).collect();
    Ok(Field { nx, ny, values })
}
