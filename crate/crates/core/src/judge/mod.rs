//! Visual judge: the masked grayscale image, the score-plus-gradient
//! contract, a built-in reference judge, and the remote sidecar client.
//!
//! Images use white = 1 with material rendered dark: `pixel = 1 - density * mask`.

mod reference;
mod remote;

pub use reference::ReferenceJudge;
pub use remote::{
    decode_f32_b64, encode_f32_b64, HealthResponse, JudgeRequest, JudgeResponse, RemoteJudge,
    WireError, DEFAULT_AUGMENTATIONS, DEFAULT_TIMEOUT_MS,
};

use thiserror::Error;

use crate::fem2d::DensityField;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("judge unavailable: {0}")]
    Unavailable(String),
    #[error("judge protocol error: {message}")]
    Protocol { message: String, payload: String },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("invalid image: {0}")]
    InvalidImage(String),
}

/// Single-channel image in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl JudgeImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, JudgeError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(JudgeError::DimensionMismatch {
                expected: format!("{} pixels for {width}x{height}", width * height),
                actual: pixels.len().to_string(),
            });
        }
        if let Some(p) = pixels.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(JudgeError::InvalidImage(format!("pixel value {p} outside [0, 1]")));
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    /// Judge-convention image of a material field (material dark).
    pub fn from_material(field: &DensityField) -> Self {
        Self {
            width: field.nx(),
            height: field.ny(),
            pixels: field.values().iter().map(|d| 1.0 - d).collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }
}

/// Score and its gradient with respect to every submitted pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct JudgeResult {
    pub score: f64,
    pub grad: Vec<f64>,
}

/// Anything that can score an image and differentiate the score.
pub trait Judge {
    /// `seed` pins any randomness the judge uses (augmentations).
    fn judge(&mut self, image: &JudgeImage, seed: u64) -> Result<JudgeResult, JudgeError>;

    /// Short identifier recorded in run records.
    fn describe(&self) -> String;
}

/// Builds the image shown to the judge. With `mirror`, the half-width field
/// is reflected about its right edge, giving a `2 nx` wide image.
pub fn build_judge_image(
    densities: &DensityField,
    mask: &[f64],
    mirror: bool,
) -> Result<JudgeImage, JudgeError> {
    let (nx, ny) = (densities.nx(), densities.ny());
    if mask.len() != nx * ny {
        return Err(JudgeError::DimensionMismatch {
            expected: format!("{} mask entries", nx * ny),
            actual: mask.len().to_string(),
        });
    }
    if mask.iter().any(|&m| m != 0.0 && m != 1.0) {
        return Err(JudgeError::InvalidImage("mask entries must be 0 or 1".into()));
    }
    let width = if mirror { 2 * nx } else { nx };
    let mut pixels = vec![0.0; width * ny];
    for iy in 0..ny {
        for col in 0..width {
            let src = if col < nx { col } else { 2 * nx - 1 - col };
            let e = iy * nx + src;
            pixels[iy * width + col] = 1.0 - densities.values()[e] * mask[e];
        }
    }
    Ok(JudgeImage {
        width,
        height: ny,
        pixels,
    })
}

/// Adjoint of [`build_judge_image`] with respect to the densities:
/// pulls a per-pixel gradient back to a per-element one, summing mirrored
/// contributions.
pub fn judge_image_adjoint(
    pixel_grad: &[f64],
    mask: &[f64],
    nx: usize,
    ny: usize,
    mirror: bool,
) -> Result<Vec<f64>, JudgeError> {
    let width = if mirror { 2 * nx } else { nx };
    if pixel_grad.len() != width * ny || mask.len() != nx * ny {
        return Err(JudgeError::DimensionMismatch {
            expected: format!("{width}x{ny} gradient and {nx}x{ny} mask"),
            actual: format!("{} gradient, {} mask", pixel_grad.len(), mask.len()),
        });
    }
    let mut grad = vec![0.0; nx * ny];
    for iy in 0..ny {
        for col in 0..width {
            let src = if col < nx { col } else { 2 * nx - 1 - col };
            let e = iy * nx + src;
            grad[e] -= mask[e] * pixel_grad[iy * width + col];
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn solid_and_masked_images() {
        let d = DensityField::uniform(3, 2, 1.0).unwrap();
        let img = build_judge_image(&d, &[1.0; 6], false).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 0.0));
        let d = DensityField::new(3, 2, vec![0.3, 0.9, 1.0, 0.0, 0.5, 0.7]).unwrap();
        let img = build_judge_image(&d, &[0.0; 6], false).unwrap();
        assert!(img.pixels().iter().all(|&p| p == 1.0));
    }

    #[test]
    fn mirror_reflects_impulse() {
        let mut v = vec![0.0; 6];
        v[3 + 1] = 1.0; // row 1, column 1 of a 3x2 half
        let d = DensityField::new(3, 2, v).unwrap();
        let img = build_judge_image(&d, &[1.0; 6], true).unwrap();
        assert_eq!(img.width(), 6);
        let dark: Vec<usize> = (0..12).filter(|&i| img.pixels()[i] == 0.0).collect();
        assert_eq!(dark, vec![6 + 1, 6 + 4]);
    }

    #[test]
    fn adjoint_identity_with_mirror() {
        let (nx, ny) = (4, 3);
        let mut r = rng::seeded(5);
        let d: Vec<f64> = (0..nx * ny).map(|_| rng::unit_f64(&mut r)).collect();
        let mask: Vec<f64> = (0..nx * ny).map(|i| if i % 5 == 0 { 0.0 } else { 1.0 }).collect();
        for mirror in [false, true] {
            let width = if mirror { 2 * nx } else { nx };
            let y: Vec<f64> = (0..width * ny).map(|_| rng::unit_f64(&mut r) - 0.5).collect();
            let img = build_judge_image(&DensityField::new(nx, ny, d.clone()).unwrap(), &mask, mirror).unwrap();
            // The map is affine: pixel = 1 - A d. Check <A d, y> = <d, A^T y>.
            let ad: f64 = img.pixels().iter().zip(y.iter()).map(|(p, y)| (1.0 - p) * y).sum();
            let at_y = judge_image_adjoint(&y, &mask, nx, ny, mirror).unwrap();
            let rhs: f64 = -d.iter().zip(at_y.iter()).map(|(a, b)| a * b).sum::<f64>();
            assert!((ad - rhs).abs() < 1e-10);
            for (i, &m) in mask.iter().enumerate() {
                if m == 0.0 {
                    assert_eq!(at_y[i], 0.0);
                }
            }
        }
    }

    #[test]
    fn rejects_non_binary_mask() {
        let d = DensityField::uniform(2, 1, 0.5).unwrap();
        assert!(build_judge_image(&d, &[0.5, 1.0], false).is_err());
    }
}
