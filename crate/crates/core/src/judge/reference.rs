use super::{Judge, JudgeError, JudgeImage, JudgeResult};
use crate::encode::BlurKernel;

/// Below this centered norm an image is treated as constant.
const DEGENERATE_NORM: f64 = 1e-12;

/// Deterministic differentiable judge: cosine similarity between the
/// mean-centered, Gaussian-blurred image and target.
#[derive(Debug, Clone)]
pub struct ReferenceJudge {
    target: JudgeImage,
    kernel: BlurKernel,
    /// Blurred, centered target and its norm.
    target_centered: Vec<f64>,
    target_norm: f64,
}

impl ReferenceJudge {
    pub fn new(target: JudgeImage, blur_sigma: f64) -> Result<Self, JudgeError> {
        let kernel = BlurKernel::gaussian(blur_sigma).map_err(|e| JudgeError::InvalidImage(e.to_string()))?;
        let mut target_centered = kernel.apply(target.width(), target.height(), target.pixels());
        center(&mut target_centered);
        let target_norm = norm(&target_centered);
        Ok(Self {
            target,
            kernel,
            target_centered,
            target_norm,
        })
    }

    pub fn target(&self) -> &JudgeImage {
        &self.target
    }

    pub fn blur_sigma(&self) -> f64 {
        self.kernel.sigma()
    }

    pub fn score(&self, image: &JudgeImage) -> Result<JudgeResult, JudgeError> {
        let (w, h) = (self.target.width(), self.target.height());
        if image.width() != w || image.height() != h {
            return Err(JudgeError::DimensionMismatch {
                expected: format!("{w}x{h}"),
                actual: format!("{}x{}", image.width(), image.height()),
            });
        }
        let mut a = self.kernel.apply(w, h, image.pixels());
        center(&mut a);
        let a_norm = norm(&a);
        if a_norm < DEGENERATE_NORM || self.target_norm < DEGENERATE_NORM {
            return Ok(JudgeResult {
                score: 0.0,
                grad: vec![0.0; w * h],
            });
        }
        let b = &self.target_centered;
        let dot: f64 = a.iter().zip(b.iter()).map(|(x, y)| x * y).sum();
        let denom = a_norm * self.target_norm;
        let score = dot / denom;
        // d score / d a = b / (|a||b|) - score * a / |a|^2
        let mut g: Vec<f64> = a
            .iter()
            .zip(b.iter())
            .map(|(ai, bi)| bi / denom - score * ai / (a_norm * a_norm))
            .collect();
        // Centering is an orthogonal projection, hence self-adjoint.
        center(&mut g);
        let grad = self.kernel.apply_transpose(w, h, &g);
        Ok(JudgeResult { score, grad })
    }
}

impl Judge for ReferenceJudge {
    fn judge(&mut self, image: &JudgeImage, _seed: u64) -> Result<JudgeResult, JudgeError> {
        self.score(image)
    }

    fn describe(&self) -> String {
        format!("reference(blur_sigma={})", self.kernel.sigma())
    }
}

fn center(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
