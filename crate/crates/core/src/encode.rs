//! Design encoding: raw parameter canvas → blurred → saturating map → densities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fem2d::DensityField;
use crate::rng;

pub const HILL_ALPHA: f64 = 0.8;
pub const HILL_EXPONENT: i32 = 20;
pub const HILL_OFFSET: f64 = 0.1;
/// Upper clamp applied to parameters before the Hill map.
pub const HILL_X_MAX: f64 = 4.0;

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("non-finite parameter at index {0}")]
    NonFinite(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Unconstrained learnable canvas, one value per element, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl ParameterField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, EncodeError> {
        if nx == 0 || ny == 0 || values.len() != nx * ny {
            return Err(EncodeError::DimensionMismatch {
                expected: format!("{} values for {nx}x{ny}", nx * ny),
                actual: values.len().to_string(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EncodeError::NonFinite(i));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Direct access for optimizers. Callers keep the values finite.
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn same_shape(&self, other: &ParameterField) -> Result<(), EncodeError> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(EncodeError::DimensionMismatch {
                expected: format!("{}x{}", self.nx, self.ny),
                actual: format!("{}x{}", other.nx, other.ny),
            });
        }
        Ok(())
    }
}

/// How a fresh canvas is filled.
#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    Ones,
    UniformRandom { seed: u64, lo: f64, hi: f64 },
    FromValues(Vec<f64>),
}

pub fn init_canvas(nx: usize, ny: usize, mode: InitMode) -> Result<ParameterField, EncodeError> {
    let n = nx * ny;
    let values = match mode {
        InitMode::Ones => vec![1.0; n],
        InitMode::UniformRandom { seed, lo, hi } => {
            if !(lo < hi) {
                return Err(EncodeError::InvalidArgument(format!(
                    "random init needs lo < hi, got [{lo}, {hi}]"
                )));
            }
            let mut r = rng::seeded(seed);
            (0..n).map(|_| lo + (hi - lo) * rng::unit_f64(&mut r)).collect()
        }
        InitMode::FromValues(v) => v,
    };
    ParameterField::new(nx, ny, values)
}

/// Truncated, normalized 2D Gaussian. Stored as its normalized 1D factor;
/// the 2D taps are the outer product.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    sigma: f64,
    radius: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    /// Kernel with radius `ceil(3 sigma)`. `sigma == 0` gives the identity.
    pub fn gaussian(sigma: f64) -> Result<Self, EncodeError> {
        if !(sigma >= 0.0 && sigma.is_finite()) {
            return Err(EncodeError::InvalidArgument(format!("blur sigma {sigma}")));
        }
        Self::with_radius(sigma, (3.0 * sigma).ceil() as usize)
    }

    pub fn with_radius(sigma: f64, radius: usize) -> Result<Self, EncodeError> {
        if sigma == 0.0 {
            return Ok(Self {
                sigma,
                radius: 0,
                taps: vec![1.0],
            });
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(EncodeError::InvalidArgument(format!("blur sigma {sigma}")));
        }
        let raw: Vec<f64> = (-(radius as i64)..=radius as i64)
            .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = raw.iter().sum();
        Ok(Self {
            sigma,
            radius,
            taps: raw.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    /// Normalized 1D taps, index `k + radius` for offset `k`.
    pub fn taps_1d(&self) -> &[f64] {
        &self.taps
    }

    /// 2D weight for offset `(dx, dy)`.
    pub fn weight(&self, dx: i64, dy: i64) -> f64 {
        let r = self.radius as i64;
        if dx.abs() > r || dy.abs() > r {
            return 0.0;
        }
        self.taps[(dx + r) as usize] * self.taps[(dy + r) as usize]
    }

    /// Sum of in-grid taps around each position of a line of length `n`.
    fn line_norms(&self, n: usize) -> Vec<f64> {
        let r = self.radius as i64;
        (0..n as i64)
            .map(|i| {
                (-r..=r)
                    .filter(|k| (0..n as i64).contains(&(i + k)))
                    .map(|k| self.taps[(k + r) as usize])
                    .sum()
            })
            .collect()
    }

    /// Boundary-renormalized blur of a row-major `nx` x `ny` grid.
    pub fn apply(&self, nx: usize, ny: usize, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), nx * ny);
        if self.radius == 0 {
            return input.to_vec();
        }
        let (norm_x, norm_y) = (self.line_norms(nx), self.line_norms(ny));
        let mut tmp = vec![0.0; nx * ny];
        self.pass(nx, ny, input, &mut tmp, Axis::X, &norm_x, false);
        let mut out = vec![0.0; nx * ny];
        self.pass(nx, ny, &tmp, &mut out, Axis::Y, &norm_y, false);
        out
    }

    /// Exact adjoint of [`BlurKernel::apply`].
    pub fn apply_transpose(&self, nx: usize, ny: usize, input: &[f64]) -> Vec<f64> {
        assert_eq!(input.len(), nx * ny);
        if self.radius == 0 {
            return input.to_vec();
        }
        let (norm_x, norm_y) = (self.line_norms(nx), self.line_norms(ny));
        let mut tmp = vec![0.0; nx * ny];
        self.pass(nx, ny, input, &mut tmp, Axis::Y, &norm_y, true);
        let mut out = vec![0.0; nx * ny];
        self.pass(nx, ny, &tmp, &mut out, Axis::X, &norm_x, true);
        out
    }

    /// One 1D pass. Forward: `out[i] = sum_k w_k in[i+k] / S(i)`.
    /// Transpose: `out[j] = sum_k w_k in[j-k] / S(j-k)`.
    #[allow(clippy::too_many_arguments)]
    fn pass(
        &self,
        nx: usize,
        ny: usize,
        input: &[f64],
        out: &mut [f64],
        axis: Axis,
        norms: &[f64],
        transpose: bool,
    ) {
        let r = self.radius as i64;
        let (len, lines) = match axis {
            Axis::X => (nx, ny),
            Axis::Y => (ny, nx),
        };
        let index = |line: usize, pos: usize| match axis {
            Axis::X => line * nx + pos,
            Axis::Y => pos * nx + line,
        };
        for line in 0..lines {
            for i in 0..len as i64 {
                let mut acc = 0.0;
                for k in -r..=r {
                    let j = i + k;
                    if !(0..len as i64).contains(&j) {
                        continue;
                    }
                    let w = self.taps[(k + r) as usize];
                    if transpose {
                        acc += w * input[index(line, j as usize)] / norms[j as usize];
                    } else {
                        acc += w * input[index(line, j as usize)];
                    }
                }
                out[index(line, i as usize)] = if transpose { acc } else { acc / norms[i as usize] };
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Axis {
    X,
    Y,
}

pub fn blur(params: &ParameterField, kernel: &BlurKernel) -> ParameterField {
    ParameterField {
        nx: params.nx,
        ny: params.ny,
        values: kernel.apply(params.nx, params.ny, &params.values),
    }
}

pub fn blur_transpose(grad: &ParameterField, kernel: &BlurKernel) -> ParameterField {
    ParameterField {
        nx: grad.nx,
        ny: grad.ny,
        values: kernel.apply_transpose(grad.nx, grad.ny, &grad.values),
    }
}

/// Hill-style saturating map `1 / (1 + alpha / (x^n + 0.1))` on `[0, x_max]`.
#[inline]
pub fn hill_scalar(x: f64) -> f64 {
    let x = x.clamp(0.0, HILL_X_MAX);
    let s = x.powi(HILL_EXPONENT) + HILL_OFFSET;
    s / (s + HILL_ALPHA)
}

/// Derivative of [`hill_scalar`], zero outside the clamp range.
#[inline]
pub fn hill_derivative_scalar(x: f64) -> f64 {
    if !(0.0..=HILL_X_MAX).contains(&x) {
        return 0.0;
    }
    let s = x.powi(HILL_EXPONENT) + HILL_OFFSET;
    HILL_ALPHA * HILL_EXPONENT as f64 * x.powi(HILL_EXPONENT - 1) / ((s + HILL_ALPHA) * (s + HILL_ALPHA))
}

pub fn hill(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| hill_scalar(v)).collect()
}

pub fn hill_derivative(x: &[f64]) -> Vec<f64> {
    x.iter().map(|&v| hill_derivative_scalar(v)).collect()
}

/// The map applied after the blur.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    /// Hill sigmoid with parameters clamped to `[0, 4]`.
    #[default]
    Hill,
    /// Identity with parameters clamped to `[0, 1]` (ablation).
    Identity,
}

impl Activation {
    pub fn param_upper(self) -> f64 {
        match self {
            Activation::Hill => HILL_X_MAX,
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, x: f64) -> f64 {
        match self {
            Activation::Hill => hill_scalar(x),
            Activation::Identity => x.clamp(0.0, 1.0),
        }
    }

    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Hill => hill_derivative_scalar(x),
            Activation::Identity => {
                if (0.0..=1.0).contains(&x) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    /// Per-pixel inverse used to seed a canvas from an image.
    pub fn inverse(self, d: f64) -> f64 {
        match self {
            Activation::Hill => {
                let d = d.clamp(0.01, 0.99);
                let base = HILL_ALPHA * d / (1.0 - d) - HILL_OFFSET;
                if base <= 0.0 {
                    0.0
                } else {
                    base.powf(1.0 / HILL_EXPONENT as f64).clamp(0.0, HILL_X_MAX)
                }
            }
            Activation::Identity => d.clamp(0.0, 1.0),
        }
    }
}

/// Intermediate values of one forward pass, kept for the backward pass.
#[derive(Debug, Clone)]
pub struct EncodeTrace {
    params: Vec<f64>,
    blurred: Vec<f64>,
}

impl EncodeTrace {
    pub fn blurred(&self) -> &[f64] {
        &self.blurred
    }
}

/// Blur kernel plus activation: the full parameter-to-density map.
#[derive(Debug, Clone)]
pub struct Encoder {
    kernel: BlurKernel,
    activation: Activation,
}

impl Encoder {
    pub fn new(kernel: BlurKernel, activation: Activation) -> Self {
        Self { kernel, activation }
    }

    pub fn kernel(&self) -> &BlurKernel {
        &self.kernel
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn forward(&self, params: &ParameterField) -> (DensityField, EncodeTrace) {
        let upper = self.activation.param_upper();
        let clamped: Vec<f64> = params.values.iter().map(|v| v.clamp(0.0, upper)).collect();
        let blurred = self.kernel.apply(params.nx, params.ny, &clamped);
        let values = blurred.iter().map(|&b| self.activation.forward(b)).collect();
        let density = DensityField::new(params.nx, params.ny, values)
            .expect("activation output lies in [0, 1]");
        (
            density,
            EncodeTrace {
                params: params.values.clone(),
                blurred,
            },
        )
    }

    /// Pulls a density gradient back to the parameters.
    pub fn backward(&self, trace: &EncodeTrace, nx: usize, ny: usize, grad_density: &[f64]) -> Vec<f64> {
        let upper = self.activation.param_upper();
        let pre: Vec<f64> = grad_density
            .iter()
            .zip(trace.blurred.iter())
            .map(|(g, &b)| g * self.activation.derivative(b))
            .collect();
        let mut grad = self.kernel.apply_transpose(nx, ny, &pre);
        for (g, &p) in grad.iter_mut().zip(trace.params.iter()) {
            if !(0.0..=upper).contains(&p) {
                *g = 0.0;
            }
        }
        grad
    }
}

/// `hill(blur(clamp(params)))`.
pub fn encode(params: &ParameterField, kernel: &BlurKernel) -> DensityField {
    Encoder::new(kernel.clone(), Activation::Hill).forward(params).0
}

/// Seeds a canvas so that the activation reproduces `image` pixel by pixel.
/// The blur is not inverted.
pub fn init_from_image(image: &DensityField, activation: Activation) -> ParameterField {
    ParameterField {
        nx: image.nx(),
        ny: image.ny(),
        values: image.values().iter().map(|&d| activation.inverse(d)).collect(),
    }
}

pub fn inner_product(a: &ParameterField, b: &ParameterField) -> Result<f64, EncodeError> {
    a.same_shape(b)?;
    Ok(a.values.iter().zip(b.values.iter()).map(|(x, y)| x * y).sum())
}
