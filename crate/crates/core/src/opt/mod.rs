//! Joint loss `L = c + beta1 m - beta2 v`, its gradient with respect to the
//! raw canvas, AdamW, and the epoch loop.

mod adamw;
pub mod checkpoint;
mod run;

pub use adamw::{adamw_step, AdamWConfig, OptimizerState};
pub use run::{
    build_judge, read_losses, run, run_with_judge, EpochStats, FinalSummary, LossRow, RunError,
    RunRecord, SolverStats,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::{EncodeError, EncodeTrace, Encoder, ParameterField};
use crate::fem2d::{
    compliance_gradient, compliance_mask, DensityField, FemError, FemSolution, FemSolver,
};
use crate::judge::{build_judge_image, judge_image_adjoint, Judge, JudgeError};

#[derive(Debug, Error)]
pub enum OptError {
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("non-finite {what} at element {index}")]
    NonFinite { what: &'static str, index: usize },
    #[error("mode {0:?} needs a judge")]
    MissingJudge(Mode),
}

/// Which terms of the joint loss drive the gradient.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Joint,
    PhysicsOnly,
    VisionOnly,
}

impl Mode {
    pub fn uses_judge(self) -> bool {
        !matches!(self, Mode::PhysicsOnly)
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "joint" => Ok(Mode::Joint),
            "physics_only" | "physics" => Ok(Mode::PhysicsOnly),
            "vision_only" | "vision" => Ok(Mode::VisionOnly),
            other => Err(format!("unknown mode {other:?} (joint, physics_only, vision_only)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub beta1: f64,
    pub beta2: f64,
    pub target_density: f64,
}

impl LossWeights {
    pub fn new(beta1: f64, beta2: f64, target_density: f64) -> Result<Self, OptError> {
        let w = Self {
            beta1,
            beta2,
            target_density,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), OptError> {
        if !(self.beta1 >= 0.0 && self.beta1.is_finite()) || !(self.beta2 >= 0.0 && self.beta2.is_finite()) {
            return Err(OptError::InvalidWeights(format!(
                "beta1={} and beta2={} must be finite and non-negative",
                self.beta1, self.beta2
            )));
        }
        if !(self.target_density > 0.0 && self.target_density <= 1.0) {
            return Err(OptError::InvalidWeights(format!(
                "target density {} outside (0, 1]",
                self.target_density
            )));
        }
        Ok(())
    }
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            beta1: 50.0,
            beta2: 100.0,
            target_density: 0.3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub compliance: f64,
    pub material: f64,
    pub vision: f64,
    pub total: f64,
}

/// Reading of the material term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaterialCostKind {
    /// `|d* - mean(d)|`.
    #[default]
    VolumeFraction,
    /// `mean_e |d* - d_e|`.
    Elementwise,
}

/// Material cost and its gradient with respect to each density. Both kinks
/// use the zero subgradient.
pub fn material_cost(densities: &DensityField, target: f64, kind: MaterialCostKind) -> (f64, Vec<f64>) {
    let values = densities.values();
    let n = values.len() as f64;
    match kind {
        MaterialCostKind::VolumeFraction => {
            let diff = densities.mean() - target;
            let g = sign(diff) / n;
            (diff.abs(), vec![g; values.len()])
        }
        MaterialCostKind::Elementwise => {
            let m = values.iter().map(|d| (target - d).abs()).sum::<f64>() / n;
            (m, values.iter().map(|d| sign(d - target) / n).collect())
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Everything one loss evaluation produced.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub breakdown: LossBreakdown,
    /// `dL/dparams`.
    pub grad: Vec<f64>,
    pub densities: DensityField,
    pub solution: FemSolution,
    /// Structural mask of this evaluation (reported in every mode).
    pub mask: Vec<f64>,
    pub trace: EncodeTrace,
}

/// The full forward/backward pipeline for one problem.
pub struct Objective {
    solver: FemSolver,
    encoder: Encoder,
    judge: Option<Box<dyn Judge>>,
    weights: LossWeights,
    mode: Mode,
    material_kind: MaterialCostKind,
    mask_threshold: f64,
    /// Whether joint mode masks the judged image.
    apply_mask: bool,
}

impl Objective {
    pub fn new(
        solver: FemSolver,
        encoder: Encoder,
        judge: Option<Box<dyn Judge>>,
        weights: LossWeights,
        mode: Mode,
    ) -> Result<Self, OptError> {
        weights.validate()?;
        if mode.uses_judge() && judge.is_none() {
            return Err(OptError::MissingJudge(mode));
        }
        Ok(Self {
            solver,
            encoder,
            judge,
            weights,
            mode,
            material_kind: MaterialCostKind::VolumeFraction,
            mask_threshold: crate::fem2d::DEFAULT_MASK_THRESHOLD,
            apply_mask: true,
        })
    }

    pub fn with_material_cost(mut self, kind: MaterialCostKind) -> Self {
        self.material_kind = kind;
        self
    }

    pub fn with_mask(mut self, apply: bool, threshold: f64) -> Self {
        self.apply_mask = apply;
        self.mask_threshold = threshold;
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn weights(&self) -> &LossWeights {
        &self.weights
    }

    pub fn encoder(&self) -> &Encoder {
        &self.encoder
    }

    pub fn solver(&self) -> &FemSolver {
        &self.solver
    }

    pub fn judge_mut(&mut self) -> Option<&mut (dyn Judge + 'static)> {
        self.judge.as_deref_mut()
    }

    pub fn mask_threshold(&self) -> f64 {
        self.mask_threshold
    }

    /// Mask applied to the judged image: the structural mask in joint mode
    /// (when enabled), all ones otherwise.
    fn judge_mask(&self, structural: &[f64]) -> Vec<f64> {
        match (self.mode, self.apply_mask) {
            (Mode::Joint, true) => structural.to_vec(),
            _ => vec![1.0; structural.len()],
        }
    }

    /// Densities, FEM solution and structural mask, without a judge call.
    pub fn analyze(&mut self, params: &ParameterField) -> Result<(DensityField, FemSolution, Vec<f64>), OptError> {
        let (densities, _) = self.encoder.forward(params);
        let solution = self.solver.solve(&densities)?;
        let mask = compliance_mask(&solution, self.mask_threshold());
        Ok((densities, solution, mask))
    }

    /// Judge score of `densities` seen through `mask` (mirrored for
    /// symmetric problems); `None` without a judge.
    pub fn score(&mut self, densities: &DensityField, mask: &[f64], seed: u64) -> Result<Option<f64>, OptError> {
        let mirror = self.solver.problem().is_symmetric();
        let Some(judge) = self.judge.as_deref_mut() else {
            return Ok(None);
        };
        let image = build_judge_image(densities, mask, mirror)?;
        Ok(Some(judge.judge(&image, seed)?.score))
    }

    /// Forward pass, loss, and `dL/dparams`. `seed` is forwarded to the judge.
    pub fn evaluate(&mut self, params: &ParameterField, seed: u64) -> Result<Evaluation, OptError> {
        let problem = self.solver.problem();
        let (nx, ny) = (problem.nx(), problem.ny());
        if params.nx() != nx || params.ny() != ny {
            return Err(OptError::DimensionMismatch(format!(
                "params {}x{}, problem {nx}x{ny}",
                params.nx(),
                params.ny()
            )));
        }
        let mirror = problem.is_symmetric();
        let (densities, trace) = self.encoder.forward(params);
        let solution = self.solver.solve(&densities)?;
        let mask = compliance_mask(&solution, self.mask_threshold());
        let c = solution.total_compliance;
        let (m, dm) = material_cost(&densities, self.weights.target_density, self.material_kind);

        let (v, dv) = if self.mode.uses_judge() {
            let judge_mask = self.judge_mask(&mask);
            let image = build_judge_image(&densities, &judge_mask, mirror)?;
            let judge = self.judge.as_deref_mut().ok_or(OptError::MissingJudge(self.mode))?;
            let result = judge.judge(&image, seed)?;
            if result.grad.len() != image.width() * image.height() {
                return Err(OptError::DimensionMismatch(format!(
                    "judge gradient has {} entries for a {}x{} image",
                    result.grad.len(),
                    image.width(),
                    image.height()
                )));
            }
            let dv = judge_image_adjoint(&result.grad, &judge_mask, nx, ny, mirror)?;
            (result.score, dv)
        } else {
            (0.0, vec![0.0; nx * ny])
        };

        let LossWeights { beta1, beta2, .. } = self.weights;
        let (total, grad_density): (f64, Vec<f64>) = match self.mode {
            Mode::Joint => {
                let dc = compliance_gradient(self.solver.problem(), &densities, &solution)?;
                let g = (0..nx * ny).map(|e| dc[e] + beta1 * dm[e] - beta2 * dv[e]).collect();
                (c + beta1 * m - beta2 * v, g)
            }
            Mode::PhysicsOnly => {
                let dc = compliance_gradient(self.solver.problem(), &densities, &solution)?;
                let g = (0..nx * ny).map(|e| dc[e] + beta1 * dm[e]).collect();
                (c + beta1 * m, g)
            }
            Mode::VisionOnly => (-beta2 * v, dv.iter().map(|g| -beta2 * g).collect()),
        };
        let grad = self.encoder.backward(&trace, nx, ny, &grad_density);
        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(OptError::NonFinite {
                what: "gradient",
                index,
            });
        }
        if !total.is_finite() {
            return Err(OptError::NonFinite { what: "loss", index: 0 });
        }
        Ok(Evaluation {
            breakdown: LossBreakdown {
                compliance: c,
                material: m,
                vision: v,
                total,
            },
            grad,
            densities,
            solution,
            mask,
            trace,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn volume_fraction_cost() {
        let d = DensityField::uniform(3, 3, 0.5).unwrap();
        let (m, g) = material_cost(&d, 0.3, MaterialCostKind::VolumeFraction);
        assert!((m - 0.2).abs() < 1e-15);
        assert!(g.iter().all(|&x| x == 1.0 / 9.0));

        let d = DensityField::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let (m, g) = material_cost(&d, 0.5, MaterialCostKind::VolumeFraction);
        assert_eq!(m, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));

        let d = DensityField::uniform(2, 2, 0.1).unwrap();
        let (m, g) = material_cost(&d, 0.3, MaterialCostKind::VolumeFraction);
        assert!((m - 0.2).abs() < 1e-15);
        assert!(g.iter().all(|&x| x == -0.25));
    }

    #[test]
    fn elementwise_cost() {
        let d = DensityField::new(2, 2, vec![1.0, 0.0, 1.0, 0.0]).unwrap();
        let (m, g) = material_cost(&d, 0.5, MaterialCostKind::Elementwise);
        assert!((m - 0.5).abs() < 1e-15);
        assert_eq!(g, vec![0.25, -0.25, 0.25, -0.25]);
    }

    #[test]
    fn weights_validation() {
        assert!(LossWeights::new(50.0, 100.0, 0.3).is_ok());
        assert!(LossWeights::new(-1.0, 100.0, 0.3).is_err());
        assert!(LossWeights::new(1.0, 1.0, 0.0).is_err());
        assert!(LossWeights::new(1.0, 1.0, 1.0).is_ok());
        assert!(LossWeights::new(1.0, f64::NAN, 0.5).is_err());
    }

    #[test]
    fn mode_parsing() {
        assert_eq!("joint".parse::<Mode>().unwrap(), Mode::Joint);
        assert_eq!("physics_only".parse::<Mode>().unwrap(), Mode::PhysicsOnly);
        assert_eq!("vision_only".parse::<Mode>().unwrap(), Mode::VisionOnly);
        assert!("both".parse::<Mode>().is_err());
    }
}
