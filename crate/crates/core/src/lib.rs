//! Differentiable 2D topology optimization with a visual judge.
//!
//! A raw parameter canvas is blurred and pushed through a Hill sigmoid into
//! material densities ([`encode`]), analyzed with a SIMP finite-element model
//! ([`fem2d`]), rendered and scored by a judge ([`judge`]), and optimized
//! jointly with AdamW ([`opt`]).

pub mod config;
pub mod encode;
pub mod export;
pub mod fem2d;
pub mod formats;
pub mod gradcheck;
pub mod judge;
pub mod opt;
pub mod problems;
pub mod rng;
pub mod targets;
pub mod trials;

pub use config::RunConfig;
pub use encode::{BlurKernel, ParameterField};
pub use fem2d::{DensityField, DesignProblem, FemSolution};
pub use judge::{Judge, JudgeImage, JudgeResult};
pub use opt::{LossBreakdown, LossWeights, Mode, OptimizerState, RunRecord};
