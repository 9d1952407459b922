//! Run configuration.
//!
//! The file format is flat TOML: one `key = value` per line, `#` comments,
//! strings in double quotes, no tables. Unknown keys are rejected. Integers
//! (seeds included) must fit in a signed 64-bit value. Every key is optional;
//! [`RunConfig::resolve`] fills problem-dependent defaults, and the resolved
//! config is written back next to the run's artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encode::Activation;
use crate::fem2d::{LinearSolverKind, Material, DEFAULT_MASK_THRESHOLD};
use crate::judge::{DEFAULT_AUGMENTATIONS, DEFAULT_TIMEOUT_MS};
use crate::opt::{AdamWConfig, LossWeights, MaterialCostKind, Mode};
use crate::problems;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JudgeKind {
    /// Built-in cosine judge against `target_image`.
    #[default]
    Reference,
    /// HTTP sidecar scoring `prompt`.
    Remote,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitKind {
    #[default]
    Ones,
    /// Uniform in `[init_lo, init_hi]` from the run seed.
    Random,
    /// Inverse activation of `init_image`.
    Image,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub problem: String,
    pub nx: Option<usize>,
    pub ny: Option<usize>,
    /// Optimize the left half of symmetric problems.
    pub symmetry: bool,
    pub mode: Mode,

    pub judge: JudgeKind,
    /// `builtin:<name>` or a PGM/PNG path.
    pub target_image: Option<String>,
    pub judge_blur_sigma: f64,
    pub prompt: Option<String>,
    pub endpoint: Option<String>,
    pub augmentations: u32,
    pub judge_timeout_ms: u64,

    pub beta1: Option<f64>,
    pub beta2: Option<f64>,
    pub target_density: Option<f64>,
    pub material_cost: MaterialCostKind,

    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub epochs: usize,
    pub seed: u64,

    pub init: InitKind,
    pub init_lo: f64,
    pub init_hi: f64,
    pub init_image: Option<String>,

    pub blur_sigma: f64,
    pub activation: Activation,
    /// Clip parameters back into the activation's clamp range after each
    /// step so no element is stranded where the gradient vanishes.
    pub project_params: bool,
    pub mask: bool,
    pub mask_threshold: f64,

    pub snapshot_every: usize,
    pub binarize_threshold: f64,

    pub e0: f64,
    pub e_min: f64,
    pub nu: f64,
    pub penalty: f64,
    pub solver: LinearSolverKind,

    pub out: String,
    /// Checkpoint to continue from.
    pub resume: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        let material = Material::default();
        Self {
            problem: "tower".into(),
            nx: None,
            ny: None,
            symmetry: true,
            mode: Mode::Joint,
            judge: JudgeKind::Reference,
            target_image: None,
            judge_blur_sigma: 2.0,
            prompt: None,
            endpoint: None,
            augmentations: DEFAULT_AUGMENTATIONS,
            judge_timeout_ms: DEFAULT_TIMEOUT_MS,
            beta1: None,
            beta2: None,
            target_density: None,
            material_cost: MaterialCostKind::VolumeFraction,
            learning_rate: adam.learning_rate,
            adam_beta1: adam.beta1,
            adam_beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            epochs: 100,
            seed: 0,
            init: InitKind::Ones,
            init_lo: 0.0,
            init_hi: 2.0,
            init_image: None,
            blur_sigma: 1.0,
            activation: Activation::Hill,
            project_params: true,
            mask: true,
            mask_threshold: DEFAULT_MASK_THRESHOLD,
            snapshot_every: 10,
            binarize_threshold: 0.5,
            e0: material.e0,
            e_min: material.e_min,
            nu: material.nu,
            penalty: material.penalty,
            solver: LinearSolverKind::Auto,
            out: "runs/out".into(),
            resume: None,
        }
    }
}

fn file_exists(what: &str, path: &str) -> Result<(), ConfigError> {
    if Path::new(path).is_file() {
        Ok(())
    } else {
        Err(ConfigError::Invalid(format!("{what} {path:?} does not exist")))
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("flat config serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), ConfigError> {
        fs::write(path, self.to_toml_string()).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    /// Fills problem defaults and checks every field, including that
    /// referenced files exist.
    pub fn resolve(&self) -> Result<RunConfig, ConfigError> {
        let spec = problems::lookup(&self.problem).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let mut c = self.clone();
        c.nx.get_or_insert(spec.nx);
        c.ny.get_or_insert(spec.ny);
        c.beta1.get_or_insert(spec.beta1);
        c.beta2.get_or_insert(spec.beta2);
        c.target_density.get_or_insert(spec.target_density);
        if !spec.symmetric {
            c.symmetry = false;
        }
        let invalid = |m: String| Err(ConfigError::Invalid(m));

        problems::make_problem(&c.problem, c.nx(), c.ny()).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        c.weights().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        c.material().validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if c.epochs == 0 {
            return invalid("epochs must be at least 1".into());
        }
        if c.snapshot_every == 0 {
            return invalid("snapshot_every must be at least 1".into());
        }
        if !(c.learning_rate > 0.0 && c.learning_rate.is_finite()) {
            return invalid(format!("learning_rate {} must be positive", c.learning_rate));
        }
        if !(0.0..1.0).contains(&c.adam_beta1) || !(0.0..1.0).contains(&c.adam_beta2) || !(c.adam_eps > 0.0) {
            return invalid("adam_beta1/adam_beta2 must lie in [0, 1) and adam_eps be positive".into());
        }
        if !(c.weight_decay >= 0.0) {
            return invalid(format!("weight_decay {} must be non-negative", c.weight_decay));
        }
        if !(c.blur_sigma >= 0.0) || !(c.judge_blur_sigma >= 0.0) {
            return invalid("blur sigmas must be non-negative".into());
        }
        if !(0.0..=1.0).contains(&c.binarize_threshold) {
            return invalid(format!("binarize_threshold {} outside [0, 1]", c.binarize_threshold));
        }
        if c.augmentations == 0 {
            return invalid("augmentations must be at least 1".into());
        }
        if !c.mask_threshold.is_finite() {
            return invalid("mask_threshold must be finite".into());
        }
        match c.init {
            InitKind::Random if !(c.init_lo < c.init_hi) => {
                return invalid(format!("random init needs init_lo < init_hi, got [{}, {}]", c.init_lo, c.init_hi));
            }
            InitKind::Image => match &c.init_image {
                Some(p) => file_exists("init_image", p)?,
                None => return invalid("init = \"image\" needs init_image".into()),
            },
            _ => {}
        }
        if c.mode.uses_judge() {
            match c.judge {
                JudgeKind::Reference if c.target_image.is_none() => {
                    return invalid(format!("{:?} mode with the reference judge needs target_image", c.mode));
                }
                JudgeKind::Remote if c.prompt.as_deref().map_or(true, |p| p.trim().is_empty()) => {
                    return invalid(format!("{:?} mode with the remote judge needs a prompt", c.mode));
                }
                JudgeKind::Remote if c.endpoint.is_none() => {
                    return invalid("remote judge needs an endpoint (or TIDES_JUDGE_ENDPOINT)".into());
                }
                _ => {}
            }
        }
        if let Some(t) = &c.target_image {
            if !t.starts_with("builtin:") {
                file_exists("target_image", t)?;
            }
        }
        if let Some(r) = &c.resume {
            file_exists("resume checkpoint", r)?;
        }
        Ok(c)
    }

    pub fn nx(&self) -> usize {
        self.nx.unwrap_or_else(|| problems::lookup(&self.problem).map_or(0, |s| s.nx))
    }

    pub fn ny(&self) -> usize {
        self.ny.unwrap_or_else(|| problems::lookup(&self.problem).map_or(0, |s| s.ny))
    }

    /// Loss weights; problem defaults stand in for unset values.
    pub fn weights(&self) -> LossWeights {
        let spec = problems::lookup(&self.problem).ok();
        LossWeights {
            beta1: self.beta1.or(spec.map(|s| s.beta1)).unwrap_or(50.0),
            beta2: self.beta2.or(spec.map(|s| s.beta2)).unwrap_or(100.0),
            target_density: self.target_density.or(spec.map(|s| s.target_density)).unwrap_or(0.3),
        }
    }

    pub fn material(&self) -> Material {
        Material {
            e0: self.e0,
            e_min: self.e_min,
            nu: self.nu,
            penalty: self.penalty,
        }
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(&self.out)
    }
}

/// Parses `N` or `NXxNY`.
pub fn parse_resolution(text: &str) -> Result<(usize, usize), String> {
    let parse = |s: &str| {
        s.trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("bad resolution {text:?} (expected N or NXxNY)"))
    };
    match text.split_once(['x', 'X']) {
        Some((a, b)) => Ok((parse(a)?, parse(b)?)),
        None => {
            let n = parse(text)?;
            Ok((n, n))
        }
    }
}
