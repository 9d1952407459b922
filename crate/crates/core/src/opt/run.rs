//! The epoch loop and everything it writes.
//!
//! Output directory layout:
//!
//! ```text
//! config.toml          resolved configuration
//! losses.csv           epoch,compliance,material,vision,total,mean_density
//! snapshots/           epoch_NNNN.tdsf and .pgm every `snapshot_every` epochs
//! final_density.*      final densities (full width for symmetric runs)
//! final_mask.tdsf      structural mask of the final design
//! final_binary.*       final densities thresholded at `binarize_threshold`
//! final_cleaned.*      binary design reduced to anchored components
//! checkpoint.tide      optimizer state after the last completed epoch
//! record.json          the RunRecord
//! ```

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::checkpoint::Checkpoint;
use super::{adamw_step, MaterialCostKind, Objective, OptError, OptimizerState};
use crate::config::{ConfigError, InitKind, JudgeKind, RunConfig};
use crate::encode::{init_canvas, init_from_image, BlurKernel, Encoder, InitMode, ParameterField};
use crate::export::{binarize, floating_material, keep_anchored_components, mirror_field};
use crate::fem2d::{DensityField, FemSolver};
use crate::formats::{self, Field, FormatError};
use crate::judge::{Judge, JudgeError, JudgeImage, ReferenceJudge, RemoteJudge};
use crate::problems::{self, anchor_elements, ProblemError};
use crate::rng::TrackedRng;
use crate::targets;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Opt(#[from] OptError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("judge failed at epoch {epoch} ({source}); resume from {}", checkpoint.display())]
    JudgeFailed {
        epoch: usize,
        checkpoint: PathBuf,
        source: JudgeError,
    },
    #[error("non-finite values at epoch {epoch} ({source}); state dumped to {}", dump.display())]
    NonFinite {
        epoch: usize,
        dump: PathBuf,
        source: OptError,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub compliance: f64,
    pub material: f64,
    pub vision: f64,
    pub total: f64,
    pub mean_density: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub direct: bool,
    pub max_residual: f64,
    pub mean_residual: f64,
    pub cg_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub wall_clock_seconds: f64,
    pub epoch_seconds: Vec<f64>,
}

impl EpochStats {
    pub fn mean_epoch_seconds(&self) -> f64 {
        if self.epoch_seconds.is_empty() {
            0.0
        } else {
            self.epoch_seconds.iter().sum::<f64>() / self.epoch_seconds.len() as f64
        }
    }
}

/// Metrics and artifacts of the final design. Fields are full width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinalSummary {
    pub nx: usize,
    pub ny: usize,
    /// Compliance of the simulated domain (the half domain for symmetric runs).
    pub compliance: f64,
    /// Judge score of the design as the mode sees it (masked in joint
    /// mode), if a judge is configured.
    pub score: Option<f64>,
    /// Judge score of the unmasked design.
    pub score_unmasked: Option<f64>,
    pub mean_density: f64,
    /// Fraction of densities in `(0.15, 0.85)`.
    pub grey_fraction: f64,
    /// Elements with density > 0.5 and mask 0.
    pub floating_elements: usize,
    /// Solid elements of the cleaned binary design whose mask is 0.
    pub floating_after_cleanup: usize,
    pub density_path: PathBuf,
    pub mask_path: PathBuf,
    pub binary_path: PathBuf,
    pub cleaned_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub judge: Option<String>,
    pub out_dir: PathBuf,
    pub losses: Vec<LossRow>,
    pub snapshots: Vec<PathBuf>,
    #[serde(rename = "final")]
    pub final_design: FinalSummary,
    pub solver: SolverStats,
    pub timing: EpochStats,
    pub checkpoint: PathBuf,
}

impl RunRecord {
    pub fn load(dir: &Path) -> Result<Self, RunError> {
        let path = dir.join("record.json");
        let text = fs::read_to_string(&path).map_err(io(&path))?;
        serde_json::from_str(&text).map_err(|e| RunError::Io {
            path,
            source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
        })
    }
}

/// Builds the judge a config asks for. Physics-only runs get one when it is
/// configured, for final scoring.
pub fn build_judge(config: &RunConfig) -> Result<Option<Box<dyn Judge>>, RunError> {
    let (nx, ny) = (config.nx(), config.ny());
    match config.judge {
        JudgeKind::Reference => {
            let Some(spec) = &config.target_image else {
                return Ok(None);
            };
            let field = targets::load_target(spec, nx, ny)?;
            let image = JudgeImage::from_material(
                &DensityField::new(nx, ny, field.values).map_err(OptError::from)?,
            );
            let judge = ReferenceJudge::new(image, config.judge_blur_sigma).map_err(OptError::from)?;
            Ok(Some(Box::new(judge)))
        }
        JudgeKind::Remote => {
            let (Some(endpoint), Some(prompt)) = (&config.endpoint, &config.prompt) else {
                return Ok(None);
            };
            let mut judge = RemoteJudge::new(endpoint, prompt, config.augmentations, config.judge_timeout_ms)
                .map_err(OptError::from)?;
            judge.health().map_err(OptError::from)?;
            Ok(Some(Box::new(judge)))
        }
    }
}

/// Resolves `config`, builds its judge, and runs it.
pub fn run(config: &RunConfig) -> Result<RunRecord, RunError> {
    let resolved = config.resolve()?;
    let judge = build_judge(&resolved)?;
    run_with_judge(&resolved, judge)
}

fn write_csv(path: &Path, rows: &[LossRow]) -> Result<(), RunError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    for row in rows {
        w.serialize(row).map_err(|e| RunError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })?;
    }
    w.flush().map_err(io(path))
}

pub fn read_losses(path: &Path) -> Result<Vec<LossRow>, RunError> {
    let mut r = csv::Reader::from_path(path).map_err(|e| RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    })?;
    r.deserialize()
        .collect::<Result<Vec<LossRow>, _>>()
        .map_err(|e| RunError::Io {
            path: path.to_path_buf(),
            source: e.into(),
        })
}

fn write_field(dir: &Path, stem: &str, field: &Field, pgm: bool) -> Result<PathBuf, RunError> {
    let path = dir.join(format!("{stem}.tdsf"));
    formats::write_tdsf(&path, field)?;
    if pgm {
        formats::write_pgm(&dir.join(format!("{stem}.pgm")), field)?;
    }
    Ok(path)
}

struct Loop {
    out: PathBuf,
    params: ParameterField,
    state: OptimizerState,
    rng: TrackedRng,
    rows: Vec<LossRow>,
}

impl Loop {
    fn checkpoint(&self, rng_draws: u64) -> Checkpoint {
        Checkpoint {
            nx: self.params.nx(),
            ny: self.params.ny(),
            params: self.params.values().iter().map(|&p| p as f32).collect(),
            first_moment: self.state.first_moment.clone(),
            second_moment: self.state.second_moment.clone(),
            step: self.state.step,
            rng_seed: self.rng.seed(),
            rng_draws,
        }
    }

    fn persist(&self, rng_draws: u64) -> Result<PathBuf, RunError> {
        let path = self.out.join("checkpoint.tide");
        self.checkpoint(rng_draws).write(&path)?;
        write_csv(&self.out.join("losses.csv"), &self.rows)?;
        Ok(path)
    }
}

fn initial_params(c: &RunConfig, nx: usize, ny: usize, half: bool) -> Result<(ParameterField, TrackedRng), RunError> {
    let rng = TrackedRng::new(c.seed);
    let n = (nx * ny) as u64;
    Ok(match c.init {
        InitKind::Ones => (init_canvas(nx, ny, InitMode::Ones).map_err(OptError::from)?, rng),
        // `init_canvas` draws one u64 (two outputs) per element from the
        // same stream, so the tracked stream continues after it.
        InitKind::Random => (
            init_canvas(
                nx,
                ny,
                InitMode::UniformRandom {
                    seed: c.seed,
                    lo: c.init_lo,
                    hi: c.init_hi,
                },
            )
            .map_err(OptError::from)?,
            TrackedRng::resume(c.seed, 2 * n),
        ),
        InitKind::Image => {
            let path = c.init_image.as_deref().unwrap_or_default();
            let full = formats::load_grayscale_image(Path::new(path), c.nx(), c.ny())?;
            let values: Vec<f64> = if half {
                full.values
                    .chunks(full.nx)
                    .flat_map(|row| row[..nx].iter().copied())
                    .collect()
            } else {
                full.values
            };
            let image = DensityField::new(nx, ny, values).map_err(OptError::from)?;
            (init_from_image(&image, c.activation), rng)
        }
    })
}

/// Runs an already resolved config with the given judge.
pub fn run_with_judge(config: &RunConfig, judge: Option<Box<dyn Judge>>) -> Result<RunRecord, RunError> {
    let started = Instant::now();
    let c = config.resolve()?;
    let out = c.out_dir();
    let snap_dir = out.join("snapshots");
    fs::create_dir_all(&snap_dir).map_err(io(&snap_dir))?;
    c.save(&out.join("config.toml"))?;

    let full = problems::make_problem_with_material(&c.problem, c.nx(), c.ny(), c.material())?;
    let problem = if c.symmetry {
        full.half_domain().map_err(OptError::from)?
    } else {
        full.clone()
    };
    let mirror = problem.is_symmetric();
    let (nx, ny) = (problem.nx(), problem.ny());
    let solver = FemSolver::new(problem, c.solver).map_err(OptError::from)?;
    let direct = solver.is_direct();
    let encoder = Encoder::new(BlurKernel::gaussian(c.blur_sigma).map_err(OptError::from)?, c.activation);
    let upper = c.activation.param_upper();
    let mut objective = Objective::new(solver, encoder, judge, c.weights(), c.mode)?
        .with_material_cost(c.material_cost)
        .with_mask(c.mask, c.mask_threshold);
    if c.material_cost == MaterialCostKind::Elementwise {
        log::info!("using the elementwise material cost");
    }
    let judge_name = objective.judge_mut().map(|j| j.describe());

    let (params, rng) = initial_params(&c, nx, ny, mirror)?;
    let mut l = Loop {
        out: out.clone(),
        state: OptimizerState::new(c.adamw(), nx * ny),
        params,
        rng,
        rows: Vec::new(),
    };
    if let Some(resume) = &c.resume {
        let ck = Checkpoint::read(Path::new(resume))?;
        if (ck.nx, ck.ny) != (nx, ny) {
            return Err(OptError::DimensionMismatch(format!(
                "checkpoint is {}x{}, run optimizes {nx}x{ny}",
                ck.nx, ck.ny
            ))
            .into());
        }
        l.params = ParameterField::new(nx, ny, ck.params.iter().map(|&p| p as f64).collect())
            .map_err(OptError::from)?;
        l.state.first_moment = ck.first_moment;
        l.state.second_moment = ck.second_moment;
        l.state.step = ck.step;
        l.rng = TrackedRng::resume(ck.rng_seed, ck.rng_draws);
        let previous = Path::new(resume).with_file_name("losses.csv");
        if previous.is_file() {
            l.rows = read_losses(&previous)?
                .into_iter()
                .filter(|r| (r.epoch as u64) <= ck.step)
                .collect();
        }
        log::info!("resuming from {resume} at step {}", ck.step);
    }

    let full_field = |values: &[f64]| {
        if mirror {
            Field::new(2 * nx, ny, mirror_field(values, nx, ny))
        } else {
            Field::new(nx, ny, values.to_vec())
        }
    };

    let mut snapshots = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut residuals = Vec::new();
    let mut cg_iterations = 0;
    let first = l.state.step as usize + 1;
    for epoch in first..=c.epochs {
        let t0 = Instant::now();
        let draws = l.rng.draws();
        let seed = l.rng.next_u64();
        let eval = match objective.evaluate(&l.params, seed) {
            Ok(e) => e,
            Err(OptError::Judge(source)) => {
                let checkpoint = l.persist(draws)?;
                log::error!("judge failed at epoch {epoch}: {source}");
                return Err(RunError::JudgeFailed {
                    epoch,
                    checkpoint,
                    source,
                });
            }
            Err(e @ OptError::NonFinite { .. }) => {
                let dump = out.join(format!("nan_dump_epoch_{epoch:04}"));
                fs::create_dir_all(&dump).map_err(io(&dump))?;
                l.checkpoint(draws).write(&dump.join("checkpoint.tide"))?;
                formats::write_tdsf(&dump.join("params.tdsf"), &Field::new(nx, ny, l.params.values().to_vec()))?;
                return Err(RunError::NonFinite {
                    epoch,
                    dump,
                    source: e,
                });
            }
            Err(e) => return Err(e.into()),
        };
        let b = eval.breakdown;
        l.rows.push(LossRow {
            epoch,
            compliance: b.compliance,
            material: b.material,
            vision: b.vision,
            total: b.total,
            mean_density: eval.densities.mean(),
        });
        residuals.push(eval.solution.solve_residual);
        cg_iterations += eval.solution.iterations.unwrap_or(0);
        if epoch % c.snapshot_every == 0 {
            let path = write_field(&snap_dir, &format!("epoch_{epoch:04}"), &full_field(eval.densities.values()), true)?;
            snapshots.push(path);
        }
        adamw_step(&mut l.state, &mut l.params, &eval.grad)?;
        if c.project_params {
            for p in l.params.values_mut() {
                *p = p.clamp(0.0, upper);
            }
        }
        epoch_seconds.push(t0.elapsed().as_secs_f64());
        log::debug!("epoch {epoch}: total {} compliance {} vision {}", b.total, b.compliance, b.vision);
    }

    // Final design.
    let (densities, solution, mask) = objective.analyze(&l.params)?;
    let judged_mask = match c.mode {
        super::Mode::VisionOnly => vec![1.0; mask.len()],
        _ if !c.mask => vec![1.0; mask.len()],
        _ => mask.clone(),
    };
    let draws = l.rng.draws();
    let score_seed = l.rng.next_u64();
    let score = objective.score(&densities, &judged_mask, score_seed);
    let score_unmasked = objective.score(&densities, &vec![1.0; mask.len()], score_seed);
    let (score, score_unmasked) = match (score, score_unmasked) {
        (Ok(a), Ok(b)) => (a, b),
        (Err(OptError::Judge(source)), _) | (_, Err(OptError::Judge(source))) => {
            let checkpoint = l.persist(draws)?;
            return Err(RunError::JudgeFailed {
                epoch: c.epochs,
                checkpoint,
                source,
            });
        }
        (Err(e), _) | (_, Err(e)) => return Err(e.into()),
    };

    let density = full_field(densities.values());
    let mask_full = full_field(&mask);
    let binary = Field::new(density.nx, density.ny, binarize(&density.values, c.binarize_threshold));
    let anchors = anchor_elements(&full);
    let cleaned = Field::new(
        density.nx,
        density.ny,
        keep_anchored_components(&binary.values, &anchors, density.nx, density.ny),
    );
    let grey = density.values.iter().filter(|&&d| d > 0.15 && d < 0.85).count();
    let final_design = FinalSummary {
        nx: density.nx,
        ny: density.ny,
        compliance: solution.total_compliance,
        score,
        score_unmasked,
        mean_density: density.values.iter().sum::<f64>() / density.values.len() as f64,
        grey_fraction: grey as f64 / density.values.len() as f64,
        floating_elements: floating_material(&density.values, &mask_full.values, 0.5),
        floating_after_cleanup: floating_material(&cleaned.values, &mask_full.values, 0.5),
        density_path: write_field(&out, "final_density", &density, true)?,
        mask_path: write_field(&out, "final_mask", &mask_full, false)?,
        binary_path: write_field(&out, "final_binary", &binary, true)?,
        cleaned_path: write_field(&out, "final_cleaned", &cleaned, true)?,
    };
    let checkpoint = l.persist(l.rng.draws())?;

    let record = RunRecord {
        config: c,
        judge: judge_name,
        out_dir: out.clone(),
        losses: l.rows,
        snapshots,
        final_design,
        solver: SolverStats {
            direct,
            max_residual: residuals.iter().copied().fold(0.0, f64::max),
            mean_residual: if residuals.is_empty() {
                0.0
            } else {
                residuals.iter().sum::<f64>() / residuals.len() as f64
            },
            cg_iterations,
        },
        timing: EpochStats {
            wall_clock_seconds: started.elapsed().as_secs_f64(),
            epoch_seconds,
        },
        checkpoint,
    };
    let path = out.join("record.json");
    fs::write(&path, serde_json::to_string_pretty(&record).expect("record serializes")).map_err(io(&path))?;
    Ok(record)
}
