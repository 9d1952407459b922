//! Batches of seeded runs for design-distribution studies.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::formats::GrayImage;
use crate::opt::{run, RunError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub compliance: f64,
    pub score: Option<f64>,
    #[serde(skip)]
    pub out_dir: PathBuf,
}

/// Config of trial `index` of a batch: seed `seed_base + index`, written to
/// `<base.out>/trial_<index>`.
pub fn trial_config(base: &RunConfig, index: usize, seed_base: u64) -> RunConfig {
    RunConfig {
        seed: seed_base.wrapping_add(index as u64),
        out: Path::new(&base.out)
            .join(format!("trial_{index:03}"))
            .to_string_lossy()
            .into_owned(),
        ..base.clone()
    }
}

/// Runs `n` trials on up to `jobs` threads (0 = all cores) and writes
/// `trials.csv` and `trials_scatter.pgm` into `base.out`. Results are in
/// trial order regardless of scheduling.
pub fn run_trials(base: &RunConfig, n: usize, seed_base: u64, jobs: usize) -> Result<Vec<TrialResult>, RunError> {
    let base = base.resolve()?;
    let configs: Vec<RunConfig> = (0..n).map(|i| trial_config(&base, i, seed_base)).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .expect("thread pool");
    let results: Vec<TrialResult> = pool.install(|| {
        configs
            .par_iter()
            .map(|c| {
                let record = run(c)?;
                Ok(TrialResult {
                    seed: c.seed,
                    compliance: record.final_design.compliance,
                    score: record.final_design.score,
                    out_dir: record.out_dir,
                })
            })
            .collect::<Result<_, RunError>>()
    })?;
    let out = base.out_dir();
    write_trials_csv(&out.join("trials.csv"), &results)?;
    let scatter = out.join("trials_scatter.pgm");
    scatter_plot(&results, 256, 256).write_pgm(&scatter)?;
    Ok(results)
}

pub fn write_trials_csv(path: &Path, results: &[TrialResult]) -> Result<(), RunError> {
    let err = |e: csv::Error| RunError::Io {
        path: path.to_path_buf(),
        source: e.into(),
    };
    let mut w = csv::Writer::from_path(path).map_err(err)?;
    w.write_record(["seed", "compliance", "score"]).map_err(err)?;
    for r in results {
        let score = r.score.map(|s| s.to_string()).unwrap_or_default();
        w.write_record([r.seed.to_string(), r.compliance.to_string(), score])
            .map_err(err)?;
    }
    w.flush().map_err(|source| RunError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Score against log10 compliance, one 3x3 dot per trial on a white canvas
/// with a one-pixel frame. Trials without a score sit on the bottom edge.
pub fn scatter_plot(results: &[TrialResult], width: usize, height: usize) -> GrayImage {
    let mut pixels = vec![255u8; width * height];
    for x in 0..width {
        pixels[x] = 0;
        pixels[(height - 1) * width + x] = 0;
    }
    for y in 0..height {
        pixels[y * width] = 0;
        pixels[y * width + width - 1] = 0;
    }
    let xs: Vec<f64> = results.iter().map(|r| r.compliance.max(f64::MIN_POSITIVE).log10()).collect();
    let ys: Vec<f64> = results.iter().map(|r| r.score.unwrap_or(f64::NAN)).collect();
    let range = |v: &[f64]| {
        let finite = v.iter().copied().filter(|x| x.is_finite());
        let lo = finite.clone().fold(f64::INFINITY, f64::min);
        let hi = finite.fold(f64::NEG_INFINITY, f64::max);
        if lo.is_finite() && hi > lo {
            (lo, hi)
        } else if lo.is_finite() {
            (lo - 0.5, lo + 0.5)
        } else {
            (0.0, 1.0)
        }
    };
    let ((x0, x1), (y0, y1)) = (range(&xs), range(&ys));
    let margin = 8.0;
    for (&x, &y) in xs.iter().zip(&ys) {
        let px = margin + (x - x0) / (x1 - x0) * (width as f64 - 2.0 * margin);
        let py = if y.is_finite() {
            height as f64 - margin - (y - y0) / (y1 - y0) * (height as f64 - 2.0 * margin)
        } else {
            height as f64 - margin
        };
        let (cx, cy) = (px.round() as i64, py.round() as i64);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (qx, qy) = (cx + dx, cy + dy);
                if qx >= 0 && qy >= 0 && (qx as usize) < width && (qy as usize) < height {
                    pixels[qy as usize * width + qx as usize] = 0;
                }
            }
        }
    }
    GrayImage {
        width,
        height,
        pixels,
    }
}
