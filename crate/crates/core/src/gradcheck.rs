//! Central finite-difference checks of every analytic gradient in the
//! pipeline on one small problem.
//!
//! The error of an entry is `|a - f| / max(|f|, 1e-3 * max_j |f_j|)`, so
//! entries that are tiny relative to the largest one are judged against it.

use serde::Serialize;

use crate::encode::{BlurKernel, Encoder, ParameterField, Activation};
use crate::fem2d::{compliance_gradient, DensityField, FemSolver, LinearSolverKind};
use crate::judge::{JudgeImage, ReferenceJudge};
use crate::opt::{LossWeights, Mode, Objective, OptError};
use crate::problems::{self, ProblemError};
use crate::rng;

const RELATIVE_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckEntry {
    pub name: String,
    pub entries: usize,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub problem: String,
    pub nx: usize,
    pub ny: usize,
    pub checks: Vec<GradcheckEntry>,
}

impl GradcheckReport {
    pub fn max_relative_error(&self) -> f64 {
        self.checks.iter().map(|c| c.max_relative_error).fold(0.0, f64::max)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GradcheckError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Opt(#[from] OptError),
}

/// Worst-case floored relative error between two gradients.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient lengths");
    let scale = numeric.iter().fold(0.0f64, |m, f| m.max(f.abs()));
    let floor = (RELATIVE_FLOOR * scale).max(f64::MIN_POSITIVE);
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, f)| (a - f).abs() / f.abs().max(floor))
        .fold(0.0, f64::max)
}

/// Central differences of `f` at `x` in every coordinate.
pub fn central_differences(x: &[f64], h: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn uniform(n: usize, lo: f64, hi: f64, r: &mut rand_pcg::Pcg32) -> Vec<f64> {
    (0..n).map(|_| lo + (hi - lo) * rng::unit_f64(r)).collect()
}

/// Checks the compliance adjoint, the encoder backward pass, the reference
/// judge gradient, and `dL/dparams` in all three modes on `problem` at
/// `nx` x `ny`. Symmetric layouts are checked on their half domain with a
/// mirrored judge image.
pub fn gradcheck(problem: &str, nx: usize, ny: usize, seed: u64) -> Result<GradcheckReport, GradcheckError> {
    let spec = problems::lookup(problem)?;
    let full = problems::make_problem(problem, nx, ny)?;
    let p = if spec.symmetric {
        full.half_domain().map_err(OptError::from)?
    } else {
        full
    };
    let (hx, hy) = (p.nx(), p.ny());
    let n = hx * hy;
    let mut r = rng::seeded(seed);
    let mut checks = Vec::new();
    let mut push = |name: &str, a: &[f64], f: &[f64]| {
        checks.push(GradcheckEntry {
            name: name.to_string(),
            entries: a.len(),
            max_relative_error: relative_error(a, f),
        });
    };

    // Compliance adjoint.
    let mut solver = FemSolver::new(p.clone(), LinearSolverKind::Direct).map_err(OptError::from)?;
    let d = uniform(n, 0.2, 0.9, &mut r);
    let field = DensityField::new(hx, hy, d.clone()).map_err(OptError::from)?;
    let sol = solver.solve(&field).map_err(OptError::from)?;
    let analytic = compliance_gradient(&p, &field, &sol).map_err(OptError::from)?;
    let numeric = central_differences(&d, 1e-6, |x| {
        let f = DensityField::new(hx, hy, x.to_vec()).expect("probe stays in [0, 1]");
        solver.solve(&f).expect("probe solve").total_compliance
    });
    push("fem2d.compliance_gradient", &analytic, &numeric);

    // Encoder: gradient of <w, encode(x)>.
    let encoder = Encoder::new(BlurKernel::gaussian(1.0).map_err(OptError::from)?, Activation::Hill);
    let x = uniform(n, 0.3, 1.3, &mut r);
    let w = uniform(n, -1.0, 1.0, &mut r);
    let params = ParameterField::new(hx, hy, x.clone()).map_err(OptError::from)?;
    let (_, trace) = encoder.forward(&params);
    let analytic = encoder.backward(&trace, hx, hy, &w);
    let numeric = central_differences(&x, 1e-6, |x| {
        let p = ParameterField::new(hx, hy, x.to_vec()).expect("finite probe");
        let (d, _) = encoder.forward(&p);
        d.values().iter().zip(&w).map(|(a, b)| a * b).sum()
    });
    push("encode.backward", &analytic, &numeric);

    // Reference judge at full width.
    let (fw, fh) = (nx, ny);
    let target = JudgeImage::new(fw, fh, uniform(fw * fh, 0.0, 1.0, &mut r)).map_err(OptError::from)?;
    let judge = ReferenceJudge::new(target.clone(), 1.0).map_err(OptError::from)?;
    let img = uniform(fw * fh, 0.1, 0.9, &mut r);
    let res = judge
        .score(&JudgeImage::new(fw, fh, img.clone()).map_err(OptError::from)?)
        .map_err(OptError::from)?;
    let numeric = central_differences(&img, 1e-5, |x| {
        judge
            .score(&JudgeImage::new(fw, fh, x.to_vec()).expect("probe in range"))
            .expect("same dims")
            .score
    });
    push("judge.reference", &res.grad, &numeric);

    // End to end.
    let x = uniform(n, 0.4, 1.2, &mut r);
    for mode in [Mode::Joint, Mode::PhysicsOnly, Mode::VisionOnly] {
        let solver = FemSolver::new(p.clone(), LinearSolverKind::Direct).map_err(OptError::from)?;
        let judge = ReferenceJudge::new(target.clone(), 1.0).map_err(OptError::from)?;
        let weights = LossWeights::new(spec.beta1, spec.beta2, spec.target_density)?;
        let mut objective = Objective::new(solver, encoder.clone(), Some(Box::new(judge)), weights, mode)?;
        let params = ParameterField::new(hx, hy, x.clone()).map_err(OptError::from)?;
        let eval = objective.evaluate(&params, 0)?;
        let numeric = central_differences(&x, 1e-6, |x| {
            let p = ParameterField::new(hx, hy, x.to_vec()).expect("finite probe");
            objective.evaluate(&p, 0).expect("probe evaluation").breakdown.total
        });
        let name = match mode {
            Mode::Joint => "opt.total_loss[joint]",
            Mode::PhysicsOnly => "opt.total_loss[physics_only]",
            Mode::VisionOnly => "opt.total_loss[vision_only]",
        };
        push(name, &eval.grad, &numeric);
    }

    Ok(GradcheckReport {
        problem: problem.to_string(),
        nx,
        ny,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(&[1.0, 0.0], &[1.0, 0.0]), 0.0);
        // 1e-9 off on an entry 1e-6 of the scale is judged against the floor.
        let e = relative_error(&[1.0, 1e-6 + 1e-9], &[1.0, 1e-6]);
        assert!((e - 1e-6).abs() < 1e-12);
        assert!((relative_error(&[1.1], &[1.0]) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn cantilever_passes() {
        let report = gradcheck("cantilever", 6, 4, 1).unwrap();
        assert_eq!(report.checks.len(), 6);
        for c in &report.checks {
            assert!(c.max_relative_error <= 1e-4, "{}: {}", c.name, c.max_relative_error);
        }
    }
}
