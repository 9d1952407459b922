//! Regular-grid plane-stress FEM with SIMP interpolation.
//!
//! Grid conventions, shared by every file format in the crate:
//!
//! * Elements are stored row-major: element `(ix, iy)` has index `iy * nx + ix`,
//!   with `iy` increasing downward.
//! * Nodes are numbered column-major: node `(ix, iy)` has index `ix * (ny + 1) + iy`,
//!   `0 <= ix <= nx`, `0 <= iy <= ny`.
//! * Each node carries two DOFs, `2 * node` (x, positive right) and
//!   `2 * node + 1` (y, positive downward). A downward load is therefore positive.

mod element;
mod solver;

pub use element::{element_stiffness, quadratic_form, ElementMatrix};
pub use solver::{FemSolver, LinearSolverKind, SolveFailure, DIRECT_SOLVER_MAX_ELEMENTS};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("invalid problem: {0}")]
    InvalidProblem(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("density {0} outside [0, 1]")]
    Domain(f64),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },
    #[error("linear solve failed: {0}")]
    Solve(#[from] SolveFailure),
}

/// Material constants of the SIMP model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub e0: f64,
    pub e_min: f64,
    pub nu: f64,
    pub penalty: f64,
}

impl Default for Material {
    fn default() -> Self {
        Self {
            e0: 1.0,
            e_min: 1e-9,
            nu: 0.3,
            penalty: 3.0,
        }
    }
}

impl Material {
    pub fn validate(&self) -> Result<(), FemError> {
        if !(self.e_min > 0.0 && self.e_min < self.e0 && self.e0.is_finite()) {
            return Err(FemError::InvalidProblem(format!(
                "need 0 < e_min < e0, got e_min={} e0={}",
                self.e_min, self.e0
            )));
        }
        if !(0.0..0.5).contains(&self.nu) {
            return Err(FemError::InvalidProblem(format!(
                "Poisson ratio {} outside [0, 0.5)",
                self.nu
            )));
        }
        if !(self.penalty >= 1.0 && self.penalty.is_finite()) {
            return Err(FemError::InvalidProblem(format!(
                "SIMP penalty must be >= 1, got {}",
                self.penalty
            )));
        }
        Ok(())
    }
}

/// A physics instance: grid, loads, supports and material.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignProblem {
    nx: usize,
    ny: usize,
    forces: Vec<f64>,
    fixed_dofs: Vec<bool>,
    material: Material,
    symmetric: bool,
}

impl DesignProblem {
    pub fn new(
        nx: usize,
        ny: usize,
        forces: Vec<f64>,
        fixed_dofs: Vec<bool>,
    ) -> Result<Self, FemError> {
        Self::with_material(nx, ny, forces, fixed_dofs, Material::default())
    }

    pub fn with_material(
        nx: usize,
        ny: usize,
        forces: Vec<f64>,
        fixed_dofs: Vec<bool>,
        material: Material,
    ) -> Result<Self, FemError> {
        if nx == 0 || ny == 0 {
            return Err(FemError::InvalidProblem(format!(
                "grid must be at least 1x1, got {nx}x{ny}"
            )));
        }
        let ndof = dof_count(nx, ny);
        if forces.len() != ndof || fixed_dofs.len() != ndof {
            return Err(FemError::DimensionMismatch {
                expected: format!("{ndof} DOFs"),
                actual: format!("{} forces, {} fixed flags", forces.len(), fixed_dofs.len()),
            });
        }
        if !fixed_dofs.iter().any(|&f| f) {
            return Err(FemError::InvalidProblem("no fixed DOFs".into()));
        }
        if let Some(i) = forces.iter().position(|f| !f.is_finite()) {
            return Err(FemError::InvalidProblem(format!("non-finite force at DOF {i}")));
        }
        if let Some(i) = (0..ndof).find(|&i| fixed_dofs[i] && forces[i] != 0.0) {
            return Err(FemError::InvalidProblem(format!(
                "nonzero force on fixed DOF {i}"
            )));
        }
        material.validate()?;
        Ok(Self {
            nx,
            ny,
            forces,
            fixed_dofs,
            material,
            symmetric: false,
        })
    }

    /// Marks this problem as the left half of a mirrored full design.
    pub fn into_symmetric(mut self) -> Self {
        self.symmetric = true;
        self
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn element_count(&self) -> usize {
        self.nx * self.ny
    }

    pub fn dof_count(&self) -> usize {
        self.forces.len()
    }

    pub fn forces(&self) -> &[f64] {
        &self.forces
    }

    pub fn fixed_dofs(&self) -> &[bool] {
        &self.fixed_dofs
    }

    pub fn material(&self) -> &Material {
        &self.material
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn set_material(&mut self, material: Material) -> Result<(), FemError> {
        material.validate()?;
        self.material = material;
        Ok(())
    }

    pub fn node_index(&self, ix: usize, iy: usize) -> usize {
        ix * (self.ny + 1) + iy
    }

    /// Global DOF indices of element `(ix, iy)` in local node order.
    pub fn element_dofs(&self, ix: usize, iy: usize) -> [usize; 8] {
        element_dofs(self.ny, ix, iy)
    }

    /// Left half of a mirror-symmetric problem, with the symmetry line
    /// carried by x-rollers. Loads on the symmetry line are halved.
    pub fn half_domain(&self) -> Result<DesignProblem, FemError> {
        if self.nx % 2 != 0 || self.nx < 2 {
            return Err(FemError::InvalidProblem(format!(
                "cannot split width {} into symmetric halves",
                self.nx
            )));
        }
        let half = self.nx / 2;
        let ny = self.ny;
        let ndof = dof_count(half, ny);
        let mut forces = vec![0.0; ndof];
        let mut fixed = vec![false; ndof];
        for ix in 0..=half {
            for iy in 0..=ny {
                let src = self.node_index(ix, iy);
                let dst = ix * (ny + 1) + iy;
                let mirror = self.node_index(self.nx - ix, iy);
                for k in 0..2 {
                    let (fs, fm) = (self.forces[2 * src + k], self.forces[2 * mirror + k]);
                    let expected = if k == 0 { -fs } else { fs };
                    if (fm - expected).abs() > 1e-12 * (1.0 + fs.abs()) {
                        return Err(FemError::InvalidProblem(format!(
                            "loads are not mirror-symmetric at node ({ix}, {iy})"
                        )));
                    }
                    fixed[2 * dst + k] = self.fixed_dofs[2 * src + k];
                    forces[2 * dst + k] = fs;
                }
                if ix == half {
                    forces[2 * dst] = 0.0;
                    forces[2 * dst + 1] *= 0.5;
                    fixed[2 * dst] = true;
                }
                if fixed[2 * dst + 1] {
                    forces[2 * dst + 1] = 0.0;
                }
            }
        }
        Ok(DesignProblem::with_material(half, ny, forces, fixed, self.material)?.into_symmetric())
    }
}

pub(crate) fn dof_count(nx: usize, ny: usize) -> usize {
    2 * (nx + 1) * (ny + 1)
}

pub(crate) fn element_dofs(ny: usize, ix: usize, iy: usize) -> [usize; 8] {
    let ul = ix * (ny + 1) + iy;
    let ur = (ix + 1) * (ny + 1) + iy;
    let lr = ur + 1;
    let ll = ul + 1;
    [
        2 * ul,
        2 * ul + 1,
        2 * ur,
        2 * ur + 1,
        2 * lr,
        2 * lr + 1,
        2 * ll,
        2 * ll + 1,
    ]
}

/// Material densities in `[0, 1]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    nx: usize,
    ny: usize,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(nx: usize, ny: usize, values: Vec<f64>) -> Result<Self, FemError> {
        if values.len() != nx * ny {
            return Err(FemError::DimensionMismatch {
                expected: format!("{} values for {nx}x{ny}", nx * ny),
                actual: values.len().to_string(),
            });
        }
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(FemError::Domain(v));
        }
        Ok(Self { nx, ny, values })
    }

    pub fn uniform(nx: usize, ny: usize, value: f64) -> Result<Self, FemError> {
        Self::new(nx, ny, vec![value; nx * ny])
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

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Result of one equilibrium solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FemSolution {
    pub displacements: Vec<f64>,
    pub element_compliance: Vec<f64>,
    pub total_compliance: f64,
    /// Relative residual `||K U - F|| / ||F||` over the free DOFs.
    pub solve_residual: f64,
    /// CG iterations, `None` on the direct path.
    pub iterations: Option<usize>,
}

/// Modified SIMP interpolation `E_min + d^p (E_0 - E_min)`.
pub fn simp_modulus(d: f64, material: &Material) -> Result<f64, FemError> {
    if !(0.0..=1.0).contains(&d) {
        return Err(FemError::Domain(d));
    }
    Ok(simp(d, material))
}

#[inline]
pub(crate) fn simp(d: f64, m: &Material) -> f64 {
    m.e_min + d.powf(m.penalty) * (m.e0 - m.e_min)
}

fn check_dims(problem: &DesignProblem, densities: &DensityField) -> Result<(), FemError> {
    if densities.nx() != problem.nx() || densities.ny() != problem.ny() {
        return Err(FemError::DimensionMismatch {
            expected: format!("{}x{}", problem.nx(), problem.ny()),
            actual: format!("{}x{}", densities.nx(), densities.ny()),
        });
    }
    Ok(())
}

/// One-shot assembly and solve. Optimization loops should keep a
/// [`FemSolver`] alive instead so the sparsity analysis is reused.
pub fn assemble_and_solve(
    problem: &DesignProblem,
    densities: &DensityField,
) -> Result<FemSolution, FemError> {
    FemSolver::new(problem.clone(), LinearSolverKind::Auto)?.solve(densities)
}

/// Element displacement vectors gathered from the global vector.
pub(crate) fn gather(u: &[f64], dofs: &[usize; 8]) -> [f64; 8] {
    let mut ue = [0.0; 8];
    for (slot, &d) in ue.iter_mut().zip(dofs.iter()) {
        *slot = u[d];
    }
    ue
}

/// Adjoint sensitivity `dc/dd_e = -p d_e^(p-1) (E_0 - E_min) u_e^T k0 u_e`.
pub fn compliance_gradient(
    problem: &DesignProblem,
    densities: &DensityField,
    solution: &FemSolution,
) -> Result<Vec<f64>, FemError> {
    check_dims(problem, densities)?;
    if solution.displacements.len() != problem.dof_count() {
        return Err(FemError::DimensionMismatch {
            expected: format!("{} displacements", problem.dof_count()),
            actual: solution.displacements.len().to_string(),
        });
    }
    let m = problem.material();
    let k0 = element_stiffness(m.nu)?;
    let (nx, ny) = (problem.nx(), problem.ny());
    let mut grad = vec![0.0; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            let e = iy * nx + ix;
            let ue = gather(&solution.displacements, &problem.element_dofs(ix, iy));
            let d = densities.values()[e];
            let dmod = if d == 0.0 && m.penalty > 1.0 {
                0.0
            } else {
                m.penalty * d.powf(m.penalty - 1.0) * (m.e0 - m.e_min)
            };
            grad[e] = -dmod * quadratic_form(&k0, &ue);
        }
    }
    Ok(grad)
}

/// Default log-compliance threshold of the structural mask.
pub const DEFAULT_MASK_THRESHOLD: f64 = -20.0;

/// Binary mask keeping elements with `ln(c_e) >= threshold`.
/// Elements with zero compliance are masked out.
pub fn compliance_mask(solution: &FemSolution, threshold: f64) -> Vec<f64> {
    solution
        .element_compliance
        .iter()
        .map(|&c| if c > 0.0 && c.ln() >= threshold { 1.0 } else { 0.0 })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed_bottom(nx: usize, ny: usize) -> Vec<bool> {
        let mut fixed = vec![false; dof_count(nx, ny)];
        for ix in 0..=nx {
            let n = ix * (ny + 1) + ny;
            fixed[2 * n] = true;
            fixed[2 * n + 1] = true;
        }
        fixed
    }

    #[test]
    fn simp_endpoints_and_midpoint() {
        let m = Material::default();
        assert_eq!(simp_modulus(0.0, &m).unwrap(), 1e-9);
        assert_eq!(simp_modulus(1.0, &m).unwrap(), 1.0);
        let mid = simp_modulus(0.5, &m).unwrap();
        assert!((mid - (0.125 * (1.0 - 1e-9) + 1e-9)).abs() < 1e-15);
        assert!(simp_modulus(1.5, &m).is_err());
        assert!(simp_modulus(-0.1, &m).is_err());
    }

    #[test]
    fn simp_is_monotone() {
        let m = Material::default();
        let mut prev = 0.0;
        for i in 0..=100 {
            let e = simp_modulus(i as f64 / 100.0, &m).unwrap();
            assert!(e >= prev);
            assert!((m.e_min..=m.e0).contains(&e));
            prev = e;
        }
    }

    #[test]
    fn problem_validation() {
        let (nx, ny) = (2, 2);
        let n = dof_count(nx, ny);
        assert!(DesignProblem::new(nx, ny, vec![0.0; n], vec![false; n]).is_err());
        let mut forces = vec![0.0; n];
        let fixed = fixed_bottom(nx, ny);
        forces[2 * 2 + 1] = 1.0; // bottom-left node, fixed
        assert!(DesignProblem::new(nx, ny, forces, fixed.clone()).is_err());
        assert!(DesignProblem::new(0, 2, vec![], vec![]).is_err());
        assert!(DesignProblem::new(nx, ny, vec![0.0; n - 1], fixed.clone()).is_err());
        let bad = Material {
            e_min: 2.0,
            ..Material::default()
        };
        assert!(DesignProblem::with_material(nx, ny, vec![0.0; n], fixed, bad).is_err());
    }

    #[test]
    fn density_field_validation() {
        assert!(DensityField::new(2, 2, vec![0.5; 3]).is_err());
        assert!(DensityField::new(2, 2, vec![0.5, 0.5, 1.2, 0.0]).is_err());
        assert!(DensityField::new(2, 2, vec![0.5, 0.5, 1.0, 0.0]).is_ok());
    }

    #[test]
    fn zero_load_gives_zero_solution_and_empty_mask() {
        let (nx, ny) = (3, 2);
        let p = DesignProblem::new(nx, ny, vec![0.0; dof_count(nx, ny)], fixed_bottom(nx, ny)).unwrap();
        let d = DensityField::uniform(nx, ny, 0.7).unwrap();
        let s = assemble_and_solve(&p, &d).unwrap();
        assert!(s.displacements.iter().all(|&u| u == 0.0));
        assert_eq!(s.total_compliance, 0.0);
        assert!(compliance_mask(&s, DEFAULT_MASK_THRESHOLD).iter().all(|&m| m == 0.0));
    }

    #[test]
    fn gradient_vanishes_at_zero_density() {
        let (nx, ny) = (3, 3);
        let mut forces = vec![0.0; dof_count(nx, ny)];
        forces[1] = 1.0;
        let p = DesignProblem::new(nx, ny, forces, fixed_bottom(nx, ny)).unwrap();
        let d = DensityField::uniform(nx, ny, 0.0).unwrap();
        let s = assemble_and_solve(&p, &d).unwrap();
        let g = compliance_gradient(&p, &d, &s).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn half_domain_splits_center_load() {
        let (nx, ny) = (4, 2);
        let mut forces = vec![0.0; dof_count(nx, ny)];
        let center = 2 * (ny + 1);
        forces[2 * center + 1] = 1.0;
        let p = DesignProblem::new(nx, ny, forces, fixed_bottom(nx, ny)).unwrap();
        let h = p.half_domain().unwrap();
        assert!(h.is_symmetric());
        assert_eq!(h.nx(), 2);
        let c = h.node_index(2, 0);
        assert_eq!(h.forces()[2 * c + 1], 0.5);
        for iy in 0..=ny {
            assert!(h.fixed_dofs()[2 * h.node_index(2, iy)]);
        }
        let odd = DesignProblem::new(3, 2, vec![0.0; dof_count(3, 2)], fixed_bottom(3, 2)).unwrap();
        assert!(odd.half_domain().is_err());
    }

    #[test]
    fn half_domain_compliance_is_half_of_full() {
        let (nx, ny) = (6, 4);
        let mut forces = vec![0.0; dof_count(nx, ny)];
        let center = 3 * (ny + 1);
        forces[2 * center + 1] = 1.0;
        let p = DesignProblem::new(nx, ny, forces, fixed_bottom(nx, ny)).unwrap();
        let h = p.half_domain().unwrap();
        let full = assemble_and_solve(&p, &DensityField::uniform(nx, ny, 1.0).unwrap()).unwrap();
        let half = assemble_and_solve(&h, &DensityField::uniform(nx / 2, ny, 1.0).unwrap()).unwrap();
        assert!((2.0 * half.total_compliance - full.total_compliance).abs() < 1e-10 * full.total_compliance);
    }
}
