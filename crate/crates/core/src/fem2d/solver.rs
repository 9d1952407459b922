use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt::factor::{LltError, LltRegularization};
use faer::sparse::linalg::cholesky::{factorize_symbolic_cholesky, LltRef, SymbolicCholesky};
use faer::sparse::{SparseColMatRef, SymbolicSparseColMatRef};
use faer::{Conj, MatMut, Par, Side};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    element_stiffness, gather, quadratic_form, simp, DensityField, DesignProblem, ElementMatrix,
    FemError, FemSolution,
};

/// Largest element count solved with the sparse Cholesky path under
/// [`LinearSolverKind::Auto`].
pub const DIRECT_SOLVER_MAX_ELEMENTS: usize = 128 * 128;

const RESIDUAL_TOLERANCE: f64 = 1e-8;
const REFINEMENT_TARGET: f64 = 1e-12;
const MAX_REFINEMENT_STEPS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LinearSolverKind {
    #[default]
    Auto,
    Direct,
    #[serde(rename = "cg")]
    ConjugateGradient,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveFailure {
    #[error("reduced stiffness matrix is not positive definite (pivot {pivot})")]
    NotPositiveDefinite { pivot: usize },
    #[error("relative residual {residual:e} exceeds tolerance after refinement")]
    ResidualTooLarge { residual: f64 },
    #[error("conjugate gradient stalled after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("sparse backend: {0}")]
    Backend(String),
}

/// Sparse Cholesky state: the upper triangle of the reduced stiffness
/// matrix in CSC form, plus the scatter map from element entries to slots.
struct DirectState {
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
    /// Per element, the CSC slot of each local `(a, b)` entry, or `u32::MAX`.
    scatter: Vec<[u32; 64]>,
    symbolic: SymbolicCholesky<usize>,
    factor: Vec<f64>,
    factor_scratch: MemBuffer,
    solve_scratch: MemBuffer,
}

struct CgState {
    last: Option<Vec<f64>>,
}

enum Backend {
    Direct(Box<DirectState>),
    Cg(CgState),
}

/// Reusable equilibrium solver for one [`DesignProblem`].
///
/// The free-DOF numbering, sparsity pattern and symbolic factorization are
/// computed once; each [`FemSolver::solve`] only redoes the numeric work.
pub struct FemSolver {
    problem: DesignProblem,
    k0: ElementMatrix,
    /// Reduced index of each global DOF, `usize::MAX` when fixed.
    free_index: Vec<usize>,
    free_dofs: Vec<usize>,
    backend: Backend,
}

impl FemSolver {
    pub fn new(problem: DesignProblem, kind: LinearSolverKind) -> Result<Self, FemError> {
        let k0 = element_stiffness(problem.material().nu)?;
        let mut free_index = vec![usize::MAX; problem.dof_count()];
        let mut free_dofs = Vec::new();
        for (dof, &fixed) in problem.fixed_dofs().iter().enumerate() {
            if !fixed {
                free_index[dof] = free_dofs.len();
                free_dofs.push(dof);
            }
        }
        let use_direct = match kind {
            LinearSolverKind::Direct => true,
            LinearSolverKind::ConjugateGradient => false,
            LinearSolverKind::Auto => problem.element_count() <= DIRECT_SOLVER_MAX_ELEMENTS,
        };
        let backend = if use_direct {
            Backend::Direct(Box::new(build_direct(&problem, &free_index, free_dofs.len())?))
        } else {
            Backend::Cg(CgState { last: None })
        };
        Ok(Self {
            problem,
            k0,
            free_index,
            free_dofs,
            backend,
        })
    }

    pub fn problem(&self) -> &DesignProblem {
        &self.problem
    }

    pub fn is_direct(&self) -> bool {
        matches!(self.backend, Backend::Direct(_))
    }

    pub fn solve(&mut self, densities: &DensityField) -> Result<FemSolution, FemError> {
        super::check_dims(&self.problem, densities)?;
        let material = *self.problem.material();
        let moduli: Vec<f64> = densities.values().iter().map(|&d| simp(d, &material)).collect();
        let rhs: Vec<f64> = self.free_dofs.iter().map(|&d| self.problem.forces()[d]).collect();
        let rhs_norm = norm(&rhs);

        let mut free_u = vec![0.0; rhs.len()];
        let mut residual = 0.0;
        let mut iterations = None;
        if rhs_norm > 0.0 {
            match &mut self.backend {
                Backend::Direct(state) => {
                    residual = solve_direct(state, &self.k0, &moduli, &rhs, &mut free_u)?;
                }
                Backend::Cg(state) => {
                    let (its, res) = solve_cg(
                        state,
                        &self.problem,
                        &self.k0,
                        &self.free_index,
                        &moduli,
                        &rhs,
                        &mut free_u,
                    )?;
                    iterations = Some(its);
                    residual = res;
                }
            }
        }

        let mut displacements = vec![0.0; self.problem.dof_count()];
        for (&dof, &u) in self.free_dofs.iter().zip(free_u.iter()) {
            displacements[dof] = u;
        }
        let (nx, ny) = (self.problem.nx(), self.problem.ny());
        let mut element_compliance = vec![0.0; nx * ny];
        for iy in 0..ny {
            for ix in 0..nx {
                let e = iy * nx + ix;
                let ue = gather(&displacements, &self.problem.element_dofs(ix, iy));
                element_compliance[e] = moduli[e] * quadratic_form(&self.k0, &ue);
            }
        }
        let total_compliance = element_compliance.iter().sum();
        Ok(FemSolution {
            displacements,
            element_compliance,
            total_compliance,
            solve_residual: residual,
            iterations,
        })
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn build_direct(
    problem: &DesignProblem,
    free_index: &[usize],
    n_free: usize,
) -> Result<DirectState, FemError> {
    let (nx, ny) = (problem.nx(), problem.ny());
    let mut columns: Vec<Vec<usize>> = vec![Vec::new(); n_free];
    for iy in 0..ny {
        for ix in 0..nx {
            let dofs = problem.element_dofs(ix, iy);
            for &a in &dofs {
                let ra = free_index[a];
                if ra == usize::MAX {
                    continue;
                }
                for &b in &dofs {
                    let rb = free_index[b];
                    if rb != usize::MAX && ra <= rb {
                        columns[rb].push(ra);
                    }
                }
            }
        }
    }
    let mut col_ptr = Vec::with_capacity(n_free + 1);
    let mut row_idx = Vec::new();
    col_ptr.push(0);
    for col in &mut columns {
        col.sort_unstable();
        col.dedup();
        row_idx.extend_from_slice(col);
        col_ptr.push(row_idx.len());
    }
    drop(columns);

    let mut scatter = Vec::with_capacity(nx * ny);
    for iy in 0..ny {
        for ix in 0..nx {
            let dofs = problem.element_dofs(ix, iy);
            let mut slots = [u32::MAX; 64];
            for (a, &da) in dofs.iter().enumerate() {
                for (b, &db) in dofs.iter().enumerate() {
                    let (ra, rb) = (free_index[da], free_index[db]);
                    if ra == usize::MAX || rb == usize::MAX || ra > rb {
                        continue;
                    }
                    let range = col_ptr[rb]..col_ptr[rb + 1];
                    let pos = row_idx[range.clone()]
                        .binary_search(&ra)
                        .expect("pattern contains every element entry");
                    slots[8 * a + b] = (range.start + pos) as u32;
                }
            }
            scatter.push(slots);
        }
    }

    let pattern = SymbolicSparseColMatRef::new_checked(n_free, n_free, &col_ptr, None, &row_idx);
    let symbolic = factorize_symbolic_cholesky(pattern, Side::Upper, Default::default(), Default::default())
        .map_err(|e| SolveFailure::Backend(format!("{e:?}")))?;
    let factor = vec![0.0; symbolic.len_val()];
    let factor_scratch =
        MemBuffer::new(symbolic.factorize_numeric_llt_scratch::<f64>(Par::Seq, Default::default()));
    let solve_scratch = MemBuffer::new(symbolic.solve_in_place_scratch::<f64>(1, Par::Seq));
    let values = vec![0.0; row_idx.len()];
    Ok(DirectState {
        col_ptr,
        row_idx,
        values,
        scatter,
        symbolic,
        factor,
        factor_scratch,
        solve_scratch,
    })
}

/// `y = K x` using only the stored upper triangle.
fn symmetric_upper_matvec(col_ptr: &[usize], row_idx: &[usize], values: &[f64], x: &[f64], y: &mut [f64]) {
    y.fill(0.0);
    for j in 0..x.len() {
        for k in col_ptr[j]..col_ptr[j + 1] {
            let i = row_idx[k];
            let v = values[k];
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
    }
}

fn solve_direct(
    state: &mut DirectState,
    k0: &ElementMatrix,
    moduli: &[f64],
    rhs: &[f64],
    u: &mut [f64],
) -> Result<f64, FemError> {
    state.values.fill(0.0);
    for (slots, &modulus) in state.scatter.iter().zip(moduli.iter()) {
        for (idx, &slot) in slots.iter().enumerate() {
            if slot != u32::MAX {
                state.values[slot as usize] += modulus * k0[idx / 8][idx % 8];
            }
        }
    }
    let n = rhs.len();
    let pattern =
        SymbolicSparseColMatRef::new_checked(n, n, &state.col_ptr, None, &state.row_idx);
    let matrix = SparseColMatRef::new(pattern, &state.values);
    state
        .symbolic
        .factorize_numeric_llt(
            &mut state.factor,
            matrix,
            Side::Upper,
            LltRegularization::default(),
            Par::Seq,
            MemStack::new(&mut state.factor_scratch),
            Default::default(),
        )
        .map_err(|LltError::NonPositivePivot { index }| SolveFailure::NotPositiveDefinite { pivot: index })?;
    let llt = LltRef::<usize, f64>::new(&state.symbolic, &state.factor);

    u.copy_from_slice(rhs);
    llt.solve_in_place_with_conj(
        Conj::No,
        MatMut::from_column_major_slice_mut(u, n, 1),
        Par::Seq,
        MemStack::new(&mut state.solve_scratch),
    );

    let rhs_norm = norm(rhs);
    let mut ku = vec![0.0; n];
    let mut correction = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for step in 0..=MAX_REFINEMENT_STEPS {
        symmetric_upper_matvec(&state.col_ptr, &state.row_idx, &state.values, u, &mut ku);
        for ((c, &b), &k) in correction.iter_mut().zip(rhs.iter()).zip(ku.iter()) {
            *c = b - k;
        }
        residual = norm(&correction) / rhs_norm;
        if !residual.is_finite() || residual <= REFINEMENT_TARGET || step == MAX_REFINEMENT_STEPS {
            break;
        }
        llt.solve_in_place_with_conj(
            Conj::No,
            MatMut::from_column_major_slice_mut(&mut correction, n, 1),
            Par::Seq,
            MemStack::new(&mut state.solve_scratch),
        );
        for (ui, ci) in u.iter_mut().zip(correction.iter()) {
            *ui += ci;
        }
    }
    if !(residual <= RESIDUAL_TOLERANCE) {
        return Err(SolveFailure::ResidualTooLarge { residual }.into());
    }
    Ok(residual)
}

/// Matrix-free `y = K_ff x` by element loop.
fn element_matvec(
    problem: &DesignProblem,
    k0: &ElementMatrix,
    free_index: &[usize],
    moduli: &[f64],
    x: &[f64],
    y: &mut [f64],
) {
    y.fill(0.0);
    let (nx, ny) = (problem.nx(), problem.ny());
    for iy in 0..ny {
        for ix in 0..nx {
            let dofs = problem.element_dofs(ix, iy);
            let mut xe = [0.0; 8];
            for (slot, &d) in xe.iter_mut().zip(dofs.iter()) {
                let r = free_index[d];
                *slot = if r == usize::MAX { 0.0 } else { x[r] };
            }
            let modulus = moduli[iy * nx + ix];
            for (a, &d) in dofs.iter().enumerate() {
                let r = free_index[d];
                if r == usize::MAX {
                    continue;
                }
                let mut acc = 0.0;
                for b in 0..8 {
                    acc += k0[a][b] * xe[b];
                }
                y[r] += modulus * acc;
            }
        }
    }
}

fn solve_cg(
    state: &mut CgState,
    problem: &DesignProblem,
    k0: &ElementMatrix,
    free_index: &[usize],
    moduli: &[f64],
    rhs: &[f64],
    u: &mut [f64],
) -> Result<(usize, f64), FemError> {
    let n = rhs.len();
    let (nx, ny) = (problem.nx(), problem.ny());
    let mut diag = vec![0.0; n];
    for iy in 0..ny {
        for ix in 0..nx {
            let modulus = moduli[iy * nx + ix];
            for (a, &d) in problem.element_dofs(ix, iy).iter().enumerate() {
                let r = free_index[d];
                if r != usize::MAX {
                    diag[r] += modulus * k0[a][a];
                }
            }
        }
    }
    if let Some(last) = &state.last {
        u.copy_from_slice(last);
    } else {
        u.fill(0.0);
    }

    let rhs_norm = norm(rhs);
    let max_iterations = 10 * problem.dof_count();
    let mut r = vec![0.0; n];
    let mut ap = vec![0.0; n];
    element_matvec(problem, k0, free_index, moduli, u, &mut ap);
    for i in 0..n {
        r[i] = rhs[i] - ap[i];
    }
    let mut z: Vec<f64> = r.iter().zip(diag.iter()).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
    let mut residual = norm(&r) / rhs_norm;
    let mut iterations = 0;
    while residual > RESIDUAL_TOLERANCE {
        if iterations >= max_iterations || !residual.is_finite() {
            state.last = None;
            return Err(SolveFailure::NotConverged {
                iterations,
                residual,
            }
            .into());
        }
        element_matvec(problem, k0, free_index, moduli, &p, &mut ap);
        let pap: f64 = p.iter().zip(ap.iter()).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            state.last = None;
            return Err(SolveFailure::NotPositiveDefinite { pivot: iterations }.into());
        }
        let alpha = rz / pap;
        for i in 0..n {
            u[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_next: f64 = r.iter().zip(z.iter()).map(|(a, b)| a * b).sum();
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        iterations += 1;
        residual = norm(&r) / rhs_norm;
    }
    // Report the true residual, not the recurrence one.
    element_matvec(problem, k0, free_index, moduli, u, &mut ap);
    let true_residual = norm(&rhs.iter().zip(ap.iter()).map(|(b, k)| b - k).collect::<Vec<_>>()) / rhs_norm;
    state.last = Some(u.to_vec());
    Ok((iterations, true_residual))
}
