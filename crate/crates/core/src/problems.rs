//! Registry of load/support layouts. Every layout carries a unit total load
//! split equally across its load nodes (the dam's hydrostatic profile is
//! the one exception, linear in depth, still summing to one).

use thiserror::Error;

use crate::fem2d::{dof_count, DesignProblem, FemError, Material};

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem {0:?}")]
    Unknown(String),
    #[error("problem {name} does not support {nx}x{ny}: {reason}")]
    Dimensions {
        name: String,
        nx: usize,
        ny: usize,
        reason: String,
    },
    #[error(transparent)]
    Fem(#[from] FemError),
}

/// Registry entry with the per-problem defaults.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProblemSpec {
    pub name: &'static str,
    pub summary: &'static str,
    pub nx: usize,
    pub ny: usize,
    pub symmetric: bool,
    pub target_density: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub min_nx: usize,
    pub min_ny: usize,
}

const fn spec(
    name: &'static str,
    summary: &'static str,
    (nx, ny): (usize, usize),
    symmetric: bool,
    (target_density, beta1, beta2): (f64, f64, f64),
    (min_nx, min_ny): (usize, usize),
) -> ProblemSpec {
    ProblemSpec {
        name,
        summary,
        nx,
        ny,
        symmetric,
        target_density,
        beta1,
        beta2,
        min_nx,
        min_ny,
    }
}

static REGISTRY: &[ProblemSpec] = &[
    spec("tower", "bottom edge fixed, downward load on a top-center band", (128, 128), true, (0.3, 50.0, 100.0), (2, 1)),
    spec("hoop", "bottom edge fixed, downward loads around a centered circle", (128, 128), true, (0.3, 50.0, 100.0), (8, 8)),
    spec("bridge", "supports at both bottom ends, downward load along a mid-height deck", (256, 128), true, (0.3, 50.0, 100.0), (4, 2)),
    spec("beam", "three-point bend: pin and roller at the bottom ends, top-center load", (672, 96), true, (0.5, 50.0, 100.0), (2, 1)),
    spec("roof", "pins at both bottom corners, downward load along the top edge", (128, 64), true, (0.3, 10.0, 250.0), (2, 1)),
    spec("staircase", "bottom edge fixed, four point loads on rising steps", (64, 64), false, (0.4, 10.0, 250.0), (4, 4)),
    spec("cantilever_two", "left edge fixed, two downward loads on the right edge", (80, 64), false, (0.5, 100.0, 250.0), (1, 4)),
    spec("dam", "bottom edge fixed, hydrostatic horizontal load on the left face", (64, 80), false, (0.5, 10.0, 250.0), (1, 2)),
    spec("multistory", "bottom edge fixed, downward loads along three floor lines", (70, 64), true, (0.5, 50.0, 250.0), (2, 3)),
    spec("staggered_point", "bottom edge fixed, three staggered interior point loads", (80, 80), false, (0.5, 50.0, 50.0), (4, 8)),
    spec("cantilever", "left edge fixed, downward load at the bottom-right corner", (60, 30), false, (0.5, 50.0, 100.0), (1, 1)),
];

pub fn registry() -> &'static [ProblemSpec] {
    REGISTRY
}

pub fn lookup(name: &str) -> Result<&'static ProblemSpec, ProblemError> {
    REGISTRY
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| ProblemError::Unknown(name.to_string()))
}

/// Full-domain problem at `nx` x `ny` with default material. Layouts flagged
/// `symmetric` are mirror-symmetric and split with
/// [`DesignProblem::half_domain`].
pub fn make_problem(name: &str, nx: usize, ny: usize) -> Result<DesignProblem, ProblemError> {
    make_problem_with_material(name, nx, ny, Material::default())
}

pub fn make_problem_with_material(
    name: &str,
    nx: usize,
    ny: usize,
    material: Material,
) -> Result<DesignProblem, ProblemError> {
    let s = lookup(name)?;
    let bad = |reason: String| ProblemError::Dimensions {
        name: name.to_string(),
        nx,
        ny,
        reason,
    };
    if nx < s.min_nx || ny < s.min_ny {
        return Err(bad(format!("needs at least {}x{}", s.min_nx, s.min_ny)));
    }
    if s.symmetric && nx % 2 != 0 {
        return Err(bad("symmetric layouts need an even width".into()));
    }
    let mut l = Layout::new(nx, ny);
    match name {
        "tower" => {
            l.fix_row(ny);
            let w = (nx / 32).max(1).min(nx / 2);
            l.load_band(nx / 2 - w, nx / 2 + w, 0);
        }
        "hoop" => {
            l.fix_row(ny);
            let r = 0.3 * nx.min(ny) as f64;
            let (cx, cy) = (nx as f64 / 2.0, ny as f64 / 2.0);
            let nodes: Vec<(usize, usize)> = (0..=nx)
                .flat_map(|ix| (0..=ny).map(move |iy| (ix, iy)))
                .filter(|&(ix, iy)| {
                    let d = (ix as f64 - cx).hypot(iy as f64 - cy);
                    (d - r).abs() < 0.5
                })
                .collect();
            l.load_nodes(&nodes);
        }
        "bridge" => {
            let w = (nx / 64).max(1);
            for ix in (0..w).chain(nx + 1 - w..=nx) {
                l.fix(ix, ny, true, true);
            }
            l.load_band(0, nx, ny / 2);
        }
        "beam" => {
            l.fix(0, ny, true, true);
            l.fix(nx, ny, false, true);
            l.load_band(nx / 2, nx / 2, 0);
        }
        "roof" => {
            l.fix(0, ny, true, true);
            l.fix(nx, ny, true, true);
            l.load_band(0, nx, 0);
        }
        "staircase" => {
            l.fix_row(ny);
            let nodes: Vec<(usize, usize)> = (0..4)
                .map(|k| ((2 * k + 1) * nx / 8, ny - (k + 1) * ny / 4))
                .collect();
            l.load_nodes(&nodes);
        }
        "cantilever_two" => {
            for iy in 0..=ny {
                l.fix(0, iy, true, true);
            }
            l.load_nodes(&[(nx, ny / 4), (nx, 3 * ny / 4)]);
        }
        "dam" => {
            l.fix_row(ny);
            let total: f64 = (0..ny).map(|iy| iy as f64).sum();
            for iy in 1..ny {
                let n = l.node(0, iy);
                l.forces[2 * n] = iy as f64 / total;
            }
        }
        "multistory" => {
            l.fix_row(ny);
            let rows = [0, ny / 3, 2 * ny / 3];
            let nodes: Vec<(usize, usize)> = rows
                .iter()
                .flat_map(|&iy| (0..=nx).map(move |ix| (ix, iy)))
                .collect();
            l.load_nodes(&nodes);
        }
        "staggered_point" => {
            l.fix_row(ny);
            l.load_nodes(&[(nx / 4, ny / 8), (3 * nx / 4, 3 * ny / 8), (nx / 2, 5 * ny / 8)]);
        }
        "cantilever" => {
            for iy in 0..=ny {
                l.fix(0, iy, true, true);
            }
            l.load_nodes(&[(nx, ny)]);
        }
        _ => return Err(ProblemError::Unknown(name.to_string())),
    }
    Ok(DesignProblem::with_material(nx, ny, l.forces, l.fixed, material)?)
}

/// Elements touching a support or a load node, row-major.
pub fn anchor_elements(problem: &DesignProblem) -> Vec<bool> {
    let (nx, ny) = (problem.nx(), problem.ny());
    let mut anchors = vec![false; nx * ny];
    for iy in 0..ny {
        for ix in 0..nx {
            anchors[iy * nx + ix] = problem
                .element_dofs(ix, iy)
                .iter()
                .any(|&d| problem.fixed_dofs()[d] || problem.forces()[d] != 0.0);
        }
    }
    anchors
}

struct Layout {
    ny: usize,
    forces: Vec<f64>,
    fixed: Vec<bool>,
}

impl Layout {
    fn new(nx: usize, ny: usize) -> Self {
        let n = dof_count(nx, ny);
        Self {
            ny,
            forces: vec![0.0; n],
            fixed: vec![false; n],
        }
    }

    fn node(&self, ix: usize, iy: usize) -> usize {
        ix * (self.ny + 1) + iy
    }

    fn fix(&mut self, ix: usize, iy: usize, x: bool, y: bool) {
        let n = self.node(ix, iy);
        self.fixed[2 * n] |= x;
        self.fixed[2 * n + 1] |= y;
    }

    fn fix_row(&mut self, iy: usize) {
        let nx = self.fixed.len() / (2 * (self.ny + 1)) - 1;
        for ix in 0..=nx {
            self.fix(ix, iy, true, true);
        }
    }

    /// Equal downward loads on nodes `ix0..=ix1` of row `iy`.
    fn load_band(&mut self, ix0: usize, ix1: usize, iy: usize) {
        let nodes: Vec<(usize, usize)> = (ix0..=ix1).map(|ix| (ix, iy)).collect();
        self.load_nodes(&nodes);
    }

    /// Unit total downward load split equally over `nodes`.
    fn load_nodes(&mut self, nodes: &[(usize, usize)]) {
        let f = 1.0 / nodes.len() as f64;
        for &(ix, iy) in nodes {
            let n = self.node(ix, iy);
            self.forces[2 * n + 1] += f;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_entry_builds_at_canonical_dims() {
        for s in registry() {
            let p = make_problem(s.name, s.nx, s.ny).unwrap();
            assert!(!p.is_symmetric());
            let total: f64 = p.forces().iter().map(|f| f.abs()).sum();
            assert!((total - 1.0).abs() < 1e-12, "{} total load {total}", s.name);
            for (f, &x) in p.forces().iter().zip(p.fixed_dofs()) {
                assert!(!(x && *f != 0.0), "{}", s.name);
            }
            if s.symmetric {
                p.half_domain().unwrap();
            }
        }
    }

    #[test]
    fn tower_layout() {
        let p = make_problem("tower", 128, 128).unwrap();
        for ix in 0..=128 {
            for iy in 0..=128 {
                let n = p.node_index(ix, iy);
                assert_eq!(p.fixed_dofs()[2 * n], iy == 128);
                assert_eq!(p.fixed_dofs()[2 * n + 1], iy == 128);
                let loaded = iy == 0 && (60..=68).contains(&ix);
                assert_eq!(p.forces()[2 * n + 1] != 0.0, loaded, "node ({ix},{iy})");
                assert_eq!(p.forces()[2 * n], 0.0);
            }
        }
    }

    #[test]
    fn beam_is_seven_to_one() {
        let s = lookup("beam").unwrap();
        assert_eq!(s.nx * 1, 7 * s.ny);
        assert_eq!((s.nx, s.ny), (672, 96));
    }

    #[test]
    fn rejects_bad_dims_and_names() {
        assert!(matches!(make_problem("tower", 33, 32), Err(ProblemError::Dimensions { .. })));
        assert!(matches!(make_problem("hoop", 4, 4), Err(ProblemError::Dimensions { .. })));
        assert!(matches!(make_problem("tower", 0, 4), Err(ProblemError::Dimensions { .. })));
        assert!(matches!(make_problem("pagoda", 8, 8), Err(ProblemError::Unknown(_))));
    }

    #[test]
    fn small_grids_build() {
        for s in registry() {
            let nx = if s.symmetric { s.min_nx.max(8) } else { s.min_nx.max(6) };
            make_problem(s.name, nx, s.min_ny.max(8)).unwrap();
        }
    }

    #[test]
    fn anchors_cover_supports_and_loads() {
        let p = make_problem("cantilever", 4, 2).unwrap();
        let a = anchor_elements(&p);
        // Left column (fixed edge) and the bottom-right element (load).
        let expected: Vec<bool> = (0..8).map(|e| e % 4 == 0 || e == 7).collect();
        assert_eq!(a, expected);
    }
}
