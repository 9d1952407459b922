use super::FemError;

/// 8x8 element stiffness matrix, row-major.
pub type ElementMatrix = [[f64; 8]; 8];

/// Stiffness matrix of a unit-square bilinear plane-stress element with
/// unit Young's modulus and unit thickness.
///
/// Local node order is `(0,0), (1,0), (1,1), (0,1)` in element coordinates
/// (x to the right, y downward, matching the grid indexing), with the x DOF
/// before the y DOF at each node.
pub fn element_stiffness(nu: f64) -> Result<ElementMatrix, FemError> {
    if !(0.0..0.5).contains(&nu) || !nu.is_finite() {
        return Err(FemError::InvalidParameter(format!(
            "Poisson ratio must lie in [0, 0.5), got {nu}"
        )));
    }
    let k = [
        0.5 - nu / 6.0,
        0.125 + nu / 8.0,
        -0.25 - nu / 12.0,
        -0.125 + 3.0 * nu / 8.0,
        -0.25 + nu / 12.0,
        -0.125 - nu / 8.0,
        nu / 6.0,
        0.125 - 3.0 * nu / 8.0,
    ];
    const PATTERN: [[usize; 8]; 8] = [
        [0, 1, 2, 3, 4, 5, 6, 7],
        [1, 0, 7, 6, 5, 4, 3, 2],
        [2, 7, 0, 5, 6, 3, 4, 1],
        [3, 6, 5, 0, 7, 2, 1, 4],
        [4, 5, 6, 7, 0, 1, 2, 3],
        [5, 4, 3, 2, 1, 0, 7, 6],
        [6, 3, 4, 1, 2, 7, 0, 5],
        [7, 2, 1, 4, 3, 6, 5, 0],
    ];
    let scale = 1.0 / (1.0 - nu * nu);
    let mut ke = [[0.0; 8]; 8];
    for (row, pattern_row) in ke.iter_mut().zip(PATTERN.iter()) {
        for (entry, &idx) in row.iter_mut().zip(pattern_row.iter()) {
            *entry = scale * k[idx];
        }
    }
    Ok(ke)
}

/// `u^T k0 u` for an element displacement vector.
#[inline]
pub fn quadratic_form(k0: &ElementMatrix, u: &[f64; 8]) -> f64 {
    let mut acc = 0.0;
    for (row, &ui) in k0.iter().zip(u.iter()) {
        let mut r = 0.0;
        for (kij, &uj) in row.iter().zip(u.iter()) {
            r += kij * uj;
        }
        acc += ui * r;
    }
    acc
}
