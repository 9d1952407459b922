//! Post-processing of final designs.

use std::collections::VecDeque;

pub const DEFAULT_BINARIZE_THRESHOLD: f64 = 0.5;

/// 1 where `v >= threshold`, else 0.
pub fn binarize(values: &[f64], threshold: f64) -> Vec<f64> {
    values
        .iter()
        .map(|&v| if v >= threshold { 1.0 } else { 0.0 })
        .collect()
}

/// Keeps the 4-connected components of solid (`1.0`) elements that contain
/// at least one anchor element; everything else becomes void.
pub fn keep_anchored_components(binary: &[f64], anchors: &[bool], nx: usize, ny: usize) -> Vec<f64> {
    assert_eq!(binary.len(), nx * ny, "binary field length");
    assert_eq!(anchors.len(), nx * ny, "anchor length");
    let mut keep = vec![false; nx * ny];
    let mut queue = VecDeque::new();
    for e in 0..nx * ny {
        if anchors[e] && binary[e] == 1.0 && !keep[e] {
            keep[e] = true;
            queue.push_back(e);
        }
    }
    while let Some(e) = queue.pop_front() {
        let (ix, iy) = (e % nx, e / nx);
        let mut visit = |n: usize| {
            if binary[n] == 1.0 && !keep[n] {
                keep[n] = true;
                queue.push_back(n);
            }
        };
        if ix > 0 {
            visit(e - 1);
        }
        if ix + 1 < nx {
            visit(e + 1);
        }
        if iy > 0 {
            visit(e - nx);
        }
        if iy + 1 < ny {
            visit(e + nx);
        }
    }
    keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect()
}

/// Elements with `density > threshold` whose mask is 0.
pub fn floating_material(densities: &[f64], mask: &[f64], threshold: f64) -> usize {
    densities
        .iter()
        .zip(mask)
        .filter(|&(&d, &m)| d > threshold && m == 0.0)
        .count()
}

/// Mirrors a left-half field about its right edge into a `2 nx` wide field.
pub fn mirror_field(values: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    assert_eq!(values.len(), nx * ny, "field length");
    let mut out = Vec::with_capacity(2 * nx * ny);
    for iy in 0..ny {
        let row = &values[iy * nx..(iy + 1) * nx];
        out.extend_from_slice(row);
        out.extend(row.iter().rev());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binarize_threshold_is_inclusive() {
        assert_eq!(binarize(&[0.2, 0.5, 0.9], 0.5), vec![0.0, 1.0, 1.0]);
    }

    #[test]
    fn isolated_blob_is_removed() {
        // 6x4: an anchored column on the left and a blob on the right.
        let (nx, ny) = (6, 4);
        let mut b = vec![0.0; nx * ny];
        for iy in 0..ny {
            b[iy * nx] = 1.0;
        }
        b[nx + 4] = 1.0;
        b[nx + 5] = 1.0;
        b[2 * nx + 4] = 1.0;
        let mut anchors = vec![false; nx * ny];
        anchors[3 * nx] = true;
        let kept = keep_anchored_components(&b, &anchors, nx, ny);
        for e in 0..nx * ny {
            assert_eq!(kept[e], if e % nx == 0 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn diagonal_contact_does_not_connect() {
        let b = vec![1.0, 0.0, 0.0, 1.0];
        let kept = keep_anchored_components(&b, &[true, false, false, false], 2, 2);
        assert_eq!(kept, vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn anchor_on_void_keeps_nothing() {
        let kept = keep_anchored_components(&[0.0, 1.0], &[true, false], 2, 1);
        assert_eq!(kept, vec![0.0, 0.0]);
    }

    #[test]
    fn floating_count() {
        assert_eq!(floating_material(&[0.9, 0.9, 0.2, 0.6], &[1.0, 0.0, 0.0, 0.0], 0.5), 2);
    }

    #[test]
    fn mirror_rows() {
        assert_eq!(mirror_field(&[1.0, 2.0, 3.0, 4.0], 2, 2), vec![1.0, 2.0, 2.0, 1.0, 3.0, 4.0, 4.0, 3.0]);
    }
}
