//! Built-in reference targets, rasterized at any size with 4x4 supersampling.
//! Coordinates are normalized: x to the right, y downward, both in `[0, 1]`.
//! Fields use material polarity (1 = dark stroke).

use std::path::Path;

use crate::formats::{self, FormatError, Field};

const SUPERSAMPLE: usize = 4;

#[derive(Debug, Clone, Copy)]
enum Shape {
    /// Thick segment, width relative to the shorter side.
    Segment([f64; 2], [f64; 2], f64),
    Disk([f64; 2], f64),
    /// Upper half annulus with inner and outer radii.
    UpperRing([f64; 2], f64, f64),
}

fn polygon(points: &[[f64; 2]], width: f64) -> Vec<Shape> {
    (0..points.len())
        .map(|i| Shape::Segment(points[i], points[(i + 1) % points.len()], width))
        .collect()
}

fn shapes(name: &str) -> Option<Vec<Shape>> {
    let stroke = 0.08;
    Some(match name {
        "triangle" => polygon(&[[0.5, 0.08], [0.92, 0.92], [0.08, 0.92]], stroke),
        "hexagon" => {
            let pts: Vec<[f64; 2]> = (0..6)
                .map(|k| {
                    let a = std::f64::consts::FRAC_PI_3 * k as f64;
                    [0.5 + 0.42 * a.cos(), 0.5 + 0.42 * a.sin()]
                })
                .collect();
            polygon(&pts, stroke)
        }
        "arch" => vec![
            Shape::UpperRing([0.5, 0.55], 0.32, 0.42),
            Shape::Segment([0.12, 0.55], [0.12, 1.0], 0.1),
            Shape::Segment([0.88, 0.55], [0.88, 1.0], 0.1),
        ],
        "tower" => vec![
            Shape::Segment([0.5, 0.02], [0.15, 1.0], stroke),
            Shape::Segment([0.5, 0.02], [0.85, 1.0], stroke),
            Shape::Segment([0.3, 0.55], [0.7, 0.55], stroke),
            Shape::Segment([0.4, 0.28], [0.6, 0.28], stroke),
        ],
        "tower_clouds" => vec![
            Shape::Segment([0.5, 0.02], [0.15, 1.0], stroke),
            Shape::Segment([0.5, 0.02], [0.85, 1.0], stroke),
            Shape::Segment([0.3, 0.55], [0.7, 0.55], stroke),
            Shape::Disk([0.14, 0.18], 0.1),
            Shape::Disk([0.86, 0.18], 0.1),
        ],
        "letters" => {
            // U over O over H, each in a 0.5 x 0.28 cell.
            let (l, r, m) = (0.27, 0.73, 0.5);
            vec![
                Shape::Segment([l, 0.07], [l, 0.31], stroke),
                Shape::Segment([r, 0.07], [r, 0.31], stroke),
                Shape::Segment([l, 0.31], [r, 0.31], stroke),
                Shape::Segment([l, 0.39], [r, 0.39], stroke),
                Shape::Segment([r, 0.39], [r, 0.61], stroke),
                Shape::Segment([r, 0.61], [l, 0.61], stroke),
                Shape::Segment([l, 0.61], [l, 0.39], stroke),
                Shape::Segment([l, 0.69], [l, 0.93], stroke),
                Shape::Segment([r, 0.69], [r, 0.93], stroke),
                Shape::Segment([l, m + 0.31], [r, m + 0.31], stroke),
            ]
        }
        _ => return None,
    })
}

pub fn builtin_names() -> &'static [&'static str] {
    &["triangle", "hexagon", "arch", "tower", "tower_clouds", "letters"]
}

fn segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    };
    (p[0] - a[0] - t * dx).hypot(p[1] - a[1] - t * dy)
}

/// Rasterizes a built-in target at `w` x `h`.
pub fn builtin_target(name: &str, w: usize, h: usize) -> Option<Field> {
    let shapes = shapes(name)?;
    // Lengths scale with the shorter side so strokes stay round.
    let s = w.min(h) as f64;
    let (fw, fh) = (w as f64, h as f64);
    let mut values = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let mut hits = 0;
            for sy in 0..SUPERSAMPLE {
                for sx in 0..SUPERSAMPLE {
                    let px = (x as f64 + (sx as f64 + 0.5) / SUPERSAMPLE as f64) / fw;
                    let py = (y as f64 + (sy as f64 + 0.5) / SUPERSAMPLE as f64) / fh;
                    // Back to pixel units, then to shorter-side units.
                    let to_s = |q: [f64; 2]| [q[0] * fw / s, q[1] * fh / s];
                    let p = to_s([px, py]);
                    let inside = shapes.iter().any(|shape| match *shape {
                        Shape::Segment(a, b, width) => segment_distance(p, to_s(a), to_s(b)) <= width / 2.0,
                        Shape::Disk(c, r) => {
                            let c = to_s(c);
                            (p[0] - c[0]).hypot(p[1] - c[1]) <= r
                        }
                        Shape::UpperRing(c, r0, r1) => {
                            let c = to_s(c);
                            let d = (p[0] - c[0]).hypot(p[1] - c[1]);
                            p[1] <= c[1] && d >= r0 && d <= r1
                        }
                    });
                    if inside {
                        hits += 1;
                    }
                }
            }
            values.push(hits as f64 / (SUPERSAMPLE * SUPERSAMPLE) as f64);
        }
    }
    Some(Field::new(w, h, values))
}

/// Resolves `builtin:<name>` or an image path into a material field.
pub fn load_target(spec: &str, w: usize, h: usize) -> Result<Field, FormatError> {
    match spec.strip_prefix("builtin:") {
        Some(name) => builtin_target(name, w, h).ok_or_else(|| FormatError::Invalid {
            path: spec.into(),
            message: format!("unknown built-in target (known: {})", builtin_names().join(", ")),
        }),
        None => formats::load_grayscale_image(Path::new(spec), w, h),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_render_in_range() {
        for name in builtin_names() {
            let f = builtin_target(name, 40, 32).unwrap();
            assert!(f.values.iter().all(|v| (0.0..=1.0).contains(v)));
            let mean = f.values.iter().sum::<f64>() / f.values.len() as f64;
            assert!(mean > 0.05 && mean < 0.6, "{name}: {mean}");
        }
        assert!(builtin_target("dragon", 8, 8).is_none());
    }

    #[test]
    fn triangle_is_mirror_symmetric() {
        let f = builtin_target("triangle", 32, 32).unwrap();
        for y in 0..32 {
            for x in 0..16 {
                assert!((f.values[y * 32 + x] - f.values[y * 32 + 31 - x]).abs() <= 1.0 / 16.0 + 1e-12);
            }
        }
    }

    #[test]
    fn unknown_spec_errors() {
        assert!(load_target("builtin:nope", 8, 8).is_err());
        assert!(load_target("/definitely/missing.png", 8, 8).is_err());
    }
}
