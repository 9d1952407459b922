mod common;

use common::check_golden;
use proptest::prelude::*;
use serde_json::json;
use tides_core::problems::{lookup, make_problem, registry};

fn layout_json(name: &str, nx: usize, ny: usize) -> String {
    let p = make_problem(name, nx, ny).unwrap();
    let fixed: Vec<usize> = (0..p.dof_count()).filter(|&i| p.fixed_dofs()[i]).collect();
    let forces: Vec<_> = p
        .forces()
        .iter()
        .enumerate()
        .filter(|(_, f)| **f != 0.0)
        .map(|(i, f)| json!({ "dof": i, "value": f, "bits": format!("{:016x}", f.to_bits()) }))
        .collect();
    let doc = json!({ "name": name, "nx": nx, "ny": ny, "fixed": fixed, "forces": forces });
    let mut text = serde_json::to_string_pretty(&doc).unwrap();
    text.push('\n');
    text
}

#[test]
fn layouts_match_golden_files() {
    for spec in registry() {
        let text = layout_json(spec.name, spec.nx, spec.ny);
        check_golden(&format!("problems/{}.json", spec.name), text.as_bytes());
    }
}

#[test]
fn canonical_dimensions() {
    let dims = |n: &str| {
        let s = lookup(n).unwrap();
        (s.nx, s.ny)
    };
    assert_eq!(dims("tower"), (128, 128));
    assert_eq!(dims("hoop"), (128, 128));
    assert_eq!(dims("bridge"), (256, 128));
    assert_eq!(dims("beam"), (672, 96));
    assert_eq!(dims("roof"), (128, 64));
    assert_eq!(dims("staircase"), (64, 64));
    assert_eq!(dims("cantilever_two"), (80, 64));
    assert_eq!(dims("dam"), (64, 80));
    assert_eq!(dims("multistory"), (70, 64));
    assert_eq!(dims("staggered_point"), (80, 80));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn loads_are_unit_and_off_supports(idx in 0usize..64, kx in 0usize..12, ky in 0usize..12) {
        let spec = &registry()[idx % registry().len()];
        let mut nx = spec.min_nx + 2 * kx;
        if spec.symmetric && nx % 2 == 1 {
            nx += 1;
        }
        let ny = spec.min_ny + 2 * ky;
        let p = make_problem(spec.name, nx, ny).unwrap();
        let magnitude: f64 = p.forces().iter().map(|f| f.abs()).sum();
        prop_assert!((magnitude - 1.0).abs() < 1e-12, "{} {}x{}: {}", spec.name, nx, ny, magnitude);
        for (f, fixed) in p.forces().iter().zip(p.fixed_dofs()) {
            prop_assert!(!(*fixed && *f != 0.0));
        }
        prop_assert!(p.fixed_dofs().iter().any(|&b| b));
    }
}
