use proptest::prelude::*;
use tides_core::config::RunConfig;
use tides_core::formats::{
    load_grayscale_image, parse_tdsf, pgm_bytes, read_tdsf, tdsf_bytes, write_pgm, write_tdsf, Field,
};
use tides_core::opt::checkpoint::Checkpoint;

fn field_strategy() -> impl Strategy<Value = Field> {
    (1usize..12, 1usize..12).prop_flat_map(|(nx, ny)| {
        prop::collection::vec(0.0f64..=1.0, nx * ny).prop_map(move |v| {
            // TDSF stores f32, so start from values it represents exactly.
            Field::new(nx, ny, v.into_iter().map(|x| x as f32 as f64).collect())
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tdsf_round_trip_is_exact(field in field_strategy()) {
        let back = parse_tdsf(std::path::Path::new("mem"), &tdsf_bytes(&field)).unwrap();
        prop_assert_eq!(back.nx, field.nx);
        prop_assert_eq!(back.ny, field.ny);
        for (a, b) in back.values.iter().zip(&field.values) {
            prop_assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn pgm_round_trip_within_one_level(field in field_strategy()) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.pgm");
        write_pgm(&path, &field).unwrap();
        let back = load_grayscale_image(&path, field.nx, field.ny).unwrap();
        for (a, b) in back.values.iter().zip(&field.values) {
            prop_assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_exact(
        params in prop::collection::vec(-10.0f32..10.0, 6),
        m in prop::collection::vec(any::<f64>().prop_filter("finite", |x| x.is_finite()), 6),
        step in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let ck = Checkpoint {
            nx: 2,
            ny: 3,
            params,
            first_moment: m.clone(),
            second_moment: m.iter().map(|x| x * x).collect(),
            step,
            rng_seed: seed,
            rng_draws: step / 3,
        };
        let back = Checkpoint::from_bytes(std::path::Path::new("mem"), &ck.to_bytes()).unwrap();
        prop_assert_eq!(back, ck);
    }
}

#[test]
fn tdsf_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.tdsf");
    let field = Field::new(3, 2, vec![0.0, 0.25, 0.5, 0.75, 1.0, 0.125]);
    write_tdsf(&path, &field).unwrap();
    assert_eq!(read_tdsf(&path).unwrap(), field);
}

#[test]
fn pgm_header_and_polarity() {
    let bytes = pgm_bytes(&Field::new(2, 1, vec![1.0, 0.0]));
    assert_eq!(bytes, b"P5\n2 1\n255\n\x00\xff".to_vec());
}

fn save_png(path: &std::path::Path, img: image::DynamicImage) {
    img.save(path).unwrap();
}

#[test]
fn png_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let white = dir.path().join("white.png");
    save_png(&white, image::DynamicImage::ImageLuma8(image::GrayImage::from_pixel(5, 3, image::Luma([255]))));
    assert!(load_grayscale_image(&white, 5, 3).unwrap().values.iter().all(|&v| v == 0.0));

    let checker = dir.path().join("checker.png");
    let img = image::GrayImage::from_fn(2, 2, |x, y| image::Luma([if x == y { 0 } else { 255 }]));
    save_png(&checker, image::DynamicImage::ImageLuma8(img));
    assert_eq!(load_grayscale_image(&checker, 2, 2).unwrap().values, vec![1.0, 0.0, 0.0, 1.0]);

    let grey = dir.path().join("grey.png");
    save_png(&grey, image::DynamicImage::ImageLuma8(image::GrayImage::from_pixel(4, 4, image::Luma([128]))));
    let f = load_grayscale_image(&grey, 4, 4).unwrap();
    assert!(f.values.iter().all(|&v| (v - (1.0 - 128.0 / 255.0)).abs() < 1e-12));

    let rgb = dir.path().join("rgb.png");
    save_png(&rgb, image::DynamicImage::ImageRgb8(image::RgbImage::from_pixel(2, 2, image::Rgb([255, 0, 0]))));
    let f = load_grayscale_image(&rgb, 2, 2).unwrap();
    assert!(f.values.iter().all(|&v| (v - (1.0 - 0.299)).abs() < 1e-9), "{:?}", f.values);

    let missing = dir.path().join("missing.png");
    assert!(load_grayscale_image(&missing, 2, 2).is_err());
    let junk = dir.path().join("junk.png");
    std::fs::write(&junk, b"not an image").unwrap();
    assert!(load_grayscale_image(&junk, 2, 2).is_err());
}

#[test]
fn config_round_trips_losslessly() {
    let c = RunConfig {
        nx: Some(64),
        ny: Some(32),
        seed: 1 << 40,
        learning_rate: 0.1 + 0.2,
        target_image: Some("builtin:arch".into()),
        ..RunConfig::default()
    };
    assert_eq!(RunConfig::from_toml_str(&c.to_toml_string()).unwrap(), c);
}
