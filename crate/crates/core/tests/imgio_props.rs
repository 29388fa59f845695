use fusecurr::imgio::{encode_pgm, load_pgm, parse_pgm, rgb_to_ycbcr, save_pgm, ycbcr_to_rgb, ColorImage, Image};
use proptest::prelude::*;

fn image(h: usize, w: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..=1.0, h * w).prop_map(move |d| Image::new(h, w, d).unwrap())
}

fn sized_image() -> impl Strategy<Value = Image> {
    (8usize..20, 8usize..20).prop_flat_map(|(h, w)| image(h, w))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pgm_round_trip_within_one_step(img in sized_image(), maxval in prop::sample::select(vec![255u32, 65535])) {
        let back = parse_pgm(&encode_pgm(&img, maxval).unwrap()).unwrap();
        prop_assert_eq!((back.height, back.width, back.maxval), (img.height(), img.width(), maxval));
        for (a, b) in img.data().iter().zip(&back.data) {
            prop_assert!((a - b).abs() <= 0.5 / maxval as f64 + 1e-12);
        }
    }

    #[test]
    fn color_round_trip(r in image(8, 8), g in image(8, 8), b in image(8, 8)) {
        let rgb = ColorImage::new(r, g, b).unwrap();
        let (y, cb, cr) = rgb_to_ycbcr(&rgb);
        let back = ycbcr_to_rgb(&y, &cb, &cr).unwrap();
        prop_assert!(rgb.r.max_abs_diff(&back.r) <= 1e-5);
        prop_assert!(rgb.g.max_abs_diff(&back.g) <= 1e-5);
        prop_assert!(rgb.b.max_abs_diff(&back.b) <= 1e-5);
    }

    #[test]
    fn clamped_construction_stays_in_unit_range(d in prop::collection::vec(-3.0f64..3.0, 64)) {
        let img = Image::from_clamped(8, 8, d).unwrap();
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn file_round_trip_preserves_8bit_values() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pgm");
    let img = Image::from_fn(9, 11, |r, c| ((r * 11 + c) % 256) as f64 / 255.0).unwrap();
    save_pgm(&img, &path, 255).unwrap();
    assert_eq!(load_pgm(&path).unwrap(), img);
}

#[test]
fn malformed_inputs_are_parse_errors() {
    for bad in [&b"P2\n8 8\n255\n"[..], b"P5\n8 8\n", b"P5\n8 8\n255\n\x00\x01", b"P5\n8 8\n0\n"] {
        let e = parse_pgm(bad).unwrap_err();
        assert_eq!(e.kind(), "ParseError", "{bad:?}");
    }
}

#[test]
fn unsupported_maxval_rejected() {
    let img = Image::filled(8, 8, 0.5).unwrap();
    assert_eq!(encode_pgm(&img, 1000).unwrap_err().kind(), "ValueError");
}

#[test]
fn ascii_pgm_parses() {
    let mut text = String::from("P2\n# comment\n8 8\n15\n");
    for k in 0..64 {
        text.push_str(&format!("{} ", k % 16));
    }
    let r = parse_pgm(text.as_bytes()).unwrap();
    assert_eq!(r.maxval, 15);
    assert_eq!(r.data[15], 1.0);
}

#[test]
fn out_of_range_pixels_rejected() {
    assert!(Image::new(8, 8, vec![1.5; 64]).is_err());
    assert!(Image::new(8, 8, vec![f64::NAN; 64]).is_err());
    assert!(Image::new(4, 4, vec![0.0; 16]).is_err());
}
