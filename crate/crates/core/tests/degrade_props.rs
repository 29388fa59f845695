use fusecurr::degrade::*;
use fusecurr::imgio::Image;
use fusecurr::metrics::iqa_star;
use fusecurr::trainer::synthetic_pair;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

fn image(n: usize) -> impl Strategy<Value = Image> {
    prop::collection::vec(0.0f64..=1.0, n * n).prop_map(move |d| Image::new(n, n, d).unwrap())
}

fn params() -> impl Strategy<Value = DegradationParams> {
    prop::array::uniform5(0.0f64..=1.0).prop_map(|a| DegradationParams::from_array(a).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn identity_point_is_within_one_level(img in image(16), seed in any::<u64>()) {
        let out = degrade_image(&img, &DegradationParams::IDENTITY, seed);
        prop_assert!(out.max_abs_diff(&img) <= 1.0 / 255.0);
    }

    #[test]
    fn pure_in_inputs_params_and_seed(img in image(16), p in params(), seed in any::<u64>()) {
        prop_assert_eq!(degrade_image(&img, &p, seed), degrade_image(&img.clone(), &p, seed));
        let (a1, b1) = degrade_pair(&img, &img, &p, seed);
        let (a2, b2) = degrade_pair(&img, &img, &p, seed);
        prop_assert_eq!((a1, b1), (a2, b2));
    }

    #[test]
    fn output_stays_in_unit_range(img in image(16), p in params(), seed in any::<u64>()) {
        let out = degrade_image(&img, &p, seed);
        prop_assert!(out.data().iter().all(|v| (0.0..=1.0).contains(v)));
        prop_assert_eq!((out.height(), out.width()), (16, 16));
    }

    #[test]
    fn out_of_range_knobs_rejected(k in 0usize..5, v in prop_oneof![-5.0f64..-1e-9, 1.0f64 + 1e-9..5.0]) {
        let mut a = DegradationParams::IDENTITY.to_array();
        a[k] = v;
        prop_assert!(DegradationParams::from_array(a).is_err());
    }

    #[test]
    fn dct_round_trip(block in prop::array::uniform32(-1.0f64..1.0), tail in prop::array::uniform32(-1.0f64..1.0)) {
        let mut b = [0.0; 64];
        b[..32].copy_from_slice(&block);
        b[32..].copy_from_slice(&tail);
        let back = dct8x8_inverse(&dct8x8_forward(&b));
        for (x, y) in b.iter().zip(back) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn contrast_energy_tracks_distance_from_identity(c1 in 0.0f64..=1.0, c2 in 0.0f64..=1.0) {
        let img = Image::from_fn(16, 16, |r, col| 0.5 + 0.15 * ((r as f64 * 0.9).sin() + (col as f64 * 0.4).cos()) / 2.0).unwrap();
        let energy = |c: f64| {
            let out = color_jitter(&img, 0.5, c);
            let mu = out.mean();
            out.data().iter().map(|v| (v - mu) * (v - mu)).sum::<f64>()
        };
        let base = energy(0.5);
        let dev = |c: f64| (energy(c) - base).abs();
        if (c1 - 0.5).abs() < (c2 - 0.5).abs() && (c1 - 0.5).signum() == (c2 - 0.5).signum() {
            prop_assert!(dev(c1) <= dev(c2) + 1e-12);
        }
    }
}

fn ray_scores(img: &Image, knob: usize) -> Vec<f64> {
    GRID.iter()
        .map(|&d| {
            let mut a = DegradationParams::IDENTITY.to_array();
            a[knob] = d;
            iqa_star(&degrade_image(img, &DegradationParams::from_array(a).unwrap(), 9))
        })
        .collect()
}

fn non_increasing(s: &[f64]) -> bool {
    s.windows(2).all(|w| w[1] <= w[0])
}

#[test]
fn difficulty_is_monotone_on_detailed_textures() {
    // binary texture: high enough gradient energy that noise can only wash it out
    for seed in 0..4u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = Image::from_fn(64, 64, |_, _| if rng.random::<bool>() { 1.0 } else { 0.0 }).unwrap();
        for knob in [0usize, 4] {
            let s = ray_scores(&img, knob);
            assert!(non_increasing(&s), "seed {seed} knob {knob}: {s:?}");
        }
    }
}

#[test]
fn blur_lowers_quality_of_a_synthetic_scene() {
    let (_, vi) = synthetic_pair(64, 3).unwrap();
    let s = ray_scores(&vi, 0);
    assert!(non_increasing(&s), "{s:?}");
    assert!(s[4] < s[0]);
}

#[test]
fn blur_kernel_sizes_cover_the_ladder() {
    let sizes: Vec<usize> = GRID.iter().map(|&d| blur_kernel_size(d)).collect();
    assert_eq!(sizes, vec![1, 3, 5, 5, 7]);
}

#[test]
fn pair_noise_streams_are_independent() {
    let img = Image::filled(16, 16, 0.5).unwrap();
    let p = DegradationParams::new(0.0, 0.0, 0.5, 0.5, 1.0).unwrap();
    let (a, b) = degrade_pair(&img, &img, &p, 7);
    assert_ne!(a, b);
}
