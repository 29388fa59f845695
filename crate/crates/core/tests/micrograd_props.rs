use fusecurr::fusenet::{FeaturePyramid, StudentNet};
use fusecurr::micrograd::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn tensor(shape: &'static [usize]) -> impl Strategy<Value = Tensor> {
    let n: usize = shape.iter().product();
    prop::collection::vec(-1.0f64..1.0, n).prop_map(move |d| Tensor::new(shape.to_vec(), d).unwrap())
}

fn identity_kernels(c: usize) -> Tensor {
    let mut k = Tensor::zeros(&[c, c, 3, 3]);
    for i in 0..c {
        k.data_mut()[((i * c + i) * 3 + 1) * 3 + 1] = 1.0;
    }
    k
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn identity_conv_and_its_adjoint(x in tensor(&[2, 6, 5]), g in tensor(&[2, 6, 5])) {
        let k = identity_kernels(2);
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[2])).unwrap();
        prop_assert_eq!(y.data(), x.data());
        let back = conv2d_backward(&g, &x, &k).unwrap();
        prop_assert_eq!(back.input.data(), g.data());
    }

    #[test]
    fn conv_adjoint_identity(x in tensor(&[2, 5, 4]), g in tensor(&[3, 5, 4]), seed in any::<u64>()) {
        // <conv(x), g> == <x, conv^T(g)> when the bias is zero
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = Tensor::randn(&[3, 2, 3, 3], 0.5, &mut rng);
        let y = conv2d_forward(&x, &k, &Tensor::zeros(&[3])).unwrap();
        let lhs: f64 = y.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let gx = conv2d_backward(&g, &x, &k).unwrap().input;
        let rhs: f64 = x.data().iter().zip(gx.data()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() < 1e-9 * (1.0 + lhs.abs()));
    }

    #[test]
    fn three_layer_composition_matches_fd(seed in 0u64..1000) {
        // conv -> sigmoid -> avgpool, smooth so central differences are exact to O(h^2)
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::randn(&[2, 4, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[2, 2, 3, 3], 0.5, &mut rng);
        let b = Tensor::randn(&[2], 0.5, &mut rng);
        let target = Tensor::randn(&[2, 2, 2], 0.5, &mut rng);
        let report = grad_check(
            |flat| {
                let k = Tensor::new(vec![2, 2, 3, 3], flat[..36].to_vec()).unwrap();
                let b = Tensor::new(vec![2], flat[36..].to_vec()).unwrap();
                let z = conv2d_forward(&x, &k, &b).unwrap();
                let s = sigmoid_forward(&z);
                let p = avgpool2_forward(&s).unwrap();
                let (l, gp) = mse_loss(&p, &target).unwrap();
                let gs = avgpool2_backward(&gp, s.shape()).unwrap();
                let gz = sigmoid_backward(&gs, &s).unwrap();
                let g = conv2d_backward(&gz, &x, &k).unwrap();
                (l, g.weight.data().iter().chain(g.bias.data()).copied().collect())
            },
            &k.data().iter().chain(b.data()).copied().collect::<Vec<_>>(),
            1e-4,
        );
        prop_assert!(report.passed(), "{}", report.max_rel_error);
    }

    #[test]
    fn first_adam_step_is_scale_invariant(g in prop::collection::vec(-2.0f64..2.0, 12), c in 0.01f64..100.0) {
        let p = vec![Tensor::zeros(&[12])];
        let g1 = vec![Tensor::new(vec![12], g.clone()).unwrap()];
        let g2 = vec![Tensor::new(vec![12], g.iter().map(|v| v * c).collect()).unwrap()];
        let (a, _) = adam_step(&p, &g1, &AdamState::new(), 1e-3).unwrap();
        let (b, _) = adam_step(&p, &g2, &AdamState::new(), 1e-3).unwrap();
        for ((x, y), gi) in a[0].data().iter().zip(b[0].data()).zip(&g) {
            prop_assert_eq!(x.signum(), y.signum());
            if gi.abs() > 1e-3 {
                prop_assert!((x - y).abs() < 1e-6 * x.abs().max(1e-9) + 1e-12);
            }
        }
    }

    #[test]
    fn adam_is_deterministic(g in prop::collection::vec(-2.0f64..2.0, 6)) {
        let p = vec![Tensor::new(vec![6], vec![0.3; 6]).unwrap()];
        let gs = vec![Tensor::new(vec![6], g).unwrap()];
        let a = adam_step(&p, &gs, &AdamState::new(), 1e-2).unwrap();
        let b = adam_step(&p, &gs, &AdamState::new(), 1e-2).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn checkpoint_round_trip(names in prop::collection::vec("[a-z_.]{1,12}", 1..4), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let recs: Vec<(String, Tensor)> = names.into_iter().enumerate()
            .map(|(i, n)| (n, Tensor::randn(&[i + 1, 3], 1.0, &mut rng)))
            .collect();
        prop_assert_eq!(decode_checkpoint(&encode_checkpoint(&recs)).unwrap(), recs);
    }
}

#[test]
fn truncated_checkpoint_is_rejected() {
    let recs = vec![("w".to_string(), Tensor::zeros(&[2, 2]))];
    let bytes = encode_checkpoint(&recs);
    for cut in [0, 3, bytes.len() - 1] {
        assert!(decode_checkpoint(&bytes[..cut]).is_err());
    }
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(decode_checkpoint(&bad).is_err());
}

#[test]
fn student_checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ckpt");
    let net = StudentNet::new(5);
    net.save(&path).unwrap();
    assert_eq!(StudentNet::load(&path).unwrap(), net);
}

#[test]
fn pyramid_is_fixed_by_its_seed() {
    assert_eq!(FeaturePyramid::default(), FeaturePyramid::default());
}
