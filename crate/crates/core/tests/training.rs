use fusecurr::agent::ACTION_DIM;
use fusecurr::config::TrainConfig;
use fusecurr::fusenet::*;
use fusecurr::imgio::{save_pgm, Image};
use fusecurr::metrics::RunningNormalizer;
use fusecurr::trainer::*;
use proptest::prelude::*;

fn smoke_config(dir: &std::path::Path) -> TrainConfig {
    make_synthetic_dataset(dir.join("data"), 2, 32, 1).unwrap();
    TrainConfig {
        dataset_dir: dir.join("data"),
        out_dir: dir.join("runs"),
        log_path: dir.join("runs/log.csv"),
        crop: 32,
        pretrain_epochs: 1,
        train_epochs: 2,
        steps_per_episode: 3,
        ..TrainConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn rule_teacher_fixes_constants(v in 0.0f64..=1.0) {
        let x = Image::filled(16, 16, v).unwrap();
        prop_assert_eq!(rule_teacher_fuse(&x, &x).unwrap(), x);
    }

    #[test]
    fn rule_teacher_stays_within_sharpening_bound(d in prop::collection::vec(0.0f64..=1.0, 256)) {
        // the unsharp mask adds at most half the local contrast
        let x = Image::new(16, 16, d).unwrap();
        let f = rule_teacher_fuse(&x, &x).unwrap();
        prop_assert!(f.max_abs_diff(&x) <= 0.5 + 1e-12);
        prop_assert!(f.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn weight_check_accepts_only_the_simplex(a in -0.5f64..1.5, b in -0.5f64..1.5) {
        let ok = a >= 0.0 && b >= 0.0 && (a + b - 1.0).abs() <= WEIGHT_TOL;
        prop_assert_eq!(check_weights(a, b).is_ok(), ok);
    }
}

#[test]
fn file_teacher_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let img = Image::from_fn(16, 16, |r, c| ((r + c) % 7) as f64 / 6.0).unwrap();
    save_pgm(&img, dir.path().join("p.pgm"), 255).unwrap();
    let t = Teacher::parse(dir.path().to_str().unwrap());
    let a = t.fuse("p", &img, &img).unwrap();
    assert_eq!(a, t.fuse("p", &img, &img).unwrap());
    assert!(t.fuse("missing", &img, &img).is_err());
}

#[test]
fn teacher_guidance_step_descends() {
    let (ir, vi) = synthetic_pair(16, 4).unwrap();
    let teacher = rule_teacher_fuse(&ir, &vi).unwrap();
    let pyr = FeaturePyramid::default();
    let batch = vec![Crop { ir, vi, teacher }];
    let mut student = StudentState::new(StudentNet::new(2));
    let before = student_step(&mut student.clone(), &pyr, &batch, &StepAction::PRETRAIN, 0.0, 0).unwrap().l_t;
    student_step(&mut student, &pyr, &batch, &StepAction::PRETRAIN, 1e-3, 0).unwrap();
    let after = student_step(&mut student.clone(), &pyr, &batch, &StepAction::PRETRAIN, 0.0, 0).unwrap().l_t;
    assert!(after < before, "{after} !< {before}");
}

#[test]
fn pyramid_is_frozen_by_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let ctx = TrainContext::from_config(&cfg).unwrap();
    let before = ctx.pyramid.clone();
    train_with_context(&ctx).unwrap();
    assert_eq!(ctx.pyramid, before);
    assert_eq!(ctx.pyramid, FeaturePyramid::default());
}

#[test]
fn logged_rows_respect_invariants() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let report = train(&cfg).unwrap();
    assert_eq!(report.rows.len(), 6);
    for row in &report.rows {
        assert!((row.alpha_t + row.alpha_s - 1.0).abs() <= 1e-9);
        for v in row.state.m_s.iter().chain([&row.reward.e_student, &row.reward.e_teacher]) {
            assert!((0.0..=1.0).contains(v), "{v}");
        }
        for (s, g) in row.state.m_s.iter().zip(&row.state.gap) {
            assert!((0.0..=1.0).contains(&(s + g)), "teacher {}", s + g);
        }
    }
    let log = std::fs::read_to_string(&cfg.log_path).unwrap();
    assert_eq!(log.lines().next().unwrap(), LOG_HEADER);
    assert_eq!(log.lines().count(), 7);
    for f in [PRETRAIN_CKPT, STUDENT_CKPT, AGENT_CKPT] {
        assert!(cfg.out_dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = smoke_config(dir.path());
    let first = train(&cfg).unwrap();
    let log1 = std::fs::read(&cfg.log_path).unwrap();
    let ckpt1 = std::fs::read(cfg.out_dir.join(STUDENT_CKPT)).unwrap();
    cfg.out_dir = dir.path().join("runs2");
    cfg.log_path = dir.path().join("runs2/log.csv");
    let second = train(&cfg).unwrap();
    assert_eq!(first.student, second.student);
    assert_eq!(log1, std::fs::read(&cfg.log_path).unwrap());
    assert_eq!(ckpt1, std::fs::read(cfg.out_dir.join(STUDENT_CKPT)).unwrap());
}

#[test]
fn opting_out_of_difficulty_leaves_batch_nearly_clean() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = smoke_config(dir.path());
    let ctx = TrainContext::from_config(&cfg).unwrap();
    let mut raw = [-40.0; ACTION_DIM];
    raw[0] = 0.0;
    raw[1] = 0.0;
    raw[4] = 0.0;
    raw[5] = 0.0;
    let mut student = StudentState::new(StudentNet::new(0));
    let mut rows = Vec::new();
    run_episode(&ctx, &mut student, &mut FixedPolicy { raw }, &mut RunningNormalizer::new(), 0, &mut rows).unwrap();
    for row in &rows {
        assert!(row.degradation.distance_from_identity() < 1e-12);
        // near-identity degradation keeps the two student outputs almost equal
        assert!(row.losses.l_s < 1e-4, "{}", row.losses.l_s);
    }
}

#[test]
fn evaluation_with_rule_teacher_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    make_synthetic_dataset(dir.path().join("data"), 2, 32, 5).unwrap();
    let rows = evaluate(&Fuser::from_arg("rule").unwrap(), dir.path().join("data"), dir.path().join("out")).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[2].path, "mean");
    let csv = std::fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(parse_metrics_csv(&csv).unwrap(), rows);
    assert!(dir.path().join("out/pair000.pgm").is_file());
}
