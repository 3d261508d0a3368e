use super::*;

fn small() -> DataConfig {
    DataConfig {
        n_train: 4,
        n_val: 2,
        size: 16,
        ..DataConfig::default()
    }
}

#[test]
fn grade_rule_hand_cases() {
    assert_eq!(grade_from_lesions([0; 5]), 0);
    assert_eq!(grade_from_lesions([0, 0, 2, 0, 0]), 1);
    assert_eq!(grade_from_lesions([0, 4, 0, 0, 0]), 4);
    assert_eq!(grade_from_lesions([1, 0, 1, 0, 0]), 2);
    assert_eq!(grade_from_lesions([0, 0, 0, 0, 9]), 0);
    assert_eq!(grade_from_lesions([0, 0, 0, 3, 0]), 3);
}

#[test]
fn grade_thresholds_are_contiguous() {
    // score reached through class 3 alone
    let expected = [0, 1, 1, 2, 2, 2, 3, 3, 3, 3, 4, 4];
    for (score, &g) in expected.iter().enumerate() {
        assert_eq!(grade_from_lesions([0, 0, score, 0, 0]), g, "score {score}");
    }
}

#[test]
fn no_lesions_gives_empty_mask_and_grade_zero() {
    let mut cfg = DataConfig::default();
    for l in &mut cfg.lesions {
        l.absent_prob = 1.0;
    }
    for i in 0..5 {
        let s = generate_sample(&cfg, 3, i);
        assert!(s.mask.iter().all(|&m| m == 0));
        assert_eq!(s.grade, 0);
    }
}

#[test]
fn samples_are_deterministic_and_distinct() {
    let cfg = DataConfig::default();
    let a = generate_sample(&cfg, 11, 5);
    assert_eq!(a, generate_sample(&cfg, 11, 5));
    assert_ne!(a.image, generate_sample(&cfg, 11, 6).image);
    assert_ne!(a.image, generate_sample(&cfg, 12, 5).image);
}

#[test]
fn sample_shapes_and_ranges() {
    let cfg = DataConfig::default();
    let s = generate_sample(&cfg, 0, 0);
    assert_eq!(s.side, 72);
    assert_eq!(s.image.len(), 3 * 72 * 72);
    assert_eq!(s.mask.len(), 72 * 72);
    assert!(s.image.iter().all(|v| (0.0..=1.0).contains(v)));
    assert!(s.mask.iter().all(|&m| (m as usize) < NUM_SEG_CLASSES));
}

#[test]
fn lesions_stay_inside_the_disc() {
    let cfg = DataConfig::default();
    for i in 0..100 {
        let layout = generate_layout(&cfg, 1, i);
        let s = generate_sample(&cfg, 1, i);
        for (p, &m) in s.mask.iter().enumerate() {
            if m != 0 {
                assert!(layout.inside_disc(p / s.side, p % s.side), "sample {i} pixel {p}");
            }
        }
    }
}

#[test]
fn mask_matches_rerendered_footprints() {
    let cfg = DataConfig::default();
    for i in 0..50 {
        let layout = generate_layout(&cfg, 2, i);
        let s = generate_sample(&cfg, 2, i);
        let mut expect = vec![0u8; s.mask.len()];
        for l in &layout.lesions {
            for &p in &l.footprint {
                expect[p] = l.class;
            }
        }
        assert_eq!(s.mask, expect, "sample {i}");
        assert_eq!(s.grade, grade_from_lesions(layout.counts));
        let drawn: Vec<usize> = (1..=5u8)
            .map(|c| layout.lesions.iter().filter(|l| l.class == c).count())
            .collect();
        assert_eq!(drawn, layout.counts.to_vec());
        // draw order is class order
        assert!(layout.lesions.windows(2).all(|w| w[0].class <= w[1].class));
    }
}

#[test]
fn default_config_covers_every_grade() {
    let cfg = DataConfig::default();
    let mut hist = [0usize; NUM_GRADES];
    for i in 0..10_000 {
        hist[grade_from_lesions(generate_layout(&cfg, 0, i).counts) as usize] += 1;
    }
    assert!(hist.iter().all(|&h| h > 200), "{hist:?}");
}

#[test]
fn splits_are_disjoint() {
    let cfg = small();
    let (tr, va) = split_indices(&cfg);
    assert_eq!(tr, 0..4);
    assert_eq!(va, 4..6);
    let train = generate_range(&cfg, tr);
    let val = generate_range(&cfg, va);
    assert!(train.iter().all(|a| val.iter().all(|b| a.index != b.index && a.image != b.image)));
}

#[test]
fn parallel_generation_matches_serial() {
    let cfg = small();
    let serial = generate_range(&cfg, 0..6);
    crate::engine::set_threads(3);
    let parallel = generate_range(&cfg, 0..6);
    crate::engine::set_threads(1);
    assert_eq!(serial, parallel);
}

#[test]
fn save_load_round_trip() {
    let cfg = DataConfig {
        n_train: 30,
        ..DataConfig::default()
    };
    let mut samples = generate_range(&cfg, 0..30);
    samples[3].corrupted = true;
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&samples, dir.path()).unwrap();
    let back = load_dataset(dir.path()).unwrap();
    assert_eq!(back.len(), samples.len());
    let mut worst = 0f64;
    for (a, b) in samples.iter().zip(&back) {
        assert_eq!((a.index, a.side, a.grade, a.corrupted), (b.index, b.side, b.grade, b.corrupted));
        assert_eq!(a.mask, b.mask);
        for (x, y) in a.image.iter().zip(&b.image) {
            worst = worst.max((f64::from(*x) - f64::from(*y)).abs());
        }
    }
    assert!(worst < 2f64.powi(-15), "{worst}");
}

#[test]
fn truncated_files_are_parse_errors() {
    let samples = generate_range(&small(), 0..2);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&samples, dir.path()).unwrap();
    let img = dir.path().join("images/000001.ppm");
    let bytes = std::fs::read(&img).unwrap();
    std::fs::write(&img, &bytes[..bytes.len() - 10]).unwrap();
    match load_dataset(dir.path()) {
        Err(Error::Parse { path, offset, .. }) => {
            assert_eq!(path, img);
            assert_eq!(offset as usize, bytes.len() - 10);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn malformed_headers_and_labels_are_parse_errors() {
    let samples = generate_range(&small(), 0..1);
    let dir = tempfile::tempdir().unwrap();
    save_dataset(&samples, dir.path()).unwrap();
    let mask = dir.path().join("masks/000000.pgm");
    std::fs::write(&mask, b"P2\n3 3\n255\n").unwrap();
    assert!(matches!(load_dataset(dir.path()), Err(Error::Parse { offset: 0, .. })));

    save_dataset(&samples, dir.path()).unwrap();
    let labels = dir.path().join("labels.csv");
    std::fs::write(&labels, "index,grade,corrupted\n0,2,x\n").unwrap();
    match load_dataset(dir.path()) {
        Err(Error::Parse { offset, .. }) => assert_eq!(offset, 22),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn missing_directory_is_missing_data() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(
        load_dataset(&dir.path().join("nope")),
        Err(Error::MissingData(_))
    ));
}
