use deposition::harness::{
    estimate_q_moments, lln_check, ring_doubling_check, sample_q, ExperimentConfig, RingSize, Summary, TestOutcome,
};
use deposition::replicate::{map_replicates, map_replicates_sequential};
use rand::Rng;

#[test]
fn config_round_trips_through_json() {
    let mut cfg = ExperimentConfig::new("zrp", 1.0, vec![4.0, 8.0], 50, 3);
    cfg.ring = RingSize::Fixed(400);
    cfg.lambda = Some(0.75);
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains("\"L\":400"));
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);

    cfg.ring = RingSize::Auto;
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains("\"L\":\"auto\""));
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
}

#[test]
fn config_rejects_bad_input() {
    let bad = [
        r#"{"model":"asep","rho":0.5,"t_list":[1],"replicates":10,"master_seed":1,"typo":1}"#,
        r#"{"model":"asep","rho":0.5,"t_list":[],"replicates":10,"master_seed":1}"#,
        r#"{"model":"asep","rho":0.5,"t_list":[1],"replicates":0,"master_seed":1}"#,
        r#"{"model":"nope","rho":0.5,"t_list":[1],"replicates":10,"master_seed":1}"#,
        r#"{"model":"asep","rho":0.5,"t_list":[1],"replicates":10,"master_seed":1,"L":"big"}"#,
    ];
    for text in bad {
        assert!(ExperimentConfig::from_json(text).and_then(|c| c.check()).is_err(), "{text}");
    }
    let outside = ExperimentConfig::new("asep", 1.5, vec![1.0], 10, 1);
    assert!(sample_q(&outside).is_err());
}

#[test]
fn small_fixed_ring_is_refused() {
    let mut cfg = ExperimentConfig::new("asep", 0.5, vec![50.0], 4, 1);
    cfg.ring = RingSize::Fixed(40);
    assert!(sample_q(&cfg).is_err());
}

#[test]
fn same_seed_gives_identical_samples() {
    let cfg = ExperimentConfig::new("zrp", 1.0, vec![2.0, 4.0, 8.0], 64, 77);
    let a = sample_q(&cfg).unwrap();
    let b = sample_q(&cfg).unwrap();
    assert_eq!(a, b);
    let mut other = cfg.clone();
    other.master_seed = 78;
    assert_ne!(sample_q(&other).unwrap().q, a.q);
}

#[test]
fn parallel_and_sequential_schedules_agree() {
    let draw = |i: usize, rng: &mut rand_chacha::ChaCha8Rng| (i, rng.random::<u64>());
    assert_eq!(map_replicates(300, 9, draw), map_replicates_sequential(300, 9, draw));
}

#[test]
fn doubling_the_ring_leaves_moments_unchanged() {
    let cfg = ExperimentConfig::new("zrp", 1.0, vec![4.0, 8.0], 1500, 21);
    let base = sample_q(&cfg).unwrap();
    let rows = ring_doubling_check(&cfg, &base).unwrap();
    assert_eq!(rows.len(), 4);
    for row in rows {
        assert!(row.overlap, "{row:?}");
    }
}

#[test]
fn second_class_particle_tracks_the_characteristic() {
    let cfg = ExperimentConfig::new("asep", 0.3, vec![5.0, 10.0, 20.0], 2000, 4);
    let samples = sample_q(&cfg).unwrap();
    assert!((samples.v - 0.4).abs() < 1e-12);
    let report = lln_check(&samples);
    assert!(report.final_within_4se, "{report:?}");
    let first = estimate_q_moments(&samples, &[1]);
    assert!(first.iter().all(|e| e.value >= 0.0));
}

#[test]
fn summary_counts_tests() {
    let s = Summary::new(
        "x",
        1,
        0.01,
        vec![TestOutcome::new("a", true, ""), TestOutcome::new("b", true, "")],
        serde_json::json!({}),
    );
    assert!(s.pass);
    assert_eq!(s.test_count, 2);
    assert!((s.family_alpha - 0.02).abs() < 1e-15);
}
