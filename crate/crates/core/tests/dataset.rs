use std::path::Path;

use hmiway::actions::{AiAction, HumanAction};
use hmiway::cognitive::{population, CognitiveState, DriverProfile, Level};
use hmiway::dataset::{
    generate_dataset, load, pooled_batches, save, Dataset, DemoAlerts, GenerationConfig, Trajectory, Transition,
};
use hmiway::driver::{DriverBehavior, ScriptedDriver};
use hmiway::env::{HmiwayEnv, RewardBreakdown, ScenarioConfig};
use hmiway::Error;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn generated(steps: usize, seed: u64) -> Dataset {
    let cfg = GenerationConfig {
        scenario: ScenarioConfig::default(),
        steps_per_type: steps,
        labeled_fraction: 0.5,
        alerts: DemoAlerts::Random(0.3),
        seed,
    };
    let sc = cfg.scenario.clone();
    let mut source = move |_: &DriverProfile| -> hmiway::Result<Box<dyn DriverBehavior>> {
        Ok(Box::new(ScriptedDriver::new(sc.lidar, sc.kinematics.max_speed, sc.geometry.lane_count)))
    };
    generate_dataset(&population()[..3], &cfg, &mut source).unwrap()
}

fn roundtrip(ds: &Dataset, file: &str) -> Dataset {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(file);
    save(ds, &path).unwrap();
    load(&path).unwrap()
}

#[test]
fn three_trajectory_roundtrip_is_bit_identical() {
    let ds = generated(100, 4);
    assert_eq!(ds.trajectories.len(), 3);
    for file in ["d.jsonl", "d.bin"] {
        let back = roundtrip(&ds, file);
        assert_eq!(back, ds);
        for (a, b) in back.trajectories.iter().zip(&ds.trajectories) {
            for (x, y) in a.transitions.iter().zip(&b.transitions) {
                let bits = |v: &[f64]| v.iter().map(|f| f.to_bits()).collect::<Vec<_>>();
                assert_eq!(bits(&x.obs), bits(&y.obs));
                assert_eq!(bits(&x.rewards.as_array()), bits(&y.rewards.as_array()));
            }
        }
    }
}

#[test]
fn empty_dataset_roundtrip() {
    let spec = HmiwayEnv::new(ScenarioConfig::default(), DriverProfile::attentive(0)).unwrap().spec();
    let ds = Dataset::empty(spec);
    assert_eq!(roundtrip(&ds, "e.jsonl"), ds);
    assert_eq!(roundtrip(&ds, "e.bin"), ds);
}

fn rewrite(path: &Path, f: impl Fn(String) -> String) {
    let text = std::fs::read_to_string(path).unwrap();
    std::fs::write(path, f(text)).unwrap();
}

#[test]
fn corrupted_length_header_is_truncation() {
    let ds = generated(100, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    save(&ds, &path).unwrap();
    rewrite(&path, |t| t.replacen("\"length\":100", "\"length\":150", 1));
    assert!(matches!(load(&path), Err(Error::Truncated(_))));

    save(&ds, &path).unwrap();
    rewrite(&path, |t| t.replacen("\"trajectories\":3", "\"trajectories\":4", 1));
    assert!(matches!(load(&path), Err(Error::Truncated(_))));
}

#[test]
fn version_and_schema_errors_are_distinct() {
    let ds = generated(100, 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    save(&ds, &path).unwrap();
    rewrite(&path, |t| t.replacen("\"version\":1", "\"version\":7", 1));
    assert!(matches!(load(&path), Err(Error::VersionMismatch { found: 7, expected: 1 })));

    save(&ds, &path).unwrap();
    rewrite(&path, |t| t.replacen("\"human_action\":\"", "\"human_action\":\"fly_", 1));
    match load(&path) {
        Err(Error::Schema { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected schema error, got {other:?}"),
    }
}

#[test]
fn truncated_binary_is_reported() {
    let ds = generated(100, 2);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.bin");
    save(&ds, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    std::fs::write(&path, &bytes[..bytes.len() - 17]).unwrap();
    assert!(matches!(load(&path), Err(Error::Truncated(_))));
}

#[test]
fn pools_of_eight_windows_of_one_hundred_steps() {
    let ds = generated(1600, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (pools, report) = pooled_batches(&ds, 8, 100, &mut rng);
    assert!(report.skipped.is_empty());
    assert!(!pools.is_empty());
    for p in &pools {
        assert_eq!(p.segments.len(), 8);
        assert!(p.segments.iter().all(|s| s.len == 100));
        assert!(p.segments.iter().all(|s| ds.trajectories[s.trajectory].driver_id == p.driver_id));
    }
    let (singles, _) = pooled_batches(&ds, 1, 100, &mut rng);
    assert!(singles.iter().all(|p| p.segments.len() == 1));
}

#[test]
fn pool_composition_follows_rng_state() {
    let ds = generated(1600, 5);
    let mut a = ChaCha8Rng::seed_from_u64(1);
    let mut b = ChaCha8Rng::seed_from_u64(1);
    let (first, _) = pooled_batches(&ds, 4, 100, &mut a);
    assert_eq!(first, pooled_batches(&ds, 4, 100, &mut b).0);
    let (second, _) = pooled_batches(&ds, 4, 100, &mut a);
    assert_ne!(first, second);
}

#[test]
fn sparse_drivers_are_skipped_with_report() {
    let ds = generated(300, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (pools, report) = pooled_batches(&ds, 8, 100, &mut rng);
    assert!(pools.is_empty());
    assert_eq!(report.skipped.len(), 3);
}

fn arb_vec(dim: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(prop_oneof![any::<f64>().prop_filter("finite", |x| x.is_finite()), -1.0..1.0f64], dim)
}

fn arb_transition(dim: usize) -> impl Strategy<Value = Transition> {
    (
        arb_vec(dim),
        arb_vec(dim),
        arb_vec(dim),
        arb_vec(dim),
        (0..5usize, 0..2usize, 0..5usize),
        prop::array::uniform8(-50.0..50.0f64),
        (any::<bool>(), any::<bool>(), 0..15u32, prop::option::of(0..5usize)),
        any::<bool>(),
    )
        .prop_map(|(obs, sensor_obs, next_obs, next_sensor_obs, (h, a, v), terms, (d, i, c, last), done)| Transition {
            obs,
            sensor_obs,
            human_action: HumanAction::from_index(h).unwrap(),
            ai_action: AiAction::from_index(a).unwrap(),
            applied: HumanAction::from_index(v).unwrap(),
            rewards: RewardBreakdown::from_array(terms),
            cognitive: CognitiveState {
                distracted: d,
                accepted: i,
                counter: c,
                applied: last.and_then(HumanAction::from_index),
            },
            next_obs,
            next_sensor_obs,
            done,
        })
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    let spec = HmiwayEnv::new(ScenarioConfig::default(), DriverProfile::attentive(0)).unwrap().spec();
    let dim = spec.driver_obs_dim;
    let level = || prop::option::of(prop_oneof![Just(Level::Low), Just(Level::High)]);
    let traj = (0..4u32, level(), level(), any::<u64>(), prop::collection::vec(arb_transition(dim), 1..6)).prop_map(
        |(driver_id, trait_label, preference_label, seed, transitions)| Trajectory {
            driver_id,
            trait_label,
            preference_label,
            seed,
            transitions,
        },
    );
    (prop::collection::vec(traj, 0..5), 0.0..1.0f64).prop_map(move |(trajectories, labeled_fraction)| Dataset {
        env_spec: spec.clone(),
        profiles: population(),
        labeled_fraction,
        trajectories,
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn serialization_roundtrip_identity(ds in arb_dataset()) {
        prop_assert_eq!(&roundtrip(&ds, "p.jsonl"), &ds);
        prop_assert_eq!(&roundtrip(&ds, "p.bin"), &ds);
    }

    #[test]
    fn pools_are_homogeneous(ds in arb_dataset(), pool in 1..4usize, window in 1..4usize, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (pools, _) = pooled_batches(&ds, pool, window, &mut rng);
        for p in pools {
            prop_assert_eq!(p.segments.len(), pool);
            for s in &p.segments {
                let t = &ds.trajectories[s.trajectory];
                prop_assert_eq!(t.driver_id, p.driver_id);
                prop_assert!(s.start + s.len <= t.len());
            }
        }
    }
}
