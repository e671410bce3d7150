use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stairclimb::config::Config;
use stairclimb::harness::ablation::VARIANTS;
use stairclimb::harness::eval::run_trial;
use stairclimb::harness::profile::PROFILE_ATTEMPTS;
use stairclimb::harness::{
    ablation_matrix, evaluate, load_policy, record_velocity_profile, BoolMode, EvalSpec,
    HarnessError,
};
use stairclimb::net::{save_params, ActorCritic};
use stairclimb::terrain::TerrainSpec;
use stairclimb::util::derive_seed;

/// Saves a freshly initialised policy with small hidden layers.
fn untrained_checkpoint(dir: &Path) -> PathBuf {
    let mut cfg = Config::default();
    cfg.net.actor_hidden = vec![16, 16];
    cfg.net.critic_hidden = vec![16];
    let a = cfg.net.actor_sizes();
    let c = cfg.net.critic_sizes();
    let model = ActorCritic::new(
        a[0],
        c[0],
        *a.last().unwrap(),
        &cfg.net.actor_hidden,
        &cfg.net.critic_hidden,
        0.0,
        &mut ChaCha8Rng::seed_from_u64(9),
    );
    let path = dir.join("untrained.ckpt");
    save_params(&path, &model, 9, 0, cfg.to_json()).unwrap();
    path
}

#[test]
fn evaluation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let spec = EvalSpec::new(&ckpt, TerrainSpec::StepHeight(0.1), 6, BoolMode::Off);
    let a = evaluate(&spec).unwrap();
    let b = evaluate(&spec).unwrap();
    assert_eq!(a, b);
    let other = evaluate(&EvalSpec { seed: 1, ..spec }).unwrap();
    assert_ne!(a.mean_final_distance, other.mean_final_distance);
}

#[test]
fn untrained_policy_does_not_climb() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let r = evaluate(&EvalSpec::new(
        &ckpt,
        TerrainSpec::StepHeight(0.15),
        20,
        BoolMode::On,
    ))
    .unwrap();
    assert!(r.success_rate <= 5.0, "{}", r.success_rate);
    assert!(r.success_ci95[0] <= r.success_rate && r.success_rate <= r.success_ci95[1]);
}

#[test]
fn threaded_evaluation_matches_sequential_trials() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let loaded = load_policy(&ckpt).unwrap();
    let spec = EvalSpec {
        seed: 4,
        record_traces: true,
        ..EvalSpec::new(&ckpt, TerrainSpec::Flat, 5, BoolMode::Off)
    };
    let report = evaluate(&spec).unwrap();
    let traces = report.traces.unwrap();
    for (k, trace) in traces.iter().enumerate() {
        let t = run_trial(
            &loaded.policy,
            &loaded.config,
            &spec.terrain,
            spec.mode,
            spec.radius,
            derive_seed(spec.seed, &[k as u64]),
            true,
        )
        .unwrap();
        assert_eq!(t.trace.as_ref(), Some(trace));
    }
}

#[test]
fn ablation_table_shape_and_missing_rows() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let heights = [0.05, 0.2];
    let paths = [Some(ckpt), None, Some(dir.path().join("absent.ckpt")), None];
    let table = ablation_matrix(&paths, &heights, 2, 0, 0.2).unwrap();
    assert_eq!(table.rows.len(), VARIANTS.len());
    for row in &table.rows {
        assert_eq!(row.cells.len(), heights.len() + 1);
    }
    assert!(table.rows[0].cells.iter().all(Option::is_some));
    for r in &table.rows[1..] {
        assert!(r.cells.iter().all(Option::is_none));
    }
    let mut out = Vec::new();
    table.write_table(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(lines.len(), 1 + 4);
    assert_eq!(lines[0].split('\t').count(), 1 + heights.len() + 1);
    assert_eq!(lines[2].matches("N/A").count(), heights.len() + 1);
}

#[test]
fn profile_without_success_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    match record_velocity_profile(&ckpt, 0.3, 0, 0.2) {
        Err(HarnessError::NoSuccessfulTrial(n)) => assert_eq!(n, PROFILE_ATTEMPTS),
        other => panic!(
            "expected NoSuccessfulTrial, got {:?}",
            other.map(|p| p.rows.len())
        ),
    }
}

#[test]
fn missing_checkpoint_names_the_path() {
    let err = load_policy(Path::new("/nonexistent/policy.ckpt")).unwrap_err();
    assert!(
        err.to_string().contains("/nonexistent/policy.ckpt"),
        "{err}"
    );
}

#[test]
fn corrupt_checkpoint_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = untrained_checkpoint(dir.path());
    let mut bytes = std::fs::read(&ckpt).unwrap();
    let n = bytes.len();
    bytes[n - 3] ^= 0x5a;
    std::fs::write(&ckpt, bytes).unwrap();
    assert!(matches!(
        load_policy(&ckpt),
        Err(HarnessError::Checkpoint { .. })
    ));
}
