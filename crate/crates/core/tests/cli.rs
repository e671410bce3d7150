use std::path::Path;
use std::process::{Command, Output};

fn stairclimb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stairclimb"))
        .args(args)
        .output()
        .unwrap()
}

const TINY: &str = r#"
[task]
horizon = 0.5
reward_window = 0.2

[net]
actor_hidden = [16, 16]
critic_hidden = [16, 16]

[ppo]
n_envs = 8
rollout_steps = 8
epochs = 1
minibatches = 2

[train]
checkpoint_every = 100
"#;

fn train(dir: &Path, config: &Path) -> Vec<u8> {
    let out = dir.to_str().unwrap();
    let o = stairclimb(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--seed",
        "3",
        "--iterations",
        "2",
        "--out",
        out,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ckpts: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "ckpt"))
        .collect();
    assert_eq!(ckpts.len(), 1, "{ckpts:?}");
    let stats = std::fs::read_to_string(dir.join("stats.csv")).unwrap();
    assert_eq!(stats.lines().count(), 3);
    std::fs::read(&ckpts[0]).unwrap()
}

#[test]
fn training_twice_gives_identical_checkpoints() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("tiny.toml");
    std::fs::write(&config, TINY).unwrap();
    let a = train(&tmp.path().join("a"), &config);
    let b = train(&tmp.path().join("b"), &config);
    assert!(a == b, "checkpoints differ");
}

#[test]
fn eval_with_missing_checkpoint_fails_clearly() {
    let o = stairclimb(&[
        "eval",
        "--checkpoint",
        "/no/such/model.ckpt",
        "--terrain",
        "flat",
        "--trials",
        "3",
    ]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/no/such/model.ckpt"), "{err}");
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(stairclimb(&[]).status.code(), Some(2));
    let o = stairclimb(&["eval", "--checkpoint", "x", "--terrain", "lava:1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = stairclimb(&[
        "eval",
        "--checkpoint",
        "x",
        "--terrain",
        "flat",
        "--mode",
        "maybe",
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn export_terrain_writes_a_profile() {
    let o = stairclimb(&["export-terrain", "--terrain", "step:0.1"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let heights: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(heights.len() >= 2);
    assert!(heights.iter().any(|h| (h - 0.1).abs() < 1e-9));
    assert!(heights.iter().any(|h| h.abs() < 1e-9));
}

#[test]
fn train_rejects_unknown_config_keys() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("bad.toml");
    std::fs::write(&config, "[ppo]\nclip_eps = 0.1\n").unwrap();
    let o = stairclimb(&[
        "train",
        "--config",
        config.to_str().unwrap(),
        "--iterations",
        "1",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("clip_eps"));
}
