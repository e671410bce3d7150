//! Oracle checks shared by the unit-style test files and the acceptance runner.
//! Each check panics on the first violation and returns a short summary otherwise.
#![allow(dead_code, clippy::needless_range_loop)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stairclimb::net::{DenseNet, ForwardCache};
use stairclimb::ppo::compute_gae_finite_horizon;
use stairclimb::sim::{
    center_of_mass, step_physics, step_physics_detailed, ActuatorCommand, RobotModel, RobotState,
    PHYSICS_DT,
};
use stairclimb::task::obs::is_state_channel;
use stairclimb::task::reward::{
    reward_face_goal, reward_pos_bias, reward_position, reward_stall, shaping_rewards,
    AIR_TIME_TARGET,
};
use stairclimb::task::{Env, NoiseModel, TaskConfig, Termination, ACTION_DIM, OBS_DIM};
use stairclimb::terrain::{generate_terrain, HeightField, TerrainKind};

// ---------------------------------------------------------------- rewards

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

/// Every reward term against a separately written formula, plus the weighted
/// per-tick reward of the environment against its terms.
pub fn reward_oracles(cases: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = 1e-10;
    for _ in 0..cases {
        let p: [f64; 2] = [rng.random_range(-4.0..4.0), rng.random_range(-1.0..1.0)];
        // keep some goals within the 0.5 m radius
        let goal = if rng.random_bool(0.3) {
            [
                p[0] + rng.random_range(-0.4..0.4),
                p[1] + rng.random_range(-0.2..0.2),
            ]
        } else {
            [rng.random_range(-4.0..4.0), rng.random_range(-1.0..1.0)]
        };
        let v: [f64; 2] = if rng.random_bool(0.2) {
            [rng.random_range(-0.07..0.07), rng.random_range(-0.07..0.07)]
        } else {
            [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)]
        };
        let (horizon, window) = (rng.random_range(3.0..8.0), rng.random_range(0.5..2.5));
        let t = rng.random_range(0.0..horizon);
        let dx = goal[0] - p[0];
        let dz = goal[1] - p[1];
        let d2 = dx * dx + dz * dz;

        let want = if t > horizon - window {
            1.0 / (window * (1.0 + d2))
        } else {
            0.0
        };
        let got = reward_position(p, goal, t, horizon, window);
        assert!(close(got, want, tol), "position {got} vs {want}");

        let want = if v[0].hypot(v[1]) < 1e-6 || d2.sqrt() < 1e-6 {
            0.0
        } else {
            (v[1].atan2(v[0]) - dz.atan2(dx)).cos()
        };
        let got = reward_pos_bias(v, p, goal);
        assert!(close(got, want, tol), "pos_bias {got} vs {want}");

        let want = if (v[0] * v[0] + v[1] * v[1]).sqrt() < 0.1 && d2 > 0.25 {
            -1.0
        } else {
            0.0
        };
        assert_eq!(reward_stall(v, p, goal), want, "stall");

        let (th, tg): (f64, f64) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let want = if d2 > 0.25 { -(th - tg).abs() } else { 0.0 };
        let got = reward_face_goal(th, tg, p, goal);
        assert!(close(got, want, tol), "face_goal {got} vs {want}");

        let jv: [f64; 6] = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
        let pjv: [f64; 6] = std::array::from_fn(|_| rng.random_range(-20.0..20.0));
        let a: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let pa: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let tq: [f64; 6] = std::array::from_fn(|_| rng.random_range(-40.0..40.0));
        let pitch = rng.random_range(-1.0..1.0);
        let air = [
            if rng.random_bool(0.5) {
                rng.random_range(0.0..0.6)
            } else {
                0.0
            },
            if rng.random_bool(0.5) {
                rng.random_range(0.0..0.6)
            } else {
                0.0
            },
        ];
        let dt = 0.02;
        let s = shaping_rewards(&jv, &pjv, dt, &a, &pa, &tq, pitch, &air);
        let mut acc = 0.0;
        let mut rate = 0.0;
        let mut torque = 0.0;
        for k in 0..6 {
            acc -= ((jv[k] - pjv[k]) / dt).powi(2);
            rate -= (a[k] - pa[k]).powi(2);
            torque -= tq[k].powi(2);
        }
        let mut air_time = 0.0;
        for w in air {
            if w > 0.0 {
                air_time += w - AIR_TIME_TARGET;
            }
        }
        assert!(
            close(s.joint_acc, acc, tol * acc.abs().max(1.0)),
            "joint_acc"
        );
        assert!(close(s.action_rate, rate, tol), "action_rate");
        assert!(
            close(s.torque, torque, tol * torque.abs().max(1.0)),
            "torque"
        );
        assert!(close(s.orientation, -pitch * pitch, tol), "orientation");
        assert!(close(s.air_time, air_time, tol), "air_time");
    }

    // weighted per-tick reward inside the environment
    let cfg = TaskConfig::default();
    let c = cfg.rewards;
    let dt = cfg.control_dt();
    let terrain = generate_terrain(TerrainKind::Stairs, 3, seed).unwrap();
    let mut env = Env::new(Arc::new(RobotModel::default()), Arc::new(cfg), seed);
    env.reset(&terrain, (3, 0));
    let mut ticks = 0;
    while ticks < cases.max(100) {
        let a: [f64; ACTION_DIM] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let out = env.step(&a);
        let t = out.terms;
        let sh = t.shaping;
        let mut want = dt
            * (c.position * t.position
                + c.pos_bias * t.pos_bias
                + c.stall * t.stall
                + c.face_goal * t.face_goal
                + c.joint_acc * sh.joint_acc
                + c.action_rate * sh.action_rate
                + c.torque * sh.torque
                + c.orientation * sh.orientation
                + c.air_time * sh.air_time);
        match out.done {
            Some(Termination::Fall) => want -= c.termination,
            Some(Termination::Diverged) => want = -c.termination,
            _ => {}
        }
        assert!(
            close(out.reward, want, tol * want.abs().max(1.0)),
            "tick reward {} vs {want}",
            out.reward
        );
        ticks += 1;
        if out.done.is_some() {
            env.reset(&terrain, (3, 0));
        }
    }
    format!("{cases} random inputs per term, {ticks} env ticks")
}

// ---------------------------------------------------------------- GAE

/// Σ_k (γλ)^k δ_{t+k}, cut at the first finished step, written as a double loop.
pub fn gae_brute_force(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_values: &[f64],
    n: usize,
    gamma: f64,
    lambda: f64,
) -> Vec<f64> {
    let steps = rewards.len() / n;
    let mut out = vec![0.0; rewards.len()];
    for e in 0..n {
        for t in 0..steps {
            let mut total = 0.0;
            let mut weight = 1.0;
            for k in t..steps {
                let i = k * n + e;
                let next = if dones[i] {
                    0.0
                } else if k + 1 == steps {
                    last_values[e]
                } else {
                    values[i + n]
                };
                let delta = rewards[i] + gamma * next - values[i];
                total += weight * delta;
                if dones[i] {
                    break;
                }
                weight *= gamma * lambda;
            }
            out[t * n + e] = total;
        }
    }
    out
}

/// GAE against the brute force, and returns at finished steps that ignore the critic.
pub fn gae_suite(cases: usize, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut finished = 0;
    for _ in 0..cases {
        let n = rng.random_range(1..5);
        let steps = rng.random_range(1..16);
        let len = n * steps;
        let r: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let v: Vec<f64> = (0..len).map(|_| rng.random_range(-5.0..5.0)).collect();
        let d: Vec<bool> = (0..len).map(|_| rng.random_bool(0.2)).collect();
        let last: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
        let (gamma, lambda) = (rng.random_range(0.5..=1.0), rng.random_range(0.0..=1.0));
        let (adv, ret) = compute_gae_finite_horizon(&r, &v, &d, &last, n, gamma, lambda);
        let want = gae_brute_force(&r, &v, &d, &last, n, gamma, lambda);
        for i in 0..len {
            assert!(
                (adv[i] - want[i]).abs() < 1e-10,
                "advantage {} vs {}",
                adv[i],
                want[i]
            );
            assert!((ret[i] - adv[i] - v[i]).abs() < 1e-12);
        }
        // constant critic: returns at finished steps are the raw reward, whatever the constant
        let c = rng.random_range(-100.0..100.0);
        let (_, ret_c) =
            compute_gae_finite_horizon(&r, &vec![c; len], &d, &vec![c; n], n, gamma, lambda);
        for i in 0..len {
            if d[i] {
                assert!(
                    (ret_c[i] - r[i]).abs() < 1e-9,
                    "bootstrapped at a finished step"
                );
                finished += 1;
            }
        }
    }
    // a timeout at the last step is not bootstrapped, a rollout cut is
    let (_, ret) = compute_gae_finite_horizon(
        &[0.0, 0.0, 1.0, 1.0],
        &[0.0; 4],
        &[false, false, true, false],
        &[10.0, 10.0],
        2,
        1.0,
        1.0,
    );
    assert_eq!((ret[2], ret[3]), (1.0, 11.0));
    format!("{cases} random buffers, {finished} finished steps")
}

// ---------------------------------------------------------------- physics

fn limp_model() -> RobotModel {
    RobotModel {
        kp: 0.0,
        kd: 0.0,
        kv: 0.0,
        ..Default::default()
    }
}

/// Centre of mass of a robot in free flight against the projectile formula.
pub fn ballistic() -> String {
    let model = limp_model();
    let terrain = HeightField::flat();
    let start = RobotState {
        x: 1.0,
        z: 3.0,
        pitch: 0.1,
        vx: 0.7,
        vz: 2.0,
        joint_pos: model.default_posture,
        ..Default::default()
    };
    let com0 = center_of_mass(&model, &start);
    let cmd = ActuatorCommand::hold(model.default_posture);
    let mut s = start;
    let g = model.gravity;
    let mut worst = 0.0f64;
    for k in 1..=100 {
        s = step_physics(&model, &s, &cmd, &terrain, PHYSICS_DT).unwrap();
        let t = k as f64 * PHYSICS_DT;
        let com = center_of_mass(&model, &s);
        let ex = com0.x + start.vx * t;
        let ez = com0.y + start.vz * t - 0.5 * g * t * t;
        let err = (com.x - ex).abs().max((com.y - ez).abs());
        assert!(err < 1e-6, "t={t}: {com:?} vs ({ex}, {ez})");
        worst = worst.max(err);
    }
    format!("max deviation {worst:.1e} m")
}

/// A robot settled on each start terrain carries its weight on its wheels.
pub fn weight_balance() -> String {
    let model = RobotModel::default();
    let weight = model.total_mass() * model.gravity;
    let cmd = ActuatorCommand::hold(model.default_posture);
    let mut worst = 0.0f64;
    for kind in [
        TerrainKind::Step,
        TerrainKind::SmoothSlope,
        TerrainKind::DiscreteObstacles,
        TerrainKind::RoughPyramid,
    ] {
        let terrain = generate_terrain(kind, 0, 3).unwrap();
        let mut s = RobotState::standing(&model, &terrain, 1.0);
        let mut fz = 0.0;
        for _ in 0..200 {
            let r = step_physics_detailed(&model, &s, &cmd, &terrain, PHYSICS_DT).unwrap();
            fz = r.contacts.iter().map(|c| c.force()[1]).sum();
            s = r.state;
        }
        let rel = (fz - weight).abs() / weight;
        assert!(rel < 0.02, "{kind}: {fz} vs {weight}");
        worst = worst.max(rel);
    }
    format!("worst relative error {:.2}%", 100.0 * worst)
}

pub fn random_contact_state(
    rng: &mut ChaCha8Rng,
    model: &RobotModel,
    terrain: &HeightField,
) -> RobotState {
    let mut s = RobotState {
        x: rng.random_range(0.5..5.5),
        pitch: rng.random_range(-0.6..0.6),
        vx: rng.random_range(-2.0..2.0),
        vz: rng.random_range(-2.0..1.0),
        pitch_rate: rng.random_range(-3.0..3.0),
        ..Default::default()
    };
    for j in 0..4 {
        s.joint_pos[j] = rng.random_range(model.joint_lower[j]..model.joint_upper[j]) * 0.6;
    }
    for j in 0..6 {
        s.joint_vel[j] = rng.random_range(-10.0..10.0);
    }
    s.place_on_terrain(model, terrain);
    s.z -= rng.random_range(0.0..0.02);
    s
}

/// Contact forces stay inside the friction cone and never pull.
pub fn friction_cone(states: usize, seed: u64) -> String {
    let model = RobotModel::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let terrains: Vec<HeightField> = TerrainKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            generate_terrain(k, 4 + i, i as u64)
                .unwrap()
                .with_friction(0.4 + 0.1 * i as f64)
                .unwrap()
        })
        .collect();
    let mut checked = 0;
    for n in 0..states {
        let terrain = &terrains[n % terrains.len()];
        let s = random_contact_state(&mut rng, &model, terrain);
        let cmd = ActuatorCommand {
            joint_targets: std::array::from_fn(|_| rng.random_range(-1.5..1.5)),
            wheel_velocity: std::array::from_fn(|_| rng.random_range(-30.0..30.0)),
        };
        let r = step_physics_detailed(&model, &s, &cmd, terrain, PHYSICS_DT).unwrap();
        for c in &r.contacts {
            assert!(c.normal_force >= 0.0);
            assert!(c.tangential_force.abs() <= terrain.friction() * c.normal_force + 1e-9);
            checked += 1;
        }
    }
    assert!(checked > states / 2, "only {checked} contacts exercised");
    format!("{states} states, {checked} contacts")
}

// ---------------------------------------------------------------- gradients

const H: f64 = 1e-4;
const REL: f64 = 1e-4;
const ABS: f64 = 1e-6;

fn grad_close(analytic: f64, numeric: f64) -> bool {
    (analytic - numeric).abs() <= ABS + REL * analytic.abs().max(numeric.abs())
}

/// Loss `Σ c ⊙ net(x)` over a batch.
fn probe_loss(net: &DenseNet<f64>, x: &[f64], batch: usize, c: &[f64]) -> f64 {
    let mut cache = ForwardCache::default();
    let y = net.forward_batch(x, batch, &mut cache).unwrap();
    y.iter().zip(c).map(|(a, b)| a * b).sum()
}

/// Central differences against backprop for every parameter and input. Returns the entries checked.
pub fn check_net_gradients(sizes: &[usize], batch: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = DenseNet::<f64>::new(sizes, 1.0, &mut rng);
    let x: Vec<f64> = (0..batch * sizes[0])
        .map(|_| rng.random_range(-2.0..2.0))
        .collect();
    let c: Vec<f64> = (0..batch * sizes[sizes.len() - 1])
        .map(|_| rng.random_range(-1.0..1.0))
        .collect();

    let mut cache = ForwardCache::default();
    net.forward_batch(&x, batch, &mut cache).unwrap();
    let mut grads = vec![0.0; net.params().len()];
    let mut gx = vec![0.0; x.len()];
    net.backward_batch(&mut cache, &c, &mut grads, Some(&mut gx))
        .unwrap();

    for i in 0..net.params().len() {
        let mut plus = net.clone();
        plus.params_mut()[i] += H;
        let mut minus = net.clone();
        minus.params_mut()[i] -= H;
        let fd = (probe_loss(&plus, &x, batch, &c) - probe_loss(&minus, &x, batch, &c)) / (2.0 * H);
        assert!(
            grad_close(grads[i], fd),
            "sizes {sizes:?} param {i}: {} vs {fd}",
            grads[i]
        );
    }
    for i in 0..x.len() {
        let mut xp = x.clone();
        xp[i] += H;
        let mut xm = x.clone();
        xm[i] -= H;
        let fd = (probe_loss(&net, &xp, batch, &c) - probe_loss(&net, &xm, batch, &c)) / (2.0 * H);
        assert!(
            grad_close(gx[i], fd),
            "sizes {sizes:?} input {i}: {} vs {fd}",
            gx[i]
        );
    }
    grads.len() + gx.len()
}

/// A fixed network plus randomly shaped ones.
pub fn gradient_suite(shapes: usize, seed: u64) -> String {
    let mut entries = check_net_gradients(&[5, 8, 6, 3], 4, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..shapes {
        let depth = rng.random_range(1..=4);
        let sizes: Vec<usize> = (0..=depth).map(|_| rng.random_range(1..=9)).collect();
        let batch = rng.random_range(1..=5);
        entries += check_net_gradients(&sizes, batch, 1000 + case as u64);
    }
    format!("{} networks, {entries} gradient entries", shapes + 1)
}

// ---------------------------------------------------------------- delay and noise

pub fn make_env(cfg: TaskConfig, seed: u64) -> Env {
    Env::new(Arc::new(RobotModel::default()), Arc::new(cfg), seed)
}

pub fn silent() -> NoiseModel {
    NoiseModel {
        enabled: false,
        ..Default::default()
    }
}

/// Runs `envs` in lockstep on the same action stream, calling `check` after every tick.
pub fn lockstep(envs: &mut [Env], ticks: usize, mut check: impl FnMut(usize, &mut [Env])) {
    let terrain = generate_terrain(TerrainKind::Step, 2, 5).unwrap();
    for e in envs.iter_mut() {
        e.reset(&terrain, (2, 0));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for tick in 0..ticks {
        let a: [f64; ACTION_DIM] = std::array::from_fn(|_| rng.random_range(-0.5..0.5));
        let mut done = false;
        for e in envs.iter_mut() {
            done |= e.step(&a).is_done();
        }
        check(tick, envs);
        if done {
            for e in envs.iter_mut() {
                e.reset(&terrain, (2, 0));
            }
        }
    }
}

/// With delay forced on, state channels equal the undelayed observation of the previous tick.
pub fn forced_delay(ticks: usize) -> String {
    let delayed = TaskConfig {
        noise: silent(),
        delay_probability: 1.0,
        ..Default::default()
    };
    let prompt = TaskConfig {
        delay_probability: 0.0,
        ..delayed.clone()
    };
    let mut envs = vec![make_env(delayed, 3), make_env(prompt, 3)];
    let mut previous: Option<[f64; OBS_DIM]> = None;
    let mut compared = 0;
    lockstep(&mut envs, ticks, |_, envs| {
        let late = envs[0].observe();
        let now = envs[1].observe();
        if envs[0].episode().t > 0.03 {
            let prev = previous.expect("previous tick recorded");
            for i in (0..OBS_DIM).filter(|&i| is_state_channel(i)) {
                assert_eq!(late[i], prev[i], "channel {i}");
            }
            compared += 1;
        }
        previous = Some(now);
    });
    assert!(compared > ticks * 9 / 10);
    format!("{compared} ticks compared")
}

/// Observation noise stays inside each channel's half-width and uses most of it.
pub fn noise_bounds(ticks: usize) -> String {
    let cfg = TaskConfig {
        delay_probability: 0.0,
        ..Default::default()
    };
    let widths = cfg.noise.half_widths();
    let mut envs = vec![make_env(cfg, 4)];
    let mut max_seen = [0.0f64; OBS_DIM];
    lockstep(&mut envs, ticks, |_, envs| {
        let clean = envs[0].observe_clean();
        let noisy = envs[0].observe();
        for i in 0..OBS_DIM {
            let d = (noisy[i] - clean[i]).abs();
            assert!(d <= widths[i] + 1e-12, "channel {i}: {d} > {}", widths[i]);
            max_seen[i] = max_seen[i].max(d);
        }
    });
    let mut noisy_channels = 0;
    for i in 0..OBS_DIM {
        if widths[i] > 0.0 {
            assert!(max_seen[i] > 0.9 * widths[i], "channel {i}");
            noisy_channels += 1;
        }
    }
    format!("{noisy_channels} noisy channels over {ticks} ticks")
}
