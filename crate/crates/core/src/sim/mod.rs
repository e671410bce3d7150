//! Planar wheeled-biped simulation.

mod contact;
pub mod dynamics;
mod model;

use serde::{Deserialize, Serialize};

use crate::terrain::HeightField;
use dynamics::{kinematics, positions, to_state, velocities, GenVec, IJOINT, IWHEEL, IZ, V2};

pub use contact::{distance_to_profile, ContactPoint};
pub use dynamics::center_of_mass;
pub use model::{ContactParams, LinkParams, RobotModel};

/// Default physics substep (s).
pub const PHYSICS_DT: f64 = 1.0 / 200.0;
/// Physics substeps per control tick.
pub const SUBSTEPS: usize = 4;
/// Largest push speed `apply_push` accepts (m/s).
pub const MAX_PUSH_SPEED: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid robot model: {0}")]
    InvalidModel(String),
    #[error("timestep must be positive and finite, got {0}")]
    InvalidTimestep(f64),
    #[error("actuator command contains a non-finite value")]
    NonFiniteCommand,
    #[error("simulation diverged")]
    NumericalDivergence,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
    pub vx: f64,
    pub vz: f64,
    pub pitch_rate: f64,
    /// `[front hip, front knee, rear hip, rear knee]`
    pub joint_pos: [f64; 4],
    /// Leg joints followed by `[front wheel, rear wheel]`.
    pub joint_vel: [f64; 6],
    pub wheel_angle: [f64; 2],
}

impl RobotState {
    pub fn is_finite(&self) -> bool {
        [
            self.x,
            self.z,
            self.pitch,
            self.vx,
            self.vz,
            self.pitch_rate,
        ]
        .iter()
        .chain(&self.joint_pos)
        .chain(&self.joint_vel)
        .chain(&self.wheel_angle)
        .all(|v| v.is_finite())
    }

    /// At rest in the default posture with the lowest wheel touching the terrain below `x`.
    pub fn standing(model: &RobotModel, terrain: &HeightField, x: f64) -> Self {
        let mut s = RobotState {
            x,
            joint_pos: model.default_posture,
            ..Default::default()
        };
        s.place_on_terrain(model, terrain);
        s
    }

    /// Sets the base height so the wheels just touch the ground, keeping everything else.
    pub fn place_on_terrain(&mut self, model: &RobotModel, terrain: &HeightField) {
        self.z = 0.0;
        let kin = kinematics(model, &positions(self), &GenVec::zeros());
        let r = model.wheel_radius;
        let lift = kin
            .wheel_center
            .iter()
            .map(|c| {
                // highest ground under the wheel footprint
                let ground = (-4..=4)
                    .map(|k| {
                        let dx = r * k as f64 / 4.0;
                        terrain.height_at_clamped(c.x + dx) + (r * r - dx * dx).sqrt() - r
                    })
                    .fold(f64::NEG_INFINITY, f64::max);
                ground + r - c.y
            })
            .fold(f64::NEG_INFINITY, f64::max);
        self.z = lift;
    }

    pub fn base_speed(&self) -> f64 {
        self.vx.hypot(self.vz)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ActuatorCommand {
    /// Leg joint position targets (rad).
    pub joint_targets: [f64; 4],
    /// Wheel angular-velocity targets (rad/s).
    pub wheel_velocity: [f64; 2],
}

impl ActuatorCommand {
    /// Holds the given joint positions with the wheels braked.
    pub fn hold(joints: [f64; 4]) -> Self {
        Self {
            joint_targets: joints,
            wheel_velocity: [0.0; 2],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.joint_targets
            .iter()
            .chain(&self.wheel_velocity)
            .all(|v| v.is_finite())
    }
}

/// Outcome of one physics substep.
#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    pub state: RobotState,
    pub contacts: Vec<ContactPoint>,
    /// Actuator torques applied during the step, legs then wheels.
    pub torques: [f64; 6],
}

/// Joint torques from the PD and wheel-velocity laws, saturated at the model limits.
pub fn pd_torque(model: &RobotModel, state: &RobotState, cmd: &ActuatorCommand) -> [f64; 6] {
    let mut tau = [0.0; 6];
    for j in 0..4 {
        let target = model.clamp_joint(j, cmd.joint_targets[j]);
        let raw = model.kp * (target - state.joint_pos[j]) - model.kd * state.joint_vel[j];
        tau[j] = raw.clamp(-model.leg_torque_limit, model.leg_torque_limit);
    }
    for w in 0..2 {
        let raw = model.kv * (cmd.wheel_velocity[w] - state.joint_vel[4 + w]);
        tau[4 + w] = raw.clamp(-model.wheel_torque_limit, model.wheel_torque_limit);
    }
    tau
}

/// Contact forces the ground would apply over a substep of `dt` from `state`.
pub fn resolve_contacts(
    model: &RobotModel,
    state: &RobotState,
    cmd: &ActuatorCommand,
    terrain: &HeightField,
    dt: f64,
) -> Result<Vec<ContactPoint>, SimError> {
    step_physics_detailed(model, state, cmd, terrain, dt).map(|r| r.contacts)
}

pub fn step_physics(
    model: &RobotModel,
    state: &RobotState,
    cmd: &ActuatorCommand,
    terrain: &HeightField,
    dt: f64,
) -> Result<RobotState, SimError> {
    step_physics_detailed(model, state, cmd, terrain, dt).map(|r| r.state)
}

/// One semi-implicit Euler substep.
///
/// Actuator damping is treated implicitly for unsaturated actuators (the wheel
/// gain is far too stiff for the wheel inertia at 200 Hz otherwise). Gravity is
/// integrated exactly, which keeps free flight on the closed-form parabola.
pub fn step_physics_detailed(
    model: &RobotModel,
    state: &RobotState,
    cmd: &ActuatorCommand,
    terrain: &HeightField,
    dt: f64,
) -> Result<StepReport, SimError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SimError::InvalidTimestep(dt));
    }
    if !cmd.is_finite() {
        return Err(SimError::NonFiniteCommand);
    }
    if !state.is_finite() {
        return Err(SimError::NumericalDivergence);
    }
    let q = positions(state);
    let v = velocities(state);
    let kin = kinematics(model, &q, &v);

    let torques = pd_torque(model, state, cmd);
    let mut tau = GenVec::zeros();
    let mut a_hat = kin.mass_matrix;
    for j in 0..4 {
        let i = IJOINT + j;
        let target = model.clamp_joint(j, cmd.joint_targets[j]);
        let raw = model.kp * (target - state.joint_pos[j]) - model.kd * state.joint_vel[j];
        if raw.abs() <= model.leg_torque_limit {
            tau[i] = raw;
            a_hat[(i, i)] += dt * model.kd;
        } else {
            tau[i] = torques[j];
        }
    }
    for w in 0..2 {
        let i = IWHEEL + w;
        let raw = model.kv * (cmd.wheel_velocity[w] - state.joint_vel[4 + w]);
        if raw.abs() <= model.wheel_torque_limit {
            tau[i] = raw;
            a_hat[(i, i)] += dt * model.kv;
        } else {
            tau[i] = torques[4 + w];
        }
    }
    let chol = a_hat.cholesky().ok_or(SimError::NumericalDivergence)?;
    let g = model.gravity;
    let mut v_free = v + chol.solve(&(tau - kin.bias)) * dt;
    v_free[IZ] -= g * dt;

    let input = contact::ContactInput {
        wheel_center: &kin.wheel_center,
        wheel_jac: &kin.wheel_jac,
        wheel_ang_jac: &kin.wheel_ang_jac,
        radius: model.wheel_radius,
        friction: terrain.friction(),
        params: &model.contact,
        profile: terrain.profile(),
    };
    let (contacts, contact_acc) = contact::solve(&input, &chol, &v_free, dt);
    let v_new = v_free + contact_acc * dt;
    let mut q_new = q + v_new * dt;
    q_new[IZ] += 0.5 * g * dt * dt;

    let mut next = to_state(&q_new, &v_new);
    for j in 0..4 {
        let (lo, hi) = (model.joint_lower[j], model.joint_upper[j]);
        let p = next.joint_pos[j];
        if p < lo || p > hi {
            next.joint_pos[j] = p.clamp(lo, hi);
            let vel = &mut next.joint_vel[j];
            if (p < lo && *vel < 0.0) || (p > hi && *vel > 0.0) {
                *vel = 0.0;
            }
        }
    }
    for a in &mut next.wheel_angle {
        *a = wrap_angle(*a);
    }
    if !next.is_finite() {
        return Err(SimError::NumericalDivergence);
    }
    Ok(StepReport {
        state: next,
        contacts,
        torques,
    })
}

fn wrap_angle(a: f64) -> f64 {
    use std::f64::consts::PI;
    let w = (a + PI).rem_euclid(2.0 * PI) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Overwrites the base linear velocity with `speed` along `direction`.
/// `speed` is clamped to `[0, MAX_PUSH_SPEED]` and `direction` normalized.
pub fn apply_push(state: &RobotState, speed: f64, direction: [f64; 2]) -> RobotState {
    let speed = if speed.is_finite() {
        speed.clamp(0.0, MAX_PUSH_SPEED)
    } else {
        0.0
    };
    if speed == 0.0 {
        return *state;
    }
    let d = V2::new(direction[0], direction[1]);
    let n = d.norm();
    if !(n.is_finite() && n > 0.0) {
        return *state;
    }
    let d = d / n;
    RobotState {
        vx: speed * d.x,
        vz: speed * d.y,
        ..*state
    }
}

/// Positions used for rendering and fall checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BodyFrame {
    pub hip: [f64; 2],
    pub knees: [[f64; 2]; 2],
    pub wheels: [[f64; 2]; 2],
}

pub fn body_frame(model: &RobotModel, state: &RobotState) -> BodyFrame {
    let kin = kinematics(model, &positions(state), &GenVec::zeros());
    let p = |v: V2| [v.x, v.y];
    BodyFrame {
        hip: p(kin.hip[0]),
        knees: [p(kin.knee[0]), p(kin.knee[1])],
        wheels: [p(kin.wheel_center[0]), p(kin.wheel_center[1])],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn run(
        model: &RobotModel,
        mut s: RobotState,
        cmd: &ActuatorCommand,
        terrain: &HeightField,
        steps: usize,
    ) -> StepReport {
        let mut last = None;
        for _ in 0..steps {
            let r = step_physics_detailed(model, &s, cmd, terrain, PHYSICS_DT).unwrap();
            s = r.state;
            last = Some(r);
        }
        last.unwrap()
    }

    #[test]
    fn pd_law_matches_formula() {
        let model = RobotModel {
            kp: 20.0,
            kd: 0.5,
            ..Default::default()
        };
        let state = RobotState {
            joint_pos: [0.3, 0.0, 0.0, 0.0],
            ..Default::default()
        };
        let cmd = ActuatorCommand::hold([0.4, 0.0, 0.0, 0.0]);
        assert_abs_diff_eq!(pd_torque(&model, &state, &cmd)[0], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn pd_law_zero_error_gives_zero_torque() {
        let model = RobotModel::default();
        let state = RobotState {
            joint_pos: [0.1, -0.2, 0.3, -0.4],
            joint_vel: [0.0, 0.0, 0.0, 0.0, 3.0, -1.0],
            ..Default::default()
        };
        let cmd = ActuatorCommand {
            joint_targets: state.joint_pos,
            wheel_velocity: [3.0, -1.0],
        };
        assert_eq!(pd_torque(&model, &state, &cmd), [0.0; 6]);
    }

    #[test]
    fn pd_law_saturates() {
        let model = RobotModel {
            kp: 20.0,
            leg_torque_limit: 15.0,
            joint_upper: [20.0; 4],
            ..Default::default()
        };
        let cmd = ActuatorCommand::hold([10.0, -10.0, 0.0, 0.0]);
        let tau = pd_torque(&model, &RobotState::default(), &cmd);
        assert_eq!(tau[0], 15.0);
        assert_eq!(tau[1], -15.0);
    }

    #[test]
    fn leg_targets_are_clamped_to_limits() {
        let model = RobotModel::default();
        let far = ActuatorCommand::hold([9.0, 0.0, 0.0, 0.0]);
        let at_limit = ActuatorCommand::hold([model.joint_upper[0], 0.0, 0.0, 0.0]);
        let s = RobotState::default();
        assert_eq!(
            pd_torque(&model, &s, &far),
            pd_torque(&model, &s, &at_limit)
        );
    }

    #[test]
    fn free_fall_drops_vertical_velocity_by_g_dt() {
        let model = RobotModel::default();
        let terrain = HeightField::flat();
        let s = RobotState {
            z: 2.0,
            joint_pos: model.default_posture,
            ..Default::default()
        };
        let cmd = ActuatorCommand::hold(model.default_posture);
        let next = step_physics(&model, &s, &cmd, &terrain, PHYSICS_DT).unwrap();
        assert_abs_diff_eq!(next.vz, -model.gravity * PHYSICS_DT, epsilon = 1e-12);
    }

    #[test]
    fn zero_timestep_rejected() {
        let model = RobotModel::default();
        let s = RobotState::standing(&model, &HeightField::flat(), 3.0);
        let cmd = ActuatorCommand::hold(model.default_posture);
        for dt in [0.0, -0.01, f64::NAN] {
            assert!(matches!(
                step_physics(&model, &s, &cmd, &HeightField::flat(), dt),
                Err(SimError::InvalidTimestep(_))
            ));
        }
        let bad = ActuatorCommand {
            wheel_velocity: [f64::NAN, 0.0],
            ..cmd
        };
        assert_eq!(
            step_physics(&model, &s, &bad, &HeightField::flat(), PHYSICS_DT),
            Err(SimError::NonFiniteCommand)
        );
    }

    #[test]
    fn no_contact_high_above_ground() {
        let model = RobotModel::default();
        let terrain = HeightField::flat();
        let mut s = RobotState::standing(&model, &terrain, 3.0);
        s.z += 1.0;
        let cmd = ActuatorCommand::hold(model.default_posture);
        assert!(resolve_contacts(&model, &s, &cmd, &terrain, PHYSICS_DT)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn standing_robot_carries_its_weight() {
        let model = RobotModel::default();
        let terrain = HeightField::flat();
        let s = RobotState::standing(&model, &terrain, 3.0);
        let cmd = ActuatorCommand::hold(model.default_posture);
        let r = run(&model, s, &cmd, &terrain, 200);
        let total: f64 = r.contacts.iter().map(|c| c.force()[1]).sum();
        let weight = model.total_mass() * model.gravity;
        assert!(
            (total - weight).abs() < 0.02 * weight,
            "{total} vs {weight}"
        );
        let max_pen = r.contacts.iter().map(|c| c.penetration).fold(0.0, f64::max);
        assert!(max_pen < 0.01, "penetration {max_pen}");
    }

    #[test]
    fn standing_robot_stays_put() {
        let model = RobotModel::default();
        let terrain = HeightField::flat();
        let start = RobotState::standing(&model, &terrain, 3.0);
        let cmd = ActuatorCommand::hold(model.default_posture);
        let mut s = start;
        for _ in 0..400 {
            s = step_physics(&model, &s, &cmd, &terrain, PHYSICS_DT).unwrap();
            let d = (s.x - start.x).hypot(s.z - start.z);
            assert!(d < 0.05, "drifted {d}");
        }
    }

    #[test]
    fn overdriven_wheel_slides_on_the_cone_boundary() {
        let model = RobotModel {
            wheel_torque_limit: 40.0,
            kv: 10.0,
            ..Default::default()
        };
        let terrain = HeightField::flat().with_friction(0.4).unwrap();
        let mut s = RobotState::standing(&model, &terrain, 3.0);
        let hold = ActuatorCommand::hold(model.default_posture);
        s = run(&model, s, &hold, &terrain, 100).state;
        let spin = ActuatorCommand {
            wheel_velocity: [200.0, 200.0],
            ..hold
        };
        let r = run(&model, s, &spin, &terrain, 2);
        let loaded: Vec<_> = r.contacts.iter().filter(|c| c.normal_force > 1.0).collect();
        assert!(!loaded.is_empty());
        for c in loaded {
            assert_abs_diff_eq!(
                c.tangential_force.abs(),
                0.4 * c.normal_force,
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn stepping_is_deterministic() {
        let model = RobotModel::default();
        let terrain = crate::terrain::HeightField::single_step(0.15).unwrap();
        let s = RobotState::standing(&model, &terrain, 1.5);
        let cmd = ActuatorCommand {
            joint_targets: [0.5, -0.7, -0.9, 1.2],
            wheel_velocity: [6.0, 6.0],
        };
        let a = run(&model, s, &cmd, &terrain, 300);
        let b = run(&model, s, &cmd, &terrain, 300);
        assert_eq!(a, b);
    }

    #[test]
    fn joint_limits_hold_after_every_step() {
        let model = RobotModel::default();
        let terrain = HeightField::flat();
        let mut s = RobotState::standing(&model, &terrain, 3.0);
        s.z += 0.5;
        let cmd = ActuatorCommand::hold([5.0, 5.0, -5.0, -5.0]);
        for _ in 0..300 {
            s = step_physics(&model, &s, &cmd, &terrain, PHYSICS_DT).unwrap();
            for j in 0..4 {
                assert!(
                    s.joint_pos[j] >= model.joint_lower[j]
                        && s.joint_pos[j] <= model.joint_upper[j]
                );
            }
        }
    }

    #[test]
    fn push_overwrites_base_velocity_only() {
        let s = RobotState {
            vx: 0.2,
            vz: -0.1,
            pitch_rate: 0.4,
            ..Default::default()
        };
        let p = apply_push(&s, 0.5, [1.0, 0.0]);
        assert_eq!((p.vx, p.vz, p.pitch_rate), (0.5, 0.0, 0.4));
        assert_eq!(apply_push(&s, 0.0, [1.0, 0.0]), s);
        let up = apply_push(&s, 0.3, [0.0, 1.0]);
        assert_eq!((up.vx, up.vz), (0.0, 0.3));
        assert_eq!(apply_push(&s, 3.0, [2.0, 0.0]).vx, 0.5);
    }

    #[test]
    fn wrap_angle_range() {
        use std::f64::consts::PI;
        for a in [-10.0, -PI, 0.0, 3.0, PI, 7.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert_abs_diff_eq!(w.sin(), a.sin(), epsilon = 1e-12);
        }
    }
}
