//! Observation packing for the actor and the privileged critic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::{ContactPoint, RobotState};
use crate::terrain::{sample_height_grid, HeightField, HEIGHT_GRID_POINTS};

pub const OBS_DIM: usize = 23;
pub const PRIV_DIM: usize = 26;
/// Control ticks the privileged contact forces are averaged over.
pub const FORCE_WINDOW: usize = 5;

pub const PITCH_RATE_SCALE: f64 = 0.25;
pub const JOINT_VEL_SCALE: f64 = 0.05;
pub const FORWARD_VEL_SCALE: f64 = 0.25;
pub const HEIGHT_SCALE: f64 = 5.0;
pub const FORCE_SCALE: f64 = 0.01;

pub const IDX_PITCH_RATE: usize = 0;
pub const IDX_GRAVITY: usize = 1;
pub const IDX_GOAL_DIR: usize = 3;
pub const IDX_HEADING: usize = 4;
pub const IDX_HEIGHT_CMD: usize = 5;
pub const IDX_TERRAIN_BOOL: usize = 6;
pub const IDX_JOINT_POS: usize = 7;
pub const IDX_JOINT_VEL: usize = 11;
pub const IDX_LAST_ACTION: usize = 17;

/// Whether observation entry `i` is computed from the simulated state (as opposed
/// to commands or the previous action).
pub fn is_state_channel(i: usize) -> bool {
    i <= IDX_GOAL_DIR || (IDX_JOINT_POS..IDX_LAST_ACTION).contains(&i)
}

/// Command inputs as the policy sees them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Commands {
    pub goal: [f64; 2],
    pub heading_error: f64,
    pub height_target: f64,
    pub terrain_bool: bool,
}

pub fn goal_direction(dx: f64) -> f64 {
    (dx / dx.abs().max(0.1)).clamp(-1.0, 1.0)
}

/// Noise-free actor observation.
pub fn pack_observation(
    state: &RobotState,
    cmd: &Commands,
    default_posture: &[f64; 4],
    last_action: &[f64; 6],
) -> [f64; OBS_DIM] {
    let mut o = [0.0; OBS_DIM];
    let (s, c) = state.pitch.sin_cos();
    o[IDX_PITCH_RATE] = state.pitch_rate * PITCH_RATE_SCALE;
    o[IDX_GRAVITY] = -s;
    o[IDX_GRAVITY + 1] = -c;
    o[IDX_GOAL_DIR] = goal_direction(cmd.goal[0] - state.x);
    o[IDX_HEADING] = cmd.heading_error;
    o[IDX_HEIGHT_CMD] = cmd.height_target;
    o[IDX_TERRAIN_BOOL] = if cmd.terrain_bool { 1.0 } else { 0.0 };
    for j in 0..4 {
        o[IDX_JOINT_POS + j] = state.joint_pos[j] - default_posture[j];
    }
    for j in 0..6 {
        o[IDX_JOINT_VEL + j] = state.joint_vel[j] * JOINT_VEL_SCALE;
    }
    o[IDX_LAST_ACTION..].copy_from_slice(last_action);
    o
}

/// Uniform observation noise. Percentages apply to a per-channel nominal magnitude
/// and the result is expressed in packed (scaled) units.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    pub enabled: bool,
    pub pitch_rate_pct: f64,
    pub gravity_pct: f64,
    pub joint_pos_pct: f64,
    pub joint_vel_pct: f64,
    /// rad/s
    pub pitch_rate_nominal: f64,
    pub gravity_nominal: f64,
    /// rad
    pub joint_pos_nominal: f64,
    /// rad/s
    pub joint_vel_nominal: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            enabled: true,
            pitch_rate_pct: 0.20,
            gravity_pct: 0.05,
            joint_pos_pct: 0.01,
            joint_vel_pct: 1.50,
            pitch_rate_nominal: 1.0,
            gravity_nominal: 1.0,
            joint_pos_nominal: 1.0,
            joint_vel_nominal: 1.0,
        }
    }
}

impl NoiseModel {
    /// Half-width of the noise on every observation entry.
    pub fn half_widths(&self) -> [f64; OBS_DIM] {
        let mut w = [0.0; OBS_DIM];
        if !self.enabled {
            return w;
        }
        w[IDX_PITCH_RATE] = self.pitch_rate_pct * self.pitch_rate_nominal * PITCH_RATE_SCALE;
        w[IDX_GRAVITY] = self.gravity_pct * self.gravity_nominal;
        w[IDX_GRAVITY + 1] = w[IDX_GRAVITY];
        for j in 0..4 {
            w[IDX_JOINT_POS + j] = self.joint_pos_pct * self.joint_pos_nominal;
        }
        for j in 0..6 {
            w[IDX_JOINT_VEL + j] = self.joint_vel_pct * self.joint_vel_nominal * JOINT_VEL_SCALE;
        }
        w
    }

    pub fn apply<R: Rng + ?Sized>(&self, obs: &mut [f64; OBS_DIM], rng: &mut R) {
        if !self.enabled {
            return;
        }
        for (o, w) in obs.iter_mut().zip(self.half_widths()) {
            if w > 0.0 {
                *o += rng.random_range(-w..=w);
            }
        }
    }
}

/// World-frame `(Fx, Fz)` per wheel, summed over that wheel's contacts.
pub fn wheel_forces(contacts: &[ContactPoint]) -> [f64; 4] {
    let mut f = [0.0; 4];
    for c in contacts {
        let w = c.force();
        f[2 * c.wheel] += w[0];
        f[2 * c.wheel + 1] += w[1];
    }
    f
}

pub fn pack_privileged(
    state: &RobotState,
    goal: [f64; 2],
    terrain: &HeightField,
    mean_forces: &[f64; 4],
) -> [f64; PRIV_DIM] {
    let mut p = [0.0; PRIV_DIM];
    p[0] = state.vx * FORWARD_VEL_SCALE;
    p[1] = state.z - terrain.height_at_clamped(state.x);
    p[2] = goal[0] - state.x;
    p[3] = goal[1] - state.z;
    let grid = sample_height_grid(terrain, state.x, state.z);
    for (i, h) in grid.iter().enumerate() {
        p[4 + i] = h * HEIGHT_SCALE;
    }
    let base = 4 + HEIGHT_GRID_POINTS;
    for i in 0..4 {
        p[base + i] = mean_forces[i] * FORCE_SCALE;
    }
    p[PRIV_DIM - 1] = terrain.friction();
    p
}
