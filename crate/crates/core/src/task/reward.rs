//! Reward terms. Each function is the raw term; coefficients are applied by the caller.

use serde::{Deserialize, Serialize};

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Rewards being at the goal during the last `window` seconds of a `horizon`-long episode.
pub fn reward_position(pos: [f64; 2], goal: [f64; 2], t: f64, horizon: f64, window: f64) -> f64 {
    if t <= horizon - window {
        return 0.0;
    }
    let d = dist(pos, goal);
    1.0 / window / (1.0 + d * d)
}

/// Cosine between the base velocity and the direction to the goal.
pub fn reward_pos_bias(vel: [f64; 2], pos: [f64; 2], goal: [f64; 2]) -> f64 {
    let to_goal = [goal[0] - pos[0], goal[1] - pos[1]];
    let nv = vel[0].hypot(vel[1]);
    let ng = to_goal[0].hypot(to_goal[1]);
    if nv < 1e-6 || ng < 1e-6 {
        return 0.0;
    }
    ((vel[0] * to_goal[0] + vel[1] * to_goal[1]) / (nv * ng)).clamp(-1.0, 1.0)
}

/// −1 when standing still far from the goal.
pub fn reward_stall(vel: [f64; 2], pos: [f64; 2], goal: [f64; 2]) -> f64 {
    if vel[0].hypot(vel[1]) < 0.1 && dist(pos, goal) > 0.5 {
        -1.0
    } else {
        0.0
    }
}

/// Heading penalty while far from the goal.
pub fn reward_face_goal(heading: f64, goal_heading: f64, pos: [f64; 2], goal: [f64; 2]) -> f64 {
    if dist(pos, goal) > 0.5 {
        -(heading - goal_heading).abs()
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardCoefficients {
    pub position: f64,
    pub pos_bias: f64,
    pub stall: f64,
    pub face_goal: f64,
    pub joint_acc: f64,
    pub action_rate: f64,
    pub torque: f64,
    pub orientation: f64,
    pub air_time: f64,
    /// Added once when an episode ends in a fall.
    pub termination: f64,
}

impl Default for RewardCoefficients {
    fn default() -> Self {
        Self {
            position: 10.0,
            pos_bias: 1.0,
            stall: 1.0,
            face_goal: 0.1,
            joint_acc: 2.5e-7,
            action_rate: 0.01,
            torque: 1e-5,
            orientation: 1.0,
            air_time: 0.5,
            termination: 5.0,
        }
    }
}

/// Raw shaping terms, each before its coefficient.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Shaping {
    pub joint_acc: f64,
    pub action_rate: f64,
    pub torque: f64,
    pub orientation: f64,
    pub air_time: f64,
}

impl Shaping {
    pub fn weighted(&self, c: &RewardCoefficients) -> f64 {
        c.joint_acc * self.joint_acc
            + c.action_rate * self.action_rate
            + c.torque * self.torque
            + c.orientation * self.orientation
            + c.air_time * self.air_time
    }
}

/// Wheel air time is rewarded at touchdown relative to this duration (s).
pub const AIR_TIME_TARGET: f64 = 0.2;

/// Penalties for joint acceleration, action rate, torque and base tilt, plus the
/// wheel air-time term. `touchdown_air_time` holds, per wheel, the airborne
/// duration that ended this tick (zero when the wheel did not just land).
pub fn shaping_rewards(
    joint_vel: &[f64; 6],
    prev_joint_vel: &[f64; 6],
    dt: f64,
    action: &[f64; 6],
    prev_action: &[f64; 6],
    torques: &[f64; 6],
    pitch: f64,
    touchdown_air_time: &[f64; 2],
) -> Shaping {
    let sq = |it: &mut dyn Iterator<Item = f64>| -> f64 { it.map(|v| v * v).sum() };
    Shaping {
        joint_acc: -sq(&mut joint_vel
            .iter()
            .zip(prev_joint_vel)
            .map(|(a, b)| (a - b) / dt)),
        action_rate: -sq(&mut action.iter().zip(prev_action).map(|(a, b)| a - b)),
        torque: -sq(&mut torques.iter().copied()),
        orientation: -pitch * pitch,
        air_time: touchdown_air_time
            .iter()
            .filter(|&&t| t > 0.0)
            .map(|t| t - AIR_TIME_TARGET)
            .sum(),
    }
}
