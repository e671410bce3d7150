use serde::{Deserialize, Serialize};

use super::SimError;

/// Mass properties of one rigid link. The center of mass sits at the link midpoint.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub mass: f64,
    pub inertia: f64,
    pub length: f64,
}

/// Normal contact law between a wheel and the ground.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContactParams {
    /// N/m
    pub stiffness: f64,
    /// N·s/m
    pub damping: f64,
    /// Projected Gauss-Seidel sweeps per substep.
    pub solver_iterations: usize,
}

impl Default for ContactParams {
    fn default() -> Self {
        Self {
            stiffness: 2.0e4,
            damping: 200.0,
            solver_iterations: 30,
        }
    }
}

/// Planar wheeled biped: a base, two legs of {hip, upper link, knee, lower link}
/// and a velocity-controlled wheel at each foot.
///
/// Joint order everywhere is `[front hip, front knee, rear hip, rear knee]`,
/// wheels are `[front, rear]`. All quantities are SI.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    pub base_mass: f64,
    pub base_inertia: f64,
    /// Hip location in the base frame (both legs share the same hip axis).
    pub hip_offset: [f64; 2],
    pub upper_leg: LinkParams,
    pub lower_leg: LinkParams,
    pub wheel_radius: f64,
    pub wheel_mass: f64,
    pub wheel_inertia: f64,
    pub joint_lower: [f64; 4],
    pub joint_upper: [f64; 4],
    pub leg_torque_limit: f64,
    pub wheel_torque_limit: f64,
    /// N·m/rad
    pub kp: f64,
    /// N·m·s/rad
    pub kd: f64,
    /// Wheel velocity gain, N·m·s/rad.
    pub kv: f64,
    /// Joint positions the action offsets are applied to.
    pub default_posture: [f64; 4],
    pub gravity: f64,
    pub contact: ContactParams,
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            base_mass: 8.0,
            base_inertia: 0.1,
            hip_offset: [0.0, -0.05],
            upper_leg: LinkParams {
                mass: 0.6,
                inertia: 0.0032,
                length: 0.25,
            },
            lower_leg: LinkParams {
                mass: 0.5,
                inertia: 0.0027,
                length: 0.25,
            },
            wheel_radius: 0.1,
            wheel_mass: 0.9,
            wheel_inertia: 0.0045,
            joint_lower: [-1.8, -2.4, -1.8, -2.4],
            joint_upper: [1.8, 2.4, 1.8, 2.4],
            leg_torque_limit: 40.0,
            wheel_torque_limit: 10.0,
            kp: 80.0,
            kd: 2.0,
            kv: 2.0,
            default_posture: [0.8, -1.0, -0.8, 1.0],
            gravity: 9.81,
            contact: ContactParams::default(),
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("base_mass", self.base_mass),
            ("base_inertia", self.base_inertia),
            ("upper_leg.mass", self.upper_leg.mass),
            ("upper_leg.inertia", self.upper_leg.inertia),
            ("upper_leg.length", self.upper_leg.length),
            ("lower_leg.mass", self.lower_leg.mass),
            ("lower_leg.inertia", self.lower_leg.inertia),
            ("lower_leg.length", self.lower_leg.length),
            ("wheel_radius", self.wheel_radius),
            ("wheel_mass", self.wheel_mass),
            ("wheel_inertia", self.wheel_inertia),
            ("leg_torque_limit", self.leg_torque_limit),
            ("wheel_torque_limit", self.wheel_torque_limit),
            ("contact.stiffness", self.contact.stiffness),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(SimError::InvalidModel(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        for (name, value) in [
            ("kp", self.kp),
            ("kd", self.kd),
            ("kv", self.kv),
            ("contact.damping", self.contact.damping),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(SimError::InvalidModel(format!(
                    "{name} must be >= 0, got {value}"
                )));
            }
        }
        for j in 0..4 {
            if !(self.joint_lower[j] < self.joint_upper[j]) {
                return Err(SimError::InvalidModel(format!(
                    "joint {j}: lower limit {} not below upper limit {}",
                    self.joint_lower[j], self.joint_upper[j]
                )));
            }
            let d = self.default_posture[j];
            if d < self.joint_lower[j] || d > self.joint_upper[j] {
                return Err(SimError::InvalidModel(format!(
                    "default posture of joint {j} outside limits"
                )));
            }
        }
        Ok(())
    }

    pub fn total_mass(&self) -> f64 {
        self.base_mass + 2.0 * (self.upper_leg.mass + self.lower_leg.mass + self.wheel_mass)
    }

    pub fn clamp_joint(&self, j: usize, q: f64) -> f64 {
        q.clamp(self.joint_lower[j], self.joint_upper[j])
    }

    /// Wheel center relative to the base origin for a zero-pitch base.
    pub fn wheel_offset(&self, leg: usize, joints: &[f64; 4]) -> [f64; 2] {
        let a1 = joints[2 * leg];
        let a2 = a1 + joints[2 * leg + 1];
        let (l1, l2) = (self.upper_leg.length, self.lower_leg.length);
        [
            self.hip_offset[0] + l1 * a1.sin() + l2 * a2.sin(),
            self.hip_offset[1] - l1 * a1.cos() - l2 * a2.cos(),
        ]
    }

    /// Base height above flat ground with both wheels touching, default posture.
    pub fn nominal_height(&self) -> f64 {
        let lowest = (0..2)
            .map(|leg| self.wheel_offset(leg, &self.default_posture)[1])
            .fold(f64::INFINITY, f64::min);
        self.wheel_radius - lowest
    }
}
