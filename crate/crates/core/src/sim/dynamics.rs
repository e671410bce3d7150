//! Reduced-coordinate dynamics of the planar biped.
//!
//! Generalized coordinates are `[x, z, pitch, hip0, knee0, hip1, knee1, wheel0, wheel1]`
//! with joint angles relative to their parent link. Body positions are built from
//! absolute link angles, so every Jacobian column and every velocity-product
//! (centripetal) term has a closed form.

use nalgebra::{RowSVector, SMatrix, SVector, Vector2};

use super::{RobotModel, RobotState};

pub const NDOF: usize = 9;
pub const IX: usize = 0;
pub const IZ: usize = 1;
pub const IPITCH: usize = 2;
pub const IJOINT: usize = 3;
pub const IWHEEL: usize = 7;

pub type GenVec = SVector<f64, NDOF>;
pub type GenMat = SMatrix<f64, NDOF, NDOF>;
pub type LinJac = SMatrix<f64, 2, NDOF>;
pub type AngJac = RowSVector<f64, NDOF>;
pub type V2 = Vector2<f64>;

pub fn positions(s: &RobotState) -> GenVec {
    GenVec::from_column_slice(&[
        s.x,
        s.z,
        s.pitch,
        s.joint_pos[0],
        s.joint_pos[1],
        s.joint_pos[2],
        s.joint_pos[3],
        s.wheel_angle[0],
        s.wheel_angle[1],
    ])
}

pub fn velocities(s: &RobotState) -> GenVec {
    GenVec::from_column_slice(&[
        s.vx,
        s.vz,
        s.pitch_rate,
        s.joint_vel[0],
        s.joint_vel[1],
        s.joint_vel[2],
        s.joint_vel[3],
        s.joint_vel[4],
        s.joint_vel[5],
    ])
}

pub fn to_state(q: &GenVec, v: &GenVec) -> RobotState {
    RobotState {
        x: q[IX],
        z: q[IZ],
        pitch: q[IPITCH],
        vx: v[IX],
        vz: v[IZ],
        pitch_rate: v[IPITCH],
        joint_pos: [q[3], q[4], q[5], q[6]],
        joint_vel: [v[3], v[4], v[5], v[6], v[7], v[8]],
        wheel_angle: [q[7], q[8]],
    }
}

/// Unit vector of a link hanging at absolute angle `phi` (0 = straight down).
#[inline]
fn link_dir(phi: f64) -> V2 {
    V2::new(phi.sin(), -phi.cos())
}

/// Derivative of [`link_dir`] with respect to `phi`.
#[inline]
fn link_dir_deriv(phi: f64) -> V2 {
    V2::new(phi.cos(), phi.sin())
}

#[inline]
pub fn perp(v: V2) -> V2 {
    V2::new(-v.y, v.x)
}

/// A point rigidly attached somewhere on the kinematic tree.
#[derive(Clone, Copy)]
struct Point {
    pos: V2,
    jac: LinJac,
    /// `J̇ q̇`, the acceleration of the point when `q̈ = 0`.
    bias: V2,
}

impl Point {
    /// Moves `length` along a link at absolute angle `phi`, whose angle depends
    /// on the coordinates flagged in `ang`.
    fn along(&self, length: f64, phi: f64, phi_rate: f64, ang: &AngJac) -> Point {
        let d = link_dir(phi);
        let dd = link_dir_deriv(phi) * length;
        let mut jac = self.jac;
        for (i, &a) in ang.iter().enumerate() {
            if a != 0.0 {
                jac[(0, i)] += dd.x * a;
                jac[(1, i)] += dd.y * a;
            }
        }
        Point {
            pos: self.pos + d * length,
            jac,
            bias: self.bias - d * (length * phi_rate * phi_rate),
        }
    }
}

#[derive(Clone)]
pub struct Kinematics {
    pub hip: [V2; 2],
    pub knee: [V2; 2],
    pub wheel_center: [V2; 2],
    pub wheel_jac: [LinJac; 2],
    pub wheel_ang_jac: [AngJac; 2],
    pub mass_matrix: GenMat,
    /// Velocity-product generalized forces, gravity excluded.
    pub bias: GenVec,
}

fn unit(i: usize) -> AngJac {
    let mut r = AngJac::zeros();
    r[i] = 1.0;
    r
}

fn add_body(m: &mut GenMat, h: &mut GenVec, mass: f64, inertia: f64, p: &Point, ang: &AngJac) {
    let jt = p.jac.transpose();
    *m += (jt * p.jac) * mass + (ang.transpose() * ang) * inertia;
    *h += jt * p.bias * mass;
}

pub fn kinematics(model: &RobotModel, q: &GenVec, v: &GenVec) -> Kinematics {
    let pitch = q[IPITCH];
    let pitch_rate = v[IPITCH];
    let (s, c) = pitch.sin_cos();
    let hip_rel = V2::new(
        c * model.hip_offset[0] - s * model.hip_offset[1],
        s * model.hip_offset[0] + c * model.hip_offset[1],
    );

    let mut base_jac = LinJac::zeros();
    base_jac[(0, IX)] = 1.0;
    base_jac[(1, IZ)] = 1.0;
    let base = Point {
        pos: V2::new(q[IX], q[IZ]),
        jac: base_jac,
        bias: V2::zeros(),
    };

    let mut mm = GenMat::zeros();
    let mut bias = GenVec::zeros();
    add_body(
        &mut mm,
        &mut bias,
        model.base_mass,
        model.base_inertia,
        &base,
        &unit(IPITCH),
    );

    let mut hip_jac = base.jac;
    let dp = perp(hip_rel);
    hip_jac[(0, IPITCH)] += dp.x;
    hip_jac[(1, IPITCH)] += dp.y;
    let hip = Point {
        pos: base.pos + hip_rel,
        jac: hip_jac,
        bias: -hip_rel * (pitch_rate * pitch_rate),
    };

    let mut out_hip = [V2::zeros(); 2];
    let mut out_knee = [V2::zeros(); 2];
    let mut out_wheel = [V2::zeros(); 2];
    let mut out_wjac = [LinJac::zeros(); 2];
    let mut out_wang = [AngJac::zeros(); 2];

    let up = &model.upper_leg;
    let lo = &model.lower_leg;
    for leg in 0..2 {
        let ih = IJOINT + 2 * leg;
        let ik = ih + 1;
        let iw = IWHEEL + leg;

        let a1 = pitch + q[ih];
        let a1_rate = pitch_rate + v[ih];
        let ang1 = unit(IPITCH) + unit(ih);
        let upper_com = hip.along(0.5 * up.length, a1, a1_rate, &ang1);
        add_body(&mut mm, &mut bias, up.mass, up.inertia, &upper_com, &ang1);
        let knee = hip.along(up.length, a1, a1_rate, &ang1);

        let a2 = a1 + q[ik];
        let a2_rate = a1_rate + v[ik];
        let ang2 = ang1 + unit(ik);
        let lower_com = knee.along(0.5 * lo.length, a2, a2_rate, &ang2);
        add_body(&mut mm, &mut bias, lo.mass, lo.inertia, &lower_com, &ang2);
        let wheel = knee.along(lo.length, a2, a2_rate, &ang2);

        let angw = ang2 + unit(iw);
        add_body(
            &mut mm,
            &mut bias,
            model.wheel_mass,
            model.wheel_inertia,
            &wheel,
            &angw,
        );

        out_hip[leg] = hip.pos;
        out_knee[leg] = knee.pos;
        out_wheel[leg] = wheel.pos;
        out_wjac[leg] = wheel.jac;
        out_wang[leg] = angw;
    }

    Kinematics {
        hip: out_hip,
        knee: out_knee,
        wheel_center: out_wheel,
        wheel_jac: out_wjac,
        wheel_ang_jac: out_wang,
        mass_matrix: mm,
        bias,
    }
}

/// Center of mass of the whole robot.
pub fn center_of_mass(model: &RobotModel, state: &RobotState) -> V2 {
    let q = positions(state);
    let kin = kinematics(model, &q, &GenVec::zeros());
    let mut sum = V2::new(state.x, state.z) * model.base_mass;
    for leg in 0..2 {
        let hip = kin.hip[leg];
        let knee = kin.knee[leg];
        let wheel = kin.wheel_center[leg];
        sum += (hip + knee) * (0.5 * model.upper_leg.mass);
        sum += (knee + wheel) * (0.5 * model.lower_leg.mass);
        sum += wheel * model.wheel_mass;
    }
    sum / model.total_mass()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_state() -> RobotState {
        RobotState {
            x: 0.3,
            z: 0.6,
            pitch: 0.2,
            vx: 0.4,
            vz: -0.1,
            pitch_rate: 0.7,
            joint_pos: [0.5, -0.9, -0.6, 1.1],
            joint_vel: [0.3, -1.2, 0.8, 0.5, 4.0, -2.0],
            wheel_angle: [0.1, -0.4],
        }
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let model = RobotModel::default();
        let s = sample_state();
        let kin = kinematics(&model, &positions(&s), &velocities(&s));
        let m = kin.mass_matrix;
        assert!((m - m.transpose()).abs().max() < 1e-12);
        assert!(m.cholesky().is_some());
        // total mass appears on the translational block
        assert!((m[(0, 0)] - model.total_mass()).abs() < 1e-12);
        assert!((m[(1, 1)] - model.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn wheel_jacobian_matches_finite_differences() {
        let model = RobotModel::default();
        let s = sample_state();
        let q = positions(&s);
        let kin = kinematics(&model, &q, &GenVec::zeros());
        let h = 1e-6;
        for i in 0..NDOF {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let kp = kinematics(&model, &qp, &GenVec::zeros());
            let km = kinematics(&model, &qm, &GenVec::zeros());
            for leg in 0..2 {
                let fd = (kp.wheel_center[leg] - km.wheel_center[leg]) / (2.0 * h);
                let an = kin.wheel_jac[leg].column(i);
                assert!(
                    (fd.x - an[0]).abs() < 1e-7 && (fd.y - an[1]).abs() < 1e-7,
                    "coord {i} leg {leg}"
                );
            }
        }
    }

    #[test]
    fn bias_matches_lagrangian_identity() {
        // Velocity-product forces equal Ṁ q̇ − ½ ∂(q̇ᵀ M q̇)/∂q.
        let model = RobotModel::default();
        let s = sample_state();
        let q = positions(&s);
        let v = velocities(&s);
        let kin = kinematics(&model, &q, &v);
        let mass = |q: &GenVec| kinematics(&model, q, &GenVec::zeros()).mass_matrix;
        let h = 1e-6;
        let m_dot = (mass(&(q + v * h)) - mass(&(q - v * h))) / (2.0 * h);
        let mut expected = m_dot * v;
        for i in 0..NDOF {
            let mut qp = q;
            let mut qm = q;
            qp[i] += h;
            qm[i] -= h;
            let dp = (v.transpose() * mass(&qp) * v)[(0, 0)];
            let dm = (v.transpose() * mass(&qm) * v)[(0, 0)];
            expected[i] -= 0.5 * (dp - dm) / (2.0 * h);
        }
        assert!(
            (kin.bias - expected).abs().max() < 1e-6,
            "{:?} vs {:?}",
            kin.bias,
            expected
        );
    }

    #[test]
    fn kinetic_energy_consistent_with_body_velocities() {
        let model = RobotModel::default();
        let s = sample_state();
        let q = positions(&s);
        let v = velocities(&s);
        let kin = kinematics(&model, &q, &v);
        let ke_matrix = 0.5 * (v.transpose() * kin.mass_matrix * v)[(0, 0)];

        // brute force: finite-difference every body's position and angle
        let h = 1e-7;
        let kp = kinematics(&model, &(q + v * h), &v);
        let km = kinematics(&model, &(q - v * h), &v);
        let vel = |a: V2, b: V2| (a - b) / (2.0 * h);
        let mut ke = 0.5 * model.base_mass * (s.vx * s.vx + s.vz * s.vz)
            + 0.5 * model.base_inertia * s.pitch_rate.powi(2);
        for leg in 0..2 {
            let ih = IJOINT + 2 * leg;
            let w1 = v[IPITCH] + v[ih];
            let w2 = w1 + v[ih + 1];
            let ww = w2 + v[IWHEEL + leg];
            let vu = vel(
                (kp.hip[leg] + kp.knee[leg]) * 0.5,
                (km.hip[leg] + km.knee[leg]) * 0.5,
            );
            let vl = vel(
                (kp.knee[leg] + kp.wheel_center[leg]) * 0.5,
                (km.knee[leg] + km.wheel_center[leg]) * 0.5,
            );
            let vw = vel(kp.wheel_center[leg], km.wheel_center[leg]);
            ke += 0.5 * model.upper_leg.mass * vu.norm_squared()
                + 0.5 * model.upper_leg.inertia * w1 * w1;
            ke += 0.5 * model.lower_leg.mass * vl.norm_squared()
                + 0.5 * model.lower_leg.inertia * w2 * w2;
            ke += 0.5 * model.wheel_mass * vw.norm_squared() + 0.5 * model.wheel_inertia * ww * ww;
        }
        assert!(
            (ke - ke_matrix).abs() < 1e-6 * ke.max(1.0),
            "{ke} vs {ke_matrix}"
        );
    }
}
