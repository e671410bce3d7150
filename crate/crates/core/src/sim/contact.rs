//! Wheel–ground contact.
//!
//! Each wheel is a circle tested against the terrain polyline. A contact is
//! reported per penetrated feature: a face (segment interior, including vertical
//! risers) or a convex vertex (a step nose). Forces come from an implicit
//! spring-damper along the normal and a slip-cancelling tangential force, both
//! solved by projected Gauss-Seidel and kept inside the Coulomb cone.

use nalgebra::Cholesky;
use nalgebra::Const;
use serde::{Deserialize, Serialize};

use super::dynamics::{perp, AngJac, GenVec, LinJac, NDOF, V2};
use super::ContactParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContactPoint {
    pub wheel: usize,
    /// Contact location on the ground surface (m).
    pub position: [f64; 2],
    /// Unit normal pointing from the ground into the wheel.
    pub normal: [f64; 2],
    /// N, never negative.
    pub normal_force: f64,
    /// N along `tangent()`, bounded by friction × normal force.
    pub tangential_force: f64,
    pub penetration: f64,
}

impl ContactPoint {
    pub fn tangent(&self) -> [f64; 2] {
        [self.normal[1], -self.normal[0]]
    }

    /// Total force the ground exerts on the wheel, world frame.
    pub fn force(&self) -> [f64; 2] {
        let t = self.tangent();
        [
            self.normal[0] * self.normal_force + t[0] * self.tangential_force,
            self.normal[1] * self.normal_force + t[1] * self.tangential_force,
        ]
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ContactGeom {
    pub point: V2,
    pub normal: V2,
    pub penetration: f64,
}

#[inline]
fn cross(a: V2, b: V2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Features of `profile` the circle (`center`, `radius`) overlaps.
pub(crate) fn detect(center: V2, radius: f64, profile: &[[f64; 2]], out: &mut Vec<ContactGeom>) {
    let n = profile.len();
    if n < 2 {
        return;
    }
    let p = |i: usize| V2::new(profile[i][0], profile[i][1]);
    let lo_x = center.x - radius;
    let hi_x = center.x + radius;
    let first = profile.partition_point(|v| v[0] < lo_x).saturating_sub(1);
    let last_seg = n - 2;

    let mut i = first;
    while i <= last_seg && profile[i][0] <= hi_x {
        let a = p(i);
        let b = p(i + 1);
        let d = b - a;
        let len2 = d.norm_squared();
        if len2 > 0.0 {
            let t = (center - a).dot(&d) / len2;
            let in_face = (t > 0.0 || i == 0) && (t < 1.0 || i == last_seg);
            if in_face {
                let outward = perp(d) / len2.sqrt();
                let s = (center - a).dot(&outward);
                if s < radius && s > -radius {
                    out.push(ContactGeom {
                        point: center - outward * s,
                        normal: outward,
                        penetration: radius - s,
                    });
                }
            }
        }
        // convex vertex at the end of this segment
        if i < last_seg {
            let c = p(i + 2);
            let d2 = c - b;
            if cross(d, d2) < 0.0 {
                let r = center - b;
                let dist = r.norm();
                if dist < radius && dist > 1e-12 && r.dot(&d) >= 0.0 && r.dot(&d2) <= 0.0 {
                    out.push(ContactGeom {
                        point: b,
                        normal: r / dist,
                        penetration: radius - dist,
                    });
                }
            }
        }
        i += 1;
    }
}

/// Smallest distance from `point` to the polyline.
pub fn distance_to_profile(point: V2, profile: &[[f64; 2]]) -> f64 {
    profile
        .windows(2)
        .map(|w| {
            let a = V2::new(w[0][0], w[0][1]);
            let b = V2::new(w[1][0], w[1][1]);
            let d = b - a;
            let len2 = d.norm_squared();
            let t = if len2 > 0.0 {
                ((point - a).dot(&d) / len2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            (point - (a + d * t)).norm()
        })
        .fold(f64::INFINITY, f64::min)
}

pub(crate) struct ContactRow {
    jac: AngJac,
    /// `Â⁻¹ Jᵀ`
    minv_jt: GenVec,
}

pub(crate) struct ContactInput<'a> {
    pub wheel_center: &'a [V2; 2],
    pub wheel_jac: &'a [LinJac; 2],
    pub wheel_ang_jac: &'a [AngJac; 2],
    pub radius: f64,
    pub friction: f64,
    pub params: &'a ContactParams,
    pub profile: &'a [[f64; 2]],
}

/// Solves contact forces for one substep and returns them with the generalized
/// acceleration they produce. `predicted` is the contact-free end-of-step velocity.
pub(crate) fn solve(
    input: &ContactInput<'_>,
    chol: &Cholesky<f64, Const<NDOF>>,
    predicted: &GenVec,
    dt: f64,
) -> (Vec<ContactPoint>, GenVec) {
    let mut geoms: Vec<(usize, ContactGeom)> = Vec::new();
    let mut scratch = Vec::new();
    for wheel in 0..2 {
        scratch.clear();
        detect(
            input.wheel_center[wheel],
            input.radius,
            input.profile,
            &mut scratch,
        );
        geoms.extend(scratch.iter().map(|g| (wheel, *g)));
    }
    if geoms.is_empty() {
        return (Vec::new(), GenVec::zeros());
    }

    // rows 2k (normal) and 2k+1 (tangent)
    let mut rows = Vec::with_capacity(2 * geoms.len());
    for (wheel, g) in &geoms {
        let r = g.point - input.wheel_center[*wheel];
        // velocity of the wheel material point at the contact: v_c + ω × r
        let mut point_jac = input.wheel_jac[*wheel];
        let pr = perp(r);
        for i in 0..NDOF {
            let w = input.wheel_ang_jac[*wheel][i];
            if w != 0.0 {
                point_jac[(0, i)] += pr.x * w;
                point_jac[(1, i)] += pr.y * w;
            }
        }
        let tangent = V2::new(g.normal.y, -g.normal.x);
        for dir in [g.normal, tangent] {
            let jac: AngJac = dir.transpose() * point_jac;
            let minv_jt = chol.solve(&jac.transpose());
            rows.push(ContactRow { jac, minv_jt });
        }
    }
    let m = rows.len();
    let mut delassus = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            delassus[i * m + j] = (rows[i].jac * rows[j].minv_jt)[(0, 0)];
        }
    }
    let free: Vec<f64> = rows.iter().map(|r| (r.jac * predicted)[(0, 0)]).collect();

    let k = input.params.stiffness;
    let c = input.params.damping;
    let mu = input.friction;
    let mut force = vec![0.0; m];
    let velocity_excluding = |force: &[f64], i: usize| -> f64 {
        let mut v = free[i];
        for j in 0..m {
            if j != i {
                v += dt * delassus[i * m + j] * force[j];
            }
        }
        v
    };
    for _ in 0..input.params.solver_iterations.max(1) {
        for (ci, (_, g)) in geoms.iter().enumerate() {
            let ni = 2 * ci;
            let ti = ni + 1;
            // implicit spring-damper: f = k·pen − (c + k·dt)·v_n(end of step)
            let gain = c + k * dt;
            let v_other = velocity_excluding(&force, ni);
            let fnorm =
                (k * g.penetration - gain * v_other) / (1.0 + gain * dt * delassus[ni * m + ni]);
            force[ni] = fnorm.max(0.0);
            // tangential force that cancels slip, projected into the cone
            let v_other = velocity_excluding(&force, ti);
            let wtt = delassus[ti * m + ti];
            let ft = if wtt > 0.0 {
                -v_other / (dt * wtt)
            } else {
                0.0
            };
            let bound = mu * force[ni];
            force[ti] = ft.clamp(-bound, bound);
        }
    }

    let mut acc = GenVec::zeros();
    let mut points = Vec::with_capacity(geoms.len());
    for (ci, (wheel, g)) in geoms.iter().enumerate() {
        let fn_ = force[2 * ci];
        let ft = force[2 * ci + 1].clamp(-mu * fn_, mu * fn_);
        acc += rows[2 * ci].minv_jt * fn_ + rows[2 * ci + 1].minv_jt * ft;
        points.push(ContactPoint {
            wheel: *wheel,
            position: [g.point.x, g.point.y],
            normal: [g.normal.x, g.normal.y],
            normal_force: fn_,
            tangential_force: ft,
            penetration: g.penetration,
        });
    }
    (points, acc)
}
