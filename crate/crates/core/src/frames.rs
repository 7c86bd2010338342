//! Frame conventions and small rotation utilities.
//!
//! World frame is z-up. A team attitude `R_C` maps team-body coordinates into
//! the world frame; agent frames are related to the team frame by a pure yaw
//! `R_z(psi_i)`. Twists and wrenches are expressed in the team body frame and
//! stacked angular/torque part first.

use nalgebra::{Matrix3, Rotation3, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Vec6 = Vector6<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Rotation = Rotation3<f64>;

/// Tolerance used when checking that a matrix is skew-symmetric or a
/// rotation is orthonormal.
pub const FRAME_TOL: f64 = 1e-9;

/// `skew(v) * w == v x w`.
pub fn skew(v: &Vec3) -> Mat3 {
    v.cross_matrix()
}

/// Inverse of [`skew`]. Rejects matrices whose symmetric part exceeds
/// [`FRAME_TOL`] in Frobenius norm.
pub fn vee(a: &Mat3) -> Result<Vec3> {
    let asym = (a + a.transpose()).norm();
    if !asym.is_finite() || asym > FRAME_TOL {
        return Err(Error::NotSkew(asym));
    }
    Ok(vee_unchecked(a))
}

/// Extracts the axial vector of the skew part of `a` without validation.
pub(crate) fn vee_unchecked(a: &Mat3) -> Vec3 {
    Vec3::new(
        0.5 * (a[(2, 1)] - a[(1, 2)]),
        0.5 * (a[(0, 2)] - a[(2, 0)]),
        0.5 * (a[(1, 0)] - a[(0, 1)]),
    )
}

pub fn rot_z(psi: f64) -> Rotation {
    let (s, c) = psi.sin_cos();
    Rotation::from_matrix_unchecked(Mat3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0))
}

pub fn rot_x(phi: f64) -> Rotation {
    let (s, c) = phi.sin_cos();
    Rotation::from_matrix_unchecked(Mat3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c))
}

/// Rotates `v` by `theta` about the unit vector `axis`.
pub fn rodrigues(v: &Vec3, axis: &Vec3, theta: f64) -> Result<Vec3> {
    let norm = axis.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > FRAME_TOL {
        return Err(Error::NonUnitAxis(norm));
    }
    let (s, c) = theta.sin_cos();
    Ok(v * c + axis.cross(v) * s + axis * (axis.dot(v) * (1.0 - c)))
}

/// Frobenius-norm deviation of `R^T R` from identity and of `det R` from one.
pub fn orthonormality_error(r: &Mat3) -> (f64, f64) {
    ((r.transpose() * r - Mat3::identity()).norm(), (r.determinant() - 1.0).abs())
}

pub fn is_rotation(r: &Mat3, tol: f64) -> bool {
    let (ortho, det) = orthonormality_error(r);
    ortho <= tol && det <= tol
}

/// Projects a near-rotation matrix onto SO(3) (orthogonal polar factor).
pub fn orthonormalize(m: &Mat3) -> Rotation {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        r = u * v_t;
    }
    Rotation::from_matrix_unchecked(r)
}

/// Roll, pitch and yaw (ZYX convention) of a rotation, in radians.
pub fn euler_zyx(r: &Rotation) -> Vec3 {
    let m = r.matrix();
    let roll = m[(2, 1)].atan2(m[(2, 2)]);
    let pitch = -m[(2, 0)].clamp(-1.0, 1.0).asin();
    let yaw = m[(1, 0)].atan2(m[(0, 0)]);
    Vec3::new(roll, pitch, yaw)
}

/// Body-frame twist `xi = [omega; v]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    pub omega: Vec3,
    pub v: Vec3,
}

impl Twist {
    pub fn new(omega: Vec3, v: Vec3) -> Self {
        Self { omega, v }
    }

    pub fn to_vector(&self) -> Vec6 {
        stack(&self.omega, &self.v)
    }

    pub fn from_vector(x: &Vec6) -> Self {
        Self { omega: x.fixed_rows::<3>(0).into(), v: x.fixed_rows::<3>(3).into() }
    }
}

/// Body-frame wrench `u = [tau; f]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Wrench {
    pub tau: Vec3,
    pub f: Vec3,
}

impl Wrench {
    pub fn new(tau: Vec3, f: Vec3) -> Self {
        Self { tau, f }
    }

    pub fn force(f: Vec3) -> Self {
        Self { tau: Vec3::zeros(), f }
    }

    pub fn to_vector(&self) -> Vec6 {
        stack(&self.tau, &self.f)
    }

    pub fn from_vector(x: &Vec6) -> Self {
        Self { tau: x.fixed_rows::<3>(0).into(), f: x.fixed_rows::<3>(3).into() }
    }

    pub fn is_finite(&self) -> bool {
        self.tau.iter().chain(self.f.iter()).all(|x| x.is_finite())
    }
}

fn stack(a: &Vec3, b: &Vec3) -> Vec6 {
    Vec6::new(a.x, a.y, a.z, b.x, b.y, b.z)
}
