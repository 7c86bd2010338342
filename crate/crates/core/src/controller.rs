//! Full-pose tracking with an attainable-force-aware attitude planner.
//!
//! Each tick the force part of the reference wrench is computed first; it
//! does not depend on the attitude target. The planner then tilts the
//! reference attitude toward that force until the force, seen from the body,
//! fits the relaxed elliptic cone. Finally the torque part is computed against
//! the planned attitude and the force part is projected onto the unrelaxed
//! cone.

use nalgebra::{Matrix6, Vector6};
use serde::{Deserialize, Serialize};

use crate::actuation::{team_inertia, TeamConfig};
use crate::afs::{project_t_eta, scale_t_tf, AfsCone};
use crate::dynamics::SimState;
use crate::frames::{rodrigues, vee_unchecked, Mat3, Rotation, Twist, Vec3, Vec6, Wrench};
use crate::{Error, Result, GRAVITY};

/// Bisection stops once the bracket is narrower than this, rad.
pub const PLANNER_TOL: f64 = 1e-4;
pub const PLANNER_MAX_ITER: usize = 40;

/// Diagonal feedback gains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gains {
    pub k_x: Vec3,
    pub k_r: Vec3,
    /// Twist gain, angular block first.
    pub k_xi: Vec6,
}

impl Default for Gains {
    fn default() -> Self {
        Self {
            k_x: Vec3::new(0.4, 0.4, 1.0),
            k_r: Vec3::new(12.0, 12.0, 1.0),
            k_xi: Vector6::new(8.0, 8.0, 1.5, 0.8, 0.8, 2.0),
        }
    }
}

impl Gains {
    pub fn validate(&self) -> Result<()> {
        let entries = self.k_x.iter().chain(self.k_r.iter()).chain(self.k_xi.iter());
        if entries.clone().all(|&k| k.is_finite() && k > 0.0) {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!(
                "gains must be positive, got k_x={:?} k_r={:?} k_xi={:?}",
                self.k_x.as_slice(),
                self.k_r.as_slice(),
                self.k_xi.as_slice()
            )))
        }
    }

    pub fn k_omega(&self) -> Vec3 {
        self.k_xi.fixed_rows::<3>(0).into()
    }

    pub fn k_v(&self) -> Vec3 {
        self.k_xi.fixed_rows::<3>(3).into()
    }
}

/// Position and attitude command at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub x_r: Vec3,
    pub xdot_r: Vec3,
    pub xddot_r: Vec3,
    pub r_r: Rotation,
    pub omega_d: Vec3,
    pub omegadot_d: Vec3,
}

impl Reference {
    /// Hold position `x` at attitude `r`.
    pub fn hold(x: Vec3, r: Rotation) -> Self {
        Self { x_r: x, xdot_r: Vec3::zeros(), xddot_r: Vec3::zeros(), r_r: r, omega_d: Vec3::zeros(), omegadot_d: Vec3::zeros() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannerOutput {
    pub r_d: Rotation,
    pub theta_star: f64,
    pub truncated: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackingErrors {
    pub e_x: Vec3,
    pub e_r: Vec3,
    /// `[e_omega; e_v]` in the body frame.
    pub e_xi: Twist,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlOutput {
    /// Projected wrench handed to the allocator.
    pub u_d: Wrench,
    /// Unprojected reference wrench.
    pub u_r: Wrench,
    pub t_tf: f64,
    pub t_eta: f64,
}

fn diag(v: &Vec3) -> Mat3 {
    Mat3::from_diagonal(v)
}

/// Desired body twist `[R^T R_d Omega_d; R^T xdot_r]`.
fn desired_twist(state: &SimState, reference: &Reference, r_d: &Rotation) -> Twist {
    let rt = state.r.transpose();
    Twist::new(rt * (r_d * reference.omega_d), rt * reference.xdot_r)
}

pub fn tracking_errors(state: &SimState, reference: &Reference, r_d: &Rotation) -> TrackingErrors {
    let (r, rd) = (state.r.matrix(), r_d.matrix());
    let e_r = vee_unchecked(&((rd.transpose() * r - r.transpose() * rd) * 0.5));
    let xi_d = desired_twist(state, reference, r_d);
    TrackingErrors {
        e_x: state.x - reference.x_r,
        e_r,
        e_xi: Twist::new(state.xi.omega - xi_d.omega, state.xi.v - xi_d.v),
    }
}

/// Force part of the reference wrench,
/// `m vdot_d + m Omega x v_d - K_v e_v - R^T K_x e_x + m g R^T e3`.
pub fn force_reference(state: &SimState, reference: &Reference, gains: &Gains, mass: f64) -> Vec3 {
    let rt = state.r.transpose();
    let omega = state.xi.omega;
    let v_d = rt * reference.xdot_r;
    let vdot_d = rt * reference.xddot_r - omega.cross(&v_d);
    let e_x = state.x - reference.x_r;
    let e_v = state.xi.v - v_d;
    mass * vdot_d + mass * omega.cross(&v_d) - diag(&gains.k_v()) * e_v - rt * (diag(&gains.k_x) * e_x)
        + rt * Vec3::new(0.0, 0.0, mass * GRAVITY)
}

/// Temporary attitude target closest to `R_r` under which the (magnitude
/// scaled) reference force fits the relaxed cone.
pub fn plan_attitude(reference: &Reference, u_fr: &Vec3, cone: &AfsCone, r_c: &Rotation) -> PlannerOutput {
    let r_r = reference.r_r;
    let keep = PlannerOutput { r_d: r_r, theta_star: 0.0, truncated: false };
    let f_r = (r_c * u_fr) * scale_t_tf(u_fr, cone);
    let norm = f_r.norm();
    if norm == 0.0 || !norm.is_finite() {
        return keep;
    }
    let feasible = |r: &Rotation| cone.contains(&(r.transpose() * f_r));
    if feasible(&r_r) {
        return keep;
    }

    let f_hat = f_r / norm;
    let m = r_r.matrix();
    let (b_xr, b_yr, b_zr): (Vec3, Vec3, Vec3) = (m.column(0).into(), m.column(1).into(), m.column(2).into());
    let cross = b_zr.cross(&f_hat);
    let axis = if cross.norm() >= 1e-9 {
        cross.normalize()
    } else {
        // antiparallel: any horizontal axis orthogonal to b_zr will do
        let x = Vec3::x();
        let k = x - b_zr * b_zr.dot(&x);
        if k.norm() > 1e-6 { k.normalize() } else { Vec3::y() }
    };
    let theta_max = b_zr.dot(&f_hat).clamp(-1.0, 1.0).acos();

    let frame = |theta: f64| -> Rotation {
        let b_z = rodrigues(&b_zr, &axis, theta).expect("axis is unit");
        let y = b_z.cross(&b_xr);
        let b_y = if y.norm() > 1e-9 {
            y.normalize()
        } else {
            let b = rodrigues(&b_yr, &axis, theta).expect("axis is unit");
            (b - b_z * b_z.dot(&b)).normalize()
        };
        let b_x = b_y.cross(&b_z);
        Rotation::from_matrix_unchecked(Mat3::from_columns(&[b_x, b_y, b_z]))
    };

    let (mut lo, mut hi) = (0.0, theta_max);
    for _ in 0..PLANNER_MAX_ITER {
        if hi - lo <= PLANNER_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if feasible(&frame(mid)) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    PlannerOutput { r_d: frame(hi), theta_star: hi, truncated: true }
}

/// Clamps a body force into the unrelaxed cone: magnitude first, then the
/// lateral components. Returns the projected force with `(t_tf, t_eta)`.
pub fn project_force(u_f: &Vec3, cone: &AfsCone) -> (Vec3, f64, f64) {
    let t_tf = scale_t_tf(u_f, cone);
    let scaled = u_f * t_tf;
    let t_eta = project_t_eta(&scaled, cone);
    (Vec3::new(t_eta * scaled.x, t_eta * scaled.y, scaled.z), t_tf, t_eta)
}

pub fn control_law(
    state: &SimState,
    reference: &Reference,
    r_d: &Rotation,
    gains: &Gains,
    cfg: &TeamConfig,
) -> Result<ControlOutput> {
    let (mass, inertia) = team_inertia(cfg);
    let cone = AfsCone::new(cfg, 1.0)?;
    let errors = tracking_errors(state, reference, r_d);
    let rt_rd = state.r.transpose() * r_d;
    let omega = state.xi.omega;
    let omega_d = rt_rd * reference.omega_d;
    let omegadot_d = rt_rd * reference.omegadot_d;

    let tau = inertia * omegadot_d - (inertia * omega).cross(&omega_d)
        - diag(&gains.k_omega()) * errors.e_xi.omega
        - diag(&gains.k_r) * errors.e_r;
    let u_fr = force_reference(state, reference, gains, mass);
    let (u_fd, t_tf, t_eta) = project_force(&u_fr, &cone);

    Ok(ControlOutput { u_d: Wrench::new(tau, u_fd), u_r: Wrench::new(tau, u_fr), t_tf, t_eta })
}

/// `Psi = tr(K_R (I - R_d^T R)) / 2`.
pub fn attitude_potential(r: &Rotation, r_d: &Rotation, k_r: &Vec3) -> f64 {
    0.5 * (diag(k_r) * (Mat3::identity() - r_d.matrix().transpose() * r.matrix())).trace()
}

/// `e^T K e` for diagonal `K`.
pub fn weighted_norm(e: &Vec3, k: &Vec3) -> f64 {
    e.component_mul(e).dot(k)
}

/// `(V_R, V_x)`.
pub fn lyapunov_diagnostics(state: &SimState, reference: &Reference, r_d: &Rotation, gains: &Gains) -> (f64, f64) {
    let e = tracking_errors(state, reference, r_d);
    let v_r = attitude_potential(&state.r, r_d, &gains.k_r) + weighted_norm(&e.e_xi.omega, &gains.k_omega());
    let v_x = weighted_norm(&e.e_x, &gains.k_x) + weighted_norm(&e.e_xi.v, &gains.k_v());
    (v_r, v_x)
}

/// Full twist gain as a matrix.
pub fn k_xi_matrix(gains: &Gains) -> Matrix6<f64> {
    Matrix6::from_diagonal(&gains.k_xi)
}
