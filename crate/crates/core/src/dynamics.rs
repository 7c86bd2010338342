//! Rigid-body team dynamics, the tilting-hover reference and the closed-loop
//! scenario runner.
//!
//! The plant is integrated with classical RK4 on `(x, R, Omega, v)` followed by
//! a polar projection of `R` back onto SO(3). The controller runs at a fixed
//! tick and holds its wrench over the substeps of that tick.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6};

use serde::{Deserialize, Serialize};

use crate::actuation::{
    effectiveness_matrix, hover_stack, inverse_map, team_inertia, wrench_of, ForceStack, TeamConfig,
};
use crate::afs::{AfsCone, AgentAfs};
use crate::allocation::{ebrca, rpi_baseline, SaturationFlags};
use crate::controller::{control_law, force_reference, lyapunov_diagnostics, plan_attitude, Gains, Reference};
use crate::frames::{euler_zyx, orthonormality_error, orthonormalize, rot_x, skew, Mat3, Rotation, Twist, Vec3, Wrench};
use crate::{Error, Result, GRAVITY};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimState {
    /// Team position in the world frame, m.
    pub x: Vec3,
    pub r: Rotation,
    /// Body twist.
    pub xi: Twist,
    pub t: f64,
}

impl SimState {
    pub fn at_rest(x: Vec3) -> Self {
        Self { x, r: Rotation::identity(), xi: Twist::default(), t: 0.0 }
    }
}

/// Mass properties and gravity acting on the team.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBody {
    pub mass: f64,
    pub inertia: Mat3,
    inertia_inv: Mat3,
    pub gravity: f64,
}

impl RigidBody {
    pub fn new(mass: f64, inertia: Mat3, gravity: f64) -> Result<Self> {
        let inertia_inv = inertia
            .try_inverse()
            .filter(|_| mass > 0.0 && mass.is_finite())
            .ok_or_else(|| Error::InvalidConfig("rigid body needs positive mass and invertible inertia".into()))?;
        Ok(Self { mass, inertia, inertia_inv, gravity })
    }

    pub fn of_team(cfg: &TeamConfig) -> Result<Self> {
        let (m, j) = team_inertia(cfg);
        Self::new(m, j, GRAVITY)
    }

    /// Rotational plus translational kinetic energy of a body twist.
    pub fn kinetic_energy(&self, xi: &Twist) -> f64 {
        0.5 * (xi.omega.dot(&(self.inertia * xi.omega)) + self.mass * xi.v.norm_squared())
    }
}

/// Time derivative of a [`SimState`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub x_dot: Vec3,
    pub r_dot: Mat3,
    pub omega_dot: Vec3,
    pub v_dot: Vec3,
}

fn rhs(r: &Mat3, omega: &Vec3, v: &Vec3, u: &Wrench, body: &RigidBody) -> StateDerivative {
    let j_omega = body.inertia * omega;
    let gravity_body = r.transpose() * Vec3::new(0.0, 0.0, body.gravity);
    StateDerivative {
        x_dot: r * v,
        r_dot: r * skew(omega),
        omega_dot: body.inertia_inv * (j_omega.cross(omega) + u.tau),
        v_dot: -omega.cross(v) + u.f / body.mass - gravity_body,
    }
}

pub fn dynamics_rhs(state: &SimState, u: &Wrench, body: &RigidBody) -> StateDerivative {
    rhs(state.r.matrix(), &state.xi.omega, &state.xi.v, u, body)
}

/// One RK4 step of length `dt` under constant wrench `u`.
pub fn integrate_step(state: &SimState, u: &Wrench, body: &RigidBody, dt: f64) -> SimState {
    let (x0, r0, w0, v0) = (state.x, *state.r.matrix(), state.xi.omega, state.xi.v);
    let at = |k: &StateDerivative, h: f64| (x0 + k.x_dot * h, r0 + k.r_dot * h, w0 + k.omega_dot * h, v0 + k.v_dot * h);
    let eval = |s: (Vec3, Mat3, Vec3, Vec3)| rhs(&s.1, &s.2, &s.3, u, body);

    let k1 = rhs(&r0, &w0, &v0, u, body);
    let k2 = eval(at(&k1, 0.5 * dt));
    let k3 = eval(at(&k2, 0.5 * dt));
    let k4 = eval(at(&k3, dt));
    let w = dt / 6.0;
    let comb = |f: fn(&StateDerivative) -> Vec3| (f(&k1) + f(&k2) * 2.0 + f(&k3) * 2.0 + f(&k4)) * w;

    SimState {
        x: x0 + comb(|k| k.x_dot),
        r: orthonormalize(&(r0 + (k1.r_dot + k2.r_dot * 2.0 + k3.r_dot * 2.0 + k4.r_dot) * w)),
        xi: Twist::new(w0 + comb(|k| k.omega_dot), v0 + comb(|k| k.v_dot)),
        t: state.t + dt,
    }
}

/// Integrates over `duration` in substeps no longer than `substep`.
pub fn integrate(state: &SimState, u: &Wrench, body: &RigidBody, duration: f64, substep: f64) -> SimState {
    let steps = (duration / substep).ceil().max(1.0) as usize;
    let h = duration / steps as f64;
    let t_end = state.t + duration;
    let mut s = *state;
    for _ in 0..steps {
        s = integrate_step(&s, u, body, h);
    }
    s.t = t_end;
    s
}

/// Ascent ends here, s.
pub const ASCENT_END: f64 = 2.0;
pub const TILT_START: f64 = 4.0;
pub const TILT_END: f64 = 10.0;
pub const DESCENT_START: f64 = 12.0;
pub const HOVER_HEIGHT: f64 = 1.5;

/// Cosine ramp from 0 to `HOVER_HEIGHT` over two seconds: value, rate and
/// acceleration at local time `tau`.
fn ramp(tau: f64) -> (f64, f64, f64) {
    let a = 0.5 * HOVER_HEIGHT;
    let w = FRAC_PI_2;
    (a * (1.0 - (w * tau).cos()), a * w * (w * tau).sin(), a * w * w * (w * tau).cos())
}

/// Reference roll during the tilting stage.
pub fn roll_reference(t: f64) -> f64 {
    if (TILT_START..=TILT_END).contains(&t) {
        FRAC_PI_6 * (1.0 + ((t - 7.0) * FRAC_PI_3).cos())
    } else {
        0.0
    }
}

/// Ascend, tilt in roll while hovering, descend.
pub fn reference_at(t: f64) -> Reference {
    let (z, zd, zdd) = if t < ASCENT_END {
        ramp(t.max(0.0))
    } else if t < DESCENT_START {
        (HOVER_HEIGHT, 0.0, 0.0)
    } else if t < DESCENT_START + 2.0 {
        let (z, zd, zdd) = ramp(t - DESCENT_START);
        (HOVER_HEIGHT - z, -zd, -zdd)
    } else {
        (0.0, 0.0, 0.0)
    };
    Reference {
        x_r: Vec3::new(0.0, 0.0, z),
        xdot_r: Vec3::new(0.0, 0.0, zd),
        xddot_r: Vec3::new(0.0, 0.0, zdd),
        r_r: rot_x(roll_reference(t)),
        omega_d: Vec3::zeros(),
        omegadot_d: Vec3::zeros(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioParams {
    pub team: TeamConfig,
    pub gains: Gains,
    /// Planner relaxation.
    pub s: f64,
    pub duration: f64,
    /// Controller tick, s.
    pub dt: f64,
    /// Plant integration substep, s.
    pub substep: f64,
    pub x0: Vec3,
    pub allocator: AllocatorKind,
    /// Start each tick's allocation from the previous stack when it is still
    /// feasible, otherwise from the hover split.
    pub warm_start: bool,
}

/// Allocator used inside the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AllocatorKind {
    #[default]
    Ebrca,
    Rpi,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        Self {
            team: TeamConfig::a4_inc(),
            gains: Gains::default(),
            s: 0.5,
            duration: 20.0,
            dt: 0.01,
            substep: 1e-3,
            x0: Vec3::new(0.5, -0.5, 0.0),
            allocator: AllocatorKind::Ebrca,
            warm_start: true,
        }
    }
}

impl ScenarioParams {
    pub fn validate(&self) -> Result<()> {
        self.team.validate()?;
        self.gains.validate()?;
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::InvalidConfig(format!("relaxation s must lie in (0, 1], got {}", self.s)));
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(format!("duration must be nonnegative, got {}", self.duration)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("tick dt must be positive, got {}", self.dt)));
        }
        if !(self.substep > 0.0 && self.substep <= self.dt) {
            return Err(Error::InvalidConfig(format!(
                "need 0 < substep <= dt, got substep={} dt={}",
                self.substep, self.dt
            )));
        }
        if !self.x0.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidConfig("initial position must be finite".into()));
        }
        Ok(())
    }
}

/// One controller tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t: f64,
    pub x: Vec3,
    /// Roll, pitch, yaw of the team attitude.
    pub euler: Vec3,
    pub omega: Vec3,
    pub v: Vec3,
    pub x_r: Vec3,
    /// Reference roll.
    pub phi_r: f64,
    /// Planned roll.
    pub phi_d: f64,
    pub u_d: Wrench,
    /// Unallocated force `|u_fd - u_f|`, N.
    pub e_f: f64,
    /// Achieved wrench fraction; NaN when the allocator saturated without
    /// preserving direction.
    pub c_u: f64,
    pub v_r: f64,
    pub v_x: f64,
    /// Orthonormality defect of the team attitude.
    pub ortho_err: f64,
    /// Every agent force lies in its attainable space and maps to an
    /// admissible command.
    pub feasible: bool,
}

pub type Trace = Vec<TraceRecord>;

/// Runs the closed loop from rest at `x0`, one record per controller tick.
pub fn run_scenario(params: &ScenarioParams) -> Result<Trace> {
    params.validate()?;
    let cfg = &params.team;
    let body = RigidBody::of_team(cfg)?;
    let m = effectiveness_matrix(cfg);
    let afs = AgentAfs::new(cfg.limits);
    let cone = AfsCone::new(cfg, params.s)?;
    let hover = hover_stack(cfg, GRAVITY);

    let ticks = (params.duration / params.dt).round() as usize;
    let mut trace = Vec::with_capacity(ticks);
    let mut state = SimState::at_rest(params.x0);
    let mut stack = hover.clone();

    for k in 0..ticks {
        let t = k as f64 * params.dt;
        state.t = t;
        let reference = reference_at(t);
        let u_fr = force_reference(&state, &reference, &params.gains, body.mass);
        let plan = plan_attitude(&reference, &u_fr, &cone, &state.r);
        let ctrl = control_law(&state, &reference, &plan.r_d, &params.gains, cfg)?;

        let (f, c_u) = match params.allocator {
            AllocatorKind::Ebrca => {
                let warm = params.warm_start && stack.agents().all(|f| afs.contains(&f, 1e-9));
                let f0 = if warm { stack } else { hover.clone() };
                let alloc = ebrca(&ctrl.u_d, &m, &f0, SaturationFlags::all_free(cfg.n()), &afs)
                    .map_err(|e| Error::Allocation { t, source: Box::new(e) })?;
                (alloc.f, alloc.c_u)
            }
            AllocatorKind::Rpi => {
                let (f, e_f) = rpi_baseline(&ctrl.u_d, &m, &afs).map_err(|e| Error::Allocation { t, source: Box::new(e) })?;
                (f, if e_f == 0.0 { 1.0 } else { f64::NAN })
            }
        };
        stack = f;
        let applied = wrench_of(&m, &stack);
        let feasible = stack_is_admissible(&stack, &afs, cfg);
        let (v_r, v_x) = lyapunov_diagnostics(&state, &reference, &plan.r_d, &params.gains);

        trace.push(TraceRecord {
            t,
            x: state.x,
            euler: euler_zyx(&state.r),
            omega: state.xi.omega,
            v: state.xi.v,
            x_r: reference.x_r,
            phi_r: roll_reference(t),
            phi_d: euler_zyx(&plan.r_d).x,
            u_d: ctrl.u_d,
            e_f: (ctrl.u_d.f - applied.f).norm(),
            c_u,
            v_r,
            v_x,
            ortho_err: orthonormality_error(state.r.matrix()).0,
            feasible,
        });

        state = integrate(&state, &applied, &body, params.dt, params.substep);
    }
    Ok(trace)
}

fn stack_is_admissible(stack: &ForceStack, afs: &AgentAfs, cfg: &TeamConfig) -> bool {
    stack.agents().all(|f| {
        afs.contains(&f, 1e-9)
            && inverse_map(&f, &cfg.coeffs).is_ok_and(|cmd| cmd.within(&cfg.limits, 1e-9))
    })
}
