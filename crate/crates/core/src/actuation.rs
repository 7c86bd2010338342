//! Team configuration, thrust model and the force/command mappings.
//!
//! Every agent carries a coaxial rotor on a two-axis gimbal. The gimbal angles
//! `(eta_x, eta_y)` fix the thrust direction in the agent frame, the rotor
//! speed fixes its magnitude. Agent frames differ from the team frame by a yaw
//! that is a multiple of pi/2.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::frames::{rot_z, skew, Mat3, Rotation, Vec3, Wrench};
use crate::{Error, Result, GRAVITY};

/// Tolerance on agent yaw being a multiple of pi/2.
pub const YAW_GRID_TOL: f64 = 1e-12;

/// Air density, propeller diameter and lift coefficient of the thrust law
/// `T = rho d^4 c_l omega^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThrustCoefficients {
    pub rho: f64,
    pub d: f64,
    pub c_l: f64,
}

impl ThrustCoefficients {
    /// `rho d^4 c_l`, thrust per squared rotor speed.
    pub fn gain(&self) -> f64 {
        self.rho * self.d.powi(4) * self.c_l
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("rho", self.rho), ("d", self.d), ("c_l", self.c_l)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

impl Default for ThrustCoefficients {
    /// Sea-level air, 6 inch propeller.
    fn default() -> Self {
        Self { rho: 1.225, d: 0.1524, c_l: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ActuationLimits {
    /// Gimbal limit about the agent x-axis, rad.
    pub sigma_x: f64,
    /// Gimbal limit about the agent y-axis, rad.
    pub sigma_y: f64,
    /// Maximum rotor speed, rad/s.
    pub sigma_omega: f64,
    /// Maximum thrust, N. Always equal to `rho d^4 c_l sigma_omega^2`.
    pub sigma_tf: f64,
}

impl ActuationLimits {
    pub fn from_max_speed(sigma_x: f64, sigma_y: f64, sigma_omega: f64, coeffs: &ThrustCoefficients) -> Self {
        let sigma_tf = coeffs.gain() * sigma_omega * sigma_omega;
        Self { sigma_x, sigma_y, sigma_omega, sigma_tf }
    }

    pub fn from_max_thrust(sigma_x: f64, sigma_y: f64, sigma_tf: f64, coeffs: &ThrustCoefficients) -> Self {
        let sigma_omega = (sigma_tf / coeffs.gain()).sqrt();
        Self { sigma_x, sigma_y, sigma_omega, sigma_tf }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma_x", self.sigma_x), ("sigma_y", self.sigma_y)] {
            if !(v > 0.0 && v <= FRAC_PI_2) {
                return Err(Error::InvalidConfig(format!("{name} must lie in (0, pi/2], got {v}")));
            }
        }
        if !(self.sigma_tf.is_finite() && self.sigma_tf > 0.0) {
            return Err(Error::InvalidConfig(format!("sigma_tf must be positive, got {}", self.sigma_tf)));
        }
        if !(self.sigma_omega.is_finite() && self.sigma_omega > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "sigma_omega must be positive, got {}",
                self.sigma_omega
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    /// Position relative to the team centre of mass, m.
    pub position: Vec3,
    /// Yaw of the agent frame relative to the team frame, a multiple of pi/2.
    pub psi: f64,
    /// Mass, kg.
    pub mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TeamConfig {
    pub agents: Vec<Agent>,
    /// Navigator (centre module) mass, kg.
    pub m0: f64,
    /// Navigator inertia about the team centre of mass, kg m².
    pub j0: Mat3,
    pub limits: ActuationLimits,
    pub coeffs: ThrustCoefficients,
}

impl TeamConfig {
    /// Four agents on a square at `(±arm, ±arm, 0)`, listed counter-clockwise
    /// from `(+arm, +arm)`, with the given yaws. Maximum thrust per agent is
    /// `2 m_i g`.
    pub fn square(arm: f64, psi: [f64; 4], agent_mass: f64, m0: f64, j0: Mat3, sigma_x: f64, sigma_y: f64) -> Self {
        let corners = [(1.0, 1.0), (-1.0, 1.0), (-1.0, -1.0), (1.0, -1.0)];
        let agents = corners
            .iter()
            .zip(psi)
            .map(|(&(sx, sy), psi)| Agent { position: Vec3::new(sx * arm, sy * arm, 0.0), psi, mass: agent_mass })
            .collect();
        let coeffs = ThrustCoefficients::default();
        let limits = ActuationLimits::from_max_thrust(sigma_x, sigma_y, 2.0 * agent_mass * GRAVITY, &coeffs);
        Self { agents, m0, j0, limits, coeffs }
    }

    /// The four-agent team with agents 1 and 2 yawed by pi/2, using the
    /// default geometry and masses (0.25 m arm, 0.5 kg agents, 0.3 kg
    /// navigator) and gimbal limits pi/6, pi/4.
    pub fn a4_inc() -> Self {
        Self::square(
            0.25,
            [FRAC_PI_2, FRAC_PI_2, 0.0, 0.0],
            0.5,
            0.3,
            Mat3::from_diagonal(&Vec3::new(5e-3, 5e-3, 9e-3)),
            std::f64::consts::FRAC_PI_6,
            std::f64::consts::FRAC_PI_4,
        )
    }

    /// Same as [`TeamConfig::a4_inc`] with every agent aligned to the team frame.
    pub fn a4_con() -> Self {
        let mut cfg = Self::a4_inc();
        for a in &mut cfg.agents {
            a.psi = 0.0;
        }
        cfg
    }

    pub fn n(&self) -> usize {
        self.agents.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.agents.is_empty() {
            return Err(Error::InvalidConfig("team needs at least one agent".into()));
        }
        self.coeffs.validate()?;
        self.limits.validate()?;
        let implied = self.coeffs.gain() * self.limits.sigma_omega.powi(2);
        if (implied - self.limits.sigma_tf).abs() > 1e-9 * self.limits.sigma_tf {
            return Err(Error::InvalidConfig(format!(
                "sigma_tf = {} is inconsistent with rho d^4 c_l sigma_omega^2 = {implied}",
                self.limits.sigma_tf
            )));
        }
        if !(self.m0.is_finite() && self.m0 >= 0.0) {
            return Err(Error::InvalidConfig(format!("m0 must be nonnegative, got {}", self.m0)));
        }
        for (i, a) in self.agents.iter().enumerate() {
            if !(a.mass.is_finite() && a.mass > 0.0) {
                return Err(Error::InvalidConfig(format!("agent {i}: mass must be positive, got {}", a.mass)));
            }
            if !a.position.iter().all(|x| x.is_finite()) {
                return Err(Error::InvalidConfig(format!("agent {i}: position must be finite")));
            }
            if yaw_quadrant(a.psi).is_none() {
                return Err(Error::InvalidConfig(format!(
                    "agent {i}: psi = {} is not a multiple of pi/2",
                    a.psi
                )));
            }
        }
        if (self.j0 - self.j0.transpose()).norm() > 1e-12 || self.j0.cholesky().is_none() {
            return Err(Error::InvalidConfig("j0 must be symmetric positive-definite".into()));
        }
        Ok(())
    }

    pub fn agent_rotation(&self, i: usize) -> Rotation {
        rot_z(self.agents[i].psi)
    }
}

/// Returns `m` when `psi = m pi/2` within [`YAW_GRID_TOL`].
fn yaw_quadrant(psi: f64) -> Option<i64> {
    if !psi.is_finite() {
        return None;
    }
    let m = (psi / FRAC_PI_2).round();
    ((psi - m * FRAC_PI_2).abs() <= YAW_GRID_TOL).then_some(m as i64)
}

/// Gimbal angles and rotor speed of one agent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AgentCommand {
    pub eta_x: f64,
    pub eta_y: f64,
    pub omega: f64,
}

impl AgentCommand {
    pub fn within(&self, limits: &ActuationLimits, tol: f64) -> bool {
        self.eta_x.abs() <= limits.sigma_x + tol
            && self.eta_y.abs() <= limits.sigma_y + tol
            && self.omega >= -tol
            && self.omega <= limits.sigma_omega * (1.0 + tol)
    }
}

/// Stacked per-agent thrust vectors, each expressed in its own agent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceStack(pub DVector<f64>);

impl ForceStack {
    pub fn zeros(n: usize) -> Self {
        Self(DVector::zeros(3 * n))
    }

    pub fn from_agents(forces: &[Vec3]) -> Self {
        Self(DVector::from_iterator(3 * forces.len(), forces.iter().flat_map(|f| f.iter().copied())))
    }

    pub fn n(&self) -> usize {
        self.0.len() / 3
    }

    pub fn agent(&self, i: usize) -> Vec3 {
        self.0.fixed_rows::<3>(3 * i).into()
    }

    pub fn set_agent(&mut self, i: usize, f: &Vec3) {
        self.0.fixed_rows_mut::<3>(3 * i).copy_from(f);
    }

    pub fn agents(&self) -> impl Iterator<Item = Vec3> + '_ {
        (0..self.n()).map(move |i| self.agent(i))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

/// Thrust direction in the agent frame for gimbal angles `(eta_x, eta_y)`.
pub fn reduced_attitude(eta_x: f64, eta_y: f64) -> Vec3 {
    let (sx, cx) = eta_x.sin_cos();
    let (sy, cy) = eta_y.sin_cos();
    Vec3::new(cx * sy, -sx, cx * cy)
}

pub fn thrust_magnitude(omega: f64, coeffs: &ThrustCoefficients) -> f64 {
    coeffs.gain() * omega * omega
}

pub fn agent_force(cmd: &AgentCommand, coeffs: &ThrustCoefficients) -> Vec3 {
    reduced_attitude(cmd.eta_x, cmd.eta_y) * thrust_magnitude(cmd.omega, coeffs)
}

/// Recovers the command that produces `f`. The zero force maps to the zero
/// command.
pub fn inverse_map(f: &Vec3, coeffs: &ThrustCoefficients) -> Result<AgentCommand> {
    let thrust = f.norm();
    if !thrust.is_finite() {
        return Err(Error::InvalidInput("non-finite force".into()));
    }
    if thrust == 0.0 {
        return Ok(AgentCommand::default());
    }
    let eta_x = (-f.y / thrust).clamp(-1.0, 1.0).asin();
    let cos_eta_x = eta_x.cos();
    if cos_eta_x <= f64::EPSILON {
        return Err(Error::GimbalSingularity);
    }
    // cos(eta_x) > 0 on the admissible range, so sgn(cos eta_x) = +1
    let eta_y = f.x.atan2(f.z);
    let omega = (thrust / coeffs.gain()).sqrt();
    Ok(AgentCommand { eta_x, eta_y, omega })
}

/// The 6 x 3n matrix mapping stacked agent forces to the team wrench.
pub fn effectiveness_matrix(cfg: &TeamConfig) -> DMatrix<f64> {
    let n = cfg.n();
    let mut m = DMatrix::zeros(6, 3 * n);
    for (i, agent) in cfg.agents.iter().enumerate() {
        let r = *cfg.agent_rotation(i).matrix();
        m.view_mut((0, 3 * i), (3, 3)).copy_from(&(skew(&agent.position) * r));
        m.view_mut((3, 3 * i), (3, 3)).copy_from(&r);
    }
    m
}

/// `M(Xi) f` as a wrench.
pub fn wrench_of(m: &DMatrix<f64>, f: &ForceStack) -> Wrench {
    let u = m * &f.0;
    Wrench::new(Vec3::new(u[0], u[1], u[2]), Vec3::new(u[3], u[4], u[5]))
}

/// Team mass and inertia about the team centre of mass.
pub fn team_inertia(cfg: &TeamConfig) -> (f64, Mat3) {
    let mut mass = cfg.m0;
    let mut j = cfg.j0;
    for a in &cfg.agents {
        mass += a.mass;
        let p = skew(&a.position);
        j -= a.mass * p * p;
    }
    (mass, j)
}

/// Number of agents aligned with the team frame (even multiples of pi/2) and
/// the number rotated by an odd multiple.
pub fn count_orientations(cfg: &TeamConfig) -> (usize, usize) {
    let n_x = cfg
        .agents
        .iter()
        .filter(|a| yaw_quadrant(a.psi).is_some_and(|m| m.rem_euclid(2) == 0))
        .count();
    (n_x, cfg.n() - n_x)
}

/// Equal split of the gravity-compensating force across agents.
pub fn hover_stack(cfg: &TeamConfig, gravity: f64) -> ForceStack {
    let (mass, _) = team_inertia(cfg);
    let per_agent = Vec3::new(0.0, 0.0, mass * gravity / cfg.n() as f64);
    let forces: Vec<Vec3> = (0..cfg.n()).map(|i| cfg.agent_rotation(i).inverse() * per_agent).collect();
    ForceStack::from_agents(&forces)
}
