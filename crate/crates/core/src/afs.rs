//! Attainable force spaces.
//!
//! An agent's attainable force space `D_i` is the set of thrust vectors
//! reachable under the gimbal limits and the maximum thrust. In the agent frame
//! it is the intersection of four polynomial inequalities in the force `r`:
//!
//! - thrust sphere: `|r|^2 <= sigma_tf^2`
//! - eta_x cone: `r_y^2 <= sin^2(sigma_x) |r|^2`
//! - eta_y wedge: `±r_x cos(sigma_y) - r_z sin(sigma_y) <= 0`
//!
//! Along a ray `r(c) = f0 + c d` each constraint is a polynomial of degree at
//! most two in `c`, so the first exit of the ray from `D_i` is the minimum over
//! constraints of the first upward zero crossing. `D_i` is not convex, but the
//! whole segment up to that first exit lies inside it.
//!
//! The team space is approximated by an elliptic cone whose semi-axes grow
//! linearly with the vertical force; a relaxation `s` shrinks the gimbal
//! limits used to build it.

use std::f64::consts::FRAC_PI_2;

use crate::actuation::{count_orientations, ActuationLimits, ForceStack, TeamConfig};
use crate::frames::Vec3;
use crate::{Error, Result};

/// Membership tolerance used when validating that a ray starts inside `D_i`.
pub const START_TOL: f64 = 1e-9;

/// Normalised constraint values within this band count as "on the boundary".
const ON_BOUNDARY: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AgentAfs {
    pub limits: ActuationLimits,
}

/// Which boundary family a ray hits first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Surface {
    EtaX,
    EtaY,
    Thrust,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryHit {
    /// Largest increment keeping the ray inside; `f64::INFINITY` when it never
    /// leaves.
    pub c: f64,
    pub surface: Surface,
}

impl BoundaryHit {
    pub const NONE: Self = Self { c: f64::INFINITY, surface: Surface::None };
}

impl AgentAfs {
    pub fn new(limits: ActuationLimits) -> Self {
        Self { limits }
    }

    /// Gimbal angles of a force, with `sgn(0) = +1` so that the eta_y formula
    /// stays defined at the eta_x singularity.
    fn angles(f: &Vec3) -> (f64, f64) {
        let t = f.norm();
        (((-f.y) / t).clamp(-1.0, 1.0).asin(), f.x.atan2(f.z))
    }

    /// `f` lies in the agent's attainable space up to `tol` (N for the thrust
    /// bound, rad for the angle bounds). The zero force is attainable.
    pub fn contains(&self, f: &Vec3, tol: f64) -> bool {
        if !f.iter().all(|x| x.is_finite()) {
            return false;
        }
        let t = f.norm();
        if t == 0.0 {
            return true;
        }
        let (eta_x, eta_y) = Self::angles(f);
        t <= self.limits.sigma_tf + tol
            && eta_x.abs() <= self.limits.sigma_x + tol
            && eta_y.abs() <= self.limits.sigma_y + tol
    }

    /// Saturates the gimbal angles and thrust of `f` independently and maps
    /// the result back to a force.
    pub fn clamp(&self, f: &Vec3) -> Vec3 {
        let t = f.norm();
        if t == 0.0 || !t.is_finite() {
            return Vec3::zeros();
        }
        let (eta_x, eta_y) = Self::angles(f);
        let l = &self.limits;
        let (ex, ey) = (eta_x.clamp(-l.sigma_x, l.sigma_x), eta_y.clamp(-l.sigma_y, l.sigma_y));
        crate::actuation::reduced_attitude(ex, ey) * t.min(l.sigma_tf)
    }

    /// Coefficients `(a, b, k)` of `a c^2 + b c + k <= 0` for every constraint
    /// along `f0 + c d`, in units normalised by the maximum thrust.
    fn ray_constraints(&self, f0: &Vec3, d: &Vec3) -> Vec<(Surface, [f64; 3])> {
        let scale = self.limits.sigma_tf;
        let (p, q) = (f0 / scale, d / scale);
        let mut out = Vec::with_capacity(4);

        out.push((Surface::Thrust, [q.norm_squared(), 2.0 * p.dot(&q), p.norm_squared() - 1.0]));

        if self.limits.sigma_x < FRAC_PI_2 {
            let s2 = self.limits.sigma_x.sin().powi(2);
            out.push((
                Surface::EtaX,
                [
                    q.y * q.y - s2 * q.norm_squared(),
                    2.0 * (p.y * q.y - s2 * p.dot(&q)),
                    p.y * p.y - s2 * p.norm_squared(),
                ],
            ));
        }

        let (sy, cy) = self.limits.sigma_y.sin_cos();
        for sign in [1.0, -1.0] {
            let lin = |v: &Vec3| sign * v.x * cy - v.z * sy;
            out.push((Surface::EtaY, [0.0, lin(&q), lin(&p)]));
        }
        out
    }

    /// Largest `c` such that `f0 + t d` stays in the attainable space for every
    /// `t` in `[0, c]`, together with the boundary family that ends the ray.
    pub fn boundary_increment(&self, f0: &Vec3, d: &Vec3) -> Result<BoundaryHit> {
        if !self.contains(f0, START_TOL) {
            return Err(Error::InvalidInput(format!("ray origin {f0:?} lies outside the attainable space")));
        }
        if !d.iter().all(|x| x.is_finite()) {
            return Err(Error::InvalidInput("non-finite ray direction".into()));
        }
        if d.iter().all(|&x| x == 0.0) {
            return Ok(BoundaryHit::NONE);
        }
        let dn = d.norm() / self.limits.sigma_tf;
        let mut best = BoundaryHit::NONE;
        for (surface, [a, b, k]) in self.ray_constraints(f0, d) {
            if let Some(c) = first_exit(a, b, k, dn) {
                if c < best.c {
                    best = BoundaryHit { c, surface };
                }
            }
        }
        Ok(best)
    }
}

/// Smallest `c >= 0` after which `a c^2 + b c + k` turns positive, given that
/// it is (nearly) nonpositive at `c = 0`. `dn` is the normalised ray speed and
/// sets the scale for the derivative tests.
fn first_exit(a: f64, b: f64, k: f64, dn: f64) -> Option<f64> {
    let a_tol = 1e-12 * dn * dn;
    let b_tol = 1e-12 * dn;

    if k >= -ON_BOUNDARY {
        // starts on the boundary: p(c) ~ c (a c + b)
        return if b > b_tol {
            Some(0.0)
        } else if b < -b_tol {
            (a > a_tol).then(|| -b / a)
        } else {
            (a > a_tol).then_some(0.0)
        };
    }

    if a.abs() <= a_tol {
        return (b > 0.0).then(|| -k / b);
    }
    let disc = b * b - 4.0 * a * k;
    if disc < 0.0 {
        // only possible for a < 0, where the polynomial stays negative
        return None;
    }
    let sq = disc.sqrt();
    let q = -0.5 * (b + b.signum() * sq);
    let (r1, r2) = if q == 0.0 { (0.0, 0.0) } else { (q / a, k / q) };
    let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
    if a > 0.0 {
        // negative between the roots, which bracket zero
        Some(hi.max(0.0))
    } else if lo > 0.0 {
        // positive between two positive roots
        Some(lo)
    } else {
        None
    }
}

/// Minimum boundary increment over unsaturated agents. Ties resolve to the
/// lowest index. Returns `(f64::INFINITY, None)` when no unsaturated agent
/// moves.
pub fn team_boundary_increment(
    afs: &AgentAfs,
    f0: &ForceStack,
    f_delta: &ForceStack,
    unsaturated: &[bool],
) -> Result<(f64, Option<usize>)> {
    if unsaturated.len() != f0.n() || f_delta.n() != f0.n() {
        return Err(Error::InvalidInput("stack and flag lengths differ".into()));
    }
    if !unsaturated.iter().any(|&u| u) {
        return Err(Error::NoUnsaturatedAgents);
    }
    let mut best = (f64::INFINITY, None);
    for i in (0..f0.n()).filter(|&i| unsaturated[i]) {
        let start = f0.agent(i);
        if !afs.contains(&start, START_TOL) {
            return Err(Error::InfeasibleInitial { agent: i });
        }
        let hit = afs.boundary_increment(&start, &f_delta.agent(i))?;
        if hit.c < best.0 {
            best = (hit.c, Some(i));
        }
    }
    Ok(best)
}

/// Portion of a semi-axis contributed by `n_k` of `n` agents with deflection
/// limit `sigma` at vertical force `z`.
pub fn semi_axis_g(n_k: usize, n: usize, sigma: f64, z: f64, sigma_tf: f64) -> f64 {
    if sigma >= FRAC_PI_2 {
        n_k as f64 * sigma_tf
    } else if n_k == 0 {
        0.0
    } else {
        (n_k as f64 / n as f64) * z.abs() * sigma.tan()
    }
}

/// Elliptic-cone approximation of the team attainable force space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AfsCone {
    pub n: usize,
    pub n_x: usize,
    pub n_y: usize,
    pub sigma_x: f64,
    pub sigma_y: f64,
    pub sigma_tf: f64,
    /// Relaxation in (0, 1].
    pub s: f64,
}

impl AfsCone {
    pub fn new(cfg: &TeamConfig, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidInput(format!("relaxation must lie in (0, 1], got {s}")));
        }
        let (n_x, n_y) = count_orientations(cfg);
        Ok(Self {
            n: cfg.n(),
            n_x,
            n_y,
            sigma_x: cfg.limits.sigma_x,
            sigma_y: cfg.limits.sigma_y,
            sigma_tf: cfg.limits.sigma_tf,
            s,
        })
    }

    pub fn with_relaxation(&self, s: f64) -> Result<Self> {
        if !(s > 0.0 && s <= 1.0) {
            return Err(Error::InvalidInput(format!("relaxation must lie in (0, 1], got {s}")));
        }
        Ok(Self { s, ..*self })
    }

    /// Maximum team thrust `n sigma_tf`.
    pub fn max_thrust(&self) -> f64 {
        self.n as f64 * self.sigma_tf
    }

    fn g(&self, n_k: usize, sigma: f64, z: f64) -> f64 {
        semi_axis_g(n_k, self.n, sigma, z, self.sigma_tf)
    }

    /// Semi-axes `(c_x, c_y)` of the cross-section at vertical force `z`.
    pub fn semi_axes(&self, z: f64) -> (f64, f64) {
        let (sx, sy) = (self.s * self.sigma_x, self.s * self.sigma_y);
        (self.g(self.n_x, sy, z) + self.g(self.n_y, sx, z), self.g(self.n_x, sx, z) + self.g(self.n_y, sy, z))
    }

    /// `(u_x/c_x)^2 + (u_y/c_y)^2` at height `u_z`. A zero semi-axis admits
    /// only a zero component along it; otherwise the ratio is infinite.
    pub fn ellipse_ratio(&self, u: &Vec3) -> f64 {
        let (cx, cy) = self.semi_axes(u.z);
        let term = |x: f64, c: f64| {
            if c > 0.0 {
                (x / c).powi(2)
            } else if x == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        };
        term(u.x, cx) + term(u.y, cy)
    }

    /// Membership with a relative slack on the quadratic and magnitude bounds.
    pub fn contains_with_slack(&self, u: &Vec3, slack: f64) -> bool {
        let max = self.max_thrust();
        u.iter().all(|x| x.is_finite())
            && u.z >= -slack * max
            && u.norm_squared() <= max * max * (1.0 + slack)
            && self.ellipse_ratio(u) <= 1.0 + slack
    }

    /// Membership in the upper nappe of the cone, closed at the boundary up to
    /// rounding.
    pub fn contains(&self, u: &Vec3) -> bool {
        self.contains_with_slack(u, 1e-12)
    }
}

/// Scale factor bringing `u` inside the team thrust magnitude bound.
pub fn scale_t_tf(u: &Vec3, cone: &AfsCone) -> f64 {
    let norm = u.norm();
    if norm == 0.0 {
        1.0
    } else {
        (cone.max_thrust() / norm).min(1.0)
    }
}

/// Lateral scale factor bringing an already magnitude-scaled force onto the
/// cone cross-section at its height. Zero at the apex when a lateral component
/// is present.
pub fn project_t_eta(u_scaled: &Vec3, cone: &AfsCone) -> f64 {
    let q = cone.ellipse_ratio(u_scaled);
    if q <= 1.0 {
        1.0
    } else if q.is_infinite() {
        0.0
    } else {
        1.0 / q.sqrt()
    }
}
