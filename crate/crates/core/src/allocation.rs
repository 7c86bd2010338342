//! Wrench allocation over bundled thrust-vectoring agents.
//!
//! [`ebrca`] walks the force stack toward the requested wrench along the
//! weighted pseudoinverse direction, stopping exactly where the first agent
//! meets its attainable-space boundary. That agent is frozen, its columns are
//! dropped from the effectiveness matrix, and the remaining residual is
//! re-allocated among the others. The achieved wrench change is always a
//! scalar multiple `c_u` of the requested one.
//!
//! [`rpi_baseline`] is the classic redistributed pseudoinverse: solve, clip
//! the agents that violate their limits, re-solve the residual with the rest.

use nalgebra::{DMatrix, DVector};

use crate::actuation::{wrench_of, ForceStack};
use crate::afs::{team_boundary_increment, AgentAfs, START_TOL};
use crate::frames::Wrench;
use crate::{Error, Result};

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-9;

/// Increments this close to zero mean the agent is pinned on its boundary.
pub const PINNED_TOL: f64 = 1e-9;

/// Per-agent flags; `true` marks an unsaturated agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SaturationFlags(pub Vec<bool>);

impl SaturationFlags {
    pub fn all_free(n: usize) -> Self {
        Self(vec![true; n])
    }

    pub fn any_free(&self) -> bool {
        self.0.iter().any(|&f| f)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllocationResult {
    pub f: ForceStack,
    /// Achieved fraction of the requested wrench change, in [0, 1].
    pub c_u: f64,
    pub iterations: usize,
    pub flags: SaturationFlags,
}

/// Effectiveness matrix with the columns of saturated agents zeroed.
pub fn truncated_effectiveness(m: &DMatrix<f64>, flags: &SaturationFlags) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, _) in flags.0.iter().enumerate().filter(|(_, &free)| !free) {
        out.columns_mut(3 * i, 3).fill(0.0);
    }
    out
}

pub fn numerical_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * max).count()
}

/// Weighted minimum-norm solution of `M_eps f = u_delta`. `weights` is the
/// diagonal of W; saturated agents receive exactly zero.
pub fn twa_step(
    u_delta: &Wrench,
    m: &DMatrix<f64>,
    flags: &SaturationFlags,
    weights: &DVector<f64>,
) -> Result<ForceStack> {
    if weights.len() != m.ncols() || weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
        return Err(Error::InvalidInput("weights must be positive, one per stack entry".into()));
    }
    let m_eps = truncated_effectiveness(m, flags);
    let rank = numerical_rank(&m_eps);
    if rank < 6 {
        return Err(Error::RankDeficient { rank });
    }
    let u = u_delta.to_vector();
    if u.iter().all(|&x| x == 0.0) {
        return Ok(ForceStack::zeros(m.ncols() / 3));
    }
    // W^-1 M^T (M W^-1 M^T)^-1 u
    let mut wm_t = m_eps.transpose();
    for (mut row, w) in wm_t.row_iter_mut().zip(weights.iter()) {
        row /= *w;
    }
    let gram = &m_eps * &wm_t;
    let u = DVector::from_column_slice(u.as_slice());
    let lambda = match gram.clone().cholesky() {
        Some(ch) => ch.solve(&u),
        None => gram.lu().solve(&u).ok_or(Error::RankDeficient { rank })?,
    };
    Ok(ForceStack(wm_t * lambda))
}

/// Exact bundled redistributed allocation with identity weights.
pub fn ebrca(
    u_d: &Wrench,
    m: &DMatrix<f64>,
    f0: &ForceStack,
    flags: SaturationFlags,
    afs: &AgentAfs,
) -> Result<AllocationResult> {
    ebrca_weighted(u_d, m, f0, flags, afs, &DVector::from_element(m.ncols(), 1.0))
}

pub fn ebrca_weighted(
    u_d: &Wrench,
    m: &DMatrix<f64>,
    f0: &ForceStack,
    mut flags: SaturationFlags,
    afs: &AgentAfs,
    weights: &DVector<f64>,
) -> Result<AllocationResult> {
    let n = f0.n();
    if m.nrows() != 6 || m.ncols() != 3 * n || flags.0.len() != n {
        return Err(Error::InvalidInput("effectiveness matrix, stack and flags disagree in size".into()));
    }
    if !u_d.is_finite() || !f0.is_finite() {
        return Err(Error::InvalidInput("non-finite wrench or stack".into()));
    }
    if let Some(agent) = (0..n).find(|&i| !afs.contains(&f0.agent(i), START_TOL)) {
        return Err(Error::InfeasibleInitial { agent });
    }

    let target = u_d.to_vector();
    let mut f = f0.clone();
    let mut c_u = 0.0;
    let mut iterations = 0;

    let requested = target - wrench_of(m, f0).to_vector();
    if requested.norm() <= 1e-12 * target.norm().max(1.0) {
        return Ok(AllocationResult { f, c_u: 1.0, iterations, flags });
    }

    for _ in 0..(2 * n + 2) {
        if !flags.any_free() || numerical_rank(&truncated_effectiveness(m, &flags)) < 6 {
            break;
        }
        let residual = Wrench::from_vector(&(target - wrench_of(m, &f).to_vector()));
        let f_delta = twa_step(&residual, m, &flags, weights)?;
        let (c_star, i_star) = team_boundary_increment(afs, &f, &f_delta, &flags.0)?;
        iterations += 1;

        if c_star >= 1.0 {
            f.0 += &f_delta.0;
            c_u = 1.0;
            break;
        }
        // c_star < 1 is finite, so some agent produced it
        let i_star = i_star.expect("finite increment names an agent");
        if c_star > PINNED_TOL {
            f.0.axpy(c_star, &f_delta.0, 1.0);
            c_u += (1.0 - c_u) * c_star;
        }
        flags.0[i_star] = false;
    }

    Ok(AllocationResult { f, c_u, iterations, flags })
}

/// Redistributed pseudoinverse allocation starting from the zero stack.
/// Returns the stack and the unallocated force `|u_fd - u_f|`.
pub fn rpi_baseline(u_d: &Wrench, m: &DMatrix<f64>, afs: &AgentAfs) -> Result<(ForceStack, f64)> {
    let n = m.ncols() / 3;
    let rank = numerical_rank(m);
    if rank < 6 {
        return Err(Error::RankDeficient { rank });
    }
    let target = DVector::from_column_slice(u_d.to_vector().as_slice());
    let mut flags = SaturationFlags::all_free(n);
    let mut fixed = ForceStack::zeros(n);

    let f = loop {
        let m_eps = truncated_effectiveness(m, &flags);
        let residual = &target - m * &fixed.0;
        let pinv = m_eps.pseudo_inverse(RANK_TOL * m.norm()).map_err(|e| Error::InvalidInput(e.into()))?;
        let mut candidate = ForceStack(&fixed.0 + pinv * residual);

        let violators: Vec<usize> =
            (0..n).filter(|&i| flags.0[i] && !afs.contains(&candidate.agent(i), START_TOL)).collect();
        if violators.is_empty() {
            break candidate;
        }
        for &i in &violators {
            fixed.set_agent(i, &afs.clamp(&candidate.agent(i)));
            flags.0[i] = false;
        }
        if !flags.any_free() {
            for &i in &violators {
                candidate.set_agent(i, &fixed.agent(i));
            }
            break fixed;
        }
    };

    let e_f = (u_d.f - wrench_of(m, &f).f).norm();
    Ok((f, e_f))
}
