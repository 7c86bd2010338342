//! Control allocation and full-pose tracking for over-actuated,
//! thrust-vectoring modular team UAVs.
//!
//! The crate is organised bottom-up:
//!
//! - [`frames`]: rotation helpers and the twist/wrench value types.
//! - [`actuation`]: team configuration, the per-agent thrust model, the
//!   effectiveness matrix and the force-to-command inverse mapping.
//! - [`afs`]: attainable force spaces, both the exact per-agent set with its
//!   closed-form ray/boundary intersection and the elliptic-cone team
//!   approximation used by the controller.
//! - [`allocation`]: truncated wrench allocation, the exact bundled
//!   redistributed allocator and a redistributed-pseudoinverse baseline.
//! - [`controller`]: attitude planner, force-projected control law and
//!   Lyapunov diagnostics.
//! - [`dynamics`]: rigid-body team dynamics, the tilting-hover reference and
//!   the closed-loop scenario runner.
//! - [`config`]: scenario configuration files.

pub mod actuation;
pub mod afs;
pub mod allocation;
pub mod config;
pub mod controller;
pub mod dynamics;
pub mod error;
pub mod frames;

pub use error::{Error, Result};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;
