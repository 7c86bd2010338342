use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not skew-symmetric (asymmetry {0:.3e})")]
    NotSkew(f64),

    #[error("rotation axis is not unit length (norm {0})")]
    NonUnitAxis(f64),

    #[error("truncated effectiveness matrix has rank {rank}, at least 6 required")]
    RankDeficient { rank: usize },

    #[error("initial force of agent {agent} lies outside its attainable force space")]
    InfeasibleInitial { agent: usize },

    #[error("no unsaturated agents left")]
    NoUnsaturatedAgents,

    #[error("gimbal singularity: |eta_x| reached pi/2")]
    GimbalSingularity,

    #[error("allocation failed at t = {t:.3} s: {source}")]
    Allocation {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}
