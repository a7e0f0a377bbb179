use thiserror::Error;

use crate::lp::LpStatus;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("binomial coefficient C({n}, {k}) overflows 128-bit arithmetic")]
    BinomialOverflow { n: u64, k: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid rule table: {0}")]
    InvalidRule(String),

    #[error("invalid game: {0}")]
    InvalidGame(String),

    #[error("unknown resource id `{0}`")]
    UnknownResource(String),

    #[error("unknown {kind} `{name}` (known: {known})")]
    UnknownName {
        kind: &'static str,
        name: String,
        known: String,
    },

    #[error("instance too large for oracle: {size} exceeds cap {cap}")]
    TooLarge { size: u128, cap: u128 },

    #[error("linear program is malformed: {0}")]
    MalformedLp(String),

    #[error("linear program solver failed numerically: {0}")]
    Numerical(String),

    #[error("linear program ended with status {0:?}, expected Optimal")]
    NotOptimal(LpStatus),

    #[error("theta is infeasible for the primal program: {0}")]
    InfeasibleTheta(String),

    #[error("no equilibrium found under the supplied objective")]
    NoEquilibrium,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
