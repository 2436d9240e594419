use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("theta {theta} outside the admissible interval ({lo}, {hi}); the state sum diverges")]
    ThetaOutOfRange { theta: f64, lo: f64, hi: f64 },

    #[error("density {rho} outside the open interval ({lo}, {hi})")]
    DensityOutOfRange { rho: f64, lo: f64, hi: f64 },

    #[error("truncation insufficient: {0}")]
    Truncation(String),

    #[error("root finding did not converge: {0}")]
    Convergence(String),

    #[error("stochastic domination violated at z={at}: lower cdf {lower_cdf} < upper cdf {upper_cdf}")]
    DominationViolated {
        at: i64,
        lower_cdf: f64,
        upper_cdf: f64,
    },

    #[error("wraparound guard: ring of {l} sites is too small, at least {required} needed")]
    WraparoundGuard { l: usize, required: usize },

    #[error("occupancy {value} at site {site} left the capped window [{lo}, {hi}]")]
    OccupancyCap {
        site: usize,
        value: i64,
        lo: i64,
        hi: i64,
    },

    #[error("rates are unbounded on an infinite state space; configure an occupancy cap")]
    UnboundedRates,

    #[error("state space of {0} states exceeds the enumeration limit")]
    StateSpaceTooLarge(u128),

    #[error("finite-difference step degenerate near the density boundary at rho={0}")]
    StepDegenerate(f64),

    #[error("site index {index} outside the safe window of a ring with {l} sites")]
    IndexOutOfWindow { index: i64, l: usize },

    #[error("label bookkeeping: {0}")]
    Bookkeeping(String),

    #[error("refresh probability {0} outside [0, 1]")]
    NegativeProbability(f64),

    #[error("need at least {need} points, got {got}")]
    InsufficientPoints { need: usize, got: usize },

    #[error("direction V={0} equals the characteristic speed; the diffusive variance D vanishes")]
    DegenerateDirection(f64),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
