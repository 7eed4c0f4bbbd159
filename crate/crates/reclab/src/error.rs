use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// The orbit came within `tol` of the singular set of the map.
    #[error("orbit entered the singular set (distance {distance:.3e} <= tolerance {tol:.3e})")]
    SingularOrbit { distance: f64, tol: f64 },

    #[error("empty sample")]
    EmptySample,

    #[error("ball measure estimate is zero at radius {radius:.6e}")]
    ZeroBallMeasure { radius: f64 },

    #[error("roof is not positive: value {value:.6e} at a sampled base point")]
    NonPositiveRoof { value: f64 },

    #[error(
        "roof integrability proxy failed: running means {partial:.6e} and {full:.6e} disagree"
    )]
    NonIntegrableRoof { partial: f64, full: f64 },

    #[error("flow ball is not a clean flow box: {reason}")]
    DirtyFlowBox { reason: String },

    #[error("horizon {horizon:.6e} exceeded before the requested event")]
    HorizonExceeded { horizon: f64 },

    #[error("hitting record truncated: requested hit {requested}, recorded {recorded}")]
    TruncatedRecord { requested: usize, recorded: usize },

    #[error("query {query:.6e} outside profile range (maximum {max:.6e})")]
    ProfileRangeExceeded { query: f64, max: f64 },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("unknown reference law `{0}`")]
    UnknownReference(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
