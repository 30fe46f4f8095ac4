use thiserror::Error;

/// Errors raised by the solvers, samplers and verifiers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid interval: {0}")]
    InvalidInterval(String),

    #[error("diffusion coefficient must be positive, got sigma({x}) = {value}")]
    NonPositiveDiffusion { x: f64, value: f64 },

    #[error("speed density must be positive, got m'({x}) = {value}")]
    NonPositiveSpeed { x: f64, value: f64 },

    #[error("kill rate must be nonnegative, got c({x}) = {value}")]
    NegativeKillRate { x: f64, value: f64 },

    #[error("scale function is not strictly increasing near x = {x}")]
    NonMonotoneScale { x: f64 },

    #[error("coefficient is not finite at x = {x} ({what})")]
    NonFinite { x: f64, what: &'static str },

    #[error("inconsistent dual specification at x = {x}: {detail}")]
    InconsistentSpec { x: f64, detail: String },

    #[error("quadrature did not converge for {what}; partial integrals: {partials:?}")]
    QuadratureNonConvergence { what: String, partials: Vec<f64> },

    #[error("boundary condition cannot be imposed: {0}")]
    BoundaryCondition(String),

    #[error("diffusion is not upward-transient: {0}")]
    NotTransient(String),

    #[error("argument out of domain: {0}")]
    Domain(String),

    #[error("Laplace inversion unstable at t = {t}: order {order} gives {value}, order {lower_order} gives {lower_value}")]
    InversionUnstable {
        t: f64,
        order: usize,
        value: f64,
        lower_order: usize,
        lower_value: f64,
    },

    #[error("PDE time step {dt} exceeds the accuracy bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },

    #[error("bridge step normalization off by {deviation:.3e} at t = {t} (spatial grid too coarse)")]
    BridgeNormalization { t: f64, deviation: f64 },

    #[error("too few samples for {test}: {n} (need at least {min})")]
    TooFewSamples { test: &'static str, n: usize, min: usize },

    #[error("reference CDF is not monotone near x = {x}")]
    NonMonotoneCdf { x: f64 },

    #[error("all expected counts are zero")]
    ZeroExpected,

    #[error("functional rejected: {0}")]
    RejectedFunctional(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("unknown spec '{name}'; valid presets: {valid}")]
    UnknownSpec { name: String, valid: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("stage '{stage}' failed: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
