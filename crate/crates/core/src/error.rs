use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors raised anywhere in the library.
///
/// Each variant maps to a stable `module/kind` code (see [`Error::code`]) so
/// the CLI can report which subsystem failed.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("routing matrix has no exit path (slice {slice:?}, condition estimate {condition:.3e})")]
    SingularRouting { slice: Option<usize>, condition: f64 },

    #[error("relative load of slice {slice} is undefined (zero total load)")]
    UndefinedRelativeLoad { slice: usize },

    #[error("zero-norm vector in load geometry of slice {slice}")]
    ZeroVector { slice: usize },

    #[error("degenerate geometry: {0} is numerically zero")]
    DegenerateGeometry(&'static str),

    #[error("BTD target {target} of slice {slice} is at or below the best-case BTD {floor}")]
    InfeasibleTarget { slice: usize, target: f64, floor: f64 },

    #[error("slice {slice} is overloaded: load {load} >= admissible limit {limit}")]
    SliceOverloaded { slice: usize, load: f64, limit: f64 },

    #[error("linear program is infeasible")]
    InfeasibleLp,

    #[error("linear program is unbounded")]
    UnboundedLp,

    #[error("solver stalled: {0}")]
    SolverStall(String),

    #[error("line search exhausted at iteration {iteration} (omega {omega:.3e})")]
    LineSearchExhausted { iteration: usize, omega: f64 },

    #[error("no convergence after {iterations} iterations (omega {omega:.3e}, max penalty {max_penalty:.3e})")]
    NoConvergence { iterations: usize, omega: f64, max_penalty: f64 },

    #[error("feasible polytope of slice {slice} is empty")]
    EmptyPolytope { slice: usize },

    #[error("slice {slice} cannot meet its target under static slicing (s*d = {value} <= 1)")]
    InfeasibleUnderSs { slice: usize, value: f64 },

    #[error("normalized BTD target of slice {slice} must exceed 1, got {target}")]
    InvalidTarget { slice: usize, target: f64 },

    #[error("horizon too short: {samples} post-warm-up samples, need {required}")]
    HorizonTooShort { samples: usize, required: usize },

    #[error("all Poisson means are zero")]
    AllZero,

    #[error("distance must be positive, got {0}")]
    NonpositiveDistance(f64),

    #[error("insufficient samples in sectors {0:?}")]
    InsufficientSamples(Vec<usize>),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable `module/kind` identifier.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "net-model/invalid",
            Error::SingularRouting { .. } => "net-model/singular-routing",
            Error::UndefinedRelativeLoad { .. } => "analytic-btd/undefined-relative-load",
            Error::ZeroVector { .. } => "net-model/zero-vector",
            Error::DegenerateGeometry(_) => "analytic-btd/degenerate-geometry",
            Error::InfeasibleTarget { .. } => "dimensioning/infeasible-target",
            Error::SliceOverloaded { .. } => "dimensioning/slice-overloaded",
            Error::InfeasibleLp => "dimensioning/infeasible-lp",
            Error::UnboundedLp => "dimensioning/unbounded-lp",
            Error::SolverStall(_) => "shaping-game/solver-stall",
            Error::LineSearchExhausted { .. } => "shaping-game/line-search-exhausted",
            Error::NoConvergence { .. } => "shaping-game/no-convergence",
            Error::EmptyPolytope { .. } => "shaping-game/empty-polytope",
            Error::InfeasibleUnderSs { .. } => "shaping-game/infeasible-under-ss",
            Error::InvalidTarget { .. } => "shaping-game/invalid-target",
            Error::HorizonTooShort { .. } => "mc-sim/horizon-too-short",
            Error::AllZero => "mc-sim/all-zero",
            Error::NonpositiveDistance(_) => "radio-env/nonpositive-distance",
            Error::InsufficientSamples(_) => "radio-env/insufficient-samples",
            Error::Config(_) => "exp-cli/config",
            Error::Io(_) => "exp-cli/io",
            Error::Csv(_) => "exp-cli/csv",
            Error::Json(_) => "exp-cli/json",
        }
    }
}
