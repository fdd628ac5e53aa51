use thiserror::Error;

#[derive(Debug, Error)]
pub enum GameError {
    #[error("malformed game: {location}: {message}")]
    Malformed { location: String, message: String },
    #[error("invalid correlated action at state {state}: {message}")]
    InvalidAction { state: usize, message: String },
    #[error("discount factor must lie in [0, 1), got {0}")]
    Discount(f64),
    #[error("game failed validation: {0}")]
    Invalid(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl GameError {
    pub(crate) fn malformed(location: impl Into<String>, message: impl Into<String>) -> Self {
        GameError::Malformed {
            location: location.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error("iteration cap of {cap} reached (residual {residual:e})")]
    IterationCap { cap: usize, residual: f64 },
    #[error("linear program failed: {0}")]
    Lp(String),
    #[error("singular linear system in {0}")]
    Singular(&'static str),
}

#[derive(Debug, Error)]
pub enum StructureError {
    #[error("transient induction stalled; states never reach a communicating set: {stuck:?}")]
    TransientStalled { stuck: Vec<usize> },
    #[error("set {set:?} does not lead to {target:?} without leaving it")]
    TravelInfeasible { set: Vec<usize>, target: Vec<usize> },
    #[error("recurrent-point enumeration needs {count} profiles, above the guard of {guard}")]
    TooManyProfiles { count: f64, guard: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("communicating set {set:?} could not be classified as type A or type B")]
    Unclassifiable { set: Vec<usize> },
    #[error("delta search for set {set:?} fell below {floor:e}: {detail}")]
    DeltaSearch {
        set: Vec<usize>,
        floor: f64,
        detail: String,
    },
    #[error("invalid exit weights: {0}")]
    InvalidWeights(String),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Solve(#[from] SolveError),
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Game(#[from] GameError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Structure(#[from] StructureError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error("invalid configuration: {0}")]
    Config(String),
}
