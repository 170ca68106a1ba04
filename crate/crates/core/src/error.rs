use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid belief: {0}")]
    InvalidBelief(String),

    #[error("action index {action} out of range (n_actions = {n_actions})")]
    InvalidAction { action: usize, n_actions: usize },

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("observation {observation} has zero likelihood under the current belief")]
    ZeroLikelihoodObservation { observation: usize },

    #[error("Dirichlet row (s={state}, a={action}) has zero total count")]
    AllZeroCounts { state: usize, action: usize },

    #[error("value iteration did not converge after {sweeps} sweeps (residual {residual:e})")]
    NonconvergenceAfterMaxIterations { sweeps: usize, residual: f64 },

    #[error("model must be fully observable for this operation")]
    NotFullyObservable,

    #[error("subjective task model has not been solved")]
    UnsolvedStm,

    #[error("model too large for the exact oracle: {0}")]
    ModelTooLarge(String),

    #[error("episode already terminated")]
    EpisodeTerminated,

    #[error("invalid layout: {0}")]
    InvalidLayout(String),

    #[error("noise out of range: base {base} + 2*epsilon {epsilon} exceeds 1")]
    NoiseOutOfRange { base: f64, epsilon: f64 },

    #[error("particle grid is empty")]
    EmptyGrid,

    #[error("particle belief has no positive weight")]
    DegenerateBelief,

    #[error("every particle was eliminated by the observed response")]
    AllParticlesEliminated,

    #[error("no surviving particles and no archived prior to fall back on")]
    NoSurvivors,

    #[error("unknown rollout heuristic `{0}`")]
    UnknownHeuristic(String),

    #[error("matrix is not row-stochastic: {0}")]
    NonStochasticMatrix(String),

    #[error("matrix is not deterministic (row {0} is not one-hot)")]
    NotDeterministic(usize),

    #[error("dimension {dim} too large for exact value-of-observation (max {max})")]
    DimensionTooLargeForExact { dim: usize, max: usize },

    #[error("belief entry {value:e} at state {state} is below the floor {mu:e}")]
    BeliefFloorViolated { state: usize, value: f64, mu: f64 },

    #[error("too many rocks: {0} (max 4)")]
    TooManyRocks(usize),

    #[error("linear program failed: {0}")]
    LinearProgram(String),

    #[error("malformed summary: {0}")]
    MalformedSummary(String),

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
