use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("every active firm fell below cost at stage {stage}")]
    AllFirmsExit { stage: usize },

    #[error("surviving firms have zero total demand, redistribution undefined")]
    DegenerateRedistribution,

    #[error("price {price} of agent {agent} outside [{lo}, {hi}]")]
    PriceOutOfBounds { agent: usize, price: f64, lo: f64, hi: f64 },

    #[error("profile has {found} policies, market has {expected} agents")]
    PolicyCount { expected: usize, found: usize },

    #[error("policy of agent {agent} needs demand observations")]
    ObservationMismatch { agent: usize },

    #[error("Newton iteration stopped after {iterations} steps with residual {residual:e}")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("solution violates constraint: {0}")]
    ConstraintViolated(String),

    #[error("stage {stage} linear system is singular")]
    SingularStageSystem { stage: usize },

    #[error("agent {agent} mean utility is non-finite at iteration {iteration}")]
    DivergedTraining { iteration: usize, agent: usize },

    #[error("opponent {agent} is stochastic; set a Monte Carlo sample count")]
    OpponentStochastic { agent: usize },

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    #[error("empty input")]
    EmptyInput,

    #[error("malformed profile file: {0}")]
    ProfileFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code, used by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidConfig(_) => "invalid_config",
            Error::AllFirmsExit { .. } => "all_firms_exit",
            Error::DegenerateRedistribution => "degenerate_redistribution",
            Error::PriceOutOfBounds { .. } => "price_out_of_bounds",
            Error::PolicyCount { .. } => "policy_count",
            Error::ObservationMismatch { .. } => "observation_mismatch",
            Error::NoConvergence { .. } => "no_convergence",
            Error::ConstraintViolated(_) => "constraint_violated",
            Error::SingularStageSystem { .. } => "singular_stage_system",
            Error::DivergedTraining { .. } => "diverged_training",
            Error::OpponentStochastic { .. } => "opponent_stochastic",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::ConfigMismatch(_) => "config_mismatch",
            Error::EmptyInput => "empty_input",
            Error::ProfileFormat(_) => "profile_format",
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::Json(_) => "json",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
