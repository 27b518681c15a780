use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error(transparent)]
    Core(#[from] oligopoly::Error),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },

    #[error("results table lacks column '{0}'")]
    MissingColumns(String),

    #[error("no result row matches '{0}'")]
    NoSuchCell(String),

    #[error("figure: {0}")]
    Figure(String),

    #[error("cannot read {path}")]
    Input { path: String, source: std::io::Error },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ExpError {
    /// Short machine-readable code printed by the command line front end.
    pub fn code(&self) -> &'static str {
        match self {
            ExpError::Core(e) => e.code(),
            ExpError::InvalidConfig(_) => "invalid_config",
            ExpError::Parse { .. } => "parse",
            ExpError::MissingColumns(_) => "missing_columns",
            ExpError::NoSuchCell(_) => "no_such_cell",
            ExpError::Figure(_) => "figure",
            ExpError::Input { .. } | ExpError::Io(_) => "io",
            ExpError::Csv(_) => "csv",
            ExpError::Json(_) => "json",
        }
    }

    /// Whether the failure stems from the invocation (bad flags, config or
    /// input files) rather than from running it.
    pub fn is_invocation_error(&self) -> bool {
        match self {
            ExpError::Core(e) => matches!(e, oligopoly::Error::InvalidConfig(_) | oligopoly::Error::ProfileFormat(_)),
            ExpError::InvalidConfig(_)
            | ExpError::Parse { .. }
            | ExpError::MissingColumns(_)
            | ExpError::NoSuchCell(_)
            | ExpError::Input { .. }
            | ExpError::Io(_) => true,
            _ => false,
        }
    }
}

pub(crate) fn open_input(path: &std::path::Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|source| ExpError::Input { path: path.display().to_string(), source })
}

pub(crate) fn read_input(path: &std::path::Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ExpError::Input { path: path.display().to_string(), source })
}

pub type Result<T, E = ExpError> = std::result::Result<T, E>;
