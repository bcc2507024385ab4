use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A parameter violates one of its invariants. `field` uses the config key.
    #[error("invalid parameter `{field}`: {message}")]
    InvalidParameter { field: &'static str, message: String },

    #[error("operation requires a finite population size N")]
    RequiresFinitePopulation,

    #[error("no auxiliary variation: the auxiliary quadratic term is {nq}")]
    NoAuxiliaryVariation { nq: f64 },

    #[error("invalid population spec: {0}")]
    InvalidSpec(String),

    #[error("sample size {n} exceeds population size {population}")]
    SampleTooLarge { n: usize, population: usize },

    #[error("sample has no observed units")]
    EmptySample,

    #[error("ratio undefined: x* = {x_star} is too close to zero relative to X = {x_bar}")]
    RatioUndefined { x_star: f64, x_bar: f64 },

    #[error("parameters do not match the population: {field} is {expected} in the config but {actual} in the population")]
    PopulationMismatch {
        field: &'static str,
        expected: f64,
        actual: f64,
    },

    #[error("{flagged} of {reps} replications had an undefined ratio (limit is 1%)")]
    TooManyRatioUndefined { flagged: u64, reps: u64 },

    #[error("grid must contain at least one point")]
    EmptyGrid,

    #[error("missing column `{0}`")]
    MissingColumn(&'static str),

    #[error("row {row}, column `{column}`: cannot parse {value:?}")]
    BadCell {
        row: usize,
        column: &'static str,
        value: String,
    },

    #[error("dataset invalid: {0}")]
    InvalidDataset(String),

    #[error("error variance exceeds observed variance for {variable} (indirect estimate {estimate})")]
    ErrorVarianceExceedsObserved { variable: &'static str, estimate: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    ConfigParse(#[from] toml::de::Error),

    #[error("config write error: {0}")]
    ConfigWrite(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            message: message.into(),
        }
    }

    /// True for errors caused by bad input values (as opposed to I/O).
    pub fn is_validation(&self) -> bool {
        !matches!(self, Error::Io { .. })
    }
}
