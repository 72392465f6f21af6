use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("point coincides with a terminal (BS or STCM)")]
    DegeneratePoint,
    #[error("degenerate triangle: alpha + xi = {sum:e} rad")]
    DegenerateTriangle { sum: f64 },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("distance must be positive, got {0}")]
    NonPositiveDistance(f64),
    #[error("{0} is not a perfect square")]
    NotPerfectSquare(usize),
    #[error("sample covariance needs at least 2 symbols, got {0}")]
    TooFewSymbols(usize),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("singular information matrix (equilibrated condition number {condition:e})")]
    SingularInformation { condition: f64 },
    #[error("nuisance block of the information matrix is singular")]
    SingularNuisanceBlock,
    #[error("regressor has zero norm")]
    ZeroRegressor,
    #[error("{name} out of range: {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("invalid coding matrix: {0}")]
    InvalidCode(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{0} validation check(s) failed")]
    ValidationFailed(usize),
    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
