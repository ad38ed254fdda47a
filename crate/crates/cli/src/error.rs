//! CLI error taxonomy, mapped onto process exit codes: 1 for usage, 2 for
//! data problems, 3 for numeric failures.

use std::fmt;

use volcast_core::baselines::BaselineError;
use volcast_core::cvae::CvaeError;
use volcast_core::date::DateError;
use volcast_core::evaluation::EvalError;
use volcast_core::features::FeatureError;
use volcast_core::forecaster::ForecastError;
use volcast_core::linalg::LinalgError;
use volcast_core::nn::NnError;
use volcast_core::persist::PersistError;

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation or configuration.
    Usage(String),
    /// Unreadable, unparseable, or inconsistent input data.
    Data(String),
    /// Estimation or training failed numerically.
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Data(msg) => write!(f, "data error: {msg}"),
            CliError::Numeric(msg) => write!(f, "numeric failure: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<DateError> for CliError {
    fn from(e: DateError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<FeatureError> for CliError {
    fn from(e: FeatureError) -> Self {
        match e {
            FeatureError::DegenerateSeries { .. } | FeatureError::NotEnoughTrainObs { .. } => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<CvaeError> for CliError {
    fn from(e: CvaeError) -> Self {
        match e {
            CvaeError::Divergence { .. } | CvaeError::NonPositiveVariance => {
                CliError::Numeric(e.to_string())
            }
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<ForecastError> for CliError {
    fn from(e: ForecastError) -> Self {
        match e {
            ForecastError::Cvae(inner) => CliError::from(inner),
            ForecastError::Feature(inner) => CliError::from(inner),
            other => CliError::Data(other.to_string()),
        }
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::SeriesTooShort { .. } | BaselineError::InsufficientData { .. } => {
                CliError::Data(e.to_string())
            }
            other => CliError::Numeric(other.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<PersistError> for CliError {
    fn from(e: PersistError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<NnError> for CliError {
    fn from(e: NnError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<LinalgError> for CliError {
    fn from(e: LinalgError) -> Self {
        CliError::Numeric(e.to_string())
    }
}
