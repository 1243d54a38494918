use alloc::string::String;

use crate::panel::ValidationReport;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// Panel failed validation; the report lists every violated invariant.
    #[error("invalid panel: {0}")]
    InvalidPanel(ValidationReport),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("period out of range: {0}")]
    PeriodOutOfRange(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("invalid exposure configuration: {0}")]
    InvalidExposureConfig(String),

    /// A raw exposure value is not covered by any coarsening bin.
    #[error("exposure value {value} at unit {unit}, period {period} exceeds the top bin")]
    ExposureOutOfBins {
        unit: usize,
        period: usize,
        value: f64,
    },

    #[error("unknown exposure label `{0}`")]
    UnknownLabel(String),

    #[error("empty group: {0}")]
    EmptyGroup(String),

    #[error("missing first-stage basis: {0}")]
    MissingBasis(String),

    /// The stacked system cannot be inverted; inference is aborted.
    #[error("singular stacked system: {0}")]
    SingularSystem(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
