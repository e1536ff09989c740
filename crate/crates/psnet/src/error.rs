//! Error type shared by every module.

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Network description violates a structural invariant.
    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    /// Vector lengths disagree with the network dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A type or resource index is out of range.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// Removing a call from an empty class.
    #[error("state underflow: {0}")]
    StateUnderflow(String),

    /// An allocation violates a capacity constraint where feasibility is required.
    #[error("infeasible allocation: {0}")]
    InfeasibleAllocation(String),

    /// A control specification is malformed.
    #[error("invalid control: {0}")]
    InvalidControl(String),

    /// A control family was attached to a network whose incidence does not fit it.
    #[error("topology mismatch: {0}")]
    TopologyMismatch(String),

    /// A table-backed control was evaluated outside its domain with no tail rule.
    #[error("state outside table domain: {0}")]
    TableDomain(String),

    /// The allocation solver did not converge within its iteration cap.
    #[error("solver did not converge: {0}")]
    SolverFailure(String),

    /// A numeric limit did not stabilise within the probe budget.
    #[error("limit not resolved at horizon {horizon}: {context}")]
    LimitUnresolved { horizon: u64, context: String },

    /// A reduced chain shows growth, so no stationary law can be estimated.
    #[error("reduced chain appears unstable: {0}")]
    ReducedChainUnstable(String),

    /// Not enough data to compute the requested statistic.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A scalar parameter is outside its allowed range.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// A scan would visit more states than the configured cap.
    #[error("scan too large: {0}")]
    ScanTooLarge(String),

    /// Threshold search observed verdicts inconsistent with monotonicity in the parameter.
    #[error("non-monotone verdicts: {0}")]
    NonMonotoneVerdicts(String),

    /// Run configuration could not be loaded or merged.
    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line tool: 3 for validation
    /// problems, 4 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidNetwork(_)
            | Error::DimensionMismatch(_)
            | Error::IndexOutOfRange(_)
            | Error::StateUnderflow(_)
            | Error::InvalidControl(_)
            | Error::TopologyMismatch(_)
            | Error::TableDomain(_)
            | Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::Io(_)
            | Error::Json(_) => 3,
            Error::InfeasibleAllocation(_)
            | Error::SolverFailure(_)
            | Error::LimitUnresolved { .. }
            | Error::ReducedChainUnstable(_)
            | Error::InsufficientData(_)
            | Error::ScanTooLarge(_)
            | Error::NonMonotoneVerdicts(_) => 4,
        }
    }
}
