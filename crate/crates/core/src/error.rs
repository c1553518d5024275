use thiserror::Error;

/// Every failure the toolkit reports. Each variant maps to a stable
/// machine-readable code via [`Error::code`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("duplicate node `{0}`")]
    DuplicateNode(String),
    #[error("duplicate edge id `{0}`")]
    DuplicateEdgeId(String),
    #[error("edge `{0}` is a self-loop")]
    SelfLoop(String),
    #[error("graph contains a cycle: {}", .0.join(" -> "))]
    CycleDetected(Vec<String>),
    #[error("client `{0}` has outgoing edges")]
    ClientNotSink(String),
    #[error("client `{0}` has no incoming edges")]
    IsolatedClient(String),
    #[error("edge `{0}` has a negative capacity")]
    NegativeCapacity(String),
    #[error("edge `{0}` has a non-positive cost")]
    NonpositiveCost(String),
    #[error("no source can reach client `{0}`")]
    EmptyReachableSet(String),
    #[error("no rate given for edge `{0}`")]
    UnknownEdgeRate(String),
    #[error("entropy table has no entry for subset {{{}}}", .0.join(","))]
    UnknownSubset(Vec<String>),
    #[error("invalid source model: {0}")]
    InvalidSourceModel(String),
    #[error("operands live in different fields (q = {0} vs q = {1})")]
    ModulusMismatch(u64, u64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("{0} is not a prime modulus")]
    NotPrime(u64),
    #[error("matrix dimensions do not agree: {0}")]
    DimensionMismatch(String),
    #[error("linear system is inconsistent")]
    Inconsistent,
    #[error("matrix is rank deficient (rank {rank}, need {needed})")]
    RankDeficient { rank: usize, needed: usize },
    #[error("ground set of size {size} exceeds the limit {limit}")]
    GroundTooLarge { size: usize, limit: usize },
    #[error("min-norm-point did not converge within {iterations} iterations (best value {best_value} at {best_set:?})")]
    MaxIterationsExceeded {
        iterations: usize,
        best_set: Vec<usize>,
        best_value: String,
    },
    #[error("instance is infeasible for client `{client}`")]
    Infeasible { client: String },
    #[error("client `{client}` cannot reach the whole source (H = {reached} < {total})")]
    ReconstructabilityViolated {
        client: String,
        reached: String,
        total: String,
    },
    #[error("constraint budget exceeded: {rows} rows > {limit}")]
    BudgetExceeded { rows: usize, limit: usize },
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),
    #[error("network coding needs the finite linear source model")]
    NotLinearModel,
    #[error("rates do not support a multicast for client `{0}`")]
    InfeasibleRates(String),
    #[error("blocklength scale {scale} exceeds the limit {limit}")]
    ScaleOverflow { scale: String, limit: u64 },
    #[error("field size q = {q} must exceed the number of clients k = {clients}")]
    FieldTooSmall { q: u64, clients: usize },
    #[error("no assignment reached full rank in {attempts} attempts (ranks {ranks:?})")]
    VerificationFailedAllAttempts {
        attempts: usize,
        ranks: Vec<(String, usize)>,
    },
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse(_) => "Parse",
            Error::UnknownNode(_) => "UnknownNode",
            Error::DuplicateNode(_) => "DuplicateNode",
            Error::DuplicateEdgeId(_) => "DuplicateEdgeId",
            Error::SelfLoop(_) => "SelfLoop",
            Error::CycleDetected(_) => "CycleDetected",
            Error::ClientNotSink(_) => "ClientNotSink",
            Error::IsolatedClient(_) => "IsolatedClient",
            Error::NegativeCapacity(_) => "NegativeCapacity",
            Error::NonpositiveCost(_) => "NonpositiveCost",
            Error::EmptyReachableSet(_) => "EmptyReachableSet",
            Error::UnknownEdgeRate(_) => "UnknownEdgeRate",
            Error::UnknownSubset(_) => "UnknownSubset",
            Error::InvalidSourceModel(_) => "InvalidSourceModel",
            Error::ModulusMismatch(..) => "ModulusMismatch",
            Error::DivisionByZero => "DivisionByZero",
            Error::NotPrime(_) => "NotPrime",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::Inconsistent => "Inconsistent",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::GroundTooLarge { .. } => "GroundTooLarge",
            Error::MaxIterationsExceeded { .. } => "MaxIterationsExceeded",
            Error::Infeasible { .. } => "Infeasible",
            Error::ReconstructabilityViolated { .. } => "ReconstructabilityViolated",
            Error::BudgetExceeded { .. } => "BudgetExceeded",
            Error::InvalidParameters(_) => "InvalidParameters",
            Error::NotLinearModel => "NotLinearModel",
            Error::InfeasibleRates(_) => "InfeasibleRates",
            Error::ScaleOverflow { .. } => "ScaleOverflow",
            Error::FieldTooSmall { .. } => "FieldTooSmall",
            Error::VerificationFailedAllAttempts { .. } => "VerificationFailedAllAttempts",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
