use thiserror::Error;

/// Errors produced anywhere in the estimation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },

    #[error("line {line}: zero-impedance branch {from}-{to}")]
    ZeroImpedance { line: usize, from: u64, to: u64 },

    #[error("no reference bus: the case defines no buses")]
    NoReferenceBus,

    #[error("disconnected network: bus {0} is not reachable from the reference bus")]
    Disconnected(u64),

    #[error("invalid network: {0}")]
    InvalidNetwork(String),

    #[error("unknown measurement kind `{0}`")]
    UnknownKind(String),

    #[error("measurement {index} targets {what} {target}, which does not exist")]
    BadTarget {
        index: usize,
        what: &'static str,
        target: usize,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("objective is not finite at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        last: Box<crate::StateVector>,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("budget d = {d} is infeasible (total selection weight {total})")]
    InfeasibleBudget { d: usize, total: usize },

    #[error("{count} binary variables exceed the enumeration limit of {limit}")]
    TooManyBinaries { count: usize, limit: usize },

    #[error("all {0} starts failed")]
    AllStartsFailed(usize),

    #[error(
        "delta = {0}: equality constraints imposed as a pair of opposite localizing \
         blocks leave the relaxation without an interior point (Slater's condition fails); \
         use delta > 0"
    )]
    SlaterFailure(f64),

    #[error("moment basis would hold {size} monomials (limit {limit})")]
    BasisTooLarge { size: usize, limit: usize },

    #[error("SDP has {vars} moment variables; the solver accepts at most {limit}")]
    SdpTooLarge { vars: usize, limit: usize },

    #[error("moment {0:?} is not present in the moment vector")]
    MissingMoment(Vec<u16>),

    #[error("localizing order underflow: constraint needs half-degree {need}, relaxation order is {order}")]
    OrderUnderflow { need: usize, order: usize },

    #[error("{source_name} line {line}: {msg}")]
    Format {
        source_name: &'static str,
        line: usize,
        msg: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("step {step}: {source}")]
    Step { step: usize, source: Box<Error> },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
