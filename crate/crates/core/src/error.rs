use thiserror::Error;

use crate::evt::GpdParams;

/// Broad classification used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// Bad parameters or configuration, detected before any computation.
    Validation,
    /// Malformed or inconsistent input data.
    Data,
    /// A numerical routine failed to produce a result.
    Internal,
}

#[derive(Debug, Error, PartialEq)]
pub enum EvtError {
    #[error("GPD mean is undefined for shape {shape} >= 1")]
    MeanUndefined { shape: f64 },
    #[error("probability {0} outside the open interval (0, 1)")]
    ProbabilityDomain(f64),
    #[error("GPD scale must be positive and finite, got {0}")]
    InvalidScale(f64),
    #[error("occurrence rate must lie in [0, 1], got {0}")]
    InvalidRate(f64),
    #[error("threshold must be finite and non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("need at least {needed} positive excesses for a fit, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("excesses must be finite and positive, got {0}")]
    InvalidSample(f64),
    #[error("excesses have zero variance; the tail cannot be fitted")]
    DegenerateData,
    #[error("likelihood maximization did not converge after {iterations} iterations")]
    NonConvergence {
        iterations: usize,
        best: GpdParams,
        log_likelihood: f64,
    },
    #[error("no daily values supplied")]
    EmptyInput,
}

#[derive(Debug, Error, PartialEq)]
pub enum SupplyError {
    #[error("square footage must be positive and finite, got {0}")]
    InvalidSquareFootage(f64),
    #[error("scale prediction requires shape < 1, got {0}")]
    ShapeTooLarge(f64),
    #[error("scale fit needs at least 3 points, got {0}")]
    InsufficientPoints(usize),
    #[error("scale fit points must be positive, got ({0}, {1})")]
    NonPositivePoint(f64, f64),
    #[error("scale fit points have no spread in square footage")]
    DegeneratePoints,
    #[error("no fit available for category `{0}`")]
    MissingCategory(String),
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("length mismatch: {fresh} supply entries but {selection} selection entries")]
    LengthMismatch { fresh: usize, selection: usize },
    #[error("duplicate donor id `{0}`")]
    DuplicateDonor(String),
    #[error("unknown donor category `{0}`")]
    UnknownCategory(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum DemandError {
    #[error("constant demand must be finite and non-negative, got {0}")]
    InvalidAmount(f64),
    #[error("gaussian demand needs a finite mean and sd >= 0, got mean {mean}, sd {sd}")]
    InvalidGaussian { mean: f64, sd: f64 },
}

#[derive(Debug, Error, PartialEq)]
pub enum GeoError {
    #[error("coordinate out of range: lat {lat}, lon {lon}")]
    CoordinateDomain { lat: f64, lon: f64 },
    #[error("cluster count {k} outside 1..={n}")]
    ClusterCount { k: usize, n: usize },
    #[error("unknown node id `{0}`")]
    UnknownId(String),
    #[error("missing distance between `{0}` and `{1}`")]
    MissingPair(String, String),
    #[error("invalid distance {km} between `{from}` and `{to}`")]
    InvalidDistance { from: String, to: String, km: f64 },
    #[error("warehouse id `{0}` not present")]
    MissingWarehouse(String),
    #[error("empty cluster")]
    EmptyCluster,
    #[error("donor `{0}` has no coordinates")]
    MissingCoordinates(String),
    #[error("circuity factor must be >= 1, got {0}")]
    InvalidCircuity(f64),
}

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("costs ({costs}) and supplies ({supplies}) differ in length")]
    LengthMismatch { costs: usize, supplies: usize },
    #[error("invalid {what} value {value} at index {index}")]
    InvalidValue {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("invalid demand {0}")]
    InvalidDemand(f64),
    #[error("brute force limited to {max} units, got {got}")]
    TooLarge { max: usize, got: usize },
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("no donors remain after filtering")]
    NoDonors,
    #[error("sweep grid is empty")]
    EmptyGrid,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{path}: {source}")]
    File {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Crate-wide error, tagged by the module that raised it.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Evt(#[from] EvtError),
    #[error(transparent)]
    Supply(#[from] SupplyError),
    #[error(transparent)]
    Demand(#[from] DemandError),
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] IoError),
}

impl Error {
    pub fn module(&self) -> &'static str {
        match self {
            Error::Evt(_) => "evt",
            Error::Supply(_) => "supply",
            Error::Demand(_) => "demand",
            Error::Geo(_) => "geo",
            Error::Solver(_) => "solver",
            Error::Sim(_) => "sim",
            Error::Io(_) => "io",
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Evt(EvtError::NonConvergence { .. }) => ErrorClass::Internal,
            Error::Evt(
                EvtError::InsufficientData { .. }
                | EvtError::InvalidSample(_)
                | EvtError::DegenerateData
                | EvtError::EmptyInput,
            ) => ErrorClass::Data,
            Error::Supply(
                SupplyError::DuplicateDonor(_)
                | SupplyError::UnknownCategory(_)
                | SupplyError::InsufficientPoints(_)
                | SupplyError::NonPositivePoint(..)
                | SupplyError::DegeneratePoints,
            ) => ErrorClass::Data,
            Error::Geo(
                GeoError::UnknownId(_)
                | GeoError::MissingPair(..)
                | GeoError::InvalidDistance { .. }
                | GeoError::MissingWarehouse(_)
                | GeoError::MissingCoordinates(_),
            ) => ErrorClass::Data,
            Error::Sim(SimError::NoDonors) => ErrorClass::Data,
            Error::Io(_) => ErrorClass::Data,
            _ => ErrorClass::Validation,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
