//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("points {0:?} and {1:?} are not nearest neighbors")]
    NotAdjacent(Vec<i64>, Vec<i64>),

    #[error("point {0:?} has odd coordinate sum; the even sublattice is required")]
    OddPoint(Vec<i64>),

    #[error("point {point:?} lies outside the stored box of radius {radius}")]
    PointOutsideBox { point: Vec<i64>, radius: i64 },

    #[error("bond at {point:?} (axis {axis}) lies outside the stored box of radius {radius}")]
    BondOutsideBox {
        point: Vec<i64>,
        axis: usize,
        radius: i64,
    },

    #[error("requested capacity {required} exceeds the addressable limit {limit}")]
    CapacityExceeded { required: u128, limit: u128 },

    #[error("enumeration budget of {budget} exceeded (would need {required}); use the sampled mode")]
    BudgetExceeded { budget: u64, required: u64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("time horizon {horizon} does not fit a box of radius {radius}")]
    HorizonTooLarge { horizon: u64, radius: i64 },

    #[error("unsupported file format version {found} (this build reads up to {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    #[error("file truncated or malformed: {0}")]
    MalformedFile(String),

    #[error("bad magic bytes: expected \"RCLB\"")]
    BadMagic,

    #[error("isoperimetric profile vanishes at measure {at}; threshold is infinite")]
    ProfileVanishes { at: f64 },

    #[error("chain precondition violated: {0}")]
    ChainPrecondition(String),

    #[error("trap pattern does not match the environment: {0}")]
    TrapMismatch(String),

    #[error("not enough data points: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("series values are dominated by their truncation error bounds")]
    TruncationDominated,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
