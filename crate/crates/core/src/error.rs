use thiserror::Error;

/// Errors raised by the reconstruction toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is rank deficient (|R[{index},{index}]| = {value:e})")]
    RankDeficient { index: usize, value: f64 },

    #[error("input basis is not orthonormal (deviation {0:e})")]
    NotOrthonormal(f64),

    #[error("sampling mask frame is empty")]
    EmptyMask,

    #[error("coil sensitivity {coil} has length {len}, expected {expected}")]
    CoilLengthMismatch {
        coil: usize,
        len: usize,
        expected: usize,
    },

    #[error("column {column} is underdetermined: {measurements} measurements for rank {rank}")]
    UnderdeterminedColumn {
        column: usize,
        measurements: usize,
        rank: usize,
    },

    #[error("column {0} has a rank-deficient system matrix")]
    SingularColumn(usize),

    #[error("mini-batch {batch} has {frames} frames, fewer than rank {rank}")]
    BatchTooSmall {
        batch: usize,
        frames: usize,
        rank: usize,
    },

    #[error(
        "reduction factor {reduction} leaves {lines} lines, fewer than the 4 forced central lines"
    )]
    ReductionTooHigh { reduction: f64, lines: usize },

    #[error("dense operator with n = {0} exceeds the 4096 limit")]
    OperatorTooLarge(usize),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed container: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short stable name of the variant, used in CLI diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::RankDeficient { .. } => "RankDeficient",
            Error::NotOrthonormal(_) => "NotOrthonormal",
            Error::EmptyMask => "EmptyMask",
            Error::CoilLengthMismatch { .. } => "CoilLengthMismatch",
            Error::UnderdeterminedColumn { .. } => "UnderdeterminedColumn",
            Error::SingularColumn(_) => "SingularColumn",
            Error::BatchTooSmall { .. } => "BatchTooSmall",
            Error::ReductionTooHigh { .. } => "ReductionTooHigh",
            Error::OperatorTooLarge(_) => "OperatorTooLarge",
            Error::InvalidParameter(_) => "InvalidParameter",
            Error::Format(_) => "Format",
            Error::Io(_) => "Io",
        }
    }

    /// True for failures that originate inside a solver rather than in the input data.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::RankDeficient { .. }
                | Error::NotOrthonormal(_)
                | Error::UnderdeterminedColumn { .. }
                | Error::SingularColumn(_)
                | Error::BatchTooSmall { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
