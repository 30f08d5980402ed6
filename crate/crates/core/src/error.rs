use core::fmt;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// Matrix is rank deficient or not finite, so it has no nearest rotation.
    DegenerateMatrix,
    /// Matrix is too far from SO(3) to be accepted as a rotation.
    NotARotation { residual: f64 },
    /// Homogeneous transform with a bottom row other than `(0, 0, 0, 1)`.
    NotRigid,
    VideoTooShort { n_frames: usize, required: usize },
    InvalidPlan(&'static str),
    InsufficientSamples { ok: usize },
    MissingPairBaseline,
    NoVideos,
    NoSamples,
    EmptySelection,
    InvalidRange { min: f64, max: f64 },
    EmptyReport,
    InvalidBuckets,
    InvalidScenario(&'static str),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::DegenerateMatrix => f.write_str("matrix is rank deficient or non-finite"),
            Error::NotARotation { residual } => {
                write!(f, "matrix is not a rotation (projection residual {residual:e})")
            }
            Error::NotRigid => f.write_str("transform is not a rigid homogeneous matrix"),
            Error::VideoTooShort { n_frames, required } => {
                write!(f, "video has {n_frames} frames, at least {required} required")
            }
            Error::InvalidPlan(why) => write!(f, "invalid sampling plan: {why}"),
            Error::InsufficientSamples { ok } => {
                write!(f, "need at least 2 successful estimates, got {ok}")
            }
            Error::MissingPairBaseline => {
                f.write_str("score mode needs the pair-only estimate, which is missing")
            }
            Error::NoVideos => f.write_str("no scored videos to select from"),
            Error::NoSamples => f.write_str("no successful estimates"),
            Error::EmptySelection => f.write_str("no pair satisfies the selection criteria"),
            Error::InvalidRange { min, max } => write!(f, "invalid range [{min}, {max}]"),
            Error::EmptyReport => f.write_str("no rows to aggregate"),
            Error::InvalidBuckets => f.write_str("bucket edges must be strictly increasing"),
            Error::InvalidScenario(why) => write!(f, "invalid synthetic scenario: {why}"),
        }
    }
}

impl core::error::Error for Error {}
