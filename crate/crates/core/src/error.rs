use crate::grid::Space;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid dimension {0}: expected 1, 2 or 3")]
    InvalidDimension(usize),
    #[error("size overflow: {0}")]
    SizeOverflow(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("expected a function in {expected:?} space")]
    WrongSpace { expected: Space },
    #[error("grids do not match")]
    GridMismatch,
    #[error("point {0:?} lies outside the box")]
    PointOutsideBox([f64; 3]),
    #[error("scale h = {h} is not an integer multiple of dx = {dx}")]
    MisalignedScale { h: f64, dx: f64 },
    #[error("box too small: {0}")]
    BoxTooSmall(String),
    #[error("singular symbol: eps = 0 needs a regularization")]
    SingularSymbol,
    #[error("square-root branch is ambiguous: {0}")]
    BranchAmbiguity(String),
    #[error("incompatible stage: {0}")]
    IncompatibleStage(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("unsupported dimension {0}")]
    UnsupportedDimension(usize),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("q = d + 1 is excluded here")]
    EndpointQ,
    #[error("q = {q} outside the admissible range ({lo}, {hi}]")]
    QOutOfRange { q: f64, lo: f64, hi: f64 },
    #[error("parameter overflow: {0}")]
    ParameterOverflow(String),
    #[error("net too coarse: finest radius {finest} above tolerance {requested}")]
    NetTooCoarse { finest: f64, requested: f64 },
    #[error("insufficient samples: {got} < {needed}")]
    InsufficientSamples { got: usize, needed: usize },
    #[error("region touches the positive real axis (continuous spectrum)")]
    RegionTouchesPositiveAxis,
    #[error("no convergence after {iterations} iterations (best value {value})")]
    NoConvergence { iterations: usize, value: f64 },
    #[error("config: {0}")]
    Config(String),
    #[error("unknown scenario '{name}'; available: {available}")]
    UnknownScenario { name: String, available: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Errors caused by the user's configuration rather than the numerics.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::UnknownScenario { .. }
                | Error::InvalidDimension(_)
                | Error::InvalidGrid(_)
                | Error::MisalignedScale { .. }
                | Error::BoxTooSmall(_)
                | Error::Precondition(_)
                | Error::EndpointQ
                | Error::QOutOfRange { .. }
                | Error::Json(_)
        )
    }

    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Overflow(_)
                | Error::BranchAmbiguity(_)
                | Error::SingularSymbol
                | Error::ParameterOverflow(_)
                | Error::NetTooCoarse { .. }
                | Error::InsufficientSamples { .. }
                | Error::RegionTouchesPositiveAxis
                | Error::SizeOverflow(_)
        )
    }
}
