use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("|psi|^2 = {density:.3e} below node threshold {threshold:.3e} at ({x:.6}, {y:.6}), t = {t:.6}")]
    NodeProximity { x: f64, y: f64, t: f64, density: f64, threshold: f64 },

    #[error("packet center is {distance:.3e} from the {kind} plane at t = {time:.6} (tolerance {tolerance:.3e})")]
    Alignment { kind: &'static str, time: f64, distance: f64, tolerance: f64 },

    #[error("branches overlap ({overlap:.3e}) at which-way tag time {time:.6}")]
    BranchOverlap { time: f64, overlap: f64 },

    #[error("packet already carries which-way label {label:?}")]
    DoubleTag { label: crate::WwLabel },

    #[error("event of kind {actual:?} passed where {expected} was expected")]
    WrongEventKind { expected: &'static str, actual: crate::EventKind },

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("field timeline does not cover t = {t:.6} (covered [{start:.6}, {end:.6}])")]
    TimelineGap { t: f64, start: f64, end: f64 },

    #[error("rejection sampler acceptance rate {rate:.3e} below 1e-3")]
    SamplerEfficiency { rate: f64 },

    #[error("field density at the grid boundary is {ratio:.3e} of peak (limit {limit:.1e})")]
    SupportOverflow { ratio: f64, limit: f64 },

    #[error("density within 4 cells of the grid boundary reached {ratio:.3e} of peak at t = {t:.6}")]
    BoundaryContamination { ratio: f64, t: f64 },

    #[error("only {found} of {requested} sample points have density above threshold")]
    DegenerateSupport { found: usize, requested: usize },

    #[error("no sampled plane point has density above threshold on the required branches")]
    NoSupport,

    #[error("every region-I sample lies inside a node zone")]
    AllNodes,

    #[error("degenerate visibility scan: {0}")]
    DegenerateScan(String),

    #[error("cannot resample trajectories on a common grid: {0}")]
    Resampling(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub(crate) fn ensure_positive(field: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { field, reason: format!("must be positive and finite, got {value}") })
    }
}
