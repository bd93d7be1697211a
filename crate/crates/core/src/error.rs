use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: n = {n}, radius = {radius} (need n >= 5 and radius > 0)")]
    InvalidGrid { n: usize, radius: f64 },

    #[error("invalid parameter `{name}` = {value}: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("observation window h = {h} is not an integer multiple of dt = {dt}")]
    NonIntegerSubsteps { h: f64, dt: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error(
        "cell Peclet number {peclet:.3} exceeds bound {bound} (grid under-resolves the drift)"
    )]
    UnderResolved { peclet: f64, bound: f64 },

    #[error("density mass {mass:e} below floor {floor:e}")]
    DegenerateMass { mass: f64, floor: f64 },

    #[error("negative density value {value:e} below tolerance -{tol:e}")]
    Negativity { value: f64, tol: f64 },

    #[error("negative or non-finite input value {0:e} to normalize")]
    NegativeInput(f64),

    #[error("propagated mass {mass} < 0.5: density escaped the domain")]
    DomainEscape { mass: f64 },

    #[error("density and operator live on different grids")]
    GridMismatch,

    #[error("{outside_mass:e} of the Gaussian mass lies outside [-R, R]")]
    DomainTooSmall { outside_mass: f64 },

    #[error("variance {var:e} below floor {floor:e}")]
    VarianceBelowFloor { var: f64, floor: f64 },

    #[error("contraction factor 1 - KH = {0} is not positive")]
    NonContractive(f64),

    #[error("{op} is only defined for the linear model, got `{label}`")]
    UnsupportedModel {
        op: &'static str,
        label: &'static str,
    },

    #[error("all particle weights vanished (likelihood collapse)")]
    WeightCollapse,

    #[error("ensemble needs at least 2 members, got {0}")]
    EnsembleTooSmall(usize),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("reference sequence has zero norm")]
    ZeroReference,

    #[error("rate fit needs >= 3 strictly positive points")]
    InvalidRateData,

    #[error("unrecognized filter spec `{0}`")]
    FilterSpec(String),

    #[error("{kind} needs a resolution")]
    MissingResolution { kind: &'static str },

    #[error("initial tail mass {mass:e} beyond R = {radius} exceeds {bound:e}")]
    TailMass { mass: f64, radius: f64, bound: f64 },

    /// Wraps a failure inside a filter run with the observation index; the
    /// message already includes the cause, so it is not exposed as a source.
    #[error("step {step}: {cause}")]
    AtStep { step: usize, cause: Box<Error> },
}

impl Error {
    pub(crate) fn at_step(self, step: usize) -> Error {
        Error::AtStep {
            step,
            cause: Box::new(self),
        }
    }
}
