use thiserror::Error;

/// Errors raised by model evaluation, integration and spectral analysis.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("state lies on the singular locus of model `{model}`")]
    SingularState { model: String },
    #[error("model `{0}` has no closed-form solution")]
    NoClosedForm(String),
    #[error("closed-form solution has a pole near t = {re} + {im}i")]
    SolutionPole { re: f64, im: f64 },
    #[error("model `{0}` has no slow-manifold graph")]
    NoSimGraph(String),
    #[error("argument outside the domain: {0}")]
    DomainError(String),
    #[error("|c1| = {0} is too close to 1 to select a geometric-series branch")]
    BranchAmbiguity(f64),
    #[error("singularity encountered; furthest valid time t = {re} + {im}i")]
    SingularityEncountered { re: f64, im: f64 },
    #[error("integrator exhausted its step budget before reaching t = {re} + {im}i")]
    ToleranceNotMet { re: f64, im: f64 },
    #[error("grid ranges must contain the anchor t = 0")]
    AnchorOutsideGrid,
    #[error("samples are not uniformly spaced along an imaginary ray")]
    NonUniformSampling,
    #[error("sample count {0} is not a power of two")]
    LengthNotPowerOfTwo(usize),
    #[error("signal has zero energy")]
    ZeroSignal,
    #[error("no attracting fixed point found")]
    NoFixedPointFound,
    #[error("no spectral gap: decay rates {fast} and {slow} are within a factor 2")]
    NoSpectralGap { fast: f64, slow: f64 },
    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
