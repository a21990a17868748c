use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParameterDomain(String),

    #[error("CFL violation: max sigma*dt^2/4 = {ratio:.6} > 1 (lambda_max = {lambda_max:.6})")]
    CflViolation { ratio: f64, lambda_max: f64 },

    #[error("wavenumber {xi} outside the Brillouin zone [-{bound}, {bound}]")]
    OutsideZone { xi: f64, bound: f64 },

    #[error("branch tracking failed at xi = {xi} (best overlap {overlap:.3}); refine the grid")]
    TrackingFailure { xi: f64, overlap: f64 },

    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },

    #[error("no time steps: T = {t} is shorter than dt = {dt}")]
    NoSteps { t: f64, dt: f64 },

    #[error("packet window contains no discrete frequency; need at least J = {min_cells} cells")]
    EmptySupport { min_cells: usize },

    #[error("observation time {t} allows periodic wrap-around (limit {limit})")]
    WrapAround { t: f64, limit: f64 },

    #[error("pencil dimension {dim} exceeds the memory guard {limit}")]
    MemoryGuard { dim: usize, limit: usize },

    #[error("unobservable at this resolution: minimal eigenvalue {mu_min:e}")]
    Unobservable { mu_min: f64 },

    #[error("degenerate physical band: v_g(0) = {vg0} is below the floor")]
    DegenerateBand { vg0: f64 },

    #[error("filtered band is empty on the discrete grid")]
    EmptyBand,

    #[error("singular regression: {0}")]
    SingularRegression(String),

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ParameterDomain(_)
            | Error::OutsideZone { .. }
            | Error::NoSteps { .. }
            | Error::EmptySupport { .. }
            | Error::WrapAround { .. }
            | Error::MemoryGuard { .. }
            | Error::EmptyBand => 2,
            Error::CflViolation { .. } => 3,
            Error::TrackingFailure { .. }
            | Error::NonFinite { .. }
            | Error::Unobservable { .. }
            | Error::DegenerateBand { .. }
            | Error::SingularRegression(_)
            | Error::LinearAlgebra(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
