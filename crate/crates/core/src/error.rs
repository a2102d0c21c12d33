use thiserror::Error;

/// Every failure the library can report. Variants carry enough context to
/// print a useful message; none of them wrap foreign error types.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("kernel integrates to {integral:.12}, expected 1")]
    NonUnitIntegral { integral: f64 },
    #[error("kernel magnitude {observed:.6} exceeds declared bound {declared:.6}")]
    Unbounded { observed: f64, declared: f64 },
    #[error("{what}: value {value} outside its domain")]
    DomainError { what: &'static str, value: f64 },
    #[error("quadrature on [{a}, {b}] did not reach tolerance {tol:e}")]
    QuadratureFailure { a: f64, b: f64, tol: f64 },
    #[error("degenerate set: {0}")]
    DegenerateSet(String),
    #[error("set is empty")]
    EmptySet,
    #[error("integration window [{lo}, {hi}] does not cover [{need_lo}, {need_hi}]")]
    WindowTooSmall { lo: f64, hi: f64, need_lo: f64, need_hi: f64 },
    #[error("denominator vanishes: {0}")]
    DegenerateDenominator(&'static str),
    #[error("{what} must be positive, got {value}")]
    NonPositiveValue { what: &'static str, value: f64 },
    #[error("partition is degenerate: {0}")]
    PartitionDegenerate(String),
    #[error("schedule violation: {0}")]
    ScheduleViolation(String),
    #[error("only {hits} tail hits beyond x = {x}")]
    TooFewTailHits { x: f64, hits: usize },
    #[error("exponential-moment series still growing at m = {m}")]
    SeriesDiverges { m: usize },
    #[error("rejection acceptance rate {rate:e} too small for the requested budget")]
    RejectionTooSlow { rate: f64 },
    #[error("Chebyshev degree {r} overflows 64-bit coefficients")]
    Overflow { r: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
