use thiserror::Error;

/// Broad failure class, used by front ends to pick an exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The inputs were rejected before any numerical work was trusted.
    Validation,
    /// A numerical stage failed or produced something that violates its contract.
    Numerical,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid functions live on different grids")]
    GridMismatch,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("expected {expected} samples, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("requested {requested} eigenpairs but the trust region allows at most {limit}")]
    TrustRegion { requested: usize, limit: usize },
    #[error("eigensolver failure: {0}")]
    Eigensolver(String),
    #[error("only {available} eigenpairs available, {requested} requested")]
    TooFewPairs { requested: usize, available: usize },
    #[error("adjoint requires a vanishing first-order coefficient")]
    FirstOrderAdjoint,
    #[error("residual undefined for the zero function")]
    ZeroFunction,
    #[error("empty test set")]
    EmptyTestSet,
    #[error("transformation function has a node: min|u| = {min_abs:e} <= {tol:e}")]
    NodeDetected { min_abs: f64, tol: f64 },
    #[error("factorization energy {alpha} collides with level {level} at E = {energy}")]
    AlphaCollision { alpha: f64, level: usize, energy: f64 },
    #[error("u does not solve h u = alpha u: relative residual {residual:e} > {tol:e}")]
    NotASolution { residual: f64, tol: f64 },
    #[error("superpotential is real; the partner would be Hermitian")]
    RealSuperpotential,
    #[error("metric eigenvalue {value:e} is negative beyond the clamp threshold {threshold:e}")]
    NegativeEigenvalue { value: f64, threshold: f64 },
    #[error("metric eigenvalue {re:e}{im:+e}i is not real")]
    NonRealEigenvalue { re: f64, im: f64 },
    #[error("no isolated kernel: lambda_0 = {lambda0:e}, lambda_1 = {lambda1:e}")]
    KernelMissing { lambda0: f64, lambda1: f64 },
    #[error("argument has a kernel component {component:e} relative to its norm")]
    KernelComponent { component: f64 },
    #[error("eigenvectors {first} and {second} are numerically parallel (overlap {overlap})")]
    DefectiveSpectrum { first: usize, second: usize, overlap: f64 },
    #[error("argument {0} is too close to a pole")]
    PoleProximity(f64),
    #[error("adaptive quadrature did not converge on [{lo}, {hi}]: error estimate {estimate:e}")]
    QuadratureFailure { lo: f64, hi: f64, estimate: f64 },
    #[error("a d / pi = {ratio} is within {margin:e} of an integer")]
    DiagMarginViolation { ratio: f64, margin: f64 },
    #[error("overlap denominator vanishes for m = {m}, n = {n}")]
    DenominatorCollision { m: usize, n: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use Error::*;
        match self {
            InvalidGrid(_)
            | GridMismatch
            | NonFinite(_)
            | LengthMismatch { .. }
            | TrustRegion { .. }
            | FirstOrderAdjoint
            | ZeroFunction
            | EmptyTestSet
            | NodeDetected { .. }
            | AlphaCollision { .. }
            | NotASolution { .. }
            | RealSuperpotential
            | KernelComponent { .. }
            | PoleProximity(_)
            | DiagMarginViolation { .. }
            | DenominatorCollision { .. }
            | InvalidParameter(_)
            | Csv(_)
            | Io(_) => ErrorClass::Validation,
            Eigensolver(_)
            | TooFewPairs { .. }
            | NegativeEigenvalue { .. }
            | NonRealEigenvalue { .. }
            | KernelMissing { .. }
            | DefectiveSpectrum { .. }
            | QuadratureFailure { .. } => ErrorClass::Numerical,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
