use crate::C64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Error type shared by every solver stage.
///
/// Numerical failures carry enough context to name the failing stage in the
/// CLI exit diagnostics (exit code 3).
#[derive(Debug, Error)]
pub enum Error {
    #[error("Newton refinement for the distance did not converge (residual {residual:.3e})")]
    NoConvergence { residual: f64 },

    #[error("point lies outside the admissible tube (d_M = {d:.3e}, limit {limit:.3e})")]
    OutOfTube { d: f64, limit: f64 },

    #[error("matrix has an eigenvalue within {dist:.3e} of the Riesz contour")]
    EigenvalueOnContour { dist: f64 },

    #[error("tube grid needs at least {min} normal layers, got {got}")]
    ResolutionTooCoarse { min: usize, got: usize },

    #[error("tube node at parameter distance {d:.3e} is outside every chart support")]
    CoverGap { d: f64 },

    #[error("exterior derivative would exceed top degree 2n = {max}")]
    DegreeOverflow { max: usize },

    #[error("contraction of a 0-form is undefined")]
    DegreeUnderflow,

    #[error("form regions are incompatible: {0}")]
    RegionMismatch(String),

    #[error("input form is not closed: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotClosed { residual: f64, tol: f64 },

    #[error("grid refinement failed to reduce the residual ({coarse:.3e} -> {fine:.3e})")]
    QuadratureDivergence { coarse: f64, fine: f64 },

    #[error("kernel evaluated too close to the diagonal (|zeta - z| = {dist:.3e})")]
    DiagonalSingularity { dist: f64 },

    #[error("argument outside the admissible range: {0}")]
    OutOfRange(String),

    #[error("support-function collar condition failed at a sampled pair (margin {margin:.3e})")]
    CollarViolation { margin: f64 },

    #[error("Re Phi-tilde <= 0 at a sampled admissible pair (value {value:.3e})")]
    SupportViolation { value: f64 },

    #[error("parameter outside the valid range: {0}")]
    ParameterOutOfRange(String),

    #[error("cannot fit a log-log slope: {0}")]
    DegenerateFit(String),

    #[error("Serre stripping failed to reduce the antiholomorphic degree at step {step}")]
    StripStall { step: usize },

    #[error("form is not exact on the manifold; period vector {0:?}")]
    NonzeroPeriod(Vec<C64>),

    #[error("restriction of the form to M represents a nonzero cohomology class")]
    NotExactOnM,

    #[error("adapted frame is degenerate (|det| = {det:.3e})")]
    FrameDegenerate { det: f64 },

    #[error("map is not injective on the evaluation lattice (ratio {ratio:.3e})")]
    NotInjectiveOnLattice { ratio: f64 },

    #[error("Newton inversion diverged for a target point after {iters} iterations")]
    NewtonDiverged { iters: usize },

    #[error("flow trajectory left the containment tube (margin {margin:.3e})")]
    FlowEscape { margin: f64 },

    #[error("interpolated form omega_t is numerically degenerate (condition {cond:.3e})")]
    DegenerateOmegaT { cond: f64 },

    #[error("family is not an omega-flow: pullback drift {drift:.3e} exceeds tolerance {tol:.3e}")]
    NotOmegaFlow { drift: f64, tol: f64 },

    #[error("manifold kind `{0}` is not supported by this operation")]
    UnsupportedManifold(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code contract for the CLI: config errors exit 2, assertion
    /// failures exit 1, numerical failures exit 3.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            _ => 3,
        }
    }
}
