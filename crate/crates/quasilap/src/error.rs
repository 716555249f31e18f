//! Error type shared by every module of the crate.

use num_complex::Complex64;
use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
///
/// Numerical routines fail loudly instead of returning poisoned data: a
/// divergent fixed-point iteration, an eigenvalue sitting on the chosen
/// branch cut, or a quadrature that cannot reach its tolerance all map to
/// dedicated variants carrying the offending quantities.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot parse {0:?} as a complex number (expected a, bi, or a+bi)")]
    ParseComplex(String),

    #[error("cannot parse preset {0:?}: {1}")]
    BadPreset(String, String),

    #[error("modulus must lie in the upper half-plane, got {0}")]
    InvalidModulus(Complex64),

    #[error("modulus |z| = {0:.3} outside the supported range [{1}, {2}]")]
    ModulusOutOfRange(f64, f64, f64),

    #[error("grid resolution {0} unsupported: {1}")]
    BadResolution(usize, &'static str),

    #[error("window is not compactly contained in the upper half-plane: {0}")]
    BadWindow(String),

    #[error("operation requires a {expected} grid, got a {got} grid")]
    GridKindMismatch {
        expected: &'static str,
        got: &'static str,
    },

    #[error("fields are sampled on different grids")]
    GridMismatch,

    #[error("field has {got} samples but the grid holds {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("step size must be positive and finite, got {0}")]
    InvalidStep(f64),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("eta requires Im z >= {min}, got {got:.3e}")]
    EtaDomain { min: f64, got: f64 },

    #[error(
        "branch ambiguity: Re((z - w)/2i) = {0:.3e} <= 0, the extension \
         needs w in the lower half-plane with Im w < Im z"
    )]
    BranchAmbiguity(f64),

    #[error("Beltrami bound violated: sup |coefficient| = {0:.6} >= 1")]
    DilatationTooLarge(f64),

    #[error(
        "coefficient pair violates joint ellipticity: sup |mu| sup |nu| = {0:.6} >= 1"
    )]
    JointDilatationTooLarge(f64),

    #[error(
        "plane solves contract only while 1.4028 sup |mu| < 1 (truncated \
         kernel bound): sup |mu| = {got:.4} exceeds {bound:.4}"
    )]
    PlaneDilatationTooLarge { got: f64, bound: f64 },

    #[error(
        "fixed-point iteration diverged: residual {residual:.3e} after \
         {iterations} iterations (contraction estimate {rate:.3})"
    )]
    SolverDiverged {
        residual: f64,
        iterations: usize,
        rate: f64,
    },

    #[error(
        "coefficient support (radius {radius:.2}) is too large for the solve \
         box of side {side:.2}; enlarge the box or shrink the support"
    )]
    SupportTooLarge { radius: f64, side: f64 },

    #[error("map is not injective near sample {index}: |dw| = {value:.3e} there")]
    DegenerateJacobian { index: usize, value: f64 },

    #[error("preimage search failed for target point {0}")]
    PreimageNotFound(Complex64),

    #[error("matrix of size {n} x {n} exceeds the dense-solve cap {cap} x {cap}")]
    MatrixTooLarge { n: usize, cap: usize },

    #[error("dense eigensolve failed: {0}")]
    EigenBackend(String),

    #[error(
        "eigenpair residual {residual:.3e} exceeds the certificate bound \
         {bound:.3e} (= tol * norm of the matrix)"
    )]
    EigenCertificate { residual: f64, bound: f64 },

    #[error(
        "eigenvalue {value} lies within {distance:.3e} of the branch cut at \
         angle {theta:.6}; pick a different cut angle"
    )]
    CutRayConflict {
        value: Complex64,
        distance: f64,
        theta: f64,
    },

    #[error(
        "kernel dimension mismatch: {got} eigenvalues inside |lambda| < \
         {rho:.3e}, expected {expected}"
    )]
    KernelDimension {
        got: usize,
        expected: usize,
        rho: f64,
    },

    #[error(
        "eigenvalue crossed the kernel radius during the parameter sweep: \
         |lambda| = {0:.3e} at parameter step {1}"
    )]
    KernelCrossing(f64, usize),

    #[error("operator family is not admissible for determinant holomorphy: {0}")]
    NotAdmissible(String),

    #[error(
        "two-form density is not holomorphic in each slot: closedness \
         residual {0:.3e}"
    )]
    NotClosed(f64),

    #[error(
        "adaptive quadrature failed to reach tolerance {tol:.1e}: estimated \
         error {err:.3e} on [{a:.6}, {b:.6}] at depth {depth}"
    )]
    QuadratureDivergence {
        tol: f64,
        err: f64,
        a: f64,
        b: f64,
        depth: usize,
    },

    #[error("point {0} lies outside the declared domain {1}")]
    OutsideDomain(Complex64, String),

    #[error("symbol angle {angle:.6} reaches the sector bound {bound:.6}")]
    SymbolAngle { angle: f64, bound: f64 },

    #[error("preset kind {0:?} is only defined on a torus")]
    TorusOnlyPreset(&'static str),

    #[error("container is not a QLAP field file: {0}")]
    BadContainer(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
