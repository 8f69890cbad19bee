//! Moving-domain simulator and verification harness for a one-dimensional
//! compressible gas whose free surface borders vacuum.
//!
//! The state variables are a renormalized pressure head `q` (units of length,
//! positive inside the gas, exactly zero on the interface, with a finite
//! nonzero slope there — the "physical vacuum" profile), the velocity `v`,
//! and a renormalized entropy `sigma` (positive, materially transported).
//! On the moving interval they satisfy
//!
//! ```text
//! D_t q + beta * q * v_x = 0
//! D_t v + sigma * q_x   = 0        D_t = d/dt + v d/dx
//! D_t sigma             = 0
//! ```
//!
//! with `beta > 0` the adiabatic weight (`alpha = 1/beta`). The crate provides
//!
//! * [`state`]: grids, validated fluid states, boundary location, resampling,
//!   the parabolic-scaling map, and snapshot (de)serialization;
//! * [`calculus`]: finite differences on nonuniform nodes, quadrature,
//!   degenerate-weight Sobolev norms, boundary-adapted Hölder seminorms, and
//!   report-only interpolation-inequality checks;
//! * [`operators`]: the degenerate second-order operators that generate the
//!   high-order energy hierarchy, their Dirichlet forms, adjointness defect
//!   probes, and the time-derivative "good unknowns";
//! * [`energy`]: conserved quantities, linearized energy, the 2k-th order
//!   modified energies, Lipschitz-level control parameters, and Grönwall
//!   envelope fitting;
//! * [`regularize`]: interface-adapted variable-width mollifiers built from
//!   moment-corrected kernels, plus convergence studies over the scale index;
//! * [`stepper`]: the explicit one-step flow map (regularize → push nodes →
//!   update fields → resample), trajectory integration, and the linearized
//!   companion evolution;
//! * [`diff`]: weighted distance functionals between two states and
//!   trajectory stability ratios;
//! * [`oracle`]: the closed-form affine orbit family used as ground truth;
//! * [`scenario`]: JSON run configuration and the file-emitting drivers
//!   behind the `vacuum-euler` command-line interface.

// Validation code prefers `!(x > 0.0)` over `x <= 0.0`: the negated form also
// rejects NaN, which is the point of those checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calculus;
pub mod diff;
pub mod energy;
pub mod interp;
pub mod operators;
pub mod oracle;
pub mod regularize;
pub mod scenario;
pub mod state;
pub mod stepper;

pub use state::{FluidState, Grid, NonDegeneracy, Params};

/// Unified error type for the whole crate.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("no vacuum boundary: no strictly positive samples")]
    NoVacuumBoundary,
    #[error("disconnected support: {0} separate positive blocks")]
    DisconnectedSupport(usize),
    #[error("query outside domain: {x} not within [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
    #[error("insufficient resolution: {0}")]
    InsufficientResolution(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("invalid indices: {0}")]
    InvalidIndices(String),
    #[error("kernel construction failed: {0}")]
    KernelConstructionFailed(String),
    #[error("regularization scale too coarse: {0}")]
    ResolutionTooCoarse(String),
    #[error("folded flow at t = {t}: min node-map Jacobian {min_jacobian} <= 0")]
    FoldedFlow { t: f64, min_jacobian: f64 },
    #[error("continuation violated at t = {t}: nondegeneracy {c} below threshold {threshold}")]
    ContinuationViolation { t: f64, c: f64, threshold: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("invalid history: {0}")]
    InvalidHistory(String),
    #[error("disjoint domains: the two states share no interior")]
    DisjointDomains,
    #[error("time grids differ: {0}")]
    TimeGridMismatch(String),
    #[error("oracle tolerance failure: {0}")]
    OracleToleranceFailure(String),
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimError>;

impl SimError {
    /// Process exit code the CLI maps this error to.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config { .. } => 2,
            SimError::ContinuationViolation { .. } => 3,
            _ => 1,
        }
    }
}

/// Formats a float in decimal scientific notation with 17 significant
/// digits, enough for bit-exact `f64` round-trips.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}
