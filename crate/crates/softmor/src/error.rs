use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite entry encountered in {context}")]
    NonFinite { context: &'static str },

    #[error("requested rank {k} is out of range 1..={max}")]
    RankOutOfRange { k: usize, max: usize },

    #[error("matrix is not symmetric (relative asymmetry {rel:.3e})")]
    Asymmetric { rel: f64 },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:.3e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("matrix is singular to working precision ({context})")]
    Singular { context: &'static str },

    #[error("eigenvalue with real part {real_part:.3e} lies on the imaginary axis within tolerance; stable/antistable split is undefined")]
    ImaginaryAxisEigenvalue { real_part: f64 },

    #[error("stable invariant subspace has dimension {found}, expected {expected}")]
    StableSubspaceDimension { found: usize, expected: usize },

    #[error("Schur block swap rejected (residual {residual:.3e}); eigenvalues too close to reorder reliably")]
    SwapRejected { residual: f64 },

    #[error("Schur iteration failed to converge")]
    SchurNoConvergence,

    #[error("invariant subspace residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    InvarianceResidual { residual: f64, tol: f64 },

    #[error("ny = {ny} must be divisible by 4 so the clamped boundary strip lands on a grid line")]
    MeshResolution { ny: usize },

    #[error("mesh must have at least one element per axis (nx = {nx}, ny = {ny})")]
    EmptyMesh { nx: usize, ny: usize },

    #[error("degenerate element geometry (jacobian determinant {det_j:.3e})")]
    DegenerateElement { det_j: f64 },

    #[error("Dirichlet node set is empty; solid/tissue coupling is undefined")]
    EmptyDirichletSet,

    #[error("observation node {node} is on the Dirichlet boundary, not a free unknown")]
    ObservationOnDirichlet { node: usize },

    #[error("all singular values are zero; no basis can be selected")]
    AllZeroSingularValues,

    #[error("symplectic basis requires an even reduced dimension, got {n}")]
    OddSymplecticDimension { n: usize },

    #[error("reduced system matrix is singular ({context})")]
    SingularReducedSystem { context: &'static str },

    #[error("closed loop diverges: state norm grew by factor {growth:.3e} at step {step}")]
    UnstableClosedLoop { growth: f64, step: usize },

    #[error("closed-loop spectrum is not strictly stable (largest real part {margin:.3e})")]
    UnstableClosedLoopSpectrum { margin: f64 },

    #[error("feedforward input does not exist: load is outside the range of the actuation map")]
    InfeasibleFeedforward,

    #[error("equilibrium residual {residual:.3e} exceeds tolerance")]
    EquilibriumResidual { residual: f64 },

    #[error("grid must have at least one step and positive final time")]
    InvalidTimeGrid,

    #[error("no records to plot")]
    EmptyRecords,

    #[error("invalid material parameters: lambda = {lambda}, mu = {mu}, rho = {rho} (all must be positive)")]
    InvalidMaterial { lambda: f64, mu: f64, rho: f64 },

    #[error("solid mass must be positive, got {mass}")]
    InvalidSolidMass { mass: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("matrix market parse error: {0}")]
    MatrixMarket(String),
}

pub type Result<T> = std::result::Result<T, Error>;
