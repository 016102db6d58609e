use thiserror::Error;

/// Errors raised by the solver library.
#[derive(Debug, Error)]
pub enum HviError {
    #[error("operator is not coercive: smallest eigenvalue estimate {estimate:e} <= {tolerance:e}")]
    NonCoercive { estimate: f64, tolerance: f64 },

    #[error("matrix is not symmetric (relative asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("time {time} outside [0, {horizon}]")]
    TimeOutOfRange { time: f64, horizon: f64 },

    #[error("index {index} out of range 1..={len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("step length {tau} is not below the solvability bound tau0 = {tau0}")]
    TauTooLarge { tau: f64, tau0: f64 },

    #[error("step solver did not converge after {iterations} iterations (residual {residual:e}){}", step_context(*.step))]
    NoConvergence {
        iterations: usize,
        residual: f64,
        step: Option<usize>,
    },

    #[error("no sign change of the scalar inclusion map within [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("brute-force minimizer lies on the search box boundary (dof {dof})")]
    BoundaryHit { dof: usize },

    #[error("brute-force search supports at most 3 unknowns, got {0}")]
    OracleTooLarge(usize),

    #[error("scalar inclusion is not uniquely solvable: a - tau*m_J = {0:e} <= 0")]
    IllPosedScalarInclusion(f64),

    #[error("coupling operator has dependent rows; the condensed contact operator is singular")]
    RankDeficientCoupling,

    #[error("linear solver failure: {0}")]
    LinearSolver(String),

    #[error("invalid boundary tagging: {0}")]
    InvalidTagging(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("contact boundary is empty")]
    EmptyContactBoundary,

    #[error("interpolated field is {value:e} at Dirichlet node {node}")]
    DirichletMismatch { node: usize, value: f64 },

    #[error("unknown compliance law `{0}`")]
    UnknownLaw(String),

    #[error("smallness condition violated: m_B = {m_b} <= m_J*|M|^2 = {bound}")]
    SmallnessViolated { m_b: f64, bound: f64 },

    #[error("coarse and reference discretizations are not nested: {0}")]
    NotNested(String),

    #[error("degenerate rate fit: {0}")]
    DegenerateFit(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{context}: {source}")]
    Level {
        context: String,
        #[source]
        source: Box<HviError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn step_context(step: Option<usize>) -> String {
    match step {
        Some(k) => format!(" at time step {k}"),
        None => String::new(),
    }
}

impl HviError {
    pub(crate) fn with_context(self, context: impl Into<String>) -> Self {
        HviError::Level {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping any level-context wrappers.
    pub fn root(&self) -> &HviError {
        match self {
            HviError::Level { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T> = std::result::Result<T, HviError>;
