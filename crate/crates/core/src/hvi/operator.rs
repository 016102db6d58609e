use crate::error::{HviError, Result};
use crate::linalg::{estimate_coercivity_in, operator_bound, CsrMatrix, Gram};

/// Symmetric coercive matrix `K` with `v^T K v >= coercivity * |v|^2` and
/// `|K v|_* <= bound * |v|`, norms taken in the state-space inner product.
#[derive(Debug, Clone)]
pub struct CoerciveOperator {
    matrix: CsrMatrix,
    coercivity: f64,
    bound: f64,
}

pub const SYMMETRY_TOL: f64 = 1e-12;

impl CoerciveOperator {
    /// Wraps a matrix with declared constants. The matrix must be symmetric.
    pub fn new(matrix: CsrMatrix, coercivity: f64, bound: f64) -> Result<Self> {
        let asym = matrix.asymmetry();
        if asym > SYMMETRY_TOL {
            return Err(HviError::NotSymmetric { asymmetry: asym });
        }
        Self::new_unchecked_symmetry(matrix, coercivity, bound)
    }

    /// Like [`new`](Self::new) without the symmetry requirement (allowed for `B`).
    pub fn new_unchecked_symmetry(matrix: CsrMatrix, coercivity: f64, bound: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() {
            return Err(HviError::DimensionMismatch {
                context: "coercive operator".into(),
                expected: matrix.nrows(),
                actual: matrix.ncols(),
            });
        }
        if !(coercivity > 0.0) {
            return Err(HviError::NonCoercive {
                estimate: coercivity,
                tolerance: 0.0,
            });
        }
        Ok(Self {
            matrix,
            coercivity,
            bound,
        })
    }

    /// Computes both constants: the coercivity by certified inverse iteration,
    /// the bound by power iteration.
    pub fn with_estimated_constants(matrix: CsrMatrix, gram: &Gram) -> Result<Self> {
        let coercivity = estimate_coercivity_in(&matrix, gram)?;
        let bound = operator_bound(&matrix, gram);
        Self::new(matrix, coercivity, bound)
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn coercivity(&self) -> f64 {
        self.coercivity
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn is_symmetric(&self) -> bool {
        self.matrix.asymmetry() <= SYMMETRY_TOL
    }

    /// Certified smallest-eigenvalue check of the declared coercivity.
    /// Returns `estimate - declared` (nonnegative when the declaration holds).
    pub fn coercivity_slack(&self, gram: &Gram) -> Result<f64> {
        let sym = self.matrix.symmetric_part();
        Ok(estimate_coercivity_in(&sym, gram)? - self.coercivity)
    }
}
