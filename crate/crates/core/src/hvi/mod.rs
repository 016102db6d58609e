//! Abstract problem data, hypotheses and the history-dependent operator.

mod kernel;
mod operator;
mod potential;

use std::fmt;
use std::sync::{Arc, OnceLock};

use nalgebra::DVector;

pub use kernel::{HistoryKernel, KernelAudit, KernelRange, KernelTerm, KernelWeight};
pub use operator::{CoerciveOperator, SYMMETRY_TOL};
pub use potential::{
    audit_potential, AbsPotential, Declared, HalfSquare, Interval, LipschitzPotential, NonmonotoneDrop,
    PotentialAudit, QuadraticCompliance, Scaled, SharedPotential, ZeroPotential,
};

use crate::error::{HviError, Result};
use crate::linalg::{power_iteration, CsrMatrix, Gram};

pub type LoadFn = Arc<dyn Fn(f64) -> DVector<f64> + Send + Sync>;

/// Coupling `M: V -> X` with the weighted inner product
/// `(r, s)_X = sum_c w_c r_c s_c` on the constraint space.
#[derive(Debug, Clone)]
pub struct Coupling {
    matrix: CsrMatrix,
    weights: Vec<f64>,
}

impl Coupling {
    pub fn new(matrix: CsrMatrix, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != matrix.nrows() {
            return Err(HviError::DimensionMismatch {
                context: "coupling weights".into(),
                expected: matrix.nrows(),
                actual: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(**w > 0.0)) {
            return Err(HviError::InvalidArgument(format!(
                "coupling weight {w} must be positive"
            )));
        }
        Ok(Self { matrix, weights })
    }

    /// Unit weights.
    pub fn euclidean(matrix: CsrMatrix) -> Self {
        let weights = vec![1.0; matrix.nrows()];
        Self { matrix, weights }
    }

    /// No constraint components.
    pub fn empty(dim: usize) -> Self {
        Self::euclidean(CsrMatrix::zeros(0, dim))
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn components(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn x_norm(&self, r: &DVector<f64>) -> f64 {
        r.iter()
            .zip(&self.weights)
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// `|M|` from `V` (norm of `gram`) into `X`, by power iteration on `G^{-1} M^T W M`.
    pub fn operator_norm(&self, gram: &Gram) -> f64 {
        if self.components() == 0 || self.matrix.is_zero() {
            return 0.0;
        }
        let apply = |v: &DVector<f64>| {
            let mut r = self.matrix.mul_vec(v);
            for (x, w) in r.iter_mut().zip(&self.weights) {
                *x *= w;
            }
            self.matrix.tr_mul_vec(&r)
        };
        power_iteration(apply, gram, self.matrix.ncols(), 1e-10, 10_000)
            .max(0.0)
            .sqrt()
    }
}

/// Finite-dimensional data of the evolutionary inclusion
///
/// ```text
/// A u'(t) + B u(t) + (R u)(t) + M^T dJ(M u(t)) ∋ f(t),   u(0) = u0,
/// ```
///
/// with `J(r) = sum_c j_c(r_c)`.
#[derive(Clone)]
pub struct AbstractHvi {
    pub a: CoerciveOperator,
    pub b: CoerciveOperator,
    pub kernel: HistoryKernel,
    pub coupling: Coupling,
    pub potentials: Vec<SharedPotential>,
    pub load: LoadFn,
    pub u0: DVector<f64>,
    pub horizon: f64,
    /// Inner product of the state space; all constants refer to its norm.
    pub gram: Gram,
    coupling_norm: OnceLock<f64>,
}

impl fmt::Debug for AbstractHvi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AbstractHvi")
            .field("dim", &self.dim())
            .field("components", &self.coupling.components())
            .field("horizon", &self.horizon)
            .field("kernel", &self.kernel)
            .finish_non_exhaustive()
    }
}

impl AbstractHvi {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        a: CoerciveOperator,
        b: CoerciveOperator,
        kernel: HistoryKernel,
        coupling: Coupling,
        potentials: Vec<SharedPotential>,
        load: LoadFn,
        u0: DVector<f64>,
        horizon: f64,
    ) -> Result<Self> {
        let p = Self {
            a,
            b,
            kernel,
            coupling,
            potentials,
            load,
            u0,
            horizon,
            gram: Gram::Euclidean,
            coupling_norm: OnceLock::new(),
        };
        p.check_dimensions()?;
        Ok(p)
    }

    pub fn with_gram(mut self, gram: Gram) -> Self {
        self.gram = gram;
        self.coupling_norm = OnceLock::new();
        self
    }

    /// Overrides the computed `|M|` (e.g. with a known analytic value).
    pub fn with_coupling_norm(self, norm: f64) -> Self {
        let cell = OnceLock::new();
        let _ = cell.set(norm);
        Self {
            coupling_norm: cell,
            ..self
        }
    }

    pub fn dim(&self) -> usize {
        self.u0.len()
    }

    pub fn check_dimensions(&self) -> Result<()> {
        let n = self.dim();
        let check = |context: &str, actual: usize| {
            if actual != n {
                Err(HviError::DimensionMismatch {
                    context: context.into(),
                    expected: n,
                    actual,
                })
            } else {
                Ok(())
            }
        };
        check("A", self.a.dim())?;
        check("B", self.b.dim())?;
        check("history kernel", self.kernel.dim())?;
        check("coupling columns", self.coupling.matrix().ncols())?;
        check("load f(0)", (self.load)(0.0).len())?;
        if self.potentials.len() != self.coupling.components() {
            return Err(HviError::DimensionMismatch {
                context: "potentials per constraint component".into(),
                expected: self.coupling.components(),
                actual: self.potentials.len(),
            });
        }
        if let Gram::Matrix { matrix, .. } = &self.gram {
            check("state-space Gram matrix", matrix.nrows())?;
        }
        if !(self.horizon > 0.0) {
            return Err(HviError::InvalidArgument(format!(
                "horizon {} must be positive",
                self.horizon
            )));
        }
        Ok(())
    }

    /// Cached `|M|` in the `V -> X` norms.
    pub fn coupling_norm(&self) -> f64 {
        *self
            .coupling_norm
            .get_or_init(|| self.coupling.operator_norm(&self.gram))
    }

    /// Relaxed-monotonicity constant of `J` relative to the `X` norm:
    /// `max_c m_c / w_c`.
    pub fn relaxation_constant(&self) -> f64 {
        self.potentials
            .iter()
            .zip(self.coupling.weights())
            .map(|(j, w)| j.relaxation_constant() / w)
            .fold(0.0, f64::max)
    }

    /// Growth constant of `J` relative to the `X` norm.
    pub fn growth_constant(&self) -> f64 {
        self.potentials
            .iter()
            .zip(self.coupling.weights())
            .map(|(j, w)| j.growth_constant() / w)
            .fold(0.0, f64::max)
    }

    /// `f_k`: mean of the load over `[a, b]` by two-point Gauss.
    pub fn load_mean(&self, a: f64, b: f64) -> DVector<f64> {
        crate::quadrature::gauss2_mean_vec(|t| (self.load)(t), a, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisMargin {
    pub name: String,
    /// Positive when the hypothesis holds with room to spare.
    pub slack: f64,
    pub holds: bool,
}

impl HypothesisMargin {
    fn positive(name: &str, slack: f64) -> Self {
        Self {
            name: name.into(),
            slack,
            holds: slack > 0.0,
        }
    }

    fn nonnegative(name: &str, slack: f64) -> Self {
        Self {
            name: name.into(),
            slack,
            holds: slack >= 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisReport {
    pub h0_holds: bool,
    /// Upper bound on admissible step lengths; `+inf` without memory.
    pub tau0: f64,
    pub margins: Vec<HypothesisMargin>,
    pub m_a: f64,
    pub m_b: f64,
    pub m_j: f64,
    /// `|M|`, only computed when `m_J > 0`.
    pub coupling_norm: Option<f64>,
    pub c_e: f64,
    pub c_q: f64,
}

impl HypothesisReport {
    pub fn all_hold(&self) -> bool {
        self.margins.iter().all(|m| m.holds)
    }
}

impl fmt::Display for HypothesisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for m in &self.margins {
            writeln!(
                f,
                "{:<6} {:<40} slack {:+.6e}",
                if m.holds { "ok" } else { "FAIL" },
                m.name,
                m.slack
            )?;
        }
        match self.coupling_norm {
            Some(n) => writeln!(f, "|M| = {n:.6e}")?,
            None => writeln!(f, "|M| not needed (m_J = 0)")?,
        }
        write!(f, "tau0 = {}", self.tau0)
    }
}

/// Evaluates the structural hypotheses and the smallness condition
/// `m_B > m_J |M|^2`, and the step bound `tau0 = (m_B - m_J |M|^2) / (c_E c_q)`.
pub fn validate_hypotheses(p: &AbstractHvi) -> HypothesisReport {
    let m_a = p.a.coercivity();
    let m_b = p.b.coercivity();
    let m_j = p.relaxation_constant();
    let coupling_norm = (m_j > 0.0).then(|| p.coupling_norm());
    let penalty = m_j * coupling_norm.map_or(0.0, |n| n * n);
    let h0_slack = m_b - penalty;
    let h0_holds = h0_slack > 0.0;
    let memory = p.kernel.lipschitz();
    let tau0 = if !h0_holds {
        0.0
    } else if memory == 0.0 {
        f64::INFINITY
    } else {
        h0_slack / memory
    };

    let asym_a = p.a.matrix().asymmetry();
    let min_growth = p
        .potentials
        .iter()
        .map(|j| j.growth_constant())
        .fold(f64::INFINITY, f64::min);
    let min_relax = p
        .potentials
        .iter()
        .map(|j| j.relaxation_constant())
        .fold(f64::INFINITY, f64::min);
    let mut margins = vec![
        HypothesisMargin::positive("H(A) coercivity m_A", m_a),
        HypothesisMargin::nonnegative("H(A) symmetry tolerance - asymmetry", SYMMETRY_TOL - asym_a),
        HypothesisMargin::positive("H(B) coercivity m_B", m_b),
        HypothesisMargin::nonnegative("H(E) c_E", p.kernel.c_e),
        HypothesisMargin::nonnegative("H(q) c_q", p.kernel.c_q),
        HypothesisMargin::nonnegative("H(q) L_q", p.kernel.l_q),
    ];
    if !p.potentials.is_empty() {
        margins.push(HypothesisMargin::nonnegative("H(J) growth c_J", min_growth));
        margins.push(HypothesisMargin::nonnegative("H(J) relaxation m_J", min_relax));
    }
    margins.push(HypothesisMargin::positive("(H0) m_B - m_J |M|^2", h0_slack));

    HypothesisReport {
        h0_holds,
        tau0,
        margins,
        m_a,
        m_b,
        m_j,
        coupling_norm,
        c_e: p.kernel.c_e,
        c_q: p.kernel.c_q,
    }
}
