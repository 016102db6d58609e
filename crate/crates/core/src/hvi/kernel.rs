use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HviError, Result};
use crate::linalg::{CsrMatrix, Gram};
use crate::quadrature::{gauss2, gauss2_nodes};

pub type KernelWeight = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

/// One separable piece `phi(t, s) * Q` of a memory kernel.
#[derive(Clone)]
pub struct KernelTerm {
    pub weight: KernelWeight,
    pub matrix: CsrMatrix,
}

impl fmt::Debug for KernelTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KernelTerm")
            .field("matrix", &self.matrix)
            .finish_non_exhaustive()
    }
}

impl KernelTerm {
    pub fn new(weight: impl Fn(f64, f64) -> f64 + Send + Sync + 'static, matrix: CsrMatrix) -> Self {
        Self {
            weight: Arc::new(weight),
            matrix,
        }
    }
}

/// Where `q(t, s)` lands: the state space itself, or directly its dual
/// (finite element stiffness-type kernels). Only affects how norms are audited.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum KernelRange {
    #[default]
    Primal,
    Dual,
}

/// History operator `(R u)(t) = E (int_0^t q(t, s) u(s) ds + alpha)` with
/// `q(t, s) = sum_m phi_m(t, s) Q_m`.
#[derive(Clone)]
pub struct HistoryKernel {
    coupling: CsrMatrix,
    terms: Vec<KernelTerm>,
    coupled: Vec<CsrMatrix>,
    alpha: DVector<f64>,
    coupled_alpha: DVector<f64>,
    /// Declared `|E|`.
    pub c_e: f64,
    /// Declared `max |q(t, s)|` over the time square.
    pub c_q: f64,
    /// Declared Lipschitz constant of `t -> q(t, s)`.
    pub l_q: f64,
    /// Subintervals of the composite Gauss rule in [`apply_history`](Self::apply_history).
    pub subdivisions: usize,
    pub range: KernelRange,
}

impl fmt::Debug for HistoryKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HistoryKernel")
            .field("dim", &self.dim())
            .field("terms", &self.terms.len())
            .field("c_e", &self.c_e)
            .field("c_q", &self.c_q)
            .field("l_q", &self.l_q)
            .finish()
    }
}

impl HistoryKernel {
    pub fn new(
        coupling: CsrMatrix,
        terms: Vec<KernelTerm>,
        alpha: DVector<f64>,
        c_e: f64,
        c_q: f64,
        l_q: f64,
    ) -> Result<Self> {
        let n = coupling.ncols();
        let check = |what: &str, expected: usize, actual: usize| {
            if expected != actual {
                Err(HviError::DimensionMismatch {
                    context: format!("history kernel {what}"),
                    expected,
                    actual,
                })
            } else {
                Ok(())
            }
        };
        check("E rows", n, coupling.nrows())?;
        check("alpha", n, alpha.len())?;
        for t in &terms {
            check("term rows", n, t.matrix.nrows())?;
            check("term cols", n, t.matrix.ncols())?;
        }
        let identity = coupling.is_identity();
        let coupled = terms
            .iter()
            .map(|t| {
                if identity {
                    t.matrix.clone()
                } else {
                    coupling.matmul(&t.matrix)
                }
            })
            .collect();
        let coupled_alpha = coupling.mul_vec(&alpha);
        Ok(Self {
            coupling,
            terms,
            coupled,
            alpha,
            coupled_alpha,
            c_e,
            c_q,
            l_q,
            subdivisions: 64,
            range: KernelRange::Primal,
        })
    }

    /// No memory: `E = I`, `q = 0`, `alpha = 0`.
    pub fn none(dim: usize) -> Self {
        Self::new(
            CsrMatrix::identity(dim),
            Vec::new(),
            DVector::zeros(dim),
            1.0,
            0.0,
            0.0,
        )
        .expect("consistent dimensions")
    }

    pub fn with_range(mut self, range: KernelRange) -> Self {
        self.range = range;
        self
    }

    pub fn with_subdivisions(mut self, subdivisions: usize) -> Self {
        self.subdivisions = subdivisions.max(1);
        self
    }

    pub fn dim(&self) -> usize {
        self.coupling.ncols()
    }

    pub fn coupling(&self) -> &CsrMatrix {
        &self.coupling
    }

    pub fn terms(&self) -> &[KernelTerm] {
        &self.terms
    }

    /// `E Q_m` for every term.
    pub fn coupled_terms(&self) -> &[CsrMatrix] {
        &self.coupled
    }

    pub fn alpha(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// The history-dependence constant `L = c_E c_q`.
    pub fn lipschitz(&self) -> f64 {
        self.c_e * self.c_q
    }

    pub fn has_memory(&self) -> bool {
        !self.terms.is_empty()
    }

    /// Materializes `q(t, s)`.
    pub fn q(&self, t: f64, s: f64) -> CsrMatrix {
        let n = self.dim();
        let parts: Vec<_> = self
            .terms
            .iter()
            .map(|term| ((term.weight)(t, s), &term.matrix))
            .collect();
        CsrMatrix::combination(n, n, &parts)
    }

    /// `int_a^b phi_m(t, s) ds` for each term by the two-point Gauss rule.
    pub fn interval_coefficients(&self, t: f64, a: f64, b: f64) -> Vec<f64> {
        self.terms
            .iter()
            .map(|term| gauss2(|s| (term.weight)(t, s), a, b))
            .collect()
    }

    /// `E (alpha + sum_m Q_m sums[m])`.
    pub fn apply_coupled(&self, sums: &[DVector<f64>]) -> DVector<f64> {
        let mut out = self.coupled_alpha.clone();
        for (m, s) in self.coupled.iter().zip(sums) {
            m.mul_vec_acc(1.0, s, &mut out);
        }
        out
    }

    /// `(R u)(t)` for a continuous trajectory, by composite two-point Gauss
    /// quadrature with [`subdivisions`](Self::subdivisions) pieces.
    pub fn apply_history(
        &self,
        u: &dyn Fn(f64) -> DVector<f64>,
        t: f64,
        horizon: f64,
    ) -> Result<DVector<f64>> {
        if !(0.0..=horizon).contains(&t) {
            return Err(HviError::TimeOutOfRange { time: t, horizon });
        }
        let n = self.dim();
        let mut sums = vec![DVector::zeros(n); self.terms.len()];
        if t > 0.0 && self.has_memory() {
            let pieces = self.subdivisions;
            let h = t / pieces as f64;
            for i in 0..pieces {
                let lo = i as f64 * h;
                for s in gauss2_nodes(lo, lo + h) {
                    let us = u(s);
                    for (sum, term) in sums.iter_mut().zip(&self.terms) {
                        sum.axpy(0.5 * h * (term.weight)(t, s), &us, 1.0);
                    }
                }
            }
        }
        Ok(self.apply_coupled(&sums))
    }

    /// Discrete history `E (alpha + sum_{j=1}^n int_{t_{j-1}}^{t_j} q(t_n, s) ds u^j)`
    /// with `states[j - 1] = u^j` on the uniform grid `t_j = j tau`.
    pub fn history_discrete(&self, states: &[DVector<f64>], n: usize, tau: f64) -> Result<DVector<f64>> {
        if n == 0 || n > states.len() {
            return Err(HviError::IndexOutOfRange {
                index: n,
                len: states.len(),
            });
        }
        if !(tau > 0.0) {
            return Err(HviError::InvalidArgument(format!(
                "step length {tau} must be positive"
            )));
        }
        let dim = self.dim();
        let t_n = n as f64 * tau;
        let mut sums = vec![DVector::zeros(dim); self.terms.len()];
        for (j, u) in states.iter().enumerate().take(n) {
            let coeffs = self.interval_coefficients(t_n, j as f64 * tau, (j + 1) as f64 * tau);
            for (sum, c) in sums.iter_mut().zip(coeffs) {
                sum.axpy(c, u, 1.0);
            }
        }
        Ok(self.apply_coupled(&sums))
    }

    /// Probes the declared constants by sampling.
    pub fn audit(&self, horizon: f64, gram: &Gram, samples: usize, seed: u64) -> KernelAudit {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.dim();
        let primal = |v: &DVector<f64>| gram.norm(v);
        let dual = |v: &DVector<f64>| gram.dual_norm(v);
        let (q_out, e_in): (&dyn Fn(&DVector<f64>) -> f64, &dyn Fn(&DVector<f64>) -> f64) = match self.range {
            KernelRange::Primal => (&primal, &primal),
            KernelRange::Dual => (&dual, &dual),
        };
        let mut e_norm: f64 = 0.0;
        let mut q_norm: f64 = 0.0;
        let mut lipschitz_excess = f64::NEG_INFINITY;
        for _ in 0..samples {
            let v = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            let ev = e_in(&v);
            if ev > 0.0 {
                e_norm = e_norm.max(dual(&self.coupling.mul_vec(&v)) / ev);
            }
            let (t1, t2, s) = (
                rng.gen_range(0.0..=horizon),
                rng.gen_range(0.0..=horizon),
                rng.gen_range(0.0..=horizon),
            );
            let pv = primal(&v);
            if pv > 0.0 {
                let q1 = self.q(t1, s).mul_vec(&v);
                q_norm = q_norm.max(q_out(&q1) / pv);
                let dq = q1 - self.q(t2, s).mul_vec(&v);
                lipschitz_excess = lipschitz_excess.max(q_out(&dq) / pv - self.l_q * (t1 - t2).abs());
            }
        }
        KernelAudit {
            e_norm_excess: e_norm - self.c_e,
            q_norm_excess: q_norm - self.c_q,
            lipschitz_excess,
        }
    }
}

/// Measured minus declared constants; all must be `<= 0` (up to roundoff).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelAudit {
    pub e_norm_excess: f64,
    pub q_norm_excess: f64,
    pub lipschitz_excess: f64,
}

impl KernelAudit {
    pub fn passes(&self, slack: f64) -> bool {
        self.e_norm_excess <= slack && self.q_norm_excess <= slack && self.lipschitz_excess <= slack
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(weight: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> HistoryKernel {
        HistoryKernel::new(
            CsrMatrix::identity(1),
            vec![KernelTerm::new(weight, CsrMatrix::identity(1))],
            DVector::zeros(1),
            1.0,
            1.0,
            1.0,
        )
        .unwrap()
    }

    #[test]
    fn constant_kernel_constant_state() {
        let k = scalar(|_, _| 1.0);
        let one = |_s: f64| DVector::from_element(1, 1.0);
        let v = k.apply_history(&one, 0.3, 1.0).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn empty_integral_returns_coupled_alpha() {
        let k = HistoryKernel::new(
            CsrMatrix::diagonal(&[2.0, 3.0]),
            vec![KernelTerm::new(|t, s| t - s, CsrMatrix::identity(2))],
            DVector::from_vec(vec![1.0, -1.0]),
            3.0,
            1.0,
            1.0,
        )
        .unwrap();
        let u = |s: f64| DVector::from_vec(vec![s, 1.0]);
        let v = k.apply_history(&u, 0.0, 1.0).unwrap();
        assert_eq!(v, DVector::from_vec(vec![2.0, -3.0]));
    }

    #[test]
    fn time_outside_horizon_is_rejected() {
        let k = scalar(|_, _| 1.0);
        let u = |_s: f64| DVector::zeros(1);
        assert!(matches!(
            k.apply_history(&u, 1.5, 1.0),
            Err(HviError::TimeOutOfRange { .. })
        ));
    }

    #[test]
    fn discrete_history_constant_case() {
        let k = scalar(|_, _| 1.0);
        let states = vec![DVector::from_element(1, 1.0); 3];
        let v = k.history_discrete(&states, 3, 0.1).unwrap();
        assert!((v[0] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn discrete_history_linear_kernel() {
        // int_0^1 (1 + s) ds = 1.5
        let k = scalar(|_, s| 1.0 + s);
        let states = vec![DVector::from_element(1, 1.0); 2];
        let v = k.history_discrete(&states, 2, 0.5).unwrap();
        assert!((v[0] - 1.5).abs() < 1e-14);
    }

    #[test]
    fn discrete_history_index_errors() {
        let k = scalar(|_, _| 1.0);
        let states = vec![DVector::from_element(1, 1.0); 2];
        assert!(matches!(
            k.history_discrete(&states, 3, 0.1),
            Err(HviError::IndexOutOfRange { .. })
        ));
        assert!(k.history_discrete(&states, 0, 0.1).is_err());
    }

    #[test]
    fn zero_trajectory_gives_coupled_alpha() {
        let k = HistoryKernel::new(
            CsrMatrix::diagonal(&[2.0]),
            vec![KernelTerm::new(|_, _| 5.0, CsrMatrix::identity(1))],
            DVector::from_element(1, 0.5),
            2.0,
            5.0,
            0.0,
        )
        .unwrap();
        let states = vec![DVector::zeros(1); 4];
        assert_eq!(k.history_discrete(&states, 4, 0.2).unwrap()[0], 1.0);
    }
}
