//! One implicit step: find `u` with
//!
//! ```text
//! K u + H u + tau M^T xi = rhs,   xi_c in dj_c((M u)_c),
//! ```
//!
//! where `K = A + tau B` and `H` is the unknown's own contribution to the
//! history term.
//!
//! The nonlinearity lives only in `r = M u`. Eliminating `u` leaves the
//! condensed inclusion `P r + tau dJ(r) ∋ g` with `P = (M L^{-1} M^T)^{-1}`,
//! which is solved component by component with the exact scalar resolvent
//! [`prox_1d`].

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{HviError, Result};
use crate::hvi::{CoerciveOperator, Interval, LipschitzPotential, SharedPotential};
use crate::linalg::{CsrMatrix, LinearSolverKind, SpdSolver};

/// Data of one step.
#[derive(Debug, Clone)]
pub struct StepProblem {
    /// `A + tau B`.
    pub k: Arc<CoerciveOperator>,
    pub tau: f64,
    /// Solvability bound; the step is refused when `tau >= tau0`.
    pub tau0: f64,
    pub self_history: Option<Arc<CsrMatrix>>,
    pub rhs: DVector<f64>,
    pub m: Arc<CsrMatrix>,
    /// Weights of the constraint-space norm (one per row of `M`).
    pub weights: Arc<[f64]>,
    pub potentials: Arc<[SharedPotential]>,
}

impl StepProblem {
    pub fn new(
        k: CoerciveOperator,
        tau: f64,
        rhs: DVector<f64>,
        m: CsrMatrix,
        potentials: Vec<SharedPotential>,
    ) -> Self {
        let weights = vec![1.0; m.nrows()];
        Self {
            k: Arc::new(k),
            tau,
            tau0: f64::INFINITY,
            self_history: None,
            rhs,
            m: Arc::new(m),
            weights: weights.into(),
            potentials: potentials.into(),
        }
    }

    pub fn with_self_history(mut self, h: CsrMatrix) -> Self {
        self.self_history = (!h.is_zero()).then(|| Arc::new(h));
        self
    }

    pub fn with_tau0(mut self, tau0: f64) -> Self {
        self.tau0 = tau0;
        self
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Self {
        self.weights = weights.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.rhs.len()
    }

    pub fn components(&self) -> usize {
        self.m.nrows()
    }

    fn check(&self) -> Result<()> {
        let n = self.dim();
        let mismatch = |context: &str, actual: usize| {
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
        mismatch("step operator", self.k.dim())?;
        mismatch("step coupling columns", self.m.ncols())?;
        if let Some(h) = &self.self_history {
            mismatch("step self history", h.nrows())?;
        }
        let nc = self.components();
        if self.potentials.len() != nc || self.weights.len() != nc {
            return Err(HviError::DimensionMismatch {
                context: "step potentials / weights".into(),
                expected: nc,
                actual: self.potentials.len().min(self.weights.len()),
            });
        }
        if !(self.tau > 0.0) {
            return Err(HviError::InvalidArgument(format!(
                "step length {} must be positive",
                self.tau
            )));
        }
        if self.tau >= self.tau0 {
            return Err(HviError::TauTooLarge {
                tau: self.tau,
                tau0: self.tau0,
            });
        }
        Ok(())
    }

    /// `(K + H) u`.
    pub fn apply_linear(&self, u: &DVector<f64>) -> DVector<f64> {
        let mut out = self.k.matrix().mul_vec(u);
        if let Some(h) = &self.self_history {
            h.mul_vec_acc(1.0, u, &mut out);
        }
        out
    }

    fn linear_part(&self) -> CsrMatrix {
        match &self.self_history {
            Some(h) => self.k.matrix().add_scaled(1.0, h),
            None => self.k.matrix().clone(),
        }
    }
}

/// How the condensed inclusion is iterated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StepAlgorithm {
    /// Nonlinear Gauss-Seidel: exact minimization along each constraint
    /// component in turn. Fast in practice.
    #[default]
    GaussSeidel,
    /// Forward-backward splitting in the weighted constraint norm; a strict
    /// contraction whenever the smallness condition holds.
    ForwardBackward,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSolverConfig {
    /// Residual tolerance, relative to `max(1, |rhs|)`.
    pub tol: f64,
    pub max_iter: usize,
    /// Relaxation factor in `(0, 1]`.
    pub damping: f64,
    pub linear_solver: LinearSolverKind,
    pub algorithm: StepAlgorithm,
}

impl Default for StepSolverConfig {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 200,
            damping: 1.0,
            linear_solver: LinearSolverKind::Auto,
            algorithm: StepAlgorithm::GaussSeidel,
        }
    }
}

impl StepSolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(HviError::InvalidArgument(format!(
                "invalid step solver configuration {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct StepSolution {
    pub u: DVector<f64>,
    /// Selections `xi_c in dj_c((M u)_c)`.
    pub xi: DVector<f64>,
    pub iterations: usize,
    pub residual: f64,
    /// Weighted norm of the change of `M u` per iteration.
    pub increments: Vec<f64>,
}

/// Factorizations shared by every step with the same `K + H` and `M`.
#[derive(Debug)]
pub struct PreparedStep {
    dim: usize,
    solver: SpdSolver,
    skew: Option<CsrMatrix>,
    /// `L^{-1} M^T`, one column per constraint component.
    lmt: DMatrix<f64>,
    /// `(M L^{-1} M^T)^{-1}`.
    p: DMatrix<f64>,
    /// Largest eigenvalue of `W^{-1} P`, only for forward-backward.
    p_bound: Option<f64>,
}

impl PreparedStep {
    pub fn new(sp: &StepProblem, cfg: &StepSolverConfig) -> Result<Self> {
        sp.check()?;
        let full = sp.linear_part();
        let (sym, skew) = if full.asymmetry() > 0.0 {
            (full.symmetric_part(), Some(full.skew_part()))
        } else {
            (full, None)
        };
        let solver = SpdSolver::new(&sym, cfg.linear_solver)?;
        let n = sp.dim();
        let nc = sp.components();
        let mut mt = DMatrix::zeros(n, nc);
        for (c, i, v) in sp.m.triplets() {
            mt[(i, c)] = v;
        }
        let lmt = if nc > 0 { solver.solve_many(&mt) } else { mt };
        let mut s = DMatrix::zeros(nc, nc);
        for c in 0..nc {
            for (i, v) in sp.m.row(c) {
                for d in 0..nc {
                    s[(c, d)] += v * lmt[(i, d)];
                }
            }
        }
        let s = (&s + s.transpose()) * 0.5;
        let p = if nc > 0 {
            nalgebra::Cholesky::new(s)
                .ok_or(HviError::RankDeficientCoupling)?
                .inverse()
        } else {
            s
        };
        let p_bound = (cfg.algorithm == StepAlgorithm::ForwardBackward && nc > 0).then(|| {
            // W^{-1/2} P W^{-1/2} is symmetric with the same spectrum.
            let sw: Vec<f64> = sp.weights.iter().map(|w| 1.0 / w.sqrt()).collect();
            let scaled = DMatrix::from_fn(nc, nc, |i, j| sw[i] * p[(i, j)] * sw[j]);
            scaled.symmetric_eigenvalues().max()
        });
        Ok(Self {
            dim: n,
            solver,
            skew,
            lmt,
            p,
            p_bound,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The condensed operator `P`.
    pub fn condensed(&self) -> &DMatrix<f64> {
        &self.p
    }
}

/// Solves one step starting from `u = 0`.
pub fn solve_step(sp: &StepProblem, cfg: &StepSolverConfig) -> Result<StepSolution> {
    let prep = PreparedStep::new(sp, cfg)?;
    solve_prepared(&prep, sp, cfg, None)
}

/// Solves one step from the initial iterate `u_init`.
pub fn solve_step_from(
    sp: &StepProblem,
    cfg: &StepSolverConfig,
    u_init: &DVector<f64>,
) -> Result<StepSolution> {
    let prep = PreparedStep::new(sp, cfg)?;
    solve_prepared(&prep, sp, cfg, Some(u_init))
}

/// Solves one step reusing the factorizations in `prep`, which must have been
/// built from a problem with the same operators.
pub fn solve_prepared(
    prep: &PreparedStep,
    sp: &StepProblem,
    cfg: &StepSolverConfig,
    u_init: Option<&DVector<f64>>,
) -> Result<StepSolution> {
    sp.check()?;
    cfg.validate()?;
    if prep.dim != sp.dim() || prep.p.nrows() != sp.components() {
        return Err(HviError::DimensionMismatch {
            context: "prepared step".into(),
            expected: prep.dim,
            actual: sp.dim(),
        });
    }
    let n = sp.dim();
    let nc = sp.components();
    let tau = sp.tau;
    let tol = cfg.tol * sp.rhs.norm().max(1.0);

    let mut u = match u_init {
        Some(u0) if u0.len() == n => u0.clone(),
        Some(u0) => {
            return Err(HviError::DimensionMismatch {
                context: "initial iterate".into(),
                expected: n,
                actual: u0.len(),
            })
        }
        None => DVector::zeros(n),
    };
    let mut r = sp.m.mul_vec(&u);
    let mut increments = Vec::new();
    let mut iterations = 0;
    let mut last_residual = f64::INFINITY;
    let mut r_outer = r.clone();

    loop {
        let rhs_eff = match &prep.skew {
            Some(s) => &sp.rhs - s.mul_vec(&u),
            None => sp.rhs.clone(),
        };
        let u_lin = prep.solver.solve(&rhs_eff);
        if nc == 0 {
            iterations += 1;
            let change = (&u_lin - &u).norm();
            u = u_lin;
            let res = residual(sp, &u);
            if res <= tol {
                return Ok(StepSolution {
                    u,
                    xi: DVector::zeros(0),
                    iterations,
                    residual: res,
                    increments,
                });
            }
            increments.push(change);
            if iterations >= cfg.max_iter {
                return Err(HviError::NoConvergence {
                    iterations,
                    residual: res,
                    step: None,
                });
            }
            continue;
        }
        let g = &prep.p * sp.m.mul_vec(&u_lin);

        // Inner sweeps on the condensed inclusion with the current linear data.
        let mut since_check = 0;
        loop {
            let previous = r.clone();
            match cfg.algorithm {
                StepAlgorithm::GaussSeidel => {
                    for c in 0..nc {
                        let a = prep.p[(c, c)];
                        let b = g[c] - prep.p.row(c).transpose().dot(&r) + a * r[c];
                        let target = prox_1d(sp.potentials[c].as_ref(), a, tau, b)?;
                        r[c] += cfg.damping * (target - r[c]);
                    }
                }
                StepAlgorithm::ForwardBackward => {
                    let theta = prep.p_bound.unwrap_or(1.0);
                    let forward = &prep.p * &r - &g;
                    for c in 0..nc {
                        let a = theta * sp.weights[c];
                        let b = a * previous[c] - forward[c];
                        let target = prox_1d(sp.potentials[c].as_ref(), a, tau, b)?;
                        r[c] += cfg.damping * (target - r[c]);
                    }
                }
            }
            iterations += 1;
            since_check += 1;
            if cfg.algorithm == StepAlgorithm::GaussSeidel && since_check % POLISH_EVERY == 0 {
                if let Some(candidate) = polish(prep, sp, &g, &r) {
                    if candidate != r
                        && condensed_energy(prep, sp, &g, &candidate) <= condensed_energy(prep, sp, &g, &r)
                    {
                        r = candidate;
                        increments.push(weighted_norm(&(&r - &previous), &sp.weights));
                        break;
                    }
                }
            }
            let diff = &r - &previous;
            increments.push(weighted_norm(&diff, &sp.weights));
            let settled = diff.amax() <= 1e-15 * r.amax().max(1.0);
            if settled || since_check >= 200 || iterations >= cfg.max_iter {
                break;
            }
        }

        let (u_new, xi) = recover(prep, sp, &u_lin, &g, &r);
        let outer_change = (&u_new - &u).amax();
        u = u_new;
        // `M u` reproduces `r` only up to roundoff (amplified when `M` is
        // badly conditioned), which matters when `r` sits on a kink. The
        // subdifferentials are widened by that discrepancy, never by more
        // than 1e-9 relative.
        let mu = sp.m.mul_vec(&u);
        let row_min = (0..nc)
            .map(|c| sp.m.row(c).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let roundoff = 16.0 * f64::EPSILON * u_lin.amax().max(u.amax()).max(1.0);
        let drift = if row_min > 0.0 {
            (&mu - &r).amax() / row_min
        } else {
            0.0
        };
        let spacing = roundoff.max(drift.min(1e-9 * u.amax().max(1.0)));
        let res = residual_widened(sp, &u, spacing);
        if res <= tol {
            return Ok(StepSolution {
                u,
                xi,
                iterations,
                residual: res,
                increments,
            });
        }
        let stalled = prep.skew.is_none() && outer_change == 0.0 && r == r_outer && res >= last_residual;
        if iterations >= cfg.max_iter || stalled {
            return Err(HviError::NoConvergence {
                iterations,
                residual: res,
                step: None,
            });
        }
        last_residual = res;
        r_outer = r.clone();
    }
}

/// Sweeps between attempts to jump to the solution of the current pieces.
const POLISH_EVERY: usize = 8;

fn weighted_norm(d: &DVector<f64>, w: &[f64]) -> f64 {
    d.iter().zip(w).map(|(d, w)| w * d * d).sum::<f64>().sqrt()
}

/// `F(r) = r^T P r / 2 - g^T r + tau sum_c j_c(r_c)`, strongly convex under
/// the smallness condition; the condensed inclusion is `0 in dF(r)`.
fn condensed_energy(prep: &PreparedStep, sp: &StepProblem, g: &DVector<f64>, r: &DVector<f64>) -> f64 {
    let j: f64 = r
        .iter()
        .zip(sp.potentials.iter())
        .map(|(rc, j)| j.value(*rc))
        .sum();
    0.5 * r.dot(&(&prep.p * r)) - g.dot(r) + sp.tau * j
}

/// Solves the condensed inclusion with every component frozen on its current
/// piece: pinned to a breakpoint it sits on, or with the selection replaced
/// by its affine form (a tangent on curved pieces). Gauss-Seidel alone crawls
/// when `P` is badly conditioned; once the pieces are identified this lands
/// on the solution, and on curved pieces it is a Newton step.
fn polish(prep: &PreparedStep, sp: &StepProblem, g: &DVector<f64>, r: &DVector<f64>) -> Option<DVector<f64>> {
    let nc = r.len();
    let tau = sp.tau;
    let snap = 1e-10 * (1.0 + r.amax());
    let mut a = prep.p.clone();
    let mut b = g.clone();
    let mut pieces = Vec::with_capacity(nc);
    for c in 0..nc {
        let j = sp.potentials[c].as_ref();
        let rc = r[c];
        let mut bps = j.breakpoints();
        bps.sort_by(f64::total_cmp);
        if let Some(&bp) = bps.iter().find(|bp| (rc - **bp).abs() <= snap) {
            a.row_mut(c).fill(0.0);
            a[(c, c)] = 1.0;
            b[c] = bp;
            pieces.push((bp, bp));
            continue;
        }
        let lo = bps
            .iter()
            .rev()
            .copied()
            .find(|bp| *bp < rc)
            .unwrap_or(f64::NEG_INFINITY);
        let hi = bps.iter().copied().find(|bp| *bp > rc).unwrap_or(f64::INFINITY);
        let (alpha, beta) = match j.affine_piece(lo, hi) {
            Some(ab) => ab,
            None => {
                let h = 1e-7 * (1.0 + rc.abs());
                let (l, u) = ((rc - h).max(lo), (rc + h).min(hi));
                let slope = (j.subgradient(u).lo - j.subgradient(l).lo) / (u - l);
                (j.subgradient(rc).lo - slope * rc, slope)
            }
        };
        a[(c, c)] += tau * beta;
        b[c] -= tau * alpha;
        pieces.push((lo, hi));
    }
    let x = a.lu().solve(&b)?;
    x.iter()
        .all(|v| v.is_finite())
        .then(|| DVector::from_iterator(nc, x.iter().zip(&pieces).map(|(v, (lo, hi))| v.clamp(*lo, *hi))))
}

/// `xi = proj_{dj(r)}((g - P r) / tau)` and `u = u_lin - tau L^{-1} M^T xi`.
fn recover(
    prep: &PreparedStep,
    sp: &StepProblem,
    u_lin: &DVector<f64>,
    g: &DVector<f64>,
    r: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let raw = (g - &prep.p * r) / sp.tau;
    let xi = DVector::from_iterator(
        r.len(),
        raw.iter()
            .zip(r.iter())
            .zip(sp.potentials.iter())
            .map(|((x, rc), j)| j.subgradient(*rc).project(*x)),
    );
    let u = u_lin - &prep.lmt * (&xi * sp.tau);
    (u, xi)
}

/// Solves `a r + tau zeta = b` with `zeta in dj(r)`.
///
/// The map `r -> a r + tau dj(r) - b` is strongly monotone when
/// `a - tau m_J > 0`, so it has exactly one zero; it is located by checking
/// the breakpoints, bracketing between them, and finishing with the closed
/// form on affine pieces or with bisection.
pub fn prox_1d(j: &dyn LipschitzPotential, a: f64, tau: f64, b: f64) -> Result<f64> {
    let margin = a - tau * j.relaxation_constant();
    if !(margin > 0.0) {
        return Err(HviError::IllPosedScalarInclusion(margin));
    }
    // Sign of the inclusion map: -1 left of the root, 0 at it, +1 right of it.
    let sign = |r: f64| -> i8 {
        let s = j.subgradient(r);
        let base = a * r - b;
        if base + tau * s.hi < 0.0 {
            -1
        } else if base + tau * s.lo > 0.0 {
            1
        } else {
            0
        }
    };

    let mut breakpoints = j.breakpoints();
    breakpoints.sort_by(f64::total_cmp);
    for &bp in &breakpoints {
        if sign(bp) == 0 {
            return Ok(bp);
        }
    }

    let c = j.growth_constant();
    let (mut lo, mut hi) = if a > tau * c {
        let radius = (b.abs() + tau * c) / (a - tau * c);
        (-radius - 1.0, radius + 1.0)
    } else {
        let mut radius = (b.abs() / a).max(1.0);
        let mut found = None;
        for _ in 0..200 {
            if sign(-radius) <= 0 && sign(radius) >= 0 {
                found = Some(radius);
                break;
            }
            radius *= 2.0;
        }
        match found {
            Some(r) => (-r, r),
            None => {
                return Err(HviError::BracketFailure {
                    lo: -radius,
                    hi: radius,
                })
            }
        }
    };
    match (sign(lo), sign(hi)) {
        (0, _) => return Ok(lo),
        (_, 0) => return Ok(hi),
        (-1, 1) => {}
        _ => return Err(HviError::BracketFailure { lo, hi }),
    }

    // Shrink to the piece between consecutive breakpoints holding the root.
    for &bp in &breakpoints {
        if lo < bp && bp < hi {
            if sign(bp) < 0 {
                lo = bp;
            } else {
                hi = bp;
            }
        }
    }

    if let Some((alpha, beta)) = j.affine_piece(lo, hi) {
        let denom = a + tau * beta;
        if denom > 0.0 {
            let r = (b - tau * alpha) / denom;
            if lo <= r && r <= hi {
                return Ok(r);
            }
        }
    }

    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match sign(mid) {
            0 => return Ok(mid),
            s if s < 0 => lo = mid,
            _ => hi = mid,
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Distance from zero to `{(K + H) u - rhs + tau M^T xi : xi_c in dj_c((M u)_c)}`.
pub fn residual(sp: &StepProblem, u: &DVector<f64>) -> f64 {
    residual_widened(sp, u, 0.0)
}

/// Like [`residual`] with each subdifferential replaced by the hull over
/// `[r_c - rho_c, r_c + rho_c]`, `rho_c = spacing * sum_i |M_ci|`: the values
/// of `M v` for `v` in a box of half-width `spacing` around `u`.
pub fn residual_widened(sp: &StepProblem, u: &DVector<f64>, spacing: f64) -> f64 {
    let mut base = sp.apply_linear(u) - &sp.rhs;
    let nc = sp.components();
    if nc == 0 {
        return base.norm();
    }
    let r = sp.m.mul_vec(u);
    let boxes: Vec<Interval> = (0..nc)
        .map(|c| {
            let j = &sp.potentials[c];
            if spacing > 0.0 {
                let rho = spacing * sp.m.row(c).map(|(_, v)| v.abs()).sum::<f64>();
                j.subgradient_hull(r[c] - rho, r[c] + rho)
            } else {
                j.subgradient(r[c])
            }
        })
        .collect();
    let tau = sp.tau;

    if sp.m.rows_have_disjoint_support() {
        for (c, bx) in boxes.iter().enumerate() {
            let norm_sq: f64 = sp.m.row(c).map(|(_, v)| v * v).sum();
            if norm_sq == 0.0 {
                continue;
            }
            let dot: f64 = sp.m.row(c).map(|(i, v)| v * base[i]).sum();
            let xi = bx.project(-dot / (tau * norm_sq));
            for (i, v) in sp.m.row(c) {
                base[i] += tau * xi * v;
            }
        }
        return base.norm();
    }

    // Projected coordinate descent on the box-constrained least squares.
    let mut xi: Vec<f64> = boxes.iter().map(|b| b.project(0.0)).collect();
    let mut res = base.clone();
    for (c, x) in xi.iter().enumerate() {
        for (i, v) in sp.m.row(c) {
            res[i] += tau * x * v;
        }
    }
    for _ in 0..1000 {
        let mut change: f64 = 0.0;
        for c in 0..nc {
            let norm_sq: f64 = sp.m.row(c).map(|(_, v)| v * v).sum();
            if norm_sq == 0.0 {
                continue;
            }
            let dot: f64 = sp.m.row(c).map(|(i, v)| v * res[i]).sum();
            let new = boxes[c].project(xi[c] - dot / (tau * norm_sq));
            let delta = new - xi[c];
            if delta != 0.0 {
                for (i, v) in sp.m.row(c) {
                    res[i] += tau * delta * v;
                }
                xi[c] = new;
                change = change.max(delta.abs());
            }
        }
        if change <= 1e-15 * xi.iter().fold(1.0f64, |m, x| m.max(x.abs())) {
            break;
        }
    }
    res.norm()
}

/// Exhaustive grid search for the minimizer of the widened residual over a
/// box, for problems with at most three unknowns.
///
/// The grid is refined around the best point (spacing divided by ten each
/// round) until the spacing drops below `1e-9`.
pub fn brute_force_step(sp: &StepProblem, bounds: &[Interval], grid: usize) -> Result<DVector<f64>> {
    let n = sp.dim();
    if n > 3 {
        return Err(HviError::OracleTooLarge(n));
    }
    sp.check()?;
    if bounds.len() != n {
        return Err(HviError::DimensionMismatch {
            context: "brute-force box".into(),
            expected: n,
            actual: bounds.len(),
        });
    }
    let grid = grid.max(3);
    let mut lo: Vec<f64> = bounds.iter().map(|b| b.lo).collect();
    let mut hi: Vec<f64> = bounds.iter().map(|b| b.hi).collect();
    let mut first = true;
    let mut best = DVector::zeros(n);
    for _round in 0..40 {
        let spacing: Vec<f64> = (0..n).map(|d| (hi[d] - lo[d]) / (grid - 1) as f64).collect();
        let width = spacing.iter().fold(0.0f64, |m, s| m.max(*s));
        let total = grid.pow(n as u32);
        let mut best_val = f64::INFINITY;
        let mut best_idx = vec![0usize; n];
        let mut point = DVector::zeros(n);
        for flat in 0..total {
            let mut rest = flat;
            let mut idx = [0usize; 3];
            for d in 0..n {
                idx[d] = rest % grid;
                rest /= grid;
                point[d] = lo[d] + idx[d] as f64 * spacing[d];
            }
            let val = residual_widened(sp, &point, width);
            if val < best_val {
                best_val = val;
                best_idx.copy_from_slice(&idx[..n]);
                best.copy_from(&point);
            }
        }
        let on_edge = (0..n).find(|&d| best_idx[d] == 0 || best_idx[d] == grid - 1);
        if let Some(dof) = on_edge {
            if first {
                return Err(HviError::BoundaryHit { dof });
            }
            // A refined window can clip the minimizer: recenter without shrinking.
            for d in 0..n {
                let half = 0.5 * (hi[d] - lo[d]);
                lo[d] = best[d] - half;
                hi[d] = best[d] + half;
            }
            continue;
        }
        first = false;
        if width <= 1e-9 {
            break;
        }
        // New spacing is a tenth of the current one.
        for d in 0..n {
            let half = 0.05 * spacing[d] * (grid - 1) as f64;
            let half = half.max(spacing[d]);
            lo[d] = best[d] - half;
            hi[d] = best[d] + half;
        }
    }
    Ok(best)
}
