//! Implicit Euler (Rothe) time stepping with a history term, piecewise
//! interpolants of the discrete solution and the a-priori quantities.

use std::io::Write;
use std::sync::Arc;

use nalgebra::DVector;

use crate::error::{HviError, Result};
use crate::hvi::{validate_hypotheses, AbstractHvi, CoerciveOperator};
use crate::linalg::{CsrMatrix, Gram};
use crate::quadrature::gauss2_nodes;
use crate::step::{solve_prepared, PreparedStep, StepProblem, StepSolverConfig};

/// Uniform grid `t_k = k tau`, `tau = T / N`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub horizon: f64,
    pub steps: usize,
    pub tau: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(horizon > 0.0) {
            return Err(HviError::InvalidArgument(format!(
                "time grid needs N >= 1 and T > 0 (got N = {steps}, T = {horizon})"
            )));
        }
        Ok(Self {
            horizon,
            steps,
            tau: horizon / steps as f64,
        })
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.horizon
        } else {
            k as f64 * self.tau
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.node(k)).collect()
    }

    /// Index `k` with `t in (t_{k-1}, t_k]`, and `0` for `t <= 0`.
    pub fn interval_of(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 0;
        }
        let k = (t / self.tau).ceil() as usize;
        // Guard against rounding right at a node.
        let k = if k > 0 && t <= self.node(k - 1) { k - 1 } else { k };
        k.clamp(1, self.steps)
    }
}

/// The Rothe sequence with its selections, history states and loads.
#[derive(Debug, Clone)]
pub struct DiscreteTrajectory {
    pub grid: TimeGrid,
    /// `u^0, ..., u^N`.
    pub states: Vec<DVector<f64>>,
    /// `xi^1, ..., xi^N`.
    pub selections: Vec<DVector<f64>>,
    /// `x^1, ..., x^N`.
    pub histories: Vec<DVector<f64>>,
    /// `f^1, ..., f^N`.
    pub loads: Vec<DVector<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: Vec<usize>,
    /// Norm of the state space.
    pub gram: Gram,
    /// Weights of the constraint-space norm.
    pub weights: Arc<[f64]>,
}

impl DiscreteTrajectory {
    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    /// `v^k = (u^k - u^{k-1}) / tau` for `1 <= k <= N`.
    pub fn rate(&self, k: usize) -> Result<DVector<f64>> {
        self.check_step(k)?;
        Ok((&self.states[k] - &self.states[k - 1]) / self.grid.tau)
    }

    pub fn check_step(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.grid.steps {
            return Err(HviError::IndexOutOfRange {
                index: k,
                len: self.grid.steps,
            });
        }
        Ok(())
    }

    pub fn interpolants(&self) -> Interpolants<'_> {
        Interpolants { traj: self }
    }

    fn x_norm(&self, r: &DVector<f64>) -> f64 {
        r.iter()
            .zip(self.weights.iter())
            .map(|(v, w)| w * v * v)
            .sum::<f64>()
            .sqrt()
    }

    /// Comma-separated dump: header `t,u0,u1,...`, one row per time node.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        write!(out, "t")?;
        for i in 0..self.dim() {
            write!(out, ",u{i}")?;
        }
        writeln!(out)?;
        for (k, u) in self.states.iter().enumerate() {
            write!(out, "{}", self.grid.node(k))?;
            for v in u.iter() {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Piecewise interpolants of a trajectory. Constant interpolants take the
/// value of step `k` on `(t_{k-1}, t_k]`.
#[derive(Debug, Clone, Copy)]
pub struct Interpolants<'a> {
    traj: &'a DiscreteTrajectory,
}

impl Interpolants<'_> {
    /// Piecewise affine `u_tau`.
    pub fn affine(&self, t: f64) -> DVector<f64> {
        let g = &self.traj.grid;
        let k = g.interval_of(t);
        if k == 0 {
            return self.traj.states[0].clone();
        }
        let t0 = g.node(k - 1);
        let theta = ((t - t0) / g.tau).clamp(0.0, 1.0);
        &self.traj.states[k - 1] * (1.0 - theta) + &self.traj.states[k] * theta
    }

    /// Piecewise constant `u_bar`, with `u_bar(0) = u^0`.
    pub fn constant(&self, t: f64) -> DVector<f64> {
        self.traj.states[self.traj.grid.interval_of(t)].clone()
    }

    pub fn selection(&self, t: f64) -> DVector<f64> {
        self.traj.selections[self.traj.grid.interval_of(t).max(1) - 1].clone()
    }

    pub fn load(&self, t: f64) -> DVector<f64> {
        self.traj.loads[self.traj.grid.interval_of(t).max(1) - 1].clone()
    }

    pub fn history_state(&self, t: f64) -> DVector<f64> {
        self.traj.histories[self.traj.grid.interval_of(t).max(1) - 1].clone()
    }
}

/// Runs the Rothe scheme with `n` uniform steps.
pub fn run_rothe(p: &AbstractHvi, n: usize, cfg: &StepSolverConfig) -> Result<DiscreteTrajectory> {
    p.check_dimensions()?;
    cfg.validate()?;
    let grid = TimeGrid::new(p.horizon, n)?;
    let report = validate_hypotheses(p);
    if !report.h0_holds {
        let norm = report.coupling_norm.unwrap_or(0.0);
        return Err(HviError::SmallnessViolated {
            m_b: report.m_b,
            bound: report.m_j * norm * norm,
        });
    }
    let tau = grid.tau;
    if tau >= report.tau0 {
        return Err(HviError::TauTooLarge {
            tau,
            tau0: report.tau0,
        });
    }

    let dim = p.dim();
    let kmat = p.a.matrix().add_scaled(tau, p.b.matrix());
    let k_op = Arc::new(CoerciveOperator::new_unchecked_symmetry(
        kmat,
        p.a.coercivity() + tau * p.b.coercivity(),
        p.a.bound() + tau * p.b.bound(),
    )?);
    let m = Arc::new(p.coupling.matrix().clone());
    let weights: Arc<[f64]> = p.coupling.weights().into();
    let potentials: Arc<[_]> = p.potentials.clone().into();
    let kernel = &p.kernel;
    let nterms = kernel.terms().len();

    let mut states = Vec::with_capacity(n + 1);
    states.push(p.u0.clone());
    let mut selections = Vec::with_capacity(n);
    let mut histories = Vec::with_capacity(n);
    let mut loads = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    let mut iterations = Vec::with_capacity(n);
    let mut cache: Option<(Vec<u64>, PreparedStep, Option<Arc<CsrMatrix>>)> = None;

    for k in 1..=n {
        let t_k = grid.node(k);
        let f_k = p.load_mean(grid.node(k - 1), t_k);

        // Past part of the history sum, j < k.
        let mut sums = vec![DVector::zeros(dim); nterms];
        for (j, u) in states.iter().enumerate().skip(1) {
            let coeffs = kernel.interval_coefficients(t_k, grid.node(j - 1), grid.node(j));
            for (s, c) in sums.iter_mut().zip(&coeffs) {
                if *c != 0.0 {
                    s.axpy(*c, u, 1.0);
                }
            }
        }
        let past = kernel.apply_coupled(&sums);

        let own = kernel.interval_coefficients(t_k, grid.node(k - 1), t_k);
        let key: Vec<u64> = own.iter().map(|c| c.to_bits()).collect();
        let mut rhs = f_k.clone() * tau;
        p.a.matrix().mul_vec_acc(1.0, &states[k - 1], &mut rhs);
        rhs.axpy(-tau, &past, 1.0);

        if cache.as_ref().map_or(true, |(cached, _, _)| *cached != key) {
            let parts: Vec<_> = kernel
                .coupled_terms()
                .iter()
                .zip(&own)
                .map(|(m, c)| (tau * c, m))
                .collect();
            let h = CsrMatrix::combination(dim, dim, &parts);
            let h = (!h.is_zero()).then(|| Arc::new(h));
            let sp = StepProblem {
                k: k_op.clone(),
                tau,
                tau0: report.tau0,
                self_history: h.clone(),
                rhs: rhs.clone(),
                m: m.clone(),
                weights: weights.clone(),
                potentials: potentials.clone(),
            };
            let prep = PreparedStep::new(&sp, cfg).map_err(|e| step_error(e, k))?;
            cache = Some((key, prep, h));
        }
        let (_, prep, h) = cache.as_ref().expect("prepared step");
        let sp = StepProblem {
            k: k_op.clone(),
            tau,
            tau0: report.tau0,
            self_history: h.clone(),
            rhs,
            m: m.clone(),
            weights: weights.clone(),
            potentials: potentials.clone(),
        };
        let sol = solve_prepared(prep, &sp, cfg, Some(&states[k - 1])).map_err(|e| step_error(e, k))?;

        let mut own_sums = sums;
        for (s, c) in own_sums.iter_mut().zip(&own) {
            s.axpy(*c, &sol.u, 1.0);
        }
        histories.push(kernel.apply_coupled(&own_sums));
        loads.push(f_k);
        selections.push(sol.xi);
        residuals.push(sol.residual);
        iterations.push(sol.iterations);
        states.push(sol.u);
    }

    Ok(DiscreteTrajectory {
        grid,
        states,
        selections,
        histories,
        loads,
        residuals,
        iterations,
        gram: p.gram.clone(),
        weights,
    })
}

fn step_error(e: HviError, k: usize) -> HviError {
    match e {
        HviError::NoConvergence {
            iterations, residual, ..
        } => HviError::NoConvergence {
            iterations,
            residual,
            step: Some(k),
        },
        other => other,
    }
}

/// The four a-priori quantities of the scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimateReport {
    /// `max_k |u^k|` over `k = 0..N`.
    pub max_state: f64,
    /// `sum_{k=1}^N |u^k - u^{k-1}|^2`.
    pub sum_sq_increments: f64,
    /// `max_k |xi^k|_X`.
    pub max_selection: f64,
    /// `tau sum_{k=1}^N |v^k|^2`.
    pub sum_sq_rates: f64,
}

pub fn apriori_audit(traj: &DiscreteTrajectory) -> EstimateReport {
    let g = &traj.gram;
    let tau = traj.grid.tau;
    let max_state = traj.states.iter().map(|u| g.norm(u)).fold(0.0, f64::max);
    let sum_sq_increments: f64 = traj
        .states
        .windows(2)
        .map(|w| g.norm(&(&w[1] - &w[0])).powi(2))
        .sum();
    let max_selection = traj.selections.iter().map(|x| traj.x_norm(x)).fold(0.0, f64::max);
    let sum_sq_rates = traj
        .states
        .windows(2)
        .map(|w| g.norm(&((&w[1] - &w[0]) / tau)).powi(2))
        .sum::<f64>()
        * tau;
    EstimateReport {
        max_state,
        sum_sq_increments,
        max_selection,
        sum_sq_rates,
    }
}

/// `|u_bar - u_tau|` in `L^2(0, T; V)`, integrated exactly (the integrand is
/// quadratic on each step).
pub fn interp_gap(traj: &DiscreteTrajectory) -> f64 {
    let it = traj.interpolants();
    let mut total = 0.0;
    for k in 1..=traj.grid.steps {
        let (a, b) = (traj.grid.node(k - 1), traj.grid.node(k));
        for s in gauss2_nodes(a, b) {
            let d = it.constant(s) - it.affine(s);
            total += 0.5 * (b - a) * traj.gram.norm(&d).powi(2);
        }
    }
    total.sqrt()
}

/// `(tau^2 / 3) tau sum_k |v^k|^2`, the bound on the squared gap.
pub fn interp_gap_bound(traj: &DiscreteTrajectory) -> f64 {
    let tau = traj.grid.tau;
    tau * tau / 3.0 * apriori_audit(traj).sum_sq_rates
}

/// `|u_bar_1 - u_bar_2|` in `L^2(0, T; V)` for two trajectories whose grids
/// are nested (the finer step divides the coarser one).
pub fn piecewise_constant_distance(a: &DiscreteTrajectory, b: &DiscreteTrajectory) -> Result<f64> {
    let (coarse, fine) = if a.grid.steps <= b.grid.steps {
        (a, b)
    } else {
        (b, a)
    };
    let ratio = fine.grid.steps / coarse.grid.steps;
    if ratio * coarse.grid.steps != fine.grid.steps
        || (coarse.grid.horizon - fine.grid.horizon).abs() > 1e-12 * coarse.grid.horizon
    {
        return Err(HviError::NotNested(format!(
            "time grids with {} and {} steps",
            coarse.grid.steps, fine.grid.steps
        )));
    }
    let mut total = 0.0;
    for k in 1..=fine.grid.steps {
        let kc = (k - 1) / ratio + 1;
        let d = &fine.states[k] - &coarse.states[kc];
        total += fine.grid.tau * fine.gram.norm(&d).powi(2);
    }
    Ok(total.sqrt())
}
