//! Randomized cross-check of the step solver against exhaustive search on
//! problems with at most two unknowns.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::hvi::{
    AbsPotential, CoerciveOperator, HalfSquare, Interval, NonmonotoneDrop, QuadraticCompliance,
    SharedPotential, ZeroPotential,
};
use crate::linalg::CsrMatrix;
use crate::step::{brute_force_step, solve_step, StepProblem, StepSolverConfig};
use crate::{HviError, Result};

/// A random step together with a box that contains its solution.
#[derive(Debug, Clone)]
pub struct OracleCase {
    pub problem: StepProblem,
    pub bounds: Vec<Interval>,
    pub nonmonotone: bool,
}

/// Draws case `index` of the suite seeded by `seed`. Odd indices may use the
/// nonmonotone potential, with its stiffness capped so that
/// `tau m_J |M|^2 <= m_K / 2`.
pub fn random_case(seed: u64, index: u64) -> Result<OracleCase> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15));
    let nonmonotone = index % 2 == 1;
    let n = rng.gen_range(1..=2usize);
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let k = &l * l.transpose() + DMatrix::identity(n, n) * rng.gen_range(0.3..1.5);
    let eig = k.clone().symmetric_eigen().eigenvalues;
    let m_k: f64 = eig.min();
    let nc = rng.gen_range(1..=n);
    let m = DMatrix::from_fn(nc, n, |_, _| rng.gen_range(-1.5..1.5));
    let m_norm: f64 = m.singular_values().max();
    let tau: f64 = rng.gen_range(0.2..1.0);
    let rhs = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));

    let kinds = if nonmonotone { 5 } else { 4 };
    let mut potentials: Vec<SharedPotential> = Vec::with_capacity(nc);
    let (mut m_j, mut c_j) = (0.0f64, 0.0f64);
    for _ in 0..nc {
        let c: f64 = rng.gen_range(0.2..3.0);
        let j: SharedPotential = match rng.gen_range(0..kinds) {
            0 => Arc::new(ZeroPotential),
            1 => Arc::new(HalfSquare { stiffness: c }),
            2 => Arc::new(QuadraticCompliance { stiffness: c }),
            3 => Arc::new(AbsPotential { weight: c }),
            _ => {
                let beta: f64 = rng.gen_range(0.1..0.9);
                let cap = 0.5 * m_k / (tau * (1.0 - beta) * m_norm * m_norm).max(1e-12);
                Arc::new(NonmonotoneDrop::new(c.min(cap), rng.gen_range(0.2..1.5), beta))
            }
        };
        m_j = m_j.max(j.relaxation_constant());
        c_j = c_j.max(j.growth_constant());
        potentials.push(j);
    }
    let margin = m_k - tau * m_j * m_norm * m_norm;
    if margin <= 0.0 {
        return Err(HviError::SmallnessViolated {
            m_b: m_k,
            bound: tau * m_j * m_norm * m_norm,
        });
    }
    // A priori bound on |u| with slack, so the search box never clips.
    let radius = 1.5 * (rhs.norm() + tau * m_norm * c_j * (nc as f64).sqrt()) / margin + 0.1;
    let op = CoerciveOperator::new(CsrMatrix::from_dense(&k), m_k, k.norm())?;
    Ok(OracleCase {
        problem: StepProblem::new(op, tau, rhs, CsrMatrix::from_dense(&m), potentials),
        bounds: vec![Interval::new(-radius, radius); n],
        nonmonotone,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleOutcome {
    pub index: u64,
    pub dim: usize,
    pub nonmonotone: bool,
    /// Max-norm distance between the solver and the search.
    pub deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleReport {
    pub seed: u64,
    pub tolerance: f64,
    pub cases: Vec<OracleOutcome>,
    pub max_deviation: f64,
    pub passed: bool,
}

/// Runs `count` cases on up to `threads` worker threads. The report does not
/// depend on the thread count.
pub fn run_oracle_suite(
    count: u64,
    seed: u64,
    threads: usize,
    tolerance: f64,
    cfg: &StepSolverConfig,
) -> Result<OracleReport> {
    if threads == 0 {
        return Err(HviError::InvalidArgument("thread count must be positive".into()));
    }
    let check = |index: u64| -> Result<OracleOutcome> {
        let case = random_case(seed, index)?;
        let fast = solve_step(&case.problem, cfg)?;
        let slow = brute_force_step(&case.problem, &case.bounds, 41)?;
        Ok(OracleOutcome {
            index,
            dim: case.problem.dim(),
            nonmonotone: case.nonmonotone,
            deviation: (&fast.u - &slow).amax(),
        })
    };
    let workers = threads.min(count.max(1) as usize) as u64;
    let mut cases: Vec<OracleOutcome> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let check = &check;
                s.spawn(move || {
                    (w..count)
                        .step_by(workers as usize)
                        .map(check)
                        .collect::<Result<Vec<_>>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("oracle worker panicked"))
            .collect::<Result<Vec<Vec<_>>>>()
    })?
    .into_iter()
    .flatten()
    .collect();
    cases.sort_by_key(|c| c.index);
    let max_deviation = cases.iter().map(|c| c.deviation).fold(0.0, f64::max);
    Ok(OracleReport {
        seed,
        tolerance,
        cases,
        max_deviation,
        passed: max_deviation <= tolerance,
    })
}
