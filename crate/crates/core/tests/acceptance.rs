//! The ten acceptance criteria, one PASS/FAIL line each.
//!
//! Runs with a custom harness so the lines are always printed; the process
//! exits with status 1 when any criterion fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::Instant;

use common::*;
use hvi_core::contact::{
    assemble, build_abstract, hanging_square_benchmark, law_catalog, read_scenario, LawParams, LAW_NAMES,
};
use hvi_core::convergence::{error_ratios, run_study, time_study};
use hvi_core::fem::BoundaryRegion;
use hvi_core::hvi::{
    CoerciveOperator, Coupling, HistoryKernel, KernelTerm, LipschitzPotential, SharedPotential,
};
use hvi_core::linalg::{CsrMatrix, Gram};
use hvi_core::rothe::{apriori_audit, interp_gap, interp_gap_bound, run_rothe, DiscreteTrajectory};
use hvi_core::step::{brute_force_step, solve_step, solve_step_from, StepSolverConfig};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn scenario(name: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn rate() -> Outcome {
    let start = Instant::now();
    let report = run_study(&hanging_square_benchmark(4, 8), 4, 2).map_err(|e| e.to_string())?;
    let secs = start.elapsed().as_secs_f64();
    let p = report.fitted_rate;
    check(
        (0.8..=1.3).contains(&p) && secs < 300.0,
        format!("fitted p = {p:.4} on 4 levels, {secs:.1} s"),
    )
}

fn temporal_order() -> Outcome {
    let p = scalar_memory_problem(1.0, 4.0, 1.0);
    let cfg = StepSolverConfig::default();
    let levels = time_study(&p, 8, 4, 8, &cfg).map_err(|e| e.to_string())?;
    let ratios = error_ratios(&levels);
    check(
        ratios.iter().all(|r| (1.7..=2.3).contains(r)),
        format!("k-only ratios {ratios:.3?}"),
    )
}

fn oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let cfg = StepSolverConfig {
        tol: 1e-12,
        max_iter: 10_000,
        ..StepSolverConfig::default()
    };
    let convex = [
        PotentialKind::Zero,
        PotentialKind::HalfSquare,
        PotentialKind::Quadratic,
        PotentialKind::Abs,
    ];
    let mut worst: f64 = 0.0;
    let mut nonmonotone = 0;
    for seed in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let allow: &[PotentialKind] = if seed % 2 == 0 {
            &convex
        } else {
            &[PotentialKind::Nonmonotone]
        };
        let inst = random_step(&mut rng, allow);
        nonmonotone += inst.kinds.contains(&PotentialKind::Nonmonotone) as usize;
        let u = solve_step(&inst.problem, &cfg)
            .map_err(|e| format!("seed {seed}: {e}"))?
            .u;
        let oracle =
            brute_force_step(&inst.problem, &inst.box_, 41).map_err(|e| format!("seed {seed}: {e}"))?;
        worst = worst.max((u - oracle).amax());
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst <= 1e-6 && secs < 60.0,
        format!("100 instances ({nonmonotone} nonmonotone), max deviation {worst:.2e}, {secs:.1} s"),
    )
}

fn uniqueness() -> Outcome {
    let cfg = StepSolverConfig {
        tol: 1e-13,
        max_iter: 10_000,
        ..StepSolverConfig::default()
    };
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let inst = random_step(&mut rng, &ALL_KINDS);
        let n = inst.problem.dim();
        let sols: Vec<DVector<f64>> = (0..5)
            .map(|_| {
                let init = DVector::from_fn(n, |_, _| rng.gen_range(-20.0..20.0));
                solve_step_from(&inst.problem, &cfg, &init).map(|s| s.u)
            })
            .collect::<Result<_, _>>()
            .map_err(|e| format!("seed {seed}: {e}"))?;
        for a in &sols {
            for b in &sols {
                worst = worst.max((a - b).amax());
            }
        }
    }
    check(worst < 1e-8, format!("50 x 5 starts, max spread {worst:.2e}"))
}

/// Upper quantities may shrink (the increment sum is O(tau)); limits that
/// converge to nonzero values must also stay above half their N=16 value.
fn apriori(runs: &mut Vec<DiscreteTrajectory>) -> Outcome {
    let mut cc_nonmono = read_scenario(&scenario("nonmonotone.toml")).map_err(|e| e.to_string())?;
    cc_nonmono.solver.max_iter = 10_000;
    let benches = [
        ("hanging_square", hanging_square_benchmark(4, 16)),
        ("nonmonotone", cc_nonmono),
    ];
    let mut worst_up: f64 = 0.0;
    let mut worst_down = f64::INFINITY;
    for (name, cc) in benches {
        let cp = build_abstract(&cc).map_err(|e| e.to_string())?;
        let mut base = None;
        for n in [16, 32, 64, 128] {
            let traj = run_rothe(&cp.hvi, n, &cc.solver).map_err(|e| format!("{name} N={n}: {e}"))?;
            let r = apriori_audit(&traj);
            let q = [r.max_state, r.sum_sq_increments, r.max_selection, r.sum_sq_rates];
            runs.push(traj);
            let b = *base.get_or_insert(q);
            for i in 0..4 {
                if b[i] > 0.0 {
                    worst_up = worst_up.max(q[i] / b[i]);
                    if i != 1 {
                        worst_down = worst_down.min(q[i] / b[i]);
                    }
                }
            }
        }
    }
    check(
        worst_up <= 2.0 && worst_down >= 0.5,
        format!("2 benchmarks, N = 16..128: ratios to N=16 in [{worst_down:.3}, {worst_up:.3}]"),
    )
}

fn single_step_square() -> hvi_core::hvi::AbstractHvi {
    let mut cc = hanging_square_benchmark(2, 1);
    cc.horizon = 0.5;
    build_abstract(&cc).unwrap().hvi
}

fn gap(runs: &[DiscreteTrajectory]) -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for traj in runs {
        worst = worst.max(interp_gap(traj).powi(2) - interp_gap_bound(traj));
    }
    // One step: u_bar - u_tau = (1 - s/tau)(u1 - u0) and the inequality is an equality.
    let cfg = StepSolverConfig::default();
    let mut single: f64 = 0.0;
    for p in [scalar_memory_problem(1.0, 4.0, 0.2), single_step_square()] {
        let mut p = p;
        p.u0 = DVector::from_fn(p.dim(), |i, _| 0.01 * (i as f64).sin());
        let traj = run_rothe(&p, 1, &cfg).map_err(|e| e.to_string())?;
        let d = traj.gram.norm(&(&traj.states[1] - &traj.states[0]));
        let by_hand = traj.grid.tau / 3.0 * d * d;
        single = single
            .max((interp_gap(&traj).powi(2) - interp_gap_bound(&traj)).abs())
            .max((interp_gap(&traj).powi(2) - by_hand).abs());
    }
    check(
        worst <= 1e-12 && single <= 1e-12,
        format!(
            "{} runs, max gap^2 - bound {worst:.2e}; single step equality to {single:.2e}",
            runs.len()
        ),
    )
}

/// `|(R u1)(t) - (R u2)(t)| <= c_E c_q int_0^t |u1 - u2| ds` on random
/// piecewise linear trajectories; the right side by adaptive Simpson.
fn history_lipschitz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let cp = assemble(&hanging_square_benchmark(2, 4)).map_err(|e| e.to_string())?;
    let contact = (cp.hvi.kernel.clone(), cp.hvi.gram.clone(), true);
    let scalar = {
        let c = 3.0;
        let k = HistoryKernel::new(
            CsrMatrix::identity(2),
            vec![KernelTerm::new(
                |t, s| (-(t - s)).exp(),
                CsrMatrix::diagonal(&[c, -c]),
            )],
            DVector::zeros(2),
            1.0,
            c,
            c,
        )
        .unwrap();
        (k, Gram::Euclidean, false)
    };
    let horizon = 1.0;
    let mut worst = f64::NEG_INFINITY;
    let mut tightest: f64 = 0.0;
    for pair in 0..100 {
        let (kernel, gram, dual) = if pair % 2 == 0 { &contact } else { &scalar };
        let n = kernel.dim();
        let nodes = rng.gen_range(2..10usize);
        let knots = |rng: &mut ChaCha8Rng| -> Vec<DVector<f64>> {
            (0..=nodes)
                .map(|_| DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0)))
                .collect()
        };
        let (k1, k2) = (knots(&mut rng), knots(&mut rng));
        let eval = move |k: &[DVector<f64>], s: f64| -> DVector<f64> {
            let x = s / horizon * nodes as f64;
            let i = (x.floor() as usize).min(nodes - 1);
            let w = x - i as f64;
            &k[i] * (1.0 - w) + &k[i + 1] * w
        };
        let u1 = |s: f64| eval(&k1, s);
        let u2 = |s: f64| eval(&k2, s);
        let t = rng.gen_range(0.05..=horizon);
        let lhs_vec =
            kernel.apply_history(&u1, t, horizon).unwrap() - kernel.apply_history(&u2, t, horizon).unwrap();
        let lhs = if *dual {
            gram.dual_norm(&lhs_vec)
        } else {
            gram.norm(&lhs_vec)
        };
        let integral = simpson(&|s| gram.norm(&(u1(s) - u2(s))), 0.0, t, 1e-12);
        let rhs = kernel.lipschitz() * integral;
        worst = worst.max(lhs - rhs);
        tightest = tightest.max(lhs / rhs);
    }
    check(
        worst <= 1e-8,
        format!("100 pairs, max excess {worst:.2e}, largest lhs/rhs {tightest:.3}"),
    )
}

fn linear_reduction(runs: &mut Vec<DiscreteTrajectory>) -> Outcome {
    let cc = read_scenario(&scenario("linear.toml")).map_err(|e| e.to_string())?;
    let cp = build_abstract(&cc).map_err(|e| e.to_string())?;
    if !cp.hvi.kernel.terms().is_empty() || cc.law.name != "zero" {
        return Err("linear scenario must have J = 0 and C = 0".into());
    }
    let p = &cp.hvi;
    let (a, b) = (p.a.matrix().to_dense(), p.b.matrix().to_dense());
    let load = p.load.clone();
    let mut worst: f64 = 0.0;
    for n in [4, 16] {
        let traj = run_rothe(p, n, &cc.solver).map_err(|e| e.to_string())?;
        let oracle = volterra_euler(&a, &b, None, &|t| load(t), &p.u0, p.horizon, n);
        for (u, o) in traj.states.iter().zip(&oracle) {
            worst = worst.max((u - o).amax());
        }
        runs.push(traj);
    }
    // Same reduction on a small dense system with a polynomial memory kernel.
    let q = DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 0.5]);
    let weight = |t: f64, s: f64| 1.0 + (t - s) - 0.5 * (t - s) * (t - s);
    let kernel = HistoryKernel::new(
        CsrMatrix::identity(2),
        vec![KernelTerm::new(weight, CsrMatrix::from_dense(&q))],
        DVector::zeros(2),
        1.0,
        1.5 * spectral_norm(&q),
        2.0 * spectral_norm(&q),
    )
    .unwrap();
    let am = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
    let bm = DMatrix::from_row_slice(2, 2, &[4.0, -1.0, -1.0, 3.0]);
    let op = |m: &DMatrix<f64>| {
        let e = m.clone().symmetric_eigenvalues();
        CoerciveOperator::new(CsrMatrix::from_dense(m), e.min(), e.max()).unwrap()
    };
    let f = |t: f64| DVector::from_vec(vec![1.0 - 2.0 * t + t.powi(3), 0.5 * t * t]);
    let hvi = hvi_core::hvi::AbstractHvi::new(
        op(&am),
        op(&bm),
        kernel,
        Coupling::empty(2),
        Vec::<SharedPotential>::new(),
        Arc::new(f),
        DVector::from_vec(vec![0.2, -0.1]),
        1.0,
    )
    .unwrap();
    let traj = run_rothe(&hvi, 16, &StepSolverConfig::default()).map_err(|e| e.to_string())?;
    let qf = |t: f64, s: f64| &q * weight(t, s);
    let oracle = volterra_euler(&am, &bm, Some(&qf), &f, &hvi.u0, 1.0, 16);
    for (u, o) in traj.states.iter().zip(&oracle) {
        worst = worst.max((u - o).amax());
    }
    runs.push(traj);
    check(
        worst <= 1e-10,
        format!("max nodal deviation from dense oracles {worst:.2e}"),
    )
}

fn patch_and_symmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut patch: f64 = 0.0;
    for n in [2, 4, 8] {
        let mesh = jitter(&unit_square(n, BoundaryRegion::Gamma2), 0.15 / n as f64, &mut rng);
        let (alpha, beta) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let pp = patch_problem(mesh, alpha, beta, (0.3, 0.2), (1.0, 2.0));
        let traj = run_rothe(&pp.hvi, 4, &StepSolverConfig::default()).map_err(|e| e.to_string())?;
        for u in &traj.states {
            patch = patch.max((u - &pp.exact).amax());
        }
    }
    let mut asym: f64 = 0.0;
    for n in [2, 4] {
        let cp = assemble(&hanging_square_benchmark(n, 4)).map_err(|e| e.to_string())?;
        asym = asym
            .max(dense_asymmetry(cp.hvi.a.matrix()))
            .max(dense_asymmetry(cp.hvi.b.matrix()));
        for t in cp.hvi.kernel.terms() {
            asym = asym.max(dense_asymmetry(&t.matrix));
        }
    }
    check(
        patch <= 1e-10 && asym <= 1e-12,
        format!("patch deviation {patch:.2e} on jittered meshes, asymmetry {asym:.2e}"),
    )
}

/// Sampled `j°(u; v-u) + j°(v; u-v) <= m (u-v)^2` with extra samples around kinks.
fn relaxed_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let params = [
        LawParams::default(),
        LawParams {
            stiffness: 7.5,
            r0: 0.05,
            beta: 0.9,
            ..LawParams::default()
        },
        LawParams {
            stiffness: 0.3,
            r0: 2.0,
            beta: 0.1,
            ..LawParams::default()
        },
    ];
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0;
    for name in LAW_NAMES {
        for p in &params {
            let law = law_catalog(name, p).map_err(|e| e.to_string())?;
            let j: &dyn LipschitzPotential = law.potential.as_ref();
            let kinks = j.breakpoints();
            for i in 0..2000 {
                let u = if i % 4 == 0 && !kinks.is_empty() {
                    kinks[i % kinks.len()] + rng.gen_range(-1e-3..1e-3)
                } else {
                    rng.gen_range(-10.0..10.0)
                };
                let v = if i % 2 == 0 {
                    u + rng.gen_range(-0.1..0.1)
                } else {
                    rng.gen_range(-10.0..10.0)
                };
                let lhs = j.clarke_derivative(u, v - u) + j.clarke_derivative(v, u - v);
                worst = worst.max(lhs - law.m_nu * (u - v) * (u - v));
                checked += 1;
            }
        }
    }
    check(
        worst <= 1e-12,
        format!(
            "{} laws x {} parameter sets, {checked} pairs, max excess {worst:.2e}",
            LAW_NAMES.len(),
            params.len()
        ),
    )
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> (usize, String, bool) {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    });
    let secs = start.elapsed().as_secs_f64();
    let (tag, detail) = match &outcome {
        Ok(d) => ("PASS", d),
        Err(d) => ("FAIL", d),
    };
    (
        id,
        format!("criterion {id:>2} {tag} {name}: {detail} [{secs:.1} s]"),
        outcome.is_ok(),
    )
}

fn main() {
    let mut runs = Vec::new();
    // The gap criterion audits the trajectories of criteria 5 and 8, so it runs after them.
    let mut results = vec![
        run(1, "joint rate", rate),
        run(2, "temporal order", temporal_order),
        run(3, "oracle equivalence", oracle_equivalence),
        run(4, "uniqueness", uniqueness),
        run(5, "a-priori estimates", || apriori(&mut runs)),
        run(8, "linear reduction", || linear_reduction(&mut runs)),
    ];
    results.push(run(6, "interpolant gap", || gap(&runs)));
    results.push(run(7, "history Lipschitz", history_lipschitz));
    results.push(run(9, "patch test and symmetry", patch_and_symmetry));
    results.push(run(10, "relaxed monotonicity", relaxed_monotonicity));
    results.sort_by_key(|r| r.0);
    for (_, line, _) in &results {
        println!("{line}");
    }
    let failed = results.iter().filter(|r| !r.2).count();
    println!(
        "acceptance: {} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
