//! Self-convergence studies against a finer discrete reference: error
//! measurement, rate fitting, Céa-type diagnostics and report export.

use std::io::Write;

use nalgebra::DVector;
use serde::Serialize;

use crate::contact::{build_abstract, ContactConfig, ContactProblem};
use crate::error::{HviError, Result};
use crate::fem::{check_nested, prolongation_matrix};
use crate::hvi::AbstractHvi;
use crate::linalg::{CsrMatrix, Gram};
use crate::rothe::{run_rothe, DiscreteTrajectory};
use crate::step::StepSolverConfig;

/// Céa-type breakdown of one level (all sums carry the factor `k`).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct CeaTerms {
    /// `k sum |delta(u_l - v_l)|^2`.
    pub delta_interp_sq: f64,
    /// `max |u_n - v_n|^2`.
    pub interp_sq: f64,
    /// `k sum |M(u_l - v_l)|_X`.
    pub coupling_sum: f64,
    /// `k sum |S_l(v_l)|`.
    pub residual_sum: f64,
    /// `k sum |delta u_l - u_l'|^2`.
    pub delta_sum: f64,
}

impl CeaTerms {
    pub fn total(&self) -> f64 {
        self.delta_interp_sq + self.interp_sq + self.coupling_sum + self.residual_sum + self.delta_sum
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StudyLevel {
    pub level: usize,
    pub h: f64,
    pub k: f64,
    /// `max_n |u_n - u_n^{hk}|_V`.
    pub error: f64,
    pub dofs: usize,
    pub steps: usize,
    pub terms: Option<CeaTerms>,
}

/// `log error = log C + p log(h + k)` by least squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateFit {
    pub p: f64,
    pub c: f64,
    /// Root mean square of the log residuals.
    pub log_residual: f64,
}

pub fn fit_rate(levels: &[StudyLevel]) -> Result<RateFit> {
    if levels.len() < 3 {
        return Err(HviError::DegenerateFit(format!(
            "need at least 3 levels, got {}",
            levels.len()
        )));
    }
    if levels.iter().all(|l| l.error < 1e-13) {
        return Err(HviError::DegenerateFit(
            "all errors are below 1e-13 (exact or trivial problem)".into(),
        ));
    }
    if let Some(l) = levels.iter().find(|l| !(l.error > 0.0) || !(l.h + l.k > 0.0)) {
        return Err(HviError::DegenerateFit(format!(
            "level {} has error {} at h + k = {}",
            l.level,
            l.error,
            l.h + l.k
        )));
    }
    let pts: Vec<(f64, f64)> = levels.iter().map(|l| ((l.h + l.k).ln(), l.error.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(HviError::DegenerateFit("all levels share the same h + k".into()));
    }
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let p = sxy / sxx;
    let log_c = my - p * mx;
    let log_residual = (pts.iter().map(|q| (q.1 - log_c - p * q.0).powi(2)).sum::<f64>() / n).sqrt();
    Ok(RateFit {
        p,
        c: log_c.exp(),
        log_residual,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<StudyLevel>,
    pub fitted_rate: f64,
    pub constant: f64,
    pub log_residual: f64,
    pub reference_h: f64,
    pub reference_k: f64,
    pub threshold: f64,
    /// `p >= threshold`.
    pub passed: bool,
    /// Set when the fit is clearly below first order, e.g. because of
    /// boundary singularities.
    pub sub_first_order: bool,
    /// Smallest `C` with `error^2 <= C (Céa terms + k^2)` on every level.
    pub cea_constant: Option<f64>,
    /// Ratio of the largest to the smallest level constant.
    pub cea_spread: Option<f64>,
}

impl ConvergenceReport {
    fn new(levels: Vec<StudyLevel>, reference: (f64, f64), threshold: f64) -> Result<Self> {
        let fit = fit_rate(&levels)?;
        let ratios: Vec<f64> = levels
            .iter()
            .filter_map(|l| l.terms.map(|t| l.error.powi(2) / (t.total() + l.k * l.k)))
            .collect();
        let (cea_constant, cea_spread) = if ratios.len() == levels.len() && !ratios.is_empty() {
            let max = ratios.iter().cloned().fold(0.0, f64::max);
            let min = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
            (Some(max), Some(max / min))
        } else {
            (None, None)
        };
        Ok(Self {
            levels,
            fitted_rate: fit.p,
            constant: fit.c,
            log_residual: fit.log_residual,
            reference_h: reference.0,
            reference_k: reference.1,
            threshold,
            passed: fit.p >= threshold,
            sub_first_order: fit.p < 0.9,
            cea_constant,
            cea_spread,
        })
    }

    /// `log(e_{l-1} / e_l) / log((h+k)_{l-1} / (h+k)_l)`, `None` on the first level.
    pub fn rate_so_far(&self, i: usize) -> Option<f64> {
        (i > 0).then(|| {
            let (a, b) = (&self.levels[i - 1], &self.levels[i]);
            (a.error / b.error).ln() / ((a.h + a.k) / (b.h + b.k)).ln()
        })
    }

    /// Table `level,h,k,error,rate`.
    pub fn write_csv(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "level,h,k,error,rate")?;
        for (i, l) in self.levels.iter().enumerate() {
            let rate = self.rate_so_far(i).map_or(String::new(), |r| format!("{r}"));
            writeln!(out, "{},{},{},{},{}", l.level, l.h, l.k, l.error, rate)?;
        }
        Ok(())
    }

    pub fn write_summary(&self, out: &mut impl Write) -> Result<()> {
        serde_json::to_writer_pretty(&mut *out, self).map_err(|e| HviError::Io(std::io::Error::other(e)))?;
        writeln!(out)?;
        Ok(())
    }

    /// Whitespace data file for plotting: `h+k error fit`.
    pub fn write_plot_data(&self, out: &mut impl Write) -> Result<()> {
        writeln!(out, "# h+k error fit")?;
        for l in &self.levels {
            let s = l.h + l.k;
            writeln!(
                out,
                "{} {} {}",
                s,
                l.error,
                self.constant * s.powf(self.fitted_rate)
            )?;
        }
        Ok(())
    }

    /// gnuplot commands for a log-log plot of `data_file`.
    pub fn write_plot_script(&self, data_file: &str, image_file: &str, out: &mut impl Write) -> Result<()> {
        writeln!(out, "set terminal pngcairo size 800,600")?;
        writeln!(out, "set output '{image_file}'")?;
        writeln!(out, "set logscale xy")?;
        writeln!(out, "set xlabel 'h + k'")?;
        writeln!(out, "set ylabel 'max_n |u_n - u_n^{{hk}}|_V'")?;
        writeln!(out, "set key left top")?;
        writeln!(
            out,
            "plot '{data_file}' using 1:2 with linespoints title 'error', \\\n     '{data_file}' using 1:3 with lines dashtype 2 title 'fit p = {:.3}'",
            self.fitted_rate
        )?;
        Ok(())
    }
}

/// Time nodes of `coarse` are every `r`-th node of `fine`; returns `r`.
fn time_ratio(coarse: &DiscreteTrajectory, fine: &DiscreteTrajectory) -> Result<usize> {
    let (c, f) = (coarse.grid, fine.grid);
    if (c.horizon - f.horizon).abs() > 1e-12 * c.horizon || f.steps % c.steps != 0 {
        return Err(HviError::NotNested(format!(
            "time grid with {} steps on [0, {}] is not a subgrid of {} steps on [0, {}]",
            c.steps, c.horizon, f.steps, f.horizon
        )));
    }
    Ok(f.steps / c.steps)
}

/// `max_n |P u_n^{coarse} - u_n^{ref}|_V` over the coarse time nodes, with
/// `P` the P1 embedding and the norm of the reference discretization.
pub fn v_norm_error(
    coarse: &ContactProblem,
    u_coarse: &DiscreteTrajectory,
    reference: &ContactProblem,
    u_ref: &DiscreteTrajectory,
) -> Result<f64> {
    let p = prolongation_matrix(&coarse.mesh, &coarse.dofs, &reference.mesh, &reference.dofs)?;
    embedded_error(&p, u_coarse, u_ref, &reference.hvi.gram)
}

fn embedded_error(
    p: &CsrMatrix,
    u_coarse: &DiscreteTrajectory,
    u_ref: &DiscreteTrajectory,
    gram: &Gram,
) -> Result<f64> {
    let r = time_ratio(u_coarse, u_ref)?;
    let mut worst = 0.0f64;
    for n in 1..=u_coarse.grid.steps {
        let diff = p.mul_vec(&u_coarse.states[n]) - &u_ref.states[n * r];
        worst = worst.max(gram.norm(&diff));
    }
    Ok(worst)
}

fn check_study(levels: usize, ref_extra: usize) -> Result<()> {
    if levels < 3 || ref_extra < 2 {
        return Err(HviError::InvalidArgument(format!(
            "a study needs levels >= 3 and ref_extra >= 2 (got {levels}, {ref_extra})"
        )));
    }
    Ok(())
}

fn level_context(e: HviError, what: &str, level: usize) -> HviError {
    e.with_context(format!("{what} level {level}"))
}

/// Joint refinement `(h_0 / 2^l, k_0 / 2^l)`, `l < levels`, against the
/// reference `ref_extra` levels finer than the finest one.
pub fn run_study(cc: &ContactConfig, levels: usize, ref_extra: usize) -> Result<ConvergenceReport> {
    run_study_with(cc, levels, ref_extra, true)
}

/// [`run_study`] with the Céa breakdown optional.
pub fn run_study_with(
    cc: &ContactConfig,
    levels: usize,
    ref_extra: usize,
    with_terms: bool,
) -> Result<ConvergenceReport> {
    check_study(levels, ref_extra)?;
    let ref_level = levels - 1 + ref_extra;
    let reference = build_abstract(&cc.at_level(ref_level as u32)?)
        .map_err(|e| level_context(e, "reference", ref_level))?;
    let u_ref = reference
        .solve()
        .map_err(|e| level_context(e, "reference", ref_level))?;
    let mut out = Vec::with_capacity(levels);
    for l in 0..levels {
        let cp = build_abstract(&cc.at_level(l as u32)?).map_err(|e| level_context(e, "study", l))?;
        let traj = cp.solve().map_err(|e| level_context(e, "study", l))?;
        let p = prolongation_matrix(&cp.mesh, &cp.dofs, &reference.mesh, &reference.dofs)?;
        let error = embedded_error(&p, &traj, &u_ref, &reference.hvi.gram)?;
        let terms = if with_terms {
            Some(cea_terms_embedded(&reference, &u_ref, &traj, &|u| {
                p.mul_vec(&restrict_by_injection(&cp, &reference, u))
            })?)
        } else {
            None
        };
        out.push(StudyLevel {
            level: l,
            h: cp.mesh.h(),
            k: traj.grid.tau,
            error,
            dofs: cp.dofs.free_count(),
            steps: traj.grid.steps,
            terms,
        });
    }
    ConvergenceReport::new(out, (reference.mesh.h(), u_ref.grid.tau), cc.study.threshold)
}

fn restrict_by_injection(
    coarse: &ContactProblem,
    reference: &ContactProblem,
    u: &DVector<f64>,
) -> DVector<f64> {
    crate::fem::restrict_to_coarse(&reference.mesh, &reference.dofs, u, &coarse.mesh, &coarse.dofs)
        .expect("levels of one study are nested")
}

/// Céa-type terms of a coarse trajectory, with `v_n^h` the nodal P1
/// interpolant of the reference at the coarse time nodes.
///
/// `interpolant` maps a reference state to its interpolant, expressed on
/// the reference discretization.
pub fn cea_terms(
    reference: &ContactProblem,
    traj_ref: &DiscreteTrajectory,
    traj_h: &DiscreteTrajectory,
    coarse: &ContactProblem,
    interpolant: &dyn Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<CeaTerms> {
    check_nested(&coarse.mesh, &reference.mesh)?;
    cea_terms_embedded(reference, traj_ref, traj_h, interpolant)
}

fn cea_terms_embedded(
    reference: &ContactProblem,
    traj_ref: &DiscreteTrajectory,
    traj_h: &DiscreteTrajectory,
    interpolant: &dyn Fn(&DVector<f64>) -> DVector<f64>,
) -> Result<CeaTerms> {
    let r = time_ratio(traj_h, traj_ref)?;
    let hvi = &reference.hvi;
    let gram = &hvi.gram;
    let k = traj_h.grid.tau;
    let n = traj_h.grid.steps;
    let u = |i: usize| &traj_ref.states[i * r];
    let v: Vec<DVector<f64>> = (0..=n).map(|i| interpolant(u(i))).collect();
    let mut t = CeaTerms::default();
    let mut prev_gap = u(0) - &v[0];
    for l in 1..=n {
        let gap = u(l) - &v[l];
        t.delta_interp_sq += k * gram.norm(&((&gap - &prev_gap) / k)).powi(2);
        t.interp_sq = t.interp_sq.max(gram.norm(&gap).powi(2));
        t.coupling_sum += k * hvi.coupling.x_norm(&hvi.coupling.matrix().mul_vec(&gap));

        let du = reference_derivative(traj_ref, l * r);
        let delta = (u(l) - u(l - 1)) / k - &du;
        t.delta_sum += k * gram.norm(&delta).powi(2);
        t.residual_sum += k * residual_functional(hvi, traj_ref, l * r, &du, &v[l]).abs();
        prev_gap = gap;
    }
    Ok(t)
}

/// Second-order difference approximation of `u'` at reference node `i`.
fn reference_derivative(traj: &DiscreteTrajectory, i: usize) -> DVector<f64> {
    let s = &traj.states;
    let k = traj.grid.tau;
    let n = traj.grid.steps;
    if i == 0 {
        (-3.0 * &s[0] + 4.0 * &s[1] - &s[2]) / (2.0 * k)
    } else if i == n {
        (3.0 * &s[n] - 4.0 * &s[n - 1] + &s[n - 2]) / (2.0 * k)
    } else {
        (&s[i + 1] - &s[i - 1]) / (2.0 * k)
    }
}

/// `<A u' + B u + R u - f, v - u> + J°(M u; M v - M u)` at reference node `i`.
fn residual_functional(
    hvi: &AbstractHvi,
    traj: &DiscreteTrajectory,
    i: usize,
    du: &DVector<f64>,
    v: &DVector<f64>,
) -> f64 {
    let u = &traj.states[i];
    let t = traj.grid.node(i);
    let mut g = hvi.a.matrix().mul_vec(du);
    hvi.b.matrix().mul_vec_acc(1.0, u, &mut g);
    if i > 0 {
        g += &traj.histories[i - 1];
    }
    g -= (hvi.load)(t);
    let dir = v - u;
    let mu = hvi.coupling.matrix().mul_vec(u);
    let md = hvi.coupling.matrix().mul_vec(&dir);
    let clarke: f64 = hvi
        .potentials
        .iter()
        .enumerate()
        .map(|(c, j)| j.clarke_derivative(mu[c], md[c]))
        .sum();
    g.dot(&dir) + clarke
}

/// One row of a time-only study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeLevel {
    pub steps: usize,
    pub k: f64,
    pub error: f64,
}

/// Halves only the time step: `n0 2^l` steps for `l < levels`, against
/// `n0 2^(levels - 1 + ref_extra)` steps, errors in the state norm.
pub fn time_study(
    p: &AbstractHvi,
    n0: usize,
    levels: usize,
    ref_extra: usize,
    cfg: &StepSolverConfig,
) -> Result<Vec<TimeLevel>> {
    check_study(levels, ref_extra)?;
    let ref_level = levels - 1 + ref_extra;
    let reference =
        run_rothe(p, n0 << ref_level, cfg).map_err(|e| level_context(e, "reference", ref_level))?;
    let identity = CsrMatrix::identity(p.dim());
    (0..levels)
        .map(|l| {
            let traj = run_rothe(p, n0 << l, cfg).map_err(|e| level_context(e, "time", l))?;
            Ok(TimeLevel {
                steps: traj.grid.steps,
                k: traj.grid.tau,
                error: embedded_error(&identity, &traj, &reference, &p.gram)?,
            })
        })
        .collect()
}

/// Consecutive ratios `e_l / e_{l+1}`.
pub fn error_ratios(levels: &[TimeLevel]) -> Vec<f64> {
    levels.windows(2).map(|w| w[0].error / w[1].error).collect()
}

/// [`time_study`] on the contact problem at the configured mesh.
pub fn run_time_study(cc: &ContactConfig, levels: usize, ref_extra: usize) -> Result<Vec<TimeLevel>> {
    let cp = build_abstract(cc)?;
    time_study(&cp.hvi, cc.steps, levels, ref_extra, &cc.solver)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::{assemble, hanging_square_benchmark};
    use crate::fem::interpolant_p1;
    use crate::rothe::TimeGrid;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn level(level: usize, s: f64, error: f64) -> StudyLevel {
        StudyLevel {
            level,
            h: s,
            k: 0.0,
            error,
            dofs: 0,
            steps: 0,
            terms: None,
        }
    }

    #[test]
    fn fit_recovers_exact_orders() {
        let e = 3e-3;
        let first = [level(0, 4.0, 4.0 * e), level(1, 2.0, 2.0 * e), level(2, 1.0, e)];
        let fit = fit_rate(&first).unwrap();
        assert!((fit.p - 1.0).abs() < 1e-12 && (fit.c - e).abs() < 1e-15);
        let second = [level(0, 4.0, 16.0 * e), level(1, 2.0, 4.0 * e), level(2, 1.0, e)];
        assert!((fit_rate(&second).unwrap().p - 2.0).abs() < 1e-12);
    }

    #[test]
    fn fit_is_robust_to_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let levels: Vec<_> = (0..4)
                .map(|l| {
                    let s = 0.5f64.powi(l);
                    level(l as usize, s, s * (1.0 + rng.gen_range(-0.05..=0.05)))
                })
                .collect();
            let p = fit_rate(&levels).unwrap().p;
            assert!((0.9..=1.1).contains(&p), "p = {p}");
        }
    }

    #[test]
    fn fit_rejects_degenerate_data() {
        let tiny = [level(0, 4.0, 1e-14), level(1, 2.0, 1e-15), level(2, 1.0, 0.0)];
        assert!(matches!(fit_rate(&tiny), Err(HviError::DegenerateFit(_))));
        assert!(matches!(fit_rate(&tiny[..2]), Err(HviError::DegenerateFit(_))));
    }

    fn frozen(cp: &ContactProblem, states: Vec<DVector<f64>>) -> DiscreteTrajectory {
        let steps = states.len() - 1;
        DiscreteTrajectory {
            grid: TimeGrid::new(cp.config.horizon, steps).unwrap(),
            histories: vec![DVector::zeros(states[0].len()); steps],
            states,
            selections: vec![],
            loads: vec![],
            residuals: vec![],
            iterations: vec![],
            gram: cp.hvi.gram.clone(),
            weights: Arc::from(cp.hvi.coupling.weights()),
        }
    }

    fn pair() -> (ContactProblem, ContactProblem) {
        let coarse = assemble(&hanging_square_benchmark(2, 2)).unwrap();
        let fine = assemble(&hanging_square_benchmark(2, 2).at_level(2).unwrap()).unwrap();
        (coarse, fine)
    }

    #[test]
    fn identical_trajectories_have_no_error() {
        let (coarse, fine) = pair();
        let u = interpolant_p1(&coarse.mesh, &coarse.dofs, &|p| {
            [(1.0 - p[1]) * p[0], (1.0 - p[1]).powi(2)]
        })
        .unwrap();
        let p = prolongation_matrix(&coarse.mesh, &coarse.dofs, &fine.mesh, &fine.dofs).unwrap();
        // 2 coarse steps against 6 reference steps.
        let tc = frozen(&coarse, vec![u.clone(); 3]);
        let tf = frozen(&fine, vec![p.mul_vec(&u); 7]);
        assert_eq!(v_norm_error(&coarse, &tc, &fine, &tf).unwrap(), 0.0);
        // 4 coarse steps do not divide 6.
        let t3 = frozen(&coarse, vec![u; 5]);
        assert!(matches!(
            v_norm_error(&coarse, &t3, &fine, &tf),
            Err(HviError::NotNested(_))
        ));
        assert!(matches!(
            v_norm_error(&fine, &tf, &coarse, &tc),
            Err(HviError::NotNested(_))
        ));
    }

    #[test]
    fn constant_strain_offset_is_measured_exactly() {
        let (coarse, fine) = pair();
        let u = interpolant_p1(&coarse.mesh, &coarse.dofs, &|p| [p[0] * (1.0 - p[1]), 0.0]).unwrap();
        let p = prolongation_matrix(&coarse.mesh, &coarse.dofs, &fine.mesh, &fine.dofs).unwrap();
        // Shear field (1 - y, 0) has constant strain e_xy = -1/2 on the unit
        // square, so its energy norm is sqrt(2 * 1/4) over unit area.
        let s = 0.3;
        let shift = interpolant_p1(&fine.mesh, &fine.dofs, &|p| [s * (1.0 - p[1]), 0.0]).unwrap();
        let tc = frozen(&coarse, vec![u.clone(); 3]);
        let tf = frozen(&fine, vec![p.mul_vec(&u) + &shift; 3]);
        let e = v_norm_error(&coarse, &tc, &fine, &tf).unwrap();
        assert!((e - s * 0.5f64.sqrt()).abs() < 1e-12, "{e}");
    }

    #[test]
    fn prolongation_of_affine_fields_is_exact() {
        let (coarse, fine) = pair();
        let f = |p: [f64; 2]| [0.2 * (1.0 - p[1]), -0.7 * (1.0 - p[1]) + 0.0 * p[0]];
        let uc = interpolant_p1(&coarse.mesh, &coarse.dofs, &f).unwrap();
        let uf = interpolant_p1(&fine.mesh, &fine.dofs, &f).unwrap();
        let p = prolongation_matrix(&coarse.mesh, &coarse.dofs, &fine.mesh, &fine.dofs).unwrap();
        assert!((p.mul_vec(&uc) - uf).amax() < 1e-14);
    }

    #[test]
    fn conforming_interpolant_has_no_interpolation_terms() {
        let (coarse, _) = pair();
        let states: Vec<_> = (0..=4)
            .map(|n| {
                let t = n as f64 / 4.0;
                interpolant_p1(&coarse.mesh, &coarse.dofs, &|p| {
                    [t * (1.0 - p[1]), t * t * p[0] * (1.0 - p[1])]
                })
                .unwrap()
            })
            .collect();
        let traj = frozen(&coarse, states);
        let coarse_traj = frozen(&coarse, traj.states.iter().step_by(2).cloned().collect());
        let t = cea_terms(&coarse, &traj, &coarse_traj, &coarse, &|u| u.clone()).unwrap();
        assert_eq!((t.interp_sq, t.delta_interp_sq, t.coupling_sum), (0.0, 0.0, 0.0));
        assert!(
            t.delta_sum > 0.0,
            "quadratic-in-time states have a consistency error"
        );
    }

    #[test]
    fn backward_difference_is_exact_on_linear_motion() {
        let (coarse, _) = pair();
        let w = interpolant_p1(&coarse.mesh, &coarse.dofs, &|p| [1.0 - p[1], p[0] * (1.0 - p[1])]).unwrap();
        let traj = frozen(&coarse, (0..=8).map(|n| &w * (n as f64 / 8.0)).collect());
        let sub = frozen(&coarse, traj.states.iter().step_by(2).cloned().collect());
        let t = cea_terms(&coarse, &traj, &sub, &coarse, &|u| u.clone()).unwrap();
        assert!(t.delta_sum < 1e-24, "{}", t.delta_sum);
    }

    #[test]
    fn study_preconditions() {
        let cc = hanging_square_benchmark(2, 2);
        assert!(matches!(run_study(&cc, 2, 2), Err(HviError::InvalidArgument(_))));
        assert!(matches!(run_study(&cc, 3, 1), Err(HviError::InvalidArgument(_))));
    }

    #[test]
    fn report_exports() {
        let levels = vec![level(0, 0.4, 0.4), level(1, 0.2, 0.2), level(2, 0.1, 0.1)];
        let r = ConvergenceReport::new(levels, (0.025, 0.0), 0.8).unwrap();
        assert!(r.passed && !r.sub_first_order);
        let mut csv = Vec::new();
        r.write_csv(&mut csv).unwrap();
        let csv = String::from_utf8(csv).unwrap();
        assert_eq!(csv.lines().next(), Some("level,h,k,error,rate"));
        assert!(csv.lines().nth(2).unwrap().ends_with(",1"));
        let mut json = Vec::new();
        r.write_summary(&mut json).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
        assert!((v["fitted_rate"].as_f64().unwrap() - 1.0).abs() < 1e-12);
        let mut gp = Vec::new();
        r.write_plot_script("errors.dat", "errors.png", &mut gp).unwrap();
        assert!(String::from_utf8(gp).unwrap().contains("set logscale xy"));
    }
}
