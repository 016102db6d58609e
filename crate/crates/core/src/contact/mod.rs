//! Quasistatic viscoelastic contact with long memory and normal compliance:
//! material model, compliance law catalog, assembly into an [`AbstractHvi`]
//! and stress recovery.

mod scenario;

use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use scenario::{parse_scenario, read_scenario, Monomial, PolyField, Scenario, StudySettings};

use crate::error::{HviError, Result};
use crate::fem::{
    assemble_elastic, assemble_load, assemble_matrix, element_strains, energy_gram, generate_rect_mesh,
    interpolant_p1, trace_normal, ContactTrace, DofMap, IsotropicTensor, SideTagging, TriMesh, VectorField,
};
use crate::hvi::{
    validate_hypotheses, AbsPotential, AbstractHvi, Declared, HistoryKernel, HypothesisReport, KernelRange,
    KernelTerm, NonmonotoneDrop, QuadraticCompliance, Scaled, SharedPotential, ZeroPotential,
};
use crate::quadrature::gauss2;
use crate::rothe::DiscreteTrajectory;
use crate::step::StepSolverConfig;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Relaxation tensor `C(t) eps = 2 shear(t) eps + bulk(t) tr(eps) I`.
#[derive(Clone)]
pub struct Relaxation {
    shear: ScalarFn,
    bulk: ScalarFn,
    /// `sup_t |C(t)|`.
    bound: f64,
    /// Declared Lipschitz constant `L_C`.
    lipschitz: f64,
    zero: bool,
}

impl fmt::Debug for Relaxation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Relaxation")
            .field("bound", &self.bound)
            .field("lipschitz", &self.lipschitz)
            .field("zero", &self.zero)
            .finish()
    }
}

/// One exponential mode `exp(-rate t) (shear, bulk)`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxationMode {
    pub shear: f64,
    #[serde(default)]
    pub bulk: f64,
    #[serde(default)]
    pub rate: f64,
}

impl Relaxation {
    pub fn none() -> Self {
        Self {
            shear: Arc::new(|_| 0.0),
            bulk: Arc::new(|_| 0.0),
            bound: 0.0,
            lipschitz: 0.0,
            zero: true,
        }
    }

    /// Prony series `sum_i exp(-rate_i t) (shear_i, bulk_i)` with `rate_i >= 0`.
    pub fn prony(modes: &[RelaxationMode]) -> Result<Self> {
        if modes
            .iter()
            .any(|m| !(m.rate >= 0.0) || !m.shear.is_finite() || !m.bulk.is_finite())
        {
            return Err(HviError::InvalidArgument(
                "relaxation modes need finite coefficients and rate >= 0".into(),
            ));
        }
        let modes: Arc<[RelaxationMode]> = modes
            .iter()
            .copied()
            .filter(|m| m.shear != 0.0 || m.bulk != 0.0)
            .collect();
        if modes.is_empty() {
            return Ok(Self::none());
        }
        let size = |m: &RelaxationMode| 2.0 * m.shear.abs() + 2.0 * m.bulk.abs();
        let bound = modes.iter().map(size).sum();
        let lipschitz = modes.iter().map(|m| m.rate * size(m)).sum();
        let (a, b) = (modes.clone(), modes);
        Ok(Self {
            shear: Arc::new(move |t| a.iter().map(|m| m.shear * (-m.rate * t).exp()).sum()),
            bulk: Arc::new(move |t| b.iter().map(|m| m.bulk * (-m.rate * t).exp()).sum()),
            bound,
            lipschitz,
            zero: false,
        })
    }

    /// Arbitrary coefficient functions with their declared constants.
    pub fn from_fns(shear: ScalarFn, bulk: ScalarFn, bound: f64, lipschitz: f64) -> Self {
        Self {
            shear,
            bulk,
            bound,
            lipschitz,
            zero: false,
        }
    }

    pub fn at(&self, t: f64) -> (f64, f64) {
        ((self.shear)(t), (self.bulk)(t))
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Largest `|C(t1) - C(t2)| - L_C |t1 - t2|` and `|C(t)| - bound` over
    /// random samples in `[0, horizon]`.
    pub fn audit(&self, horizon: f64, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let norm = |(s, b): (f64, f64)| 2.0 * s.abs() + 2.0 * b.abs();
        let mut worst = f64::NEG_INFINITY;
        for _ in 0..samples {
            let t1 = rng.gen_range(0.0..=horizon);
            let t2 = rng.gen_range(0.0..=horizon);
            let (c1, c2) = (self.at(t1), self.at(t2));
            worst = worst
                .max(norm((c1.0 - c2.0, c1.1 - c2.1)) - self.lipschitz * (t1 - t2).abs())
                .max(norm(c1) - self.bound);
        }
        worst
    }
}

#[derive(Debug, Clone)]
pub struct Material {
    pub viscosity: IsotropicTensor,
    pub elasticity: IsotropicTensor,
    pub relaxation: Relaxation,
}

/// A normal compliance law `-sigma_nu in dj_nu(u_nu)`.
#[derive(Debug, Clone)]
pub struct ComplianceLaw {
    pub name: String,
    pub potential: SharedPotential,
    pub c_nu: f64,
    pub m_nu: f64,
}

/// Parameters of the catalog laws; unused ones are ignored.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, serde::Serialize)]
#[serde(deny_unknown_fields)]
pub struct LawParams {
    #[serde(default = "one")]
    pub stiffness: f64,
    #[serde(default = "one")]
    pub r0: f64,
    #[serde(default = "half")]
    pub beta: f64,
    /// Declared growth constant, if more pessimistic than the computed one.
    #[serde(default)]
    pub c_nu: Option<f64>,
    /// Declared relaxation constant, if more pessimistic than the computed one.
    #[serde(default)]
    pub m_nu: Option<f64>,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

impl Default for LawParams {
    fn default() -> Self {
        Self {
            stiffness: 1.0,
            r0: 1.0,
            beta: 0.5,
            c_nu: None,
            m_nu: None,
        }
    }
}

pub const LAW_NAMES: [&str; 4] = ["zero", "quadratic", "abs", "nonmonotone_drop"];

pub fn law_catalog(name: &str, params: &LawParams) -> Result<ComplianceLaw> {
    let c = params.stiffness;
    let bad = |what: &str| HviError::InvalidArgument(format!("law `{name}`: {what}"));
    let base: SharedPotential = match name {
        "zero" => Arc::new(ZeroPotential),
        "quadratic" | "abs" | "nonmonotone_drop" if !(c > 0.0 && c.is_finite()) => {
            return Err(bad("stiffness must be positive"))
        }
        "quadratic" => Arc::new(QuadraticCompliance { stiffness: c }),
        "abs" => Arc::new(AbsPotential { weight: c }),
        "nonmonotone_drop" => {
            if !(params.r0 > 0.0) || !(params.beta > 0.0 && params.beta < 1.0) {
                return Err(bad("needs r0 > 0 and beta in (0, 1)"));
            }
            Arc::new(NonmonotoneDrop::new(c, params.r0, params.beta))
        }
        other => return Err(HviError::UnknownLaw(other.to_string())),
    };
    let potential: SharedPotential = if params.c_nu.is_some() || params.m_nu.is_some() {
        Arc::new(Declared::new(base, params.c_nu, params.m_nu)?)
    } else {
        base
    };
    Ok(ComplianceLaw {
        name: name.to_string(),
        c_nu: potential.growth_constant(),
        m_nu: potential.relaxation_constant(),
        potential,
    })
}

/// Where the mesh comes from; rectangles can be refined by levels.
#[derive(Debug, Clone)]
pub enum Geometry {
    Rect {
        nx: usize,
        ny: usize,
        lx: f64,
        ly: f64,
        tagging: SideTagging,
    },
    Mesh(Arc<TriMesh>),
}

impl Geometry {
    pub fn build(&self) -> Result<Arc<TriMesh>> {
        match self {
            Geometry::Rect {
                nx,
                ny,
                lx,
                ly,
                tagging,
            } => Ok(Arc::new(generate_rect_mesh(*nx, *ny, *lx, *ly, *tagging)?)),
            Geometry::Mesh(m) => Ok(m.clone()),
        }
    }

    /// `level` uniform halvings of the cell size.
    pub fn refined(&self, level: u32) -> Result<Self> {
        match self {
            Geometry::Rect {
                nx,
                ny,
                lx,
                ly,
                tagging,
            } => Ok(Geometry::Rect {
                nx: nx << level,
                ny: ny << level,
                lx: *lx,
                ly: *ly,
                tagging: *tagging,
            }),
            Geometry::Mesh(_) if level == 0 => Ok(self.clone()),
            Geometry::Mesh(_) => Err(HviError::InvalidArgument(
                "only rectangle geometries can be refined".into(),
            )),
        }
    }
}

pub type InitialField = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

/// Data of the contact problem.
#[derive(Clone)]
pub struct ContactConfig {
    pub geometry: Geometry,
    pub material: Material,
    pub law: ComplianceLaw,
    /// Body force density.
    pub f0: Arc<VectorField>,
    /// Surface traction on the traction boundary.
    pub f_n: Arc<VectorField>,
    pub horizon: f64,
    /// Initial displacement, zero when absent.
    pub u0: Option<InitialField>,
    /// Number of time steps at level 0.
    pub steps: usize,
    pub solver: StepSolverConfig,
    pub study: StudySettings,
}

impl fmt::Debug for ContactConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactConfig")
            .field("geometry", &self.geometry)
            .field("material", &self.material)
            .field("law", &self.law.name)
            .field("horizon", &self.horizon)
            .field("steps", &self.steps)
            .finish_non_exhaustive()
    }
}

impl ContactConfig {
    /// The same problem with mesh size and time step divided by `2^level`.
    pub fn at_level(&self, level: u32) -> Result<Self> {
        let mut cc = self.clone();
        cc.geometry = self.geometry.refined(level)?;
        cc.steps = self.steps << level;
        Ok(cc)
    }
}

/// Unit square hanging from its clamped top edge above a foundation along
/// the bottom. The vertical body force `-2 + 8 t^2` first presses it into
/// the foundation and later lifts it off. Traction-free sides, quadratic
/// normal compliance, one relaxation mode.
pub fn hanging_square_benchmark(nx: usize, steps: usize) -> ContactConfig {
    let modes = [RelaxationMode {
        shear: 0.5,
        bulk: 0.5,
        rate: 1.0,
    }];
    ContactConfig {
        geometry: Geometry::Rect {
            nx,
            ny: nx,
            lx: 1.0,
            ly: 1.0,
            tagging: SideTagging {
                bottom: Some(crate::fem::BoundaryRegion::Gamma3),
                right: Some(crate::fem::BoundaryRegion::Gamma2),
                top: Some(crate::fem::BoundaryRegion::Gamma1),
                left: Some(crate::fem::BoundaryRegion::Gamma2),
            },
        },
        material: Material {
            viscosity: IsotropicTensor {
                shear: 0.2,
                bulk: 0.2,
            },
            elasticity: IsotropicTensor {
                shear: 1.0,
                bulk: 1.0,
            },
            relaxation: Relaxation::prony(&modes).expect("valid modes"),
        },
        law: law_catalog(
            "quadratic",
            &LawParams {
                stiffness: 10.0,
                ..LawParams::default()
            },
        )
        .expect("catalog law"),
        f0: Arc::new(|_, t| [0.0, -2.0 + 8.0 * t * t]),
        f_n: Arc::new(|_, _| [0.0, 0.0]),
        horizon: 1.0,
        u0: None,
        steps,
        solver: StepSolverConfig {
            max_iter: 10_000,
            ..StepSolverConfig::default()
        },
        study: StudySettings::default(),
    }
}

/// The assembled discrete contact problem.
#[derive(Clone)]
pub struct ContactProblem {
    pub config: ContactConfig,
    pub mesh: Arc<TriMesh>,
    pub dofs: Arc<DofMap>,
    pub trace: ContactTrace,
    pub hvi: AbstractHvi,
    pub report: HypothesisReport,
}

impl fmt::Debug for ContactProblem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ContactProblem")
            .field("nodes", &self.mesh.nodes().len())
            .field("free_dofs", &self.dofs.free_count())
            .field("contact_nodes", &self.trace.nodes.len())
            .field("report", &self.report)
            .finish()
    }
}

/// Assembles the discrete problem and evaluates the hypotheses, without
/// rejecting violations.
pub fn assemble(cc: &ContactConfig) -> Result<ContactProblem> {
    if !(cc.horizon > 0.0) || cc.steps == 0 {
        return Err(HviError::InvalidArgument(format!(
            "need T > 0 and N >= 1 (got T = {}, N = {})",
            cc.horizon, cc.steps
        )));
    }
    let mesh = cc.geometry.build()?;
    let dofs = Arc::new(DofMap::new(&mesh));
    let n = dofs.free_count();
    let a = assemble_elastic(&mesh, &dofs, &cc.material.viscosity)?;
    let b = assemble_elastic(&mesh, &dofs, &cc.material.elasticity)?;

    let relax = &cc.material.relaxation;
    let kernel = if relax.is_zero() {
        HistoryKernel::none(n)
    } else {
        let (s, k) = (relax.shear.clone(), relax.bulk.clone());
        let terms = vec![
            KernelTerm::new(
                move |t, r| s(t - r),
                assemble_matrix(
                    &mesh,
                    &dofs,
                    &IsotropicTensor {
                        shear: 1.0,
                        bulk: 0.0,
                    },
                ),
            ),
            KernelTerm::new(
                move |t, r| k(t - r),
                assemble_matrix(
                    &mesh,
                    &dofs,
                    &IsotropicTensor {
                        shear: 0.0,
                        bulk: 1.0,
                    },
                ),
            ),
        ];
        HistoryKernel::new(
            crate::linalg::CsrMatrix::identity(n),
            terms,
            DVector::zeros(n),
            1.0,
            relax.bound(),
            relax.lipschitz(),
        )?
        .with_range(KernelRange::Dual)
    };

    let trace = trace_normal(&mesh, &dofs)?;
    let potentials: Vec<SharedPotential> = trace
        .coupling
        .weights()
        .iter()
        .map(|&w| {
            Arc::new(Scaled {
                inner: cc.law.potential.clone(),
                weight: w,
            }) as SharedPotential
        })
        .collect();

    let (m, d, f0, f_n) = (mesh.clone(), dofs.clone(), cc.f0.clone(), cc.f_n.clone());
    let load = Arc::new(move |t: f64| assemble_load(&m, &d, f0.as_ref(), f_n.as_ref(), t));
    let u0 = match &cc.u0 {
        Some(f) => interpolant_p1(&mesh, &dofs, f.as_ref())?,
        None => DVector::zeros(n),
    };
    let hvi = AbstractHvi::new(
        a,
        b,
        kernel,
        trace.coupling.clone(),
        potentials,
        load,
        u0,
        cc.horizon,
    )?
    .with_gram(energy_gram(&mesh, &dofs)?);
    let report = validate_hypotheses(&hvi);
    Ok(ContactProblem {
        config: cc.clone(),
        mesh,
        dofs,
        trace,
        hvi,
        report,
    })
}

/// [`assemble`], rejecting instances that violate `m_B > m_J |M|^2`.
pub fn build_abstract(cc: &ContactConfig) -> Result<ContactProblem> {
    let cp = assemble(cc)?;
    if !cp.report.h0_holds {
        let norm = cp.report.coupling_norm.unwrap_or(0.0);
        return Err(HviError::SmallnessViolated {
            m_b: cp.report.m_b,
            bound: cp.report.m_j * norm * norm,
        });
    }
    Ok(cp)
}

impl ContactProblem {
    /// Runs the scheme with the configured step count and solver.
    pub fn solve(&self) -> Result<DiscreteTrajectory> {
        crate::rothe::run_rothe(&self.hvi, self.config.steps, &self.config.solver)
    }

    /// Nodal displacements `u^k` (zero on the clamped boundary).
    pub fn displacement(&self, traj: &DiscreteTrajectory, k: usize) -> Result<Vec<[f64; 2]>> {
        if k > traj.grid.steps {
            return Err(HviError::IndexOutOfRange {
                index: k,
                len: traj.grid.steps,
            });
        }
        Ok(self.dofs.expand(&traj.states[k]))
    }
}

/// Elementwise stress `A eps(v^k) + B eps(u^k) + sum_j int C(t_k - s) ds eps(u^j)`.
///
/// The memory integrals use the same two-point rule per interval as the
/// time stepping, so the recovered stress is the one the scheme balanced.
pub fn recover_stress(cp: &ContactProblem, traj: &DiscreteTrajectory, k: usize) -> Result<Vec<[f64; 3]>> {
    traj.check_step(k)?;
    if traj.dim() != cp.dofs.free_count() {
        return Err(HviError::DimensionMismatch {
            context: "trajectory for stress recovery".into(),
            expected: cp.dofs.free_count(),
            actual: traj.dim(),
        });
    }
    let mat = &cp.config.material;
    let strain = |j: usize| element_strains(&cp.mesh, &cp.dofs.expand(&traj.states[j]));
    let rate = element_strains(&cp.mesh, &cp.dofs.expand(&traj.rate(k)?));
    let current = strain(k);
    let mut stress: Vec<[f64; 3]> = rate
        .iter()
        .zip(&current)
        .map(|(v, u)| {
            let a = mat.viscosity.apply(*v);
            let b = mat.elasticity.apply(*u);
            [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
        })
        .collect();
    if !mat.relaxation.is_zero() {
        let tk = traj.grid.node(k);
        for j in 1..=k {
            let (lo, hi) = (traj.grid.node(j - 1), traj.grid.node(j));
            let shear = gauss2(|s| mat.relaxation.at(tk - s).0, lo, hi);
            let bulk = gauss2(|s| mat.relaxation.at(tk - s).1, lo, hi);
            let c = IsotropicTensor { shear, bulk };
            let eps = if j == k { current.clone() } else { strain(j) };
            for (s, e) in stress.iter_mut().zip(&eps) {
                let m = c.apply(*e);
                s[0] += m[0];
                s[1] += m[1];
                s[2] += m[2];
            }
        }
    }
    Ok(stress)
}

/// `-sigma nu . nu` at each contact node, averaged over the adjacent
/// triangles with weights equal to their areas.
pub fn contact_pressure(cp: &ContactProblem, stress: &[[f64; 3]]) -> Vec<f64> {
    let mut row = vec![usize::MAX; cp.mesh.nodes().len()];
    for (r, &i) in cp.trace.nodes.iter().enumerate() {
        row[i] = r;
    }
    let mut num = vec![0.0; cp.trace.nodes.len()];
    let mut den = vec![0.0; cp.trace.nodes.len()];
    for (e, tri) in cp.mesh.triangles().iter().enumerate() {
        for &i in tri {
            let r = row[i];
            if r == usize::MAX {
                continue;
            }
            let (s, nu) = (stress[e], cp.trace.normals[r]);
            let snn = s[0] * nu[0] * nu[0] + 2.0 * s[2] * nu[0] * nu[1] + s[1] * nu[1] * nu[1];
            num[r] += cp.mesh.area(e) * snn;
            den[r] += cp.mesh.area(e);
        }
    }
    num.iter().zip(&den).map(|(n, d)| -n / d).collect()
}
