//! Independent oracles and instance generators shared by the integration tests.
#![allow(dead_code)]

use std::sync::Arc;

use hvi_core::fem::{
    assemble_elastic, assemble_load, energy_gram, generate_rect_mesh, BoundaryRegion, DofMap,
    IsotropicTensor, SideTagging, TriMesh,
};
use hvi_core::hvi::{
    AbsPotential, AbstractHvi, CoerciveOperator, Coupling, HalfSquare, HistoryKernel, Interval, KernelTerm,
    NonmonotoneDrop, QuadraticCompliance, SharedPotential, ZeroPotential,
};
use hvi_core::linalg::CsrMatrix;
use hvi_core::step::StepProblem;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Adaptive Simpson quadrature.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rule(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = rule(fa, flm, fm, a, m);
        let right = rule(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fm, fb) = (f(a), f(0.5 * (a + b)), f(b));
    rec(f, a, b, fa, fm, fb, rule(fa, fm, fb, a, b), tol, 40)
}

fn simpson_vec(f: &dyn Fn(f64) -> DVector<f64>, a: f64, b: f64, dim: usize) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| simpson(&|s| f(s)[i], a, b, 1e-15))
}

/// Implicit Euler for `A u' + B u + int_0^t q(t, s) u(s) ds = f` with dense
/// LU solves, interval means of `f` and interval integrals of `q` by
/// adaptive Simpson.
pub fn volterra_euler(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: Option<&dyn Fn(f64, f64) -> DMatrix<f64>>,
    f: &dyn Fn(f64) -> DVector<f64>,
    u0: &DVector<f64>,
    horizon: f64,
    steps: usize,
) -> Vec<DVector<f64>> {
    let n = u0.len();
    let tau = horizon / steps as f64;
    let node = |k: usize| k as f64 * tau;
    let interval = |t: f64, j: usize| -> DMatrix<f64> {
        let q = q.expect("memory kernel");
        DMatrix::from_fn(n, n, |r, c| {
            simpson(&|s| q(t, s)[(r, c)], node(j - 1), node(j), 1e-15)
        })
    };
    let mut states = vec![u0.clone()];
    for k in 1..=steps {
        let t = node(k);
        let fk = simpson_vec(f, node(k - 1), t, n) / tau;
        let mut lhs = a + b * tau;
        let mut rhs = a * &states[k - 1] + fk * tau;
        if q.is_some() {
            lhs += interval(t, k) * tau;
            for j in 1..k {
                rhs -= interval(t, j) * &states[j] * tau;
            }
        }
        states.push(lhs.lu().solve(&rhs).expect("nonsingular step matrix"));
    }
    states
}

/// Smallest eigenvalue of a symmetric 2x2 matrix in closed form.
pub fn min_eig_2x2(m: &DMatrix<f64>) -> f64 {
    let (a, b, d) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
    0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt()
}

/// Spectral norm of a small dense matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    m.singular_values().max()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PotentialKind {
    Zero,
    HalfSquare,
    Quadratic,
    Abs,
    Nonmonotone,
}

pub const ALL_KINDS: [PotentialKind; 5] = [
    PotentialKind::Zero,
    PotentialKind::HalfSquare,
    PotentialKind::Quadratic,
    PotentialKind::Abs,
    PotentialKind::Nonmonotone,
];

/// A random step problem with at most two unknowns, satisfying
/// `m_K > tau m_J |M|^2` with margin, and an a priori box for the solution.
pub struct RandomStep {
    pub problem: StepProblem,
    pub box_: Vec<Interval>,
    pub kinds: Vec<PotentialKind>,
}

pub fn random_step(rng: &mut impl Rng, allow: &[PotentialKind]) -> RandomStep {
    let n = rng.gen_range(1..=2usize);
    let l = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let k = &l * l.transpose() + DMatrix::identity(n, n) * rng.gen_range(0.3..1.5);
    let m_k = if n == 1 { k[(0, 0)] } else { min_eig_2x2(&k) };
    let nc = rng.gen_range(1..=n);
    let m = DMatrix::from_fn(nc, n, |_, _| rng.gen_range(-1.5..1.5));
    let m_norm = spectral_norm(&m);
    let tau = rng.gen_range(0.2..1.0);
    let rhs = DVector::from_fn(n, |_, _| rng.gen_range(-3.0..3.0));

    let mut kinds = Vec::new();
    let mut potentials: Vec<SharedPotential> = Vec::new();
    let mut m_j: f64 = 0.0;
    let mut c_j: f64 = 0.0;
    for _ in 0..nc {
        let kind = allow[rng.gen_range(0..allow.len())];
        let c = rng.gen_range(0.2..3.0);
        let j: SharedPotential = match kind {
            PotentialKind::Zero => Arc::new(ZeroPotential),
            PotentialKind::HalfSquare => Arc::new(HalfSquare { stiffness: c }),
            PotentialKind::Quadratic => Arc::new(QuadraticCompliance { stiffness: c }),
            PotentialKind::Abs => Arc::new(AbsPotential { weight: c }),
            PotentialKind::Nonmonotone => {
                // Keep tau m_J |M|^2 <= m_K / 2.
                let beta = rng.gen_range(0.1..0.9);
                let cap = 0.5 * m_k / (tau * (1.0 - beta) * m_norm * m_norm).max(1e-12);
                Arc::new(NonmonotoneDrop::new(c.min(cap), rng.gen_range(0.2..1.5), beta))
            }
        };
        m_j = m_j.max(j.relaxation_constant());
        c_j = c_j.max(j.growth_constant());
        kinds.push(kind);
        potentials.push(j);
    }
    // |u| <= (|rhs| + tau |M| |xi0|) / (m_K - tau m_J |M|^2) with |xi0| <= c_J sqrt(nc).
    let margin = m_k - tau * m_j * m_norm * m_norm;
    assert!(margin > 0.0);
    let radius = 1.5 * (rhs.norm() + tau * m_norm * c_j * (nc as f64).sqrt()) / margin + 0.1;
    let k_op = CoerciveOperator::new(CsrMatrix::from_dense(&k), m_k, k.norm()).unwrap();
    let problem = StepProblem::new(k_op, tau, rhs, CsrMatrix::from_dense(&m), potentials);
    RandomStep {
        problem,
        box_: vec![Interval::new(-radius, radius); n],
        kinds,
    }
}

/// `u' + b u + c int_0^t exp(-(t - s)) u(s) ds = cos(2 pi t)` with one unknown,
/// dominated by the memory term.
pub fn scalar_memory_problem(b: f64, c: f64, horizon: f64) -> AbstractHvi {
    let kernel = HistoryKernel::new(
        CsrMatrix::identity(1),
        vec![KernelTerm::new(
            |t, s| (-(t - s)).exp(),
            CsrMatrix::diagonal(&[c]),
        )],
        DVector::zeros(1),
        1.0,
        c,
        c,
    )
    .unwrap();
    AbstractHvi::new(
        CoerciveOperator::new(CsrMatrix::identity(1), 1.0, 1.0).unwrap(),
        CoerciveOperator::new(CsrMatrix::diagonal(&[b]), b, b).unwrap(),
        kernel,
        Coupling::empty(1),
        vec![],
        Arc::new(|t| DVector::from_element(1, (2.0 * std::f64::consts::PI * t).cos())),
        DVector::zeros(1),
        horizon,
    )
    .unwrap()
}

/// Unit square `[0,1]^2` with the top clamped and the other sides tagged as given.
pub fn unit_square(n: usize, bottom: BoundaryRegion) -> TriMesh {
    generate_rect_mesh(
        n,
        n,
        1.0,
        1.0,
        SideTagging {
            bottom: Some(bottom),
            right: Some(BoundaryRegion::Gamma2),
            top: Some(BoundaryRegion::Gamma1),
            left: Some(BoundaryRegion::Gamma2),
        },
    )
    .unwrap()
}

/// Moves every interior node by up to `amplitude` in each direction.
pub fn jitter(mesh: &TriMesh, amplitude: f64, rng: &mut impl Rng) -> TriMesh {
    let mut on_boundary = vec![false; mesh.nodes().len()];
    for e in mesh.boundary_edges() {
        on_boundary[e.nodes[0]] = true;
        on_boundary[e.nodes[1]] = true;
    }
    let nodes = mesh
        .nodes()
        .iter()
        .zip(&on_boundary)
        .map(|(p, &b)| {
            if b {
                *p
            } else {
                [
                    p[0] + rng.gen_range(-amplitude..amplitude),
                    p[1] + rng.gen_range(-amplitude..amplitude),
                ]
            }
        })
        .collect();
    let edges = mesh
        .boundary_edges()
        .iter()
        .map(|e| (e.nodes, e.region))
        .collect();
    TriMesh::new(nodes, mesh.triangles().to_vec(), edges).unwrap()
}

/// Steady problem on the unit square (top clamped, other sides loaded by
/// tractions) whose exact solution is `u = (alpha (1 - y), beta (1 - y))`,
/// started from that field. Plane stress from `sigma = 2 mu eps + lambda tr(eps) I`
/// is written out by hand.
pub struct PatchProblem {
    pub hvi: AbstractHvi,
    pub exact: DVector<f64>,
    pub dofs: DofMap,
}

pub fn patch_problem(
    mesh: TriMesh,
    alpha: f64,
    beta: f64,
    visc: (f64, f64),
    elast: (f64, f64),
) -> PatchProblem {
    let mesh = Arc::new(mesh);
    let dofs = DofMap::new(&mesh);
    let n = dofs.free_count();
    let (mu, lambda) = elast;
    // eps_xx = 0, eps_yy = -beta, eps_xy = -alpha / 2
    let sxx = -lambda * beta;
    let syy = -2.0 * mu * beta - lambda * beta;
    let sxy = -mu * alpha;
    let traction = move |p: [f64; 2], _t: f64| -> [f64; 2] {
        let normal = if p[0].abs() < 1e-12 {
            [-1.0, 0.0]
        } else if (p[0] - 1.0).abs() < 1e-12 {
            [1.0, 0.0]
        } else {
            [0.0, -1.0]
        };
        [
            sxx * normal[0] + sxy * normal[1],
            sxy * normal[0] + syy * normal[1],
        ]
    };
    let mut exact = DVector::zeros(n);
    for (node, p) in mesh.nodes().iter().enumerate() {
        for c in 0..2 {
            if let Some(d) = dofs.dof(node, c) {
                exact[d] = if c == 0 { alpha } else { beta } * (1.0 - p[1]);
            }
        }
    }
    let a = assemble_elastic(&mesh, &dofs, &IsotropicTensor::new(visc.0, visc.1).unwrap()).unwrap();
    let b = assemble_elastic(&mesh, &dofs, &IsotropicTensor::new(mu, lambda).unwrap()).unwrap();
    let (m2, d2) = (mesh.clone(), dofs.clone());
    let zero = |_: [f64; 2], _: f64| [0.0, 0.0];
    let load = Arc::new(move |t: f64| assemble_load(&m2, &d2, &zero, &traction, t));
    let hvi = AbstractHvi::new(
        a,
        b,
        HistoryKernel::none(n),
        Coupling::empty(n),
        vec![],
        load,
        exact.clone(),
        1.0,
    )
    .unwrap()
    .with_gram(energy_gram(&mesh, &dofs).unwrap());
    PatchProblem { hvi, exact, dofs }
}

/// Largest entrywise `|K - K^T|` computed on the dense matrix.
pub fn dense_asymmetry(k: &CsrMatrix) -> f64 {
    let d = k.to_dense();
    (&d - d.transpose()).amax()
}
