use nalgebra::DVector;

use super::mesh::{BoundaryRegion, TriMesh};
use super::space::DofMap;
use crate::error::{HviError, Result};
use crate::hvi::{CoerciveOperator, Coupling};
use crate::linalg::{CsrMatrix, Gram};
use crate::quadrature::gauss2_nodes;

/// `C eps = 2 shear eps + bulk tr(eps) I`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsotropicTensor {
    pub shear: f64,
    pub bulk: f64,
}

impl IsotropicTensor {
    pub fn new(shear: f64, bulk: f64) -> Result<Self> {
        if !(shear > 0.0) || !(bulk >= 0.0) {
            return Err(HviError::InvalidArgument(format!(
                "isotropic tensor needs shear > 0 and bulk >= 0 (got {shear}, {bulk})"
            )));
        }
        Ok(Self { shear, bulk })
    }

    /// Lower bound `C eps : eps >= m |eps|^2`.
    pub fn ellipticity(&self) -> f64 {
        2.0 * self.shear
    }

    /// Upper bound `|C eps| <= M |eps|` (in two dimensions `tr(eps)^2 <= 2 |eps|^2`).
    pub fn bound(&self) -> f64 {
        2.0 * self.shear + 2.0 * self.bulk.abs()
    }

    /// Stress `(s_xx, s_yy, s_xy)` from strain `(e_xx, e_yy, e_xy)`.
    pub fn apply(&self, e: [f64; 3]) -> [f64; 3] {
        let tr = e[0] + e[1];
        [
            2.0 * self.shear * e[0] + self.bulk * tr,
            2.0 * self.shear * e[1] + self.bulk * tr,
            2.0 * self.shear * e[2],
        ]
    }
}

/// Element matrix on `(node0 x, node0 y, node1 x, ...)`.
///
/// `K[(a,i),(b,j)] = area (shear ((g_a . g_b) d_ij + g_a[j] g_b[i]) + bulk g_a[i] g_b[j])`
/// with `g` the barycentric gradients, i.e. the exact integral of
/// `C eps(phi) : eps(psi)` for constant strains.
pub fn element_matrix(mesh: &TriMesh, e: usize, t: &IsotropicTensor) -> [[f64; 6]; 6] {
    let g = mesh.gradients(e);
    let area = mesh.area(e);
    let mut k = [[0.0; 6]; 6];
    for a in 0..3 {
        for b in 0..3 {
            let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1];
            for i in 0..2 {
                for j in 0..2 {
                    let delta = if i == j { dot } else { 0.0 };
                    k[2 * a + i][2 * b + j] =
                        area * (t.shear * (delta + g[a][j] * g[b][i]) + t.bulk * g[a][i] * g[b][j]);
                }
            }
        }
    }
    k
}

/// Stiffness on all `2 * nodes` unknowns, before clamping.
pub fn assemble_full(mesh: &TriMesh, t: &IsotropicTensor) -> CsrMatrix {
    let n = 2 * mesh.nodes().len();
    let mut trip = Vec::with_capacity(36 * mesh.triangles().len());
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let k = element_matrix(mesh, e, t);
        for a in 0..6 {
            for b in 0..6 {
                trip.push((2 * tri[a / 2] + a % 2, 2 * tri[b / 2] + b % 2, k[a][b]));
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

/// Stiffness on the free unknowns.
pub fn assemble_matrix(mesh: &TriMesh, dofs: &DofMap, t: &IsotropicTensor) -> CsrMatrix {
    let n = dofs.free_count();
    let mut trip = Vec::with_capacity(36 * mesh.triangles().len());
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let k = element_matrix(mesh, e, t);
        let map: Vec<Option<usize>> = (0..6).map(|a| dofs.dof(tri[a / 2], a % 2)).collect();
        for a in 0..6 {
            let Some(i) = map[a] else { continue };
            for b in 0..6 {
                if let Some(j) = map[b] {
                    trip.push((i, j, k[a][b]));
                }
            }
        }
    }
    CsrMatrix::from_triplets(n, n, &trip)
}

/// The strain energy product `(eps(u), eps(v))`, which defines the norm of
/// the displacement space.
pub fn energy_gram(mesh: &TriMesh, dofs: &DofMap) -> Result<Gram> {
    Gram::from_matrix(assemble_matrix(
        mesh,
        dofs,
        &IsotropicTensor {
            shear: 0.5,
            bulk: 0.0,
        },
    ))
}

/// Stiffness with its constants relative to the strain energy norm:
/// coercivity `2 shear`, bound `2 shear + 2 bulk`.
pub fn assemble_elastic(mesh: &TriMesh, dofs: &DofMap, t: &IsotropicTensor) -> Result<CoerciveOperator> {
    CoerciveOperator::new(assemble_matrix(mesh, dofs, t), t.ellipticity(), t.bound())
}

pub type VectorField = dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync;

/// Consistent load `int f0 . v + int_{Gamma2} fN . v` at time `t`: the
/// edge-midpoint rule inside elements and two-point Gauss on traction edges.
pub fn assemble_load(
    mesh: &TriMesh,
    dofs: &DofMap,
    f0: &VectorField,
    f_n: &VectorField,
    t: f64,
) -> DVector<f64> {
    dofs.restrict(&assemble_load_nodal(mesh, f0, f_n, t))
}

/// [`assemble_load`] on every node, clamped ones included.
pub fn assemble_load_nodal(mesh: &TriMesh, f0: &VectorField, f_n: &VectorField, t: f64) -> Vec<[f64; 2]> {
    let mut nodal = vec![[0.0; 2]; mesh.nodes().len()];
    let pts = mesh.nodes();
    for (e, tri) in mesh.triangles().iter().enumerate() {
        let w = mesh.area(e) / 3.0;
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            let mid = [0.5 * (pts[a][0] + pts[b][0]), 0.5 * (pts[a][1] + pts[b][1])];
            let f = f0(mid, t);
            // Only the two endpoint basis functions are nonzero (1/2) at the midpoint.
            for node in [a, b] {
                nodal[node][0] += w * 0.5 * f[0];
                nodal[node][1] += w * 0.5 * f[1];
            }
        }
    }
    for edge in mesh.boundary_edges() {
        if edge.region != BoundaryRegion::Gamma2 {
            continue;
        }
        let [a, b] = edge.nodes;
        for s in gauss2_nodes(0.0, 1.0) {
            let p = [
                (1.0 - s) * pts[a][0] + s * pts[b][0],
                (1.0 - s) * pts[a][1] + s * pts[b][1],
            ];
            let f = f_n(p, t);
            let w = 0.5 * edge.length;
            for (node, phi) in [(a, 1.0 - s), (b, s)] {
                nodal[node][0] += w * phi * f[0];
                nodal[node][1] += w * phi * f[1];
            }
        }
    }
    nodal
}

/// Normal trace on the contact boundary with nodal quadrature.
#[derive(Debug, Clone)]
pub struct ContactTrace {
    /// Rows: contact nodes with at least one free unknown; columns: free unknowns.
    pub coupling: Coupling,
    pub nodes: Vec<usize>,
    /// Nodal unit normals (averaged at kinks of the contact boundary).
    pub normals: Vec<[f64; 2]>,
}

pub fn trace_normal(mesh: &TriMesh, dofs: &DofMap) -> Result<ContactTrace> {
    let nn = mesh.nodes().len();
    let mut weight = vec![0.0; nn];
    let mut normal = vec![[0.0; 2]; nn];
    let mut on_contact = vec![false; nn];
    for e in mesh.boundary_edges() {
        if e.region != BoundaryRegion::Gamma3 {
            continue;
        }
        for &i in &e.nodes {
            on_contact[i] = true;
            weight[i] += 0.5 * e.length;
            normal[i][0] += e.normal[0];
            normal[i][1] += e.normal[1];
        }
    }
    if !on_contact.iter().any(|&c| c) {
        return Err(HviError::EmptyContactBoundary);
    }
    let mut trip = Vec::new();
    let mut weights = Vec::new();
    let mut nodes = Vec::new();
    let mut normals = Vec::new();
    for i in 0..nn {
        if !on_contact[i] || dofs.is_clamped(i) {
            continue;
        }
        let len = (normal[i][0].powi(2) + normal[i][1].powi(2)).sqrt();
        let nu = [normal[i][0] / len, normal[i][1] / len];
        let row = nodes.len();
        for c in 0..2 {
            if let Some(d) = dofs.dof(i, c) {
                if nu[c] != 0.0 {
                    trip.push((row, d, nu[c]));
                }
            }
        }
        nodes.push(i);
        normals.push(nu);
        weights.push(weight[i]);
    }
    if nodes.is_empty() {
        return Err(HviError::EmptyContactBoundary);
    }
    let matrix = CsrMatrix::from_triplets(nodes.len(), dofs.free_count(), &trip);
    Ok(ContactTrace {
        coupling: Coupling::new(matrix, weights)?,
        nodes,
        normals,
    })
}
