use nalgebra::DVector;

use super::mesh::{BoundaryRegion, TriMesh};
use crate::error::{HviError, Result};
use crate::linalg::CsrMatrix;

/// Vector-valued P1 unknowns: two per node, none on clamped nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    dofs: Vec<[Option<usize>; 2]>,
    free: usize,
}

impl DofMap {
    pub fn new(mesh: &TriMesh) -> Self {
        let mut clamped = vec![false; mesh.nodes().len()];
        for i in mesh.region_nodes(BoundaryRegion::Gamma1) {
            clamped[i] = true;
        }
        let mut next = 0;
        let dofs = clamped
            .iter()
            .map(|&c| {
                if c {
                    [None, None]
                } else {
                    next += 2;
                    [Some(next - 2), Some(next - 1)]
                }
            })
            .collect();
        Self { dofs, free: next }
    }

    pub fn dof(&self, node: usize, component: usize) -> Option<usize> {
        self.dofs[node][component]
    }

    pub fn is_clamped(&self, node: usize) -> bool {
        self.dofs[node][0].is_none()
    }

    pub fn free_count(&self) -> usize {
        self.free
    }

    pub fn node_count(&self) -> usize {
        self.dofs.len()
    }

    /// Nodal displacements (zero on clamped nodes) from free coefficients.
    pub fn expand(&self, u: &DVector<f64>) -> Vec<[f64; 2]> {
        self.dofs
            .iter()
            .map(|d| [d[0].map_or(0.0, |i| u[i]), d[1].map_or(0.0, |i| u[i])])
            .collect()
    }

    /// Free coefficients from nodal values (clamped values are dropped).
    pub fn restrict(&self, nodal: &[[f64; 2]]) -> DVector<f64> {
        let mut u = DVector::zeros(self.free);
        for (d, v) in self.dofs.iter().zip(nodal) {
            for c in 0..2 {
                if let Some(i) = d[c] {
                    u[i] = v[c];
                }
            }
        }
        u
    }
}

/// Nodal P1 interpolant of a displacement field that vanishes on the
/// clamped boundary.
pub fn interpolant_p1(
    mesh: &TriMesh,
    dofs: &DofMap,
    field: &dyn Fn([f64; 2]) -> [f64; 2],
) -> Result<DVector<f64>> {
    let mut nodal = Vec::with_capacity(mesh.nodes().len());
    for (i, &p) in mesh.nodes().iter().enumerate() {
        let v = field(p);
        if dofs.is_clamped(i) {
            let size = v[0].abs().max(v[1].abs());
            if size > 1e-10 {
                return Err(HviError::DirichletMismatch { node: i, value: size });
            }
        }
        nodal.push(v);
    }
    Ok(dofs.restrict(&nodal))
}

/// Constant strain `(e_xx, e_yy, e_xy)` of each triangle.
pub fn element_strains(mesh: &TriMesh, nodal: &[[f64; 2]]) -> Vec<[f64; 3]> {
    (0..mesh.triangles().len())
        .map(|e| {
            let g = mesh.gradients(e);
            let tri = mesh.triangles()[e];
            let mut s = [0.0; 3];
            for k in 0..3 {
                let u = nodal[tri[k]];
                s[0] += g[k][0] * u[0];
                s[1] += g[k][1] * u[1];
                s[2] += 0.5 * (g[k][1] * u[0] + g[k][0] * u[1]);
            }
            s
        })
        .collect()
}

/// Evaluates a P1 field given by nodal values at the nodes of another mesh.
///
/// With nested meshes (every coarse triangle a union of fine ones) this is
/// the exact embedding of the coarse space into the fine one.
pub fn prolongate(
    coarse: &TriMesh,
    coarse_dofs: &DofMap,
    u: &DVector<f64>,
    fine: &TriMesh,
    fine_dofs: &DofMap,
) -> Result<DVector<f64>> {
    Ok(prolongation_matrix(coarse, coarse_dofs, fine, fine_dofs)?.mul_vec(u))
}

/// The matrix of [`prolongate`], fine free unknowns by coarse free unknowns.
pub fn prolongation_matrix(
    coarse: &TriMesh,
    coarse_dofs: &DofMap,
    fine: &TriMesh,
    fine_dofs: &DofMap,
) -> Result<CsrMatrix> {
    check_nested(coarse, fine)?;
    let loc = coarse.locator();
    let mut trip = Vec::new();
    for (i, &p) in fine.nodes().iter().enumerate() {
        let (e, l) = loc.locate(p).ok_or_else(|| {
            HviError::NotNested(format!("fine node {i} at {p:?} lies outside the coarse mesh"))
        })?;
        let tri = coarse.triangles()[e];
        for c in 0..2 {
            let Some(row) = fine_dofs.dof(i, c) else { continue };
            for k in 0..3 {
                if let Some(col) = coarse_dofs.dof(tri[k], c) {
                    if l[k] != 0.0 {
                        trip.push((row, col, l[k]));
                    }
                }
            }
        }
    }
    Ok(CsrMatrix::from_triplets(
        fine_dofs.free_count(),
        coarse_dofs.free_count(),
        &trip,
    ))
}

/// Values at the coarse nodes of a fine P1 field.
pub fn restrict_to_coarse(
    fine: &TriMesh,
    fine_dofs: &DofMap,
    u: &DVector<f64>,
    coarse: &TriMesh,
    coarse_dofs: &DofMap,
) -> Result<DVector<f64>> {
    let matches = coincident_nodes(coarse, fine)?;
    let nodal = fine_dofs.expand(u);
    let picked: Vec<[f64; 2]> = matches.iter().map(|&i| nodal[i]).collect();
    Ok(coarse_dofs.restrict(&picked))
}

/// Every coarse node must coincide with a fine node.
pub fn check_nested(coarse: &TriMesh, fine: &TriMesh) -> Result<()> {
    coincident_nodes(coarse, fine).map(|_| ())
}

fn coincident_nodes(coarse: &TriMesh, fine: &TriMesh) -> Result<Vec<usize>> {
    let loc = fine.locator();
    let scale = fine.h();
    coarse
        .nodes()
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let (e, l) = loc
                .locate(p)
                .ok_or_else(|| HviError::NotNested(format!("coarse node {i} lies outside the fine mesh")))?;
            let tri = fine.triangles()[e];
            let k = (0..3)
                .max_by(|&a, &b| l[a].total_cmp(&l[b]))
                .expect("three vertices");
            let q = fine.nodes()[tri[k]];
            if ((q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2)).sqrt() > 1e-9 * scale {
                return Err(HviError::NotNested(format!(
                    "coarse node {i} at {p:?} is not a fine node"
                )));
            }
            Ok(tri[k])
        })
        .collect()
}
