use std::collections::HashMap;

use crate::error::{HviError, Result};

/// Part of the boundary an edge belongs to: clamped, loaded by tractions,
/// or in potential contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryRegion {
    Gamma1,
    Gamma2,
    Gamma3,
}

impl BoundaryRegion {
    pub fn tag(self) -> u8 {
        match self {
            BoundaryRegion::Gamma1 => 1,
            BoundaryRegion::Gamma2 => 2,
            BoundaryRegion::Gamma3 => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            1 => Some(BoundaryRegion::Gamma1),
            2 => Some(BoundaryRegion::Gamma2),
            3 => Some(BoundaryRegion::Gamma3),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryEdge {
    pub nodes: [usize; 2],
    pub region: BoundaryRegion,
    /// Outward unit normal.
    pub normal: [f64; 2],
    pub length: f64,
}

/// Conforming triangulation of a polygon with tagged boundary.
#[derive(Debug, Clone)]
pub struct TriMesh {
    nodes: Vec<[f64; 2]>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<BoundaryEdge>,
    h: f64,
}

fn edge_key(a: usize, b: usize) -> (usize, usize) {
    (a.min(b), a.max(b))
}

impl TriMesh {
    /// Validates orientation, boundary coverage and tagging, and computes
    /// outward normals.
    pub fn new(
        nodes: Vec<[f64; 2]>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<([usize; 2], BoundaryRegion)>,
    ) -> Result<Self> {
        if triangles.is_empty() {
            return Err(HviError::InvalidMesh("no triangles".into()));
        }
        let mut h: f64 = 0.0;
        // edge -> (count, opposite vertex of the last triangle seen)
        let mut edges: HashMap<(usize, usize), (usize, usize)> = HashMap::new();
        for (e, tri) in triangles.iter().enumerate() {
            if let Some(&bad) = tri.iter().find(|&&i| i >= nodes.len()) {
                return Err(HviError::InvalidMesh(format!(
                    "triangle {e} references node {bad} of {}",
                    nodes.len()
                )));
            }
            let area = signed_area(&nodes, tri);
            if !(area > 0.0) {
                return Err(HviError::InvalidMesh(format!(
                    "triangle {e} has signed area {area:e}; expected counterclockwise"
                )));
            }
            for k in 0..3 {
                let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
                let entry = edges.entry(edge_key(a, b)).or_insert((0, c));
                entry.0 += 1;
                entry.1 = c;
                h = h.max(dist(nodes[a], nodes[b]));
            }
        }
        if let Some((e, _)) = edges.iter().find(|(_, (count, _))| *count > 2) {
            return Err(HviError::InvalidMesh(format!(
                "edge {e:?} is shared by more than two triangles"
            )));
        }
        let topological = edges.values().filter(|(count, _)| *count == 1).count();

        let mut seen = HashMap::new();
        let mut tagged = Vec::with_capacity(boundary.len());
        for ([a, b], region) in boundary {
            let key = edge_key(a, b);
            let &(count, opposite) = edges
                .get(&key)
                .ok_or_else(|| HviError::InvalidTagging(format!("edge ({a}, {b}) is not a mesh edge")))?;
            if count != 1 {
                return Err(HviError::InvalidTagging(format!("edge ({a}, {b}) is interior")));
            }
            if seen.insert(key, region).is_some() {
                return Err(HviError::InvalidTagging(format!(
                    "edge ({a}, {b}) is tagged twice"
                )));
            }
            let (pa, pb, pc) = (nodes[a], nodes[b], nodes[opposite]);
            let length = dist(pa, pb);
            let mut normal = [(pb[1] - pa[1]) / length, -(pb[0] - pa[0]) / length];
            let inward = (pc[0] - pa[0]) * normal[0] + (pc[1] - pa[1]) * normal[1];
            if inward > 0.0 {
                normal = [-normal[0], -normal[1]];
            }
            tagged.push(BoundaryEdge {
                nodes: [a, b],
                region,
                normal,
                length,
            });
        }
        if tagged.len() != topological {
            return Err(HviError::InvalidTagging(format!(
                "{} of {} boundary edges are tagged",
                tagged.len(),
                topological
            )));
        }
        if !tagged.iter().any(|e| e.region == BoundaryRegion::Gamma1) {
            return Err(HviError::InvalidTagging(
                "the clamped part Gamma1 must contain at least one edge".into(),
            ));
        }
        Ok(Self {
            nodes,
            triangles,
            boundary: tagged,
            h,
        })
    }

    pub fn nodes(&self) -> &[[f64; 2]] {
        &self.nodes
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_edges(&self) -> &[BoundaryEdge] {
        &self.boundary
    }

    /// Largest triangle diameter.
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn area(&self, e: usize) -> f64 {
        signed_area(&self.nodes, &self.triangles[e])
    }

    pub fn total_area(&self) -> f64 {
        (0..self.triangles.len()).map(|e| self.area(e)).sum()
    }

    pub fn region_length(&self, region: BoundaryRegion) -> f64 {
        self.boundary
            .iter()
            .filter(|e| e.region == region)
            .map(|e| e.length)
            .sum()
    }

    /// Nodes touching an edge of `region`, sorted.
    pub fn region_nodes(&self, region: BoundaryRegion) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .boundary
            .iter()
            .filter(|e| e.region == region)
            .flat_map(|e| e.nodes)
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Gradients of the three barycentric coordinates of triangle `e`.
    pub fn gradients(&self, e: usize) -> [[f64; 2]; 3] {
        let [a, b, c] = self.triangles[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let two_area = 2.0 * self.area(e);
        [
            [(pb[1] - pc[1]) / two_area, (pc[0] - pb[0]) / two_area],
            [(pc[1] - pa[1]) / two_area, (pa[0] - pc[0]) / two_area],
            [(pa[1] - pb[1]) / two_area, (pb[0] - pa[0]) / two_area],
        ]
    }

    /// Barycentric coordinates of `p` in triangle `e`.
    pub fn barycentric(&self, e: usize, p: [f64; 2]) -> [f64; 3] {
        let [a, b, c] = self.triangles[e];
        let (pa, pb, pc) = (self.nodes[a], self.nodes[b], self.nodes[c]);
        let two_area = 2.0 * self.area(e);
        let l0 = ((pb[0] - p[0]) * (pc[1] - p[1]) - (pc[0] - p[0]) * (pb[1] - p[1])) / two_area;
        let l1 = ((pc[0] - p[0]) * (pa[1] - p[1]) - (pa[0] - p[0]) * (pc[1] - p[1])) / two_area;
        [l0, l1, 1.0 - l0 - l1]
    }

    /// Triangle containing `p` (within a relative tolerance), via a bucket grid.
    pub fn locator(&self) -> PointLocator<'_> {
        PointLocator::new(self)
    }
}

fn signed_area(nodes: &[[f64; 2]], tri: &[usize; 3]) -> f64 {
    let (a, b, c) = (nodes[tri[0]], nodes[tri[1]], nodes[tri[2]]);
    0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]))
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Uniform bucket grid over the bounding box for point-in-triangle queries.
#[derive(Debug)]
pub struct PointLocator<'a> {
    mesh: &'a TriMesh,
    origin: [f64; 2],
    cell: [f64; 2],
    dims: [usize; 2],
    buckets: Vec<Vec<usize>>,
}

impl<'a> PointLocator<'a> {
    fn new(mesh: &'a TriMesh) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in &mesh.nodes {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (mesh.triangles.len() as f64).sqrt().ceil().max(1.0) as usize;
        let dims = [side, side];
        let cell = [
            ((hi[0] - lo[0]) / side as f64).max(f64::MIN_POSITIVE),
            ((hi[1] - lo[1]) / side as f64).max(f64::MIN_POSITIVE),
        ];
        let mut buckets = vec![Vec::new(); side * side];
        for (e, tri) in mesh.triangles.iter().enumerate() {
            let mut tlo = [f64::INFINITY; 2];
            let mut thi = [f64::NEG_INFINITY; 2];
            for &i in tri {
                for d in 0..2 {
                    tlo[d] = tlo[d].min(mesh.nodes[i][d]);
                    thi[d] = thi[d].max(mesh.nodes[i][d]);
                }
            }
            let i0 = Self::index(lo[0], cell[0], side, tlo[0]);
            let i1 = Self::index(lo[0], cell[0], side, thi[0]);
            let j0 = Self::index(lo[1], cell[1], side, tlo[1]);
            let j1 = Self::index(lo[1], cell[1], side, thi[1]);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * side + i].push(e);
                }
            }
        }
        Self {
            mesh,
            origin: lo,
            cell,
            dims,
            buckets,
        }
    }

    fn index(origin: f64, cell: f64, n: usize, x: f64) -> usize {
        (((x - origin) / cell).floor().max(0.0) as usize).min(n - 1)
    }

    /// Triangle and barycentric coordinates of `p`, if it lies in the mesh.
    pub fn locate(&self, p: [f64; 2]) -> Option<(usize, [f64; 3])> {
        let i = Self::index(self.origin[0], self.cell[0], self.dims[0], p[0]);
        let j = Self::index(self.origin[1], self.cell[1], self.dims[1], p[1]);
        let tol = 1e-10;
        let mut best: Option<(usize, [f64; 3], f64)> = None;
        for &e in &self.buckets[j * self.dims[0] + i] {
            let l = self.mesh.barycentric(e, p);
            let worst = l.iter().cloned().fold(f64::INFINITY, f64::min);
            if worst >= -tol && best.as_ref().map_or(true, |b| worst > b.2) {
                best = Some((e, l, worst));
            }
        }
        best.map(|(e, l, _)| (e, l))
    }
}

/// Region assigned to each side of a rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SideTagging {
    pub bottom: Option<BoundaryRegion>,
    pub right: Option<BoundaryRegion>,
    pub top: Option<BoundaryRegion>,
    pub left: Option<BoundaryRegion>,
}

/// Structured crossed-diagonal triangulation of `[0, lx] x [0, ly]`: each of
/// the `nx * ny` cells gets a center node and four triangles. Meshes with
/// `(2 nx, 2 ny)` cells are nested refinements of those with `(nx, ny)`.
pub fn generate_rect_mesh(nx: usize, ny: usize, lx: f64, ly: f64, tagging: SideTagging) -> Result<TriMesh> {
    if nx == 0 || ny == 0 || !(lx > 0.0) || !(ly > 0.0) {
        return Err(HviError::InvalidArgument(format!(
            "rectangle mesh needs nx, ny >= 1 and positive lengths (got {nx}x{ny}, {lx}x{ly})"
        )));
    }
    let side = |name: &str, tag: Option<BoundaryRegion>| {
        tag.ok_or_else(|| HviError::InvalidTagging(format!("{name} side is untagged")))
    };
    let bottom = side("bottom", tagging.bottom)?;
    let right = side("right", tagging.right)?;
    let top = side("top", tagging.top)?;
    let left = side("left", tagging.left)?;

    let vertex = |i: usize, j: usize| j * (nx + 1) + i;
    let center = |i: usize, j: usize| (nx + 1) * (ny + 1) + j * nx + i;
    let (dx, dy) = (lx / nx as f64, ly / ny as f64);
    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1) + nx * ny);
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([i as f64 * dx, j as f64 * dy]);
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            nodes.push([(i as f64 + 0.5) * dx, (j as f64 + 0.5) * dy]);
        }
    }
    let mut triangles = Vec::with_capacity(4 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let (v00, v10, v11, v01) = (
                vertex(i, j),
                vertex(i + 1, j),
                vertex(i + 1, j + 1),
                vertex(i, j + 1),
            );
            let c = center(i, j);
            triangles.push([v00, v10, c]);
            triangles.push([v10, v11, c]);
            triangles.push([v11, v01, c]);
            triangles.push([v01, v00, c]);
        }
    }
    let mut boundary = Vec::with_capacity(2 * (nx + ny));
    for i in 0..nx {
        boundary.push(([vertex(i, 0), vertex(i + 1, 0)], bottom));
        boundary.push(([vertex(i + 1, ny), vertex(i, ny)], top));
    }
    for j in 0..ny {
        boundary.push(([vertex(nx, j), vertex(nx, j + 1)], right));
        boundary.push(([vertex(0, j + 1), vertex(0, j)], left));
    }
    TriMesh::new(nodes, triangles, boundary)
}
