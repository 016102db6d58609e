use std::io::{BufRead, Write};

use super::mesh::{BoundaryRegion, TriMesh};
use crate::error::{HviError, Result};

/// Reads the plain-text mesh format:
///
/// ```text
/// nodes N
/// x y            (N lines)
/// triangles M
/// i j k          (M lines, 0-based, counterclockwise)
/// bedges K
/// i j tag        (K lines, tag 1, 2 or 3)
/// ```
///
/// Blank lines and lines starting with `#` are ignored.
pub fn read_mesh(input: impl BufRead) -> Result<TriMesh> {
    let mut lines = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if !trimmed.is_empty() && !trimmed.starts_with('#') {
            lines.push((i + 1, trimmed.to_string()));
        }
    }
    let mut cursor = lines.into_iter();
    let mut last_line = 0;

    let mut header = |want: &str, cursor: &mut std::vec::IntoIter<(usize, String)>| -> Result<usize> {
        let (no, text) = cursor.next().ok_or(HviError::Parse {
            line: last_line + 1,
            message: format!("expected `{want} <count>`, found end of file"),
        })?;
        last_line = no;
        let mut parts = text.split_whitespace();
        match (parts.next(), parts.next(), parts.next()) {
            (Some(w), Some(n), None) if w == want => n.parse().map_err(|_| HviError::Parse {
                line: no,
                message: format!("invalid count `{n}`"),
            }),
            _ => Err(HviError::Parse {
                line: no,
                message: format!("expected `{want} <count>`, found `{text}`"),
            }),
        }
    };

    fn fields<T: std::str::FromStr>(
        cursor: &mut std::vec::IntoIter<(usize, String)>,
        count: usize,
        what: &str,
    ) -> Result<Vec<(usize, Vec<T>)>> {
        let mut out = Vec::with_capacity(count);
        for _ in 0..count {
            let (no, text) = cursor.next().ok_or(HviError::Parse {
                line: 0,
                message: format!("file ends inside the {what} block"),
            })?;
            let parsed: std::result::Result<Vec<T>, _> = text.split_whitespace().map(str::parse).collect();
            let values = parsed.map_err(|_| HviError::Parse {
                line: no,
                message: format!("malformed {what} entry `{text}`"),
            })?;
            out.push((no, values));
        }
        Ok(out)
    }

    let n = header("nodes", &mut cursor)?;
    let mut nodes = Vec::with_capacity(n);
    for (no, v) in fields::<f64>(&mut cursor, n, "node")? {
        if v.len() != 2 {
            return Err(HviError::Parse {
                line: no,
                message: "a node needs two coordinates".into(),
            });
        }
        nodes.push([v[0], v[1]]);
    }
    let m = header("triangles", &mut cursor)?;
    let mut triangles = Vec::with_capacity(m);
    for (no, v) in fields::<usize>(&mut cursor, m, "triangle")? {
        if v.len() != 3 {
            return Err(HviError::Parse {
                line: no,
                message: "a triangle needs three node indices".into(),
            });
        }
        triangles.push([v[0], v[1], v[2]]);
    }
    let k = header("bedges", &mut cursor)?;
    let mut edges = Vec::with_capacity(k);
    for (no, v) in fields::<usize>(&mut cursor, k, "boundary edge")? {
        let region = (v.len() == 3)
            .then(|| u8::try_from(v[2]).ok().and_then(BoundaryRegion::from_tag))
            .flatten()
            .ok_or(HviError::Parse {
                line: no,
                message: "a boundary edge needs `i j tag` with tag in {1, 2, 3}".into(),
            })?;
        edges.push(([v[0], v[1]], region));
    }
    if let Some((no, text)) = cursor.next() {
        return Err(HviError::Parse {
            line: no,
            message: format!("unexpected trailing content `{text}`"),
        });
    }
    TriMesh::new(nodes, triangles, edges)
}

pub fn write_mesh(mesh: &TriMesh, out: &mut impl Write) -> Result<()> {
    writeln!(out, "nodes {}", mesh.nodes().len())?;
    for p in mesh.nodes() {
        writeln!(out, "{} {}", p[0], p[1])?;
    }
    writeln!(out, "triangles {}", mesh.triangles().len())?;
    for t in mesh.triangles() {
        writeln!(out, "{} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "bedges {}", mesh.boundary_edges().len())?;
    for e in mesh.boundary_edges() {
        writeln!(out, "{} {} {}", e.nodes[0], e.nodes[1], e.region.tag())?;
    }
    Ok(())
}

/// Legacy ASCII VTK unstructured grid with a point vector `displacement` and
/// a cell tensor `stress` (`(s_xx, s_yy, s_xy)` per triangle).
pub fn write_vtk(
    mesh: &TriMesh,
    displacement: &[[f64; 2]],
    stress: &[[f64; 3]],
    title: &str,
    out: &mut impl Write,
) -> Result<()> {
    let nn = mesh.nodes().len();
    let ne = mesh.triangles().len();
    if displacement.len() != nn || stress.len() != ne {
        return Err(HviError::DimensionMismatch {
            context: "VTK fields".into(),
            expected: nn,
            actual: displacement.len(),
        });
    }
    writeln!(out, "# vtk DataFile Version 3.0")?;
    writeln!(out, "{}", title.lines().next().unwrap_or(""))?;
    writeln!(out, "ASCII")?;
    writeln!(out, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(out, "POINTS {nn} double")?;
    for p in mesh.nodes() {
        writeln!(out, "{} {} 0", p[0], p[1])?;
    }
    writeln!(out, "CELLS {ne} {}", 4 * ne)?;
    for t in mesh.triangles() {
        writeln!(out, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    writeln!(out, "CELL_TYPES {ne}")?;
    for _ in 0..ne {
        writeln!(out, "5")?;
    }
    writeln!(out, "POINT_DATA {nn}")?;
    writeln!(out, "VECTORS displacement double")?;
    for u in displacement {
        writeln!(out, "{} {} 0", u[0], u[1])?;
    }
    writeln!(out, "CELL_DATA {ne}")?;
    writeln!(out, "TENSORS stress double")?;
    for s in stress {
        writeln!(out, "{} {} 0", s[0], s[2])?;
        writeln!(out, "{} {} 0", s[2], s[1])?;
        writeln!(out, "0 0 0")?;
    }
    Ok(())
}
