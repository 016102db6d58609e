//! Linear (P1) triangular finite elements for plane displacement fields.

mod assembly;
mod io;
mod mesh;
mod space;

pub use assembly::{
    assemble_elastic, assemble_full, assemble_load, assemble_load_nodal, assemble_matrix, element_matrix,
    energy_gram, trace_normal, ContactTrace, IsotropicTensor, VectorField,
};
pub use io::{read_mesh, write_mesh, write_vtk};
pub use mesh::{generate_rect_mesh, BoundaryEdge, BoundaryRegion, PointLocator, SideTagging, TriMesh};
pub use space::{
    check_nested, element_strains, interpolant_p1, prolongate, prolongation_matrix, restrict_to_coarse,
    DofMap,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::estimate_coercivity;
    use nalgebra::DVector;

    fn hanging_square(n: usize) -> TriMesh {
        generate_rect_mesh(
            n,
            n,
            1.0,
            1.0,
            SideTagging {
                bottom: Some(BoundaryRegion::Gamma3),
                right: Some(BoundaryRegion::Gamma2),
                top: Some(BoundaryRegion::Gamma1),
                left: Some(BoundaryRegion::Gamma2),
            },
        )
        .unwrap()
    }

    fn reference_triangle() -> TriMesh {
        TriMesh::new(
            vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]],
            vec![[0, 1, 2]],
            vec![
                ([0, 1], BoundaryRegion::Gamma3),
                ([1, 2], BoundaryRegion::Gamma2),
                ([2, 0], BoundaryRegion::Gamma1),
            ],
        )
        .unwrap()
    }

    #[test]
    fn reference_element_matches_hand_computation() {
        let k = element_matrix(&reference_triangle(), 0, &IsotropicTensor::new(1.0, 0.0).unwrap());
        let hand = [
            [1.5, 0.5, -1.0, -0.5, -0.5, 0.0],
            [0.5, 1.5, 0.0, -0.5, -0.5, -1.0],
            [-1.0, 0.0, 1.0, 0.0, 0.0, 0.0],
            [-0.5, -0.5, 0.0, 0.5, 0.5, 0.0],
            [-0.5, -0.5, 0.0, 0.5, 0.5, 0.0],
            [0.0, -1.0, 0.0, 0.0, 0.0, 1.0],
        ];
        for i in 0..6 {
            for j in 0..6 {
                assert!((k[i][j] - hand[i][j]).abs() < 1e-15, "entry ({i}, {j})");
            }
        }
    }

    #[test]
    fn rigid_translation_has_no_energy() {
        let mesh = hanging_square(3);
        let k = assemble_full(&mesh, &IsotropicTensor::new(1.3, 0.7).unwrap());
        for dir in [[1.0, 0.0], [0.0, 1.0]] {
            let v = DVector::from_fn(k.ncols(), |i, _| dir[i % 2]);
            assert!(k.mul_vec(&v).amax() < 1e-12);
        }
        // Infinitesimal rotation (-y, x) is strain free too.
        let v = DVector::from_fn(k.ncols(), |i, _| {
            let p = mesh.nodes()[i / 2];
            if i % 2 == 0 {
                -p[1]
            } else {
                p[0]
            }
        });
        assert!(k.mul_vec(&v).amax() < 1e-12);
    }

    #[test]
    fn clamped_stiffness_is_coercive_and_symmetric() {
        let mesh = hanging_square(3);
        let dofs = DofMap::new(&mesh);
        let k = assemble_matrix(&mesh, &dofs, &IsotropicTensor::new(1.0, 2.0).unwrap());
        assert!(k.asymmetry() <= 1e-12);
        assert!(estimate_coercivity(&k).unwrap() > 0.0);
    }

    #[test]
    fn constant_body_force_sums_to_total() {
        let mesh = hanging_square(4);
        let f0 = |_: [f64; 2], _: f64| [0.3, -2.0];
        let zero = |_: [f64; 2], _: f64| [0.0, 0.0];
        let nodal = assemble_load_nodal(&mesh, &f0, &zero, 0.0);
        let sx: f64 = nodal.iter().map(|v| v[0]).sum();
        let sy: f64 = nodal.iter().map(|v| v[1]).sum();
        assert!((sx - 0.3).abs() < 1e-12 && (sy + 2.0).abs() < 1e-12);
        let dofs = DofMap::new(&mesh);
        assert_eq!(assemble_load(&mesh, &dofs, &zero, &zero, 0.0).amax(), 0.0);
    }

    #[test]
    fn trace_of_normal_field_is_one() {
        let mesh = hanging_square(4);
        let dofs = DofMap::new(&mesh);
        let tr = trace_normal(&mesh, &dofs).unwrap();
        let normal = interpolant_p1(&mesh, &dofs, &|p| {
            if p[1] < 0.5 {
                [0.0, -1.0]
            } else {
                [0.0, -(1.0 - p[1]) * 2.0]
            }
        })
        .unwrap();
        let r = tr.coupling.matrix().mul_vec(&normal);
        assert!(r.iter().all(|v| (v - 1.0).abs() < 1e-14));
        let tangential = interpolant_p1(&mesh, &dofs, &|p| [1.0 - p[1], 0.0]).unwrap();
        assert!(tr.coupling.matrix().mul_vec(&tangential).amax() < 1e-15);
        let total: f64 = tr.coupling.weights().iter().sum();
        assert!((total - mesh.region_length(BoundaryRegion::Gamma3)).abs() < 1e-12);
    }

    #[test]
    fn interpolant_reproduces_affine_fields() {
        let mesh = hanging_square(3);
        let dofs = DofMap::new(&mesh);
        let f = |p: [f64; 2]| [0.5 * (1.0 - p[1]) + 0.0 * p[0], 2.0 * (p[1] - 1.0)];
        let u = interpolant_p1(&mesh, &dofs, &f).unwrap();
        let nodal = dofs.expand(&u);
        for (i, p) in mesh.nodes().iter().enumerate() {
            let v = f(*p);
            assert!((nodal[i][0] - v[0]).abs() < 1e-15 && (nodal[i][1] - v[1]).abs() < 1e-15);
        }
        assert!(matches!(
            interpolant_p1(&mesh, &dofs, &|_| [1.0, 0.0]),
            Err(crate::HviError::DirichletMismatch { .. })
        ));
    }

    #[test]
    fn prolongation_then_restriction_is_identity() {
        let coarse = hanging_square(2);
        let fine = hanging_square(4);
        let (cd, fd) = (DofMap::new(&coarse), DofMap::new(&fine));
        let u = DVector::from_fn(cd.free_count(), |i, _| (i as f64 * 0.37).sin());
        let p = prolongate(&coarse, &cd, &u, &fine, &fd).unwrap();
        let back = restrict_to_coarse(&fine, &fd, &p, &coarse, &cd).unwrap();
        assert!((back - u).amax() < 1e-14);
    }

    #[test]
    fn non_nested_meshes_are_detected() {
        let a = hanging_square(2);
        let b = hanging_square(3);
        assert!(matches!(check_nested(&a, &b), Err(crate::HviError::NotNested(_))));
    }

    #[test]
    fn mesh_file_round_trip() {
        let mesh = hanging_square(2);
        let mut buf = Vec::new();
        write_mesh(&mesh, &mut buf).unwrap();
        let back = read_mesh(buf.as_slice()).unwrap();
        assert_eq!(back.nodes(), mesh.nodes());
        assert_eq!(back.triangles(), mesh.triangles());
        assert_eq!(back.boundary_edges(), mesh.boundary_edges());
    }

    #[test]
    fn mesh_parse_error_reports_line() {
        let text = "nodes 3\n0 0\n1 0\n0 x\ntriangles 1\n0 1 2\nbedges 0\n";
        match read_mesh(text.as_bytes()) {
            Err(crate::HviError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn vtk_has_named_fields() {
        let mesh = hanging_square(1);
        let mut buf = Vec::new();
        let disp = vec![[0.0; 2]; mesh.nodes().len()];
        let stress = vec![[0.0; 3]; mesh.triangles().len()];
        write_vtk(&mesh, &disp, &stress, "t=0", &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("VECTORS displacement double"));
        assert!(text.contains("TENSORS stress double"));
        assert!(text.contains("CELL_TYPES 4"));
    }
}
