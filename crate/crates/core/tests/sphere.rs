use std::f64::consts::PI;

use approx::assert_relative_eq;
use equipart::sphere::{
    build_circle_mesh, build_icosphere_mesh, build_latlong_mesh, build_octasphere_mesh,
    build_transports, rayleigh_values, sphere_measure, Transport,
};
use equipart::symmetry::{group_closure, planar_rotation, reflection, MATCH_TOL};
use nalgebra::{DMatrix, SymmetricEigen};
use proptest::prelude::*;

fn coordinate_reflections() -> Vec<DMatrix<f64>> {
    vec![
        reflection(&[1.0, 0.0, 0.0]),
        reflection(&[0.0, 1.0, 0.0]),
        reflection(&[0.0, 0.0, 1.0]),
    ]
}

fn dense(a: &sprs::CsMat<f64>) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(a.rows(), a.cols());
    for (r, row) in a.outer_iterator().enumerate() {
        for (c, v) in row.iter() {
            m[(r, c)] += v;
        }
    }
    m
}

/// Eigenvalues of the pencil (K, diag(m)) through the symmetric scaling
/// `M^{-1/2} K M^{-1/2}`.
fn pencil_eigenvalues(k: &sprs::CsMat<f64>, m: &[f64]) -> Vec<f64> {
    let mut a = dense(k);
    for r in 0..m.len() {
        for c in 0..m.len() {
            a[(r, c)] /= (m[r] * m[c]).sqrt();
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ev
}

#[test]
fn four_point_circle_has_full_circumference() {
    let mesh = build_circle_mesh(4).unwrap();
    assert_relative_eq!(mesh.total_mass(), 2.0 * PI, max_relative = 1e-3);
}

#[test]
fn fine_circle_first_eigenvalue_is_one() {
    let mesh = build_circle_mesh(1024).unwrap();
    let ev = pencil_eigenvalues(mesh.stiffness(), mesh.mass());
    assert!(ev[0].abs() < 1e-10);
    assert!((ev[1] - 1.0).abs() < 1e-4, "{}", ev[1]);
}

#[test]
fn cosine_rayleigh_on_circle() {
    let mesh = build_circle_mesh(1024).unwrap();
    for d in 1..=3 {
        let f = mesh.sample(|x| (d as f64 * x[1].atan2(x[0])).cos());
        let q = rayleigh_values(&mesh, &f).unwrap();
        assert!((q - (d * d) as f64).abs() < 1e-3, "d={d} q={q}");
    }
}

#[test]
fn circle_rejects_tiny_meshes() {
    assert!(build_circle_mesh(2).is_err());
}

#[test]
fn icosahedron_combinatorics() {
    let mesh = build_icosphere_mesh(0).unwrap();
    assert_eq!(mesh.n_vertices(), 12);
    assert_eq!(mesh.cells().len(), 20);
    for level in 1..=3 {
        let m = build_icosphere_mesh(level).unwrap();
        assert_eq!(m.n_vertices(), 10 * 4usize.pow(level as u32) + 2);
    }
    assert!(build_icosphere_mesh(8).is_err());
}

#[test]
fn octahedron_combinatorics() {
    for level in 0..=3 {
        let m = build_octasphere_mesh(level).unwrap();
        assert_eq!(m.n_vertices(), 4 * 4usize.pow(level as u32) + 2);
        assert_eq!(m.cells().len(), 8 * 4usize.pow(level as u32));
    }
}

#[test]
fn surface_meshes_have_unit_vertices_and_full_area() {
    for mesh in [
        build_icosphere_mesh(4).unwrap(),
        build_octasphere_mesh(4).unwrap(),
        build_latlong_mesh(31, 60).unwrap(),
    ] {
        for v in 0..mesh.n_vertices() {
            let p = mesh.vertex(v);
            let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            assert!((n - 1.0).abs() < 1e-12);
        }
        assert_relative_eq!(mesh.total_mass(), sphere_measure(3), max_relative = 1e-3);
        let ones = vec![1.0; mesh.n_vertices()];
        let mut k1 = vec![0.0; mesh.n_vertices()];
        mesh.apply_stiffness(&ones, &mut k1);
        assert!(k1.iter().all(|v| v.abs() < 1e-10));
    }
}

#[test]
fn xyz_rayleigh_is_twelve() {
    let mesh = build_icosphere_mesh(4).unwrap();
    let f = mesh.sample(|x| x[0] * x[1] * x[2]);
    let q = rayleigh_values(&mesh, &f).unwrap();
    assert!((q - 12.0).abs() < 0.12, "{q}");
}

#[test]
fn constant_rayleigh_is_zero() {
    let mesh = build_octasphere_mesh(2).unwrap();
    let f = vec![1.0; mesh.n_vertices()];
    assert!(rayleigh_values(&mesh, &f).unwrap().abs() < 1e-12);
    assert!(rayleigh_values(&mesh, &vec![0.0; mesh.n_vertices()]).is_err());
}

#[test]
fn harmonic_quotients_converge_quadratically() {
    let harmonics: [(f64, fn(&[f64]) -> f64); 5] = [
        (2.0, |x| x[2]),
        (2.0, |x| x[0]),
        (6.0, |x| x[0] * x[1]),
        (6.0, |x| 3.0 * x[2] * x[2] - 1.0),
        (12.0, |x| x[0] * x[1] * x[2]),
    ];
    let meshes: Vec<_> = (2..=5).map(|l| build_icosphere_mesh(l).unwrap()).collect();
    for (exact, f) in harmonics {
        let errors: Vec<f64> = meshes
            .iter()
            .map(|m| (rayleigh_values(m, &m.sample(f)).unwrap() - exact).abs())
            .collect();
        let xs: Vec<f64> = (2..=5).map(|l| 4f64.powi(l).ln()).collect();
        let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        let (slope, _) = equipart::linalg::linear_fit(&xs, &ys).unwrap();
        assert!((-1.2..=-0.8).contains(&slope), "exact {exact}: errors {errors:?}, slope {slope}");
    }
}

#[test]
fn dihedral_transports_on_circle_are_permutations() {
    for d in 1..=3 {
        let gens = vec![
            reflection(&[(PI / (2.0 * d as f64)).sin(), -(PI / (2.0 * d as f64)).cos()]),
            planar_rotation(2, PI / d as f64),
        ];
        let group = group_closure(&gens, 64, MATCH_TOL).unwrap();
        let mesh = build_circle_mesh(24 * d).unwrap();
        let mesh = build_transports(&mesh, &group, 1e-9).unwrap();
        assert!(mesh.is_group_exact());
        assert!(mesh.transports().iter().all(Transport::is_permutation));
    }
}

#[test]
fn coordinate_reflections_are_exact_on_both_polyhedral_bases() {
    let group = group_closure(&coordinate_reflections(), 64, MATCH_TOL).unwrap();
    for mesh in [build_icosphere_mesh(2).unwrap(), build_octasphere_mesh(2).unwrap()] {
        let mesh = build_transports(&mesh, &group, 1e-9).unwrap();
        assert!(mesh.is_group_exact());
    }
}

#[test]
fn identity_transport_is_identity() {
    let group = group_closure(&coordinate_reflections(), 64, MATCH_TOL).unwrap();
    let mesh = build_transports(&build_octasphere_mesh(1).unwrap(), &group, 1e-9).unwrap();
    match mesh.transport(group.identity()).unwrap() {
        Transport::Permutation(p) => assert!(p.iter().enumerate().all(|(i, &j)| i == j)),
        Transport::Interpolation(_) => panic!("identity should match exactly"),
    }
    assert!(mesh.transport(99).is_err());
}

#[test]
fn non_invariant_mesh_interpolates_with_partition_of_unity() {
    // 2π/3 rotation about z does not preserve a ring of 8 longitudes
    let group = group_closure(&[planar_rotation(3, 2.0 * PI / 3.0)], 64, MATCH_TOL).unwrap();
    let mesh = build_transports(&build_latlong_mesh(5, 8).unwrap(), &group, 1e-9).unwrap();
    assert!(!mesh.is_group_exact());
    for t in mesh.transports() {
        let a = t.to_matrix();
        for row in a.outer_iterator() {
            let s: f64 = row.iter().map(|(_, v)| v).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }
    // linear functions are reproduced up to the chord-versus-arc defect
    let f = mesh.sample(|x| x[0] + 2.0 * x[1]);
    let mut moved = vec![0.0; f.len()];
    mesh.transport(1).unwrap().apply(&f, &mut moved);
    let g = group.element(1);
    for v in 0..mesh.n_vertices() {
        let q = g.apply(mesh.vertex(v));
        assert!((moved[v] - (q[0] + 2.0 * q[1])).abs() < 0.3);
    }
}

#[test]
fn transports_are_contravariant() {
    let mut gens = coordinate_reflections();
    gens.push(DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0]));
    let group = group_closure(&gens, 64, MATCH_TOL).unwrap();
    let mesh = build_transports(&build_octasphere_mesh(2).unwrap(), &group, 1e-9).unwrap();
    let f = mesh.sample(|x| x[0] + 0.3 * x[1] * x[1] - 0.7 * x[2] + x[0] * x[1]);
    let mut a = vec![0.0; f.len()];
    let mut b = vec![0.0; f.len()];
    let mut c = vec![0.0; f.len()];
    for g1 in 0..group.order() {
        for g2 in 0..group.order() {
            mesh.transport(group.product(g1, g2)).unwrap().apply(&f, &mut a);
            mesh.transport(g1).unwrap().apply(&f, &mut b);
            mesh.transport(g2).unwrap().apply(&b, &mut c);
            let diff = a.iter().zip(&c).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()));
            assert!(diff < 1e-8);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]
    #[test]
    fn stiffness_is_positive_semidefinite(seed in proptest::collection::vec(-1.0f64..1.0, 66)) {
        let mesh = build_octasphere_mesh(2).unwrap();
        let q = mesh.energy(&seed);
        let n2: f64 = seed.iter().map(|x| x * x).sum();
        prop_assert!(q >= -1e-10 * n2);
    }

    #[test]
    fn circle_stiffness_is_positive_semidefinite(seed in proptest::collection::vec(-1.0f64..1.0, 40)) {
        let mesh = build_circle_mesh(40).unwrap();
        prop_assert!(mesh.energy(&seed) >= -1e-10);
    }
}
