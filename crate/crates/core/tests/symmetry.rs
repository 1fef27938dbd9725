use equipart::catalog;
use equipart::sphere::{build_octasphere_mesh, build_transports, Field, SphereMesh};
use equipart::symmetry::{
    admissibility_check, attach_homomorphism, equivariance_defect, equivariant_project,
    equivariant_transport, group_closure, reflection, AdmissibilityTolerances, AdmissibleTriplet,
    Permutation, SymmetryGroup, MATCH_TOL,
};
use nalgebra::DMatrix;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn xyz_group() -> SymmetryGroup {
    let gens = vec![
        reflection(&[1.0, 0.0, 0.0]),
        reflection(&[0.0, 1.0, 0.0]),
        reflection(&[0.0, 0.0, 1.0]),
    ];
    let g = group_closure(&gens, 64, MATCH_TOL).unwrap();
    let swap = Permutation::transposition(2, 0, 1);
    attach_homomorphism(&g, 2, &[swap.clone(), swap.clone(), swap]).unwrap()
}

fn xyz_setup() -> (SymmetryGroup, SphereMesh) {
    let group = xyz_group();
    let mesh = build_transports(&build_octasphere_mesh(3).unwrap(), &group, 1e-9).unwrap();
    (group, mesh)
}

fn random_field(mesh: &SphereMesh, k: usize, seed: u64) -> Field {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = Array2::from_shape_fn((k, mesh.n_vertices()), |_| rng.random::<f64>() - 0.3);
    Field::new(mesh, values).unwrap()
}

fn l2(mesh: &SphereMesh, a: &Field, b: &Field) -> f64 {
    (0..a.k())
        .map(|i| {
            let d: Vec<f64> = a.component(i).iter().zip(b.component(i)).map(|(x, y)| x - y).collect();
            mesh.mass_norm2(&d)
        })
        .sum::<f64>()
        .sqrt()
}

#[test]
fn projector_is_idempotent_on_random_field() {
    let (group, mesh) = xyz_setup();
    let f = random_field(&mesh, 2, 7);
    let p1 = equivariant_project(&group, &mesh, &f).unwrap();
    let p2 = equivariant_project(&group, &mesh, &p1).unwrap();
    assert!(l2(&mesh, &p1, &p2) < 1e-10);
    assert!(equivariance_defect(&group, &mesh, &p1).unwrap() < 1e-12);
}

#[test]
fn projector_fixes_zero_and_equivariant_fields() {
    let (group, mesh) = xyz_setup();
    let zero = Field::zeros(&mesh, 2);
    let p = equivariant_project(&group, &mesh, &zero).unwrap();
    assert!(p.values.iter().all(|&v| v == 0.0));
    let xyz = catalog::entry("xyz_r3").unwrap().witness(&mesh).unwrap();
    let p = equivariant_project(&group, &mesh, &xyz).unwrap();
    assert!(l2(&mesh, &p, &xyz) < 1e-12);
    for g in 0..group.order() {
        let moved = equivariant_transport(&group, g, &mesh, &xyz).unwrap();
        assert!(l2(&mesh, &moved, &xyz) < 1e-12);
    }
}

#[test]
fn identity_transport_leaves_field_unchanged() {
    let (group, mesh) = xyz_setup();
    let f = random_field(&mesh, 2, 3);
    let moved = equivariant_transport(&group, group.identity(), &mesh, &f).unwrap();
    assert_eq!(moved.values, f.values);
}

#[test]
fn reflection_moves_north_bump_south_into_other_component() {
    let (group, mesh) = xyz_setup();
    let bump = mesh.sample(|x| (x[2] - 0.8).max(0.0));
    let f = Field::from_components(&mesh, &[bump, vec![0.0; mesh.n_vertices()]]).unwrap();
    let g = group.generator_ids()[2];
    let moved = equivariant_transport(&group, g, &mesh, &f).unwrap();
    let expected = mesh.sample(|x| (-x[2] - 0.8).max(0.0));
    assert!(moved.component(0).iter().all(|&v| v == 0.0));
    for (a, b) in moved.component(1).iter().zip(&expected) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn action_is_a_homomorphism_for_nonabelian_images() {
    // the tetrahedral group maps onto S4, so the order of composition matters
    let entry = catalog::entry("tetra_k4").unwrap();
    let mesh = build_octasphere_mesh(2).unwrap();
    let prepared = entry.prepare_on(&mesh).unwrap();
    let group = &prepared.triplet.group;
    let mesh = &prepared.mesh;
    let f = random_field(mesh, 4, 11);
    for a in 0..group.order() {
        for b in [1, 5, 17] {
            let ab = equivariant_transport(group, group.product(a, b), mesh, &f).unwrap();
            let b_then_a = equivariant_transport(
                group,
                a,
                mesh,
                &equivariant_transport(group, b, mesh, &f).unwrap(),
            )
            .unwrap();
            assert!(l2(mesh, &ab, &b_then_a) < 1e-12);
        }
    }
}

#[test]
fn admissibility_rejects_overlap_and_trivial_hom() {
    let (group, mesh) = xyz_setup();
    let ones = Field::from_components(&mesh, &[vec![1.0; mesh.n_vertices()], vec![1.0; mesh.n_vertices()]]).unwrap();
    let t = AdmissibleTriplet { k: 2, group: group.clone(), witness: ones.clone(), transfer: vec![0, 1] };
    let report = admissibility_check(&t, &mesh, AdmissibilityTolerances::for_witness(&ones)).unwrap();
    assert!(!report.segregation);
    assert!(!report.passed);

    let id = Permutation::identity(2);
    let gens: Vec<DMatrix<f64>> = group.generators().to_vec();
    let trivial = attach_homomorphism(&group_closure(&gens, 64, MATCH_TOL).unwrap(), 2, &[id.clone(), id.clone(), id]).unwrap();
    let mesh = build_transports(&mesh, &trivial, 1e-9).unwrap();
    let xyz = catalog::entry("xyz_r3").unwrap().witness(&mesh).unwrap();
    let t = AdmissibleTriplet { k: 2, group: trivial, witness: xyz.clone(), transfer: vec![0, 1] };
    let report = admissibility_check(&t, &mesh, AdmissibilityTolerances::for_witness(&xyz)).unwrap();
    assert!(!report.hom_nontrivial);
    assert!(!report.passed);
}

#[test]
fn xyz_witness_is_admissible_with_a_reflection_transfer() {
    let entry = catalog::entry("xyz_r3").unwrap();
    let prepared = entry.prepare(Some(equipart::sphere::MeshSpec::octahedron(3))).unwrap();
    let report = catalog::CatalogEntry::check(&prepared).unwrap();
    assert!(report.passed, "{report:?}");
    let g2 = report.transfers[1].unwrap();
    let m = &prepared.triplet.group.element(g2).matrix;
    assert!((m.determinant() + 1.0).abs() < 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn projection_lands_in_kernel_of_every_action(seed in 0u64..1000) {
        let (group, mesh) = xyz_setup();
        let f = random_field(&mesh, 2, seed);
        let p = equivariant_project(&group, &mesh, &f).unwrap();
        let norm = l2(&mesh, &p, &Field::zeros(&mesh, 2)).max(1e-300);
        for g in 0..group.order() {
            let moved = equivariant_transport(&group, g, &mesh, &p).unwrap();
            prop_assert!(l2(&mesh, &moved, &p) <= 1e-8 * norm);
        }
        let pp = equivariant_project(&group, &mesh, &p).unwrap();
        prop_assert!(l2(&mesh, &pp, &p) <= 1e-8 * norm);
    }

    #[test]
    fn closure_tables_are_groups(choice in 0usize..10) {
        let entry = catalog::entry(catalog::DEFAULT_IDS[choice]).unwrap();
        let group = entry.group().unwrap();
        prop_assert!(group.check_table());
        prop_assert!(group.order() >= entry.k);
        let hom = group.hom().unwrap();
        for a in 0..group.order() {
            for b in 0..group.order() {
                prop_assert_eq!(&hom.images[group.product(a, b)], &hom.images[a].compose(&hom.images[b]));
            }
        }
    }
}
