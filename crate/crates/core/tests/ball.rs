use equipart::ball::*;
use equipart::catalog::{self, Prepared};
use equipart::partition::gamma;
use equipart::sphere::{build_circle_mesh, build_octasphere_mesh, rayleigh, Field, Normalization, SphereMesh};
use equipart::Error;
use ndarray::s;
use proptest::prelude::*;
use std::sync::OnceLock;

/// Positive and negative parts of `f`, scaled so that `Σ∫φ_i² = 1`.
fn signed_parts(mesh: &SphereMesh, f: impl Fn(&[f64]) -> f64) -> Field {
    let plus = mesh.sample(|x| f(x).max(0.0));
    let minus = mesh.sample(|x| (-f(x)).max(0.0));
    let mut field = Field::from_components(mesh, &[plus, minus]).unwrap();
    field.normalization = Normalization::OverK;
    field.normalize(mesh).unwrap();
    field
}

fn xyz(level: usize) -> (Prepared, Field) {
    let prepared = catalog::entry("xyz_r3").unwrap().prepare_on(&build_octasphere_mesh(level).unwrap()).unwrap();
    let phi = signed_parts(&prepared.mesh, |x| x[0] * x[1] * x[2]);
    (prepared, phi)
}

/// Degree of homogeneity matching the discrete Rayleigh quotient of `phi`.
fn discrete_ell(mesh: &SphereMesh, phi: &Field) -> f64 {
    gamma(mesh.dimension(), rayleigh(mesh, phi, 0).unwrap()).unwrap()
}

struct XyzSolve {
    prepared: Prepared,
    phi: Field,
    solve: BallSolve,
    diag: RadialDiagnostics,
    r_beta: f64,
    rescaled: RadialDiagnostics,
}

fn xyz_solve() -> &'static XyzSolve {
    static CELL: OnceLock<XyzSolve> = OnceLock::new();
    CELL.get_or_init(|| {
        let (prepared, phi) = xyz(4);
        let grid = RadialGrid::clustered(96).unwrap();
        let solve = solve_ball(&prepared.triplet, &prepared.mesh, 400.0, &phi, &grid, &BallOptions::default()).unwrap();
        let diag = diagnostics(&prepared.mesh, &solve.field).unwrap();
        let r_beta = find_r_beta(&prepared.mesh, &solve.field).unwrap();
        let v = blow_up_rescale(&prepared.mesh, &solve.field, r_beta).unwrap();
        let rescaled = diagnostics(&prepared.mesh, &v).unwrap();
        XyzSolve { prepared, phi, solve, diag, r_beta, rescaled }
    })
}

// [TRIVIAL] degree one extension of half-circle sines is linear in r
#[test]
fn degree_one_extension_is_linear() {
    let mesh = build_circle_mesh(64).unwrap();
    let phi = signed_parts(&mesh, |x| x[1]);
    let grid = RadialGrid::uniform(10).unwrap();
    let ext = homogeneous_extension(&mesh, &phi, 1.0, &grid).unwrap();
    for (s, r) in grid.radii().iter().enumerate() {
        for v in 0..mesh.n_vertices() {
            assert_eq!(ext.values[[0, s, v]], r * phi.values[[0, v]]);
        }
    }
    assert!(matches!(homogeneous_extension(&mesh, &phi, 0.0, &grid), Err(Error::InvalidInput(_))));
}

// [DERIVED] Euler formula: ∫|∇(r^ℓφ)|² = (ℓ² + λ)/(2ℓ + N − 2) for Σ∫φ² = 1
#[test]
fn extension_energy_matches_euler_formula() {
    let (prepared, phi) = xyz(3);
    let mesh = &prepared.mesh;
    let lambda = rayleigh(mesh, &phi, 0).unwrap();
    let ell = discrete_ell(mesh, &phi);
    let grid = RadialGrid::uniform(200).unwrap();
    let ext = homogeneous_extension(mesh, &phi, ell, &grid).unwrap();
    let energy = ball_energy(mesh, &ext).unwrap();
    let closed = (ell * ell + lambda) / (2.0 * ell + 1.0);
    assert!((closed - ell).abs() < 1e-12);
    assert!((energy - ell).abs() < 1e-4 * ell, "{energy} vs {ell}");

    let circle = build_circle_mesh(512).unwrap();
    let phi = signed_parts(&circle, |x| x[0] * x[0] - x[1] * x[1]);
    let ell = discrete_ell(&circle, &phi);
    let ext = homogeneous_extension(&circle, &phi, ell, &grid).unwrap();
    let energy = ball_energy(&circle, &ext).unwrap();
    assert!((energy - ell).abs() < 1e-4 * ell, "{energy} vs {ell}");
    assert!((ell - 2.0).abs() < 1e-3);
}

// [TRIVIAL] homogeneity of H; [DERIVED] constant frequency and J ∝ r^{2ℓ}
#[test]
fn homogeneous_field_diagnostics() {
    let (prepared, phi) = xyz(3);
    let mesh = &prepared.mesh;
    let ell = discrete_ell(mesh, &phi);
    let grid = RadialGrid::uniform(200).unwrap();
    let d = diagnostics(mesh, &homogeneous_extension(mesh, &phi, ell, &grid).unwrap()).unwrap();
    for (s, r) in d.radii.iter().enumerate() {
        assert!((d.h[s] - r.powf(2.0 * ell) * d.h[200]).abs() < 1e-12);
    }
    for s in 20..=200 {
        assert!((d.nq[s] - ell).abs() < 2e-3 * ell, "{} {}", d.radii[s], d.nq[s]);
    }

    // on a geometric grid every interval is a scaled copy of the previous one
    let grid = RadialGrid::geometric(1e-3, 4.0, 300).unwrap();
    let d = diagnostics(mesh, &homogeneous_extension(mesh, &phi, ell, &grid).unwrap()).unwrap();
    let slopes: Vec<f64> = (150..299)
        .map(|s| (d.j[0][s + 1] / d.j[0][s]).ln() / (d.radii[s + 1] / d.radii[s]).ln())
        .collect();
    for s in &slopes {
        assert!((s - 2.0 * ell).abs() < 1e-9, "{s}");
    }
    let n_ref = d.nq[299];
    assert!(d.nq[150..].iter().all(|n| (n - n_ref).abs() < 1e-9));
    assert!((n_ref - ell).abs() < 1e-2);
}

// [DERIVED] the exactly homogeneous segregated field has C = 0
#[test]
fn acf_constant_vanishes_for_homogeneous_field() {
    let (prepared, phi) = xyz(3);
    let mesh = &prepared.mesh;
    let grid = RadialGrid::geometric(1e-3, 4.0, 300).unwrap();
    let ell = 3.0;
    let d = diagnostics(mesh, &homogeneous_extension(mesh, &phi, ell, &grid).unwrap()).unwrap();
    let report = acf_check(&d, ell, 1.0, 50.0).unwrap();
    assert!(report.c < 1e-6, "{}", report.c);
    assert!(report.passed);
}

// [TRIVIAL] negative controls for the ACF check
#[test]
fn acf_rejects_decreasing_products_and_short_ranges() {
    let (prepared, phi) = xyz(2);
    let mesh = &prepared.mesh;
    let grid = RadialGrid::geometric(0.01, 4.0, 120).unwrap();
    let mut d = diagnostics(mesh, &homogeneous_extension(mesh, &phi, 3.0, &grid).unwrap()).unwrap();
    for j in d.j.iter_mut() {
        j.reverse();
    }
    let report = acf_check(&d, 3.0, 1.0, 50.0).unwrap();
    assert!(!report.passed);
    let short = RadialGrid::geometric(0.01, 1.2, 120).unwrap();
    let d = diagnostics(mesh, &homogeneous_extension(mesh, &phi, 3.0, &short).unwrap()).unwrap();
    assert!(matches!(acf_check(&d, 3.0, 1.0, 50.0), Err(Error::InsufficientRange { required: 8, .. })));
}

// [TRIVIAL] segregated fields have no interaction, so the coupling drops out
#[test]
fn segregated_field_energy_is_pure_dirichlet() {
    let (prepared, phi) = xyz(2);
    let mesh = &prepared.mesh;
    let grid = RadialGrid::uniform(40).unwrap();
    let mut ext = homogeneous_extension(mesh, &phi, 3.0, &grid).unwrap();
    let free = ball_energy(mesh, &ext).unwrap();
    ext.coupling = 1e4;
    assert_eq!(ball_energy(mesh, &ext).unwrap(), free);
    let d = diagnostics(mesh, &ext).unwrap();
    assert!(d.interaction.iter().all(|&x| x == 0.0));
}

// [DERIVED] closed form: ℓ-homogeneous field with H(1)=1 has r_β = β^{−1/(2+2ℓ)}
#[test]
fn blow_up_radius_of_homogeneous_field() {
    let (prepared, phi) = xyz(2);
    let mesh = &prepared.mesh;
    let ell = 3.0;
    let grid = RadialGrid::uniform(400).unwrap();
    let mut ext = homogeneous_extension(mesh, &phi, ell, &grid).unwrap();
    for beta in [10.0, 400.0, 1e4] {
        ext.coupling = beta;
        let r = find_r_beta(mesh, &ext).unwrap();
        let expected = beta.powf(-1.0 / (2.0 + 2.0 * ell));
        assert!((r - expected).abs() < 1e-6, "{beta}: {r} vs {expected}");
        // rescaling keeps the field homogeneous with the same degree
        let v = blow_up_rescale(mesh, &ext, r).unwrap();
        for (s, rho) in v.radii().iter().enumerate().step_by(37) {
            for vtx in [0, 5, 17] {
                let exact = rho.powf(ell) * phi.values[[0, vtx]];
                assert!((v.values[[0, s, vtx]] - exact).abs() < 1e-5 * rho.powf(ell).max(1e-3));
            }
        }
        let d = diagnostics(mesh, &v).unwrap();
        let one = d.radii.iter().position(|&r| r == 1.0).unwrap();
        assert!((d.h[one] - 1.0).abs() < 1e-8);
    }
    ext.coupling = 0.5;
    assert!(matches!(find_r_beta(mesh, &ext), Err(Error::NotBracketed { .. })));
}

// [DERIVED] β = 0 with boundary c(1 + a·x) has the harmonic extension c(1 + r a·x)
#[test]
fn decoupled_solve_reproduces_harmonic_extension() {
    let prepared = catalog::entry("dihedral2d:1").unwrap().prepare_on(&build_circle_mesh(256).unwrap()).unwrap();
    let mesh = &prepared.mesh;
    let group = &prepared.triplet.group;
    let g = (0..group.order()).find(|&g| !group.image(g).unwrap().is_identity()).unwrap();
    let m = group.element(g).matrix.clone();
    let a = [0.6, 0.3];
    let first = move |x: &[f64]| 1.0 + a[0] * x[0] + a[1] * x[1];
    let second = move |x: &[f64]| first(&[m[(0, 0)] * x[0] + m[(0, 1)] * x[1], m[(1, 0)] * x[0] + m[(1, 1)] * x[1]]);
    let mut phi = Field::from_components(mesh, &[mesh.sample(first), mesh.sample(&second)]).unwrap();
    let scale = 1.0 / phi.masses(mesh).iter().sum::<f64>().sqrt();
    phi.values *= scale;
    let grid = RadialGrid::clustered(64).unwrap();
    let solve = solve_ball(&prepared.triplet, mesh, 0.0, &phi, &grid, &BallOptions::default()).unwrap();
    let mut err = 0.0_f64;
    for (s, r) in grid.radii().iter().enumerate() {
        for v in 0..mesh.n_vertices() {
            let x = mesh.vertex(v);
            let exact = scale * (1.0 + r * (a[0] * x[0] + a[1] * x[1]));
            err = err.max((solve.field.values[[0, s, v]] - exact).abs());
        }
    }
    assert!(err < 1e-3 * scale, "{err}");
}

// [PAPER] the components agree at the origin
#[test]
fn components_agree_at_origin() {
    let run = xyz_solve();
    let origin = run.solve.field.origin_values().unwrap();
    assert!(origin[0] > 0.0);
    assert!((origin[0] - origin[1]).abs() < 1e-6 * origin[0]);
    assert!(run.solve.max_energy_increase <= 1e-12);
}

// [PAPER] the minimizer's energy stays below the degree of the boundary trace
#[test]
fn penalized_energy_is_bounded_by_ell() {
    let run = xyz_solve();
    let mesh = &run.prepared.mesh;
    let grid = run.solve.field.grid.clone();
    let mut ext = homogeneous_extension(mesh, &run.phi, discrete_ell(mesh, &run.phi), &grid).unwrap();
    ext.coupling = 400.0;
    let competitor = ball_energy(mesh, &ext).unwrap();
    assert!(run.solve.energy <= competitor);
    assert!(run.solve.energy <= 3.0 * 1.01);
    let last = run.diag.e.len() - 1;
    assert!((run.diag.e[last] - run.solve.energy).abs() < 1e-12 * run.solve.energy);
    assert!((run.diag.h[last] - 1.0).abs() < 1e-12);
}

// [PAPER] frequency monotonicity, plus a scrambled-shell negative control
#[test]
fn almgren_frequency_is_monotone() {
    let run = xyz_solve();
    let report = almgren_monotonicity_check(&run.diag, 0.05, 1e-3);
    assert!(report.passed, "{report:?}");
    let mut scrambled = run.solve.field.clone();
    let a = scrambled.shell(60);
    let b = scrambled.shell(80);
    scrambled.set_shell(60, &b);
    scrambled.set_shell(80, &a);
    let d = diagnostics(&run.prepared.mesh, &scrambled).unwrap();
    assert!(!almgren_monotonicity_check(&d, 0.05, 1e-3).passed);
}

// [PAPER] dH/dr = (2/r)E + (2β/r^{N−1})∫Σ U_i²U_j² away from the origin
#[test]
fn boundary_mass_derivative_identity() {
    let run = xyz_solve();
    let report = dh_identity_check(&run.diag, 0.1, 0.05);
    assert!(report.passed, "{report:?}");
    assert!(report.min_h > 0.0);
}

// [PAPER] unit boundary mass after rescaling, frequency and doubling bounds
#[test]
fn rescaled_solution_bounds() {
    let run = xyz_solve();
    let d = &run.rescaled;
    let one = d.radii.iter().position(|&r| r == 1.0).unwrap();
    assert!((d.h[one] - 1.0).abs() < 1e-6);
    assert!(d.nq.iter().all(|&n| n <= 3.0 * 1.02));
    assert!((d.radii.last().unwrap() - 1.0 / run.r_beta).abs() < 1e-12);
    let doubling = doubling_check(d, 3.0, 0.02).unwrap();
    assert!(doubling.passed, "{doubling:?}");
    // N ≤ ℓ makes H/r^{2ℓ} nonincreasing
    assert!(doubling.max_increase <= 1e-6, "{doubling:?}");
    // the inserted unit shell only perturbs the radial quadrature
    let growth = growth_rate_estimate(d).unwrap();
    assert!((growth.value - run.solve.energy).abs() < 1e-3 * run.solve.energy);
}

// [PAPER] monotonicity of the ACF product up to a bounded drift
#[test]
fn rescaled_solution_satisfies_acf_bound() {
    let run = xyz_solve();
    let report = acf_check(&run.rescaled, 3.0, 1.0, 50.0).unwrap();
    assert!(report.c.is_finite());
    assert!(report.passed, "C = {}", report.c);
}

// [PAPER] the blow-up radius decreases as β grows
#[test]
fn blow_up_radius_decreases_with_beta() {
    let prepared = catalog::entry("dihedral2d:2").unwrap().prepare_on(&build_circle_mesh(256).unwrap()).unwrap();
    let mesh = &prepared.mesh;
    let mut phi = prepared.triplet.witness.clone();
    phi.normalization = Normalization::OverK;
    phi.normalize(mesh).unwrap();
    let grid = RadialGrid::clustered(48).unwrap();
    let mut radii = Vec::new();
    for beta in [100.0, 400.0, 1600.0] {
        let solve = solve_ball(&prepared.triplet, mesh, beta, &phi, &grid, &BallOptions::default()).unwrap();
        radii.push(find_r_beta(mesh, &solve.field).unwrap());
    }
    assert!(radii.windows(2).all(|w| w[1] < w[0]), "{radii:?}");
}

#[test]
fn solve_rejects_bad_inputs() {
    let (prepared, phi) = xyz(2);
    let mesh = &prepared.mesh;
    let t = &prepared.triplet;
    let grid = RadialGrid::clustered(40).unwrap();
    let opts = BallOptions::default();
    let mut loud = phi.clone();
    loud.values *= 2.0;
    assert!(matches!(solve_ball(t, mesh, 1.0, &loud, &grid, &opts), Err(Error::InvalidInput(_))));
    let coarse = RadialGrid::clustered(8).unwrap();
    assert!(matches!(solve_ball(t, mesh, 1.0, &phi, &coarse, &opts), Err(Error::InvalidInput(_))));
    let hollow = RadialGrid::geometric(0.1, 1.0, 40).unwrap();
    assert!(matches!(solve_ball(t, mesh, 1.0, &phi, &hollow, &opts), Err(Error::InvalidInput(_))));
    let mut empty = phi.clone();
    empty.values.slice_mut(s![1, ..]).fill(0.0);
    empty.values.slice_mut(s![0, ..]).mapv_inplace(|x| x * 2f64.sqrt());
    assert!(solve_ball(t, mesh, 1.0, &empty, &grid, &opts).is_err());
    let tight = BallOptions { max_iters: 1, ..opts };
    assert!(matches!(solve_ball(t, mesh, 100.0, &phi, &grid, &tight), Err(Error::NonConvergence { .. })));
}

#[test]
fn ball_field_document_round_trip() {
    let (prepared, phi) = xyz(2);
    let mesh = &prepared.mesh;
    let ext = homogeneous_extension(mesh, &phi, 3.0, &RadialGrid::uniform(5).unwrap()).unwrap();
    let doc = ext.document();
    let text = serde_json::to_string(&doc).unwrap();
    let back: BallFieldDocument = serde_json::from_str(&text).unwrap();
    let field = back.to_field(mesh).unwrap();
    assert_eq!(field.values, ext.values);
    let other = build_octasphere_mesh(3).unwrap();
    assert!(matches!(back.to_field(&other), Err(Error::IncompatibleMesh(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    // [TRIVIAL] N = E/H, H > 0, E(1) is the discrete energy, N is scale invariant without coupling
    #[test]
    fn diagnostics_are_consistent(seed in 0u64..500, scale in 0.1f64..10.0) {
        use rand::{RngExt, SeedableRng};
        let mesh = build_octasphere_mesh(1).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let grid = RadialGrid::clustered(12).unwrap();
        let values = ndarray::Array3::from_shape_fn((2, 13, mesh.n_vertices()), |_| 0.1 + rng.random::<f64>());
        let field = BallField::new(&mesh, grid, values, 0.0).unwrap();
        let d = diagnostics(&mesh, &field).unwrap();
        for s in 1..13 {
            prop_assert!(d.h[s] > 0.0);
            prop_assert!((d.nq[s] - d.e[s] / d.h[s]).abs() <= 1e-12 * d.nq[s].abs().max(1.0));
        }
        prop_assert!((d.e[12] - ball_energy(&mesh, &field).unwrap()).abs() < 1e-10);
        let mut scaled = field.clone();
        scaled.values *= scale;
        let ds = diagnostics(&mesh, &scaled).unwrap();
        for s in 1..13 {
            prop_assert!((ds.nq[s] - d.nq[s]).abs() < 1e-10 * d.nq[s].max(1.0));
        }
    }
}
