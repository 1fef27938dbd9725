use super::{energy_with, stiffness_rows, BallField, RadialGrid, Weights};
use crate::error::{Error, Result};
use crate::linalg::{diagonal, dot, solve_tridiagonal_general};
use crate::sphere::{Field, SphereMesh};
use crate::symmetry::{equivariance_defect, project_values, AdmissibleTriplet};
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{s, Array2, Array3, Axis};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallOptions {
    /// Stop when `sqrt(gᵀP⁻¹g / E)` falls below this.
    pub tol: f64,
    pub max_iters: usize,
    /// Shellwise equivariant projection period; CG restarts after each.
    pub project_every: usize,
    /// Meshes up to this many vertices use the dense angular eigenbasis to
    /// precondition; larger ones fall back to the diagonal.
    pub spectral_limit: usize,
}

impl Default for BallOptions {
    fn default() -> Self {
        BallOptions { tol: 1e-9, max_iters: 4000, project_every: 200, spectral_limit: 3000 }
    }
}

#[derive(Clone, Debug)]
pub struct BallSolve {
    pub field: BallField,
    pub energy: f64,
    pub iterations: usize,
    pub residual: f64,
    /// Largest energy increase seen over one iteration, relative to the energy.
    pub max_energy_increase: f64,
}

pub const MIN_BALL_SHELLS: usize = 32;

/// Minimizes the discrete `E_β` on the ball with the boundary shell fixed to
/// `boundary`, by preconditioned nonlinear conjugate gradients with an exact
/// line search (the energy is quartic along any line).
pub fn solve_ball(
    triplet: &AdmissibleTriplet,
    mesh: &SphereMesh,
    beta: f64,
    boundary: &Field,
    grid: &RadialGrid,
    opts: &BallOptions,
) -> Result<BallSolve> {
    validate(triplet, mesh, beta, boundary, grid)?;
    let (k, n) = boundary.values.dim();
    let shells = grid.len();
    let w = Weights::new(grid, mesh.dimension(), beta);
    let radii = grid.radii();

    let mut u = Array3::zeros((k, shells, n));
    for sh in 1..shells {
        let t = radii[sh] / grid.outer();
        u.slice_mut(s![.., sh, ..]).assign(&(&boundary.values * t));
    }

    let pre = if n <= opts.spectral_limit {
        Precond::spectral(mesh, &w, shells)
    } else {
        Precond::Jacobi
    };

    let mut iterations = 0;
    let mut residual;
    let mut max_increase = 0.0_f64;
    let mut restarts = 0;
    loop {
        let run = cg_run(mesh, &triplet.group, &w, &pre, &mut u, opts, &mut iterations)?;
        residual = run.1;
        max_increase = max_increase.max(run.2);
        let peak = u.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        let low = u.iter().copied().fold(f64::INFINITY, f64::min);
        if low >= -1e-9 * peak || restarts >= 5 {
            break;
        }
        u.mapv_inplace(|x| x.max(0.0));
        restarts += 1;
    }
    if residual > opts.tol {
        return Err(Error::NonConvergence { iterations, residual });
    }
    u.mapv_inplace(|x| x.max(0.0));
    for i in 0..k {
        let total: f64 = u.index_axis(Axis(0), i).iter().map(|x| x * x).sum();
        if total == 0.0 {
            return Err(Error::ComponentCollapse { component: i, mass: 0.0 });
        }
    }
    let energy = energy_with(mesh, &w, &u);
    let field = BallField::new(mesh, grid.clone(), u, beta)?;
    Ok(BallSolve { field, energy, iterations, residual, max_energy_increase: max_increase })
}

fn validate(
    triplet: &AdmissibleTriplet,
    mesh: &SphereMesh,
    beta: f64,
    boundary: &Field,
    grid: &RadialGrid,
) -> Result<()> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::InvalidInput(format!("beta must be a finite number ≥ 0, got {beta}")));
    }
    if !grid.has_origin() || grid.len() < MIN_BALL_SHELLS + 1 {
        return Err(Error::InvalidInput(format!(
            "ball grids start at 0 and have at least {MIN_BALL_SHELLS} shells"
        )));
    }
    if boundary.mesh_hash != mesh.content_hash() {
        return Err(Error::IncompatibleMesh("boundary trace lives on a different mesh".into()));
    }
    if boundary.k() != triplet.k {
        return Err(Error::DimensionMismatch(format!("boundary has {} components, triplet {}", boundary.k(), triplet.k)));
    }
    let total: f64 = boundary.masses(mesh).iter().sum();
    if (total - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!("boundary must satisfy Σ∫φ_i² = 1, got {total}")));
    }
    for (i, m) in boundary.masses(mesh).iter().enumerate() {
        if *m <= 0.0 {
            return Err(Error::ComponentCollapse { component: i, mass: *m });
        }
    }
    if boundary.values.iter().any(|&x| x < 0.0) {
        return Err(Error::InvalidInput("boundary trace must be nonnegative".into()));
    }
    let peak = boundary.values.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let defect = equivariance_defect(&triplet.group, mesh, boundary)?;
    if defect > 1e-8 * peak {
        return Err(Error::InvalidInput(format!("boundary trace is not equivariant (defect {defect:.3e})")));
    }
    Ok(())
}

/// Gradient with respect to the free values: the boundary shell is zero and
/// the origin shell holds `∂E/∂c_i / n` at every vertex, so that plain dot
/// products over the array pair a gradient with a direction correctly.
fn gradient(mesh: &SphereMesh, w: &Weights, u: &Array3<f64>) -> Array3<f64> {
    let (k, shells, n) = u.dim();
    let mass = mesh.mass();
    let mut g = Array3::zeros((k, shells, n));
    let mut ky = vec![0.0; n];
    for i in 0..k {
        for sh in 0..shells - 1 {
            // angular part: K applied to the shell's weighted neighbourhood
            let mut y = u.slice(s![i, sh, ..]).to_owned() * (2.0 * w.angular_diag(sh));
            y.scaled_add(2.0 * w.angular[sh][1], &u.slice(s![i, sh + 1, ..]));
            if sh > 0 {
                y.scaled_add(2.0 * w.angular[sh - 1][1], &u.slice(s![i, sh - 1, ..]));
            }
            mesh.apply_stiffness(y.as_slice().unwrap(), &mut ky);
            for v in 0..n {
                let x = u[[i, sh, v]];
                let mut val = ky[v] - 2.0 * w.radial[sh] * mass[v] * (u[[i, sh + 1, v]] - x);
                if sh > 0 {
                    val += 2.0 * w.radial[sh - 1] * mass[v] * (x - u[[i, sh - 1, v]]);
                }
                g[[i, sh, v]] = val;
            }
        }
    }
    for sh in 1..shells - 1 {
        if w.interaction[sh] == 0.0 {
            continue;
        }
        for v in 0..n {
            let total: f64 = (0..k).map(|i| u[[i, sh, v]].powi(2)).sum();
            for i in 0..k {
                let x = u[[i, sh, v]];
                g[[i, sh, v]] += 2.0 * w.interaction[sh] * mass[v] * x * (total - x * x);
            }
        }
    }
    for i in 0..k {
        let gc = g.slice(s![i, 0, ..]).sum();
        g.slice_mut(s![i, 0, ..]).fill(gc / n as f64);
    }
    g
}

/// Coefficients of `E(u + t d)` as a quartic in `t`.
fn line_polynomial(mesh: &SphereMesh, w: &Weights, u: &Array3<f64>, d: &Array3<f64>) -> [f64; 5] {
    let (k, shells, n) = u.dim();
    let mass = mesh.mass();
    let mut e = [0.0; 5];
    let row = |a: &Array3<f64>, i: usize, sh: usize| a.slice(s![i, sh, ..]).to_vec();
    for i in 0..k {
        let ku = stiffness_rows(mesh, u, i);
        let kd = stiffness_rows(mesh, d, i);
        for t in 0..shells - 1 {
            let (x0, x1, y0, y1) = (row(u, i, t), row(u, i, t + 1), row(d, i, t), row(d, i, t + 1));
            let (mut uu, mut ud, mut dd) = (0.0, 0.0, 0.0);
            for v in 0..n {
                let a = x1[v] - x0[v];
                let b = y1[v] - y0[v];
                uu += mass[v] * a * a;
                ud += mass[v] * a * b;
                dd += mass[v] * b * b;
            }
            e[0] += w.radial[t] * uu;
            e[1] += 2.0 * w.radial[t] * ud;
            e[2] += w.radial[t] * dd;
            let b = w.angular[t];
            e[0] += b[0] * dot(&x0, &ku[t]) + 2.0 * b[1] * dot(&x1, &ku[t]) + b[2] * dot(&x1, &ku[t + 1]);
            e[1] += 2.0
                * (b[0] * dot(&y0, &ku[t])
                    + b[1] * (dot(&y0, &ku[t + 1]) + dot(&y1, &ku[t]))
                    + b[2] * dot(&y1, &ku[t + 1]));
            e[2] += b[0] * dot(&y0, &kd[t]) + 2.0 * b[1] * dot(&y1, &kd[t]) + b[2] * dot(&y1, &kd[t + 1]);
        }
    }
    let mut p = vec![[0.0; 3]; k];
    for sh in 0..shells {
        if w.interaction[sh] == 0.0 {
            continue;
        }
        for v in 0..n {
            for (i, pi) in p.iter_mut().enumerate() {
                let (a, b) = (u[[i, sh, v]], d[[i, sh, v]]);
                *pi = [a * a, 2.0 * a * b, b * b];
            }
            let c = w.interaction[sh] * mass[v];
            for i in 0..k {
                for j in (i + 1)..k {
                    let (a, b) = (p[i], p[j]);
                    e[0] += c * a[0] * b[0];
                    e[1] += c * (a[0] * b[1] + a[1] * b[0]);
                    e[2] += c * (a[0] * b[2] + a[1] * b[1] + a[2] * b[0]);
                    e[3] += c * (a[1] * b[2] + a[2] * b[1]);
                    e[4] += c * a[2] * b[2];
                }
            }
        }
    }
    e
}

/// First positive critical point of the quartic, which is its first local
/// minimum on `t > 0` when the slope at 0 is negative.
fn quartic_step(e: &[f64; 5]) -> f64 {
    let slope = |t: f64| e[1] + t * (2.0 * e[2] + t * (3.0 * e[3] + t * 4.0 * e[4]));
    let mut hi = if e[2] > 0.0 { -e[1] / (2.0 * e[2]) } else { 1.0 };
    if !(hi > 0.0 && hi.is_finite()) {
        hi = 1.0;
    }
    let mut lo = 0.0;
    let mut grow = 0;
    while slope(hi) < 0.0 && grow < 200 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if slope(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

enum Precond {
    /// Exact inverse of the Dirichlet part in the angular eigenbasis.
    Spectral {
        /// Columns are the mass-orthonormal eigenvectors.
        phi: DMatrix<f64>,
        lambda: Vec<f64>,
        sqrt_area: f64,
        radial: Vec<f64>,
        angular: Vec<[f64; 3]>,
    },
    Jacobi,
}

impl Precond {
    fn spectral(mesh: &SphereMesh, w: &Weights, shells: usize) -> Self {
        let n = mesh.n_vertices();
        let mass = mesh.mass();
        let inv_sqrt: Vec<f64> = mass.iter().map(|m| 1.0 / m.sqrt()).collect();
        let mut s = DMatrix::<f64>::zeros(n, n);
        for (r, row) in mesh.stiffness().outer_iterator().enumerate() {
            for (c, v) in row.iter() {
                s[(r, c)] += v * inv_sqrt[r] * inv_sqrt[c];
            }
        }
        let eig = SymmetricEigen::new(s);
        let values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        let area: f64 = mass.iter().sum();
        let mut phi = DMatrix::zeros(n, n);
        let mut lambda = Vec::with_capacity(n);
        for (col, &o) in order.iter().enumerate() {
            if col == 0 {
                phi.column_mut(0).fill(1.0 / area.sqrt());
                lambda.push(0.0);
                continue;
            }
            for v in 0..n {
                phi[(v, col)] = eig.eigenvectors[(v, o)] * inv_sqrt[v];
            }
            lambda.push(values[o].max(0.0));
        }
        debug_assert_eq!(w.radial.len(), shells - 1);
        Precond::Spectral {
            phi,
            lambda,
            sqrt_area: area.sqrt(),
            radial: w.radial.clone(),
            angular: w.angular.clone(),
        }
    }

    fn apply(&self, mesh: &SphereMesh, w: &Weights, u: &Array3<f64>, g: &Array3<f64>) -> Array3<f64> {
        match self {
            Precond::Spectral { phi, lambda, sqrt_area, radial, angular } => {
                let (k, shells, n) = g.dim();
                let free = shells - 2;
                let mut z = Array3::zeros((k, shells, n));
                for i in 0..k {
                    let mut gm = DMatrix::zeros(n, free);
                    for sh in 1..shells - 1 {
                        for v in 0..n {
                            gm[(v, sh - 1)] = g[[i, sh, v]];
                        }
                    }
                    let gc = g.slice(s![i, 0, ..]).sum();
                    let b = phi.transpose() * gm;
                    let mut a = DMatrix::zeros(n, free);
                    let mut origin = 0.0;
                    for mode in 0..n {
                        // unknowns: radial nodes 1..shells−2, plus the origin for the constant mode
                        let start = if mode == 0 { 0 } else { 1 };
                        let len = shells - 1 - start;
                        let mut diag = vec![0.0; len];
                        let mut off = vec![0.0; len.saturating_sub(1)];
                        let mut rhs = vec![0.0; len];
                        for (idx, sh) in (start..shells - 1).enumerate() {
                            let left = if sh > 0 { radial[sh - 1] } else { 0.0 };
                            let ang = if sh > 0 { angular[sh - 1][2] } else { 0.0 } + angular[sh][0];
                            diag[idx] = 2.0 * (left + radial[sh]) + 2.0 * lambda[mode] * ang;
                            if idx + 1 < len {
                                off[idx] = -2.0 * radial[sh] + 2.0 * lambda[mode] * angular[sh][1];
                            }
                            rhs[idx] = if sh == 0 { gc / sqrt_area } else { b[(mode, sh - 1)] };
                        }
                        let x = solve_tridiagonal_general(&off, &diag, &off, &rhs);
                        for (idx, sh) in (start..shells - 1).enumerate() {
                            if sh == 0 {
                                origin = x[idx] / sqrt_area;
                            } else {
                                a[(mode, sh - 1)] = x[idx];
                            }
                        }
                    }
                    let zm = phi * a;
                    for sh in 1..shells - 1 {
                        for v in 0..n {
                            z[[i, sh, v]] = zm[(v, sh - 1)];
                        }
                    }
                    z.slice_mut(s![i, 0, ..]).fill(origin);
                }
                z
            }
            Precond::Jacobi => {
                let (k, shells, n) = g.dim();
                let mass = mesh.mass();
                let kd = diagonal(mesh.stiffness());
                let area: f64 = mass.iter().sum();
                let mut z = Array3::zeros((k, shells, n));
                for sh in 1..shells - 1 {
                    for v in 0..n {
                        let total: f64 = (0..k).map(|i| u[[i, sh, v]].powi(2)).sum();
                        for i in 0..k {
                            let x = u[[i, sh, v]];
                            let d = 2.0 * mass[v] * (w.radial[sh - 1] + w.radial[sh])
                                + 2.0 * w.angular_diag(sh) * kd[v]
                                + 2.0 * w.interaction[sh] * mass[v] * (total - x * x);
                            z[[i, sh, v]] = g[[i, sh, v]] / d;
                        }
                    }
                }
                for i in 0..k {
                    let gc = g.slice(s![i, 0, ..]).sum();
                    z.slice_mut(s![i, 0, ..]).fill(gc / (2.0 * w.radial[0] * area));
                }
                z
            }
        }
    }
}

fn project_shells(group: &crate::symmetry::SymmetryGroup, mesh: &SphereMesh, u: &mut Array3<f64>) -> Result<()> {
    let shells = u.dim().1;
    for sh in 0..shells - 1 {
        let shell: Array2<f64> = u.slice(s![.., sh, ..]).to_owned();
        let p = project_values(group, mesh, &shell)?;
        u.slice_mut(s![.., sh, ..]).assign(&p);
    }
    Ok(())
}

/// One conjugate-gradient run; returns (energy, residual, max relative increase).
fn cg_run(
    mesh: &SphereMesh,
    group: &crate::symmetry::SymmetryGroup,
    w: &Weights,
    pre: &Precond,
    u: &mut Array3<f64>,
    opts: &BallOptions,
    iterations: &mut usize,
) -> Result<(f64, f64, f64)> {
    project_shells(group, mesh, u)?;
    let mut energy = energy_with(mesh, w, u);
    let g = gradient(mesh, w, u);
    let mut z = pre.apply(mesh, w, u, &g);
    let mut gz = (&g * &z).sum();
    let mut d = z.mapv(|x| -x);
    let mut residual = (gz.max(0.0) / energy.max(f64::MIN_POSITIVE)).sqrt();
    let mut max_increase = 0.0_f64;
    let mut since_projection = 0;
    while residual > opts.tol && *iterations < opts.max_iters {
        let poly = line_polynomial(mesh, w, u, &d);
        if poly[1] >= 0.0 {
            d = z.mapv(|x| -x);
            continue;
        }
        let t = quartic_step(&poly);
        u.scaled_add(t, &d);
        *iterations += 1;
        since_projection += 1;
        let restart = since_projection >= opts.project_every;
        if restart {
            project_shells(group, mesh, u)?;
            since_projection = 0;
        }
        let new_energy = energy_with(mesh, w, u);
        max_increase = max_increase.max((new_energy - energy) / energy.abs().max(f64::MIN_POSITIVE));
        energy = new_energy;
        let g_new = gradient(mesh, w, u);
        let z_new = pre.apply(mesh, w, u, &g_new);
        let gz_new = (&g_new * &z_new).sum();
        let pr = (gz_new - (&g_new * &z).sum()) / gz;
        let beta = if restart { 0.0 } else { pr.max(0.0) };
        d = &d * beta - &z_new;
        z = z_new;
        gz = gz_new;
        residual = (gz.max(0.0) / energy.max(f64::MIN_POSITIVE)).sqrt();
    }
    Ok((energy, residual, max_increase))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sphere::build_octasphere_mesh;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup() -> (SphereMesh, Weights, Array3<f64>, Array3<f64>) {
        let mesh = build_octasphere_mesh(1).unwrap();
        let grid = RadialGrid::clustered(6).unwrap();
        let w = Weights::new(&grid, 3, 7.0);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = mesh.n_vertices();
        let field = |rng: &mut ChaCha8Rng| {
            let mut u = Array3::from_shape_fn((3, 7, n), |_| rng.random::<f64>() - 0.2);
            for i in 0..3 {
                let c = u[[i, 0, 0]];
                u.slice_mut(s![i, 0, ..]).fill(c);
            }
            u
        };
        let u = field(&mut rng);
        let mut d = field(&mut rng);
        d.slice_mut(s![.., 6, ..]).fill(0.0);
        (mesh, w, u, d)
    }

    #[test]
    fn gradient_matches_directional_difference() {
        let (mesh, w, u, d) = setup();
        let g = gradient(&mesh, &w, &u);
        let analytic = (&g * &d).sum();
        let h = 1e-6;
        let plus = energy_with(&mesh, &w, &(&u + &(&d * h)));
        let minus = energy_with(&mesh, &w, &(&u - &(&d * h)));
        let fd = (plus - minus) / (2.0 * h);
        assert!((analytic - fd).abs() < 1e-6 * fd.abs().max(1.0), "{analytic} vs {fd}");
    }

    #[test]
    fn line_polynomial_reproduces_energy() {
        let (mesh, w, u, d) = setup();
        let e = line_polynomial(&mesh, &w, &u, &d);
        for t in [0.0, 0.3, -1.1, 2.5] {
            let direct = energy_with(&mesh, &w, &(&u + &(&d * t)));
            let poly = e[0] + t * (e[1] + t * (e[2] + t * (e[3] + t * e[4])));
            assert!((direct - poly).abs() < 1e-10 * direct.abs(), "{t}: {direct} vs {poly}");
        }
    }

    #[test]
    fn quartic_step_finds_first_minimum() {
        // (t−1)²(t−3)² + t/10 has its first local minimum near t ≈ 0.99
        let poly = |t: f64| (t - 1.0).powi(2) * (t - 3.0).powi(2) + 0.1 * t;
        let e = [9.0, -24.0 + 0.1, 22.0, -8.0, 1.0];
        let t = quartic_step(&e);
        assert!(t > 0.9 && t < 1.1);
        assert!(poly(t) <= poly(t - 1e-4) && poly(t) <= poly(t + 1e-4));
    }

    #[test]
    fn spectral_preconditioner_inverts_dirichlet_part() {
        let (mesh, _, u, d) = setup();
        let grid = RadialGrid::clustered(6).unwrap();
        // without interaction the energy is quadratic and the gradient of
        // the direction is its image under the Hessian
        let w = Weights::new(&grid, 3, 0.0);
        let pre = Precond::spectral(&mesh, &w, 7);
        let mut z0 = Array3::zeros(d.raw_dim());
        let hd = gradient(&mesh, &w, &d) - gradient(&mesh, &w, &z0);
        let back = pre.apply(&mesh, &w, &u, &hd);
        z0.assign(&d);
        z0.slice_mut(s![.., 6, ..]).fill(0.0);
        let err = (&back - &z0).iter().fold(0.0_f64, |m, x| m.max(x.abs()));
        assert!(err < 1e-9, "{err}");
    }
}
