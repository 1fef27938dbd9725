//! The penalized functional `I_β`, its minimization over equivariant
//! normalized fields, the segregation map and β-continuation.

use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg;
use crate::sphere::{Field, MeshBase, SphereMesh};
use crate::symmetry::{project_values, AdmissibleTriplet, SymmetryGroup};
use crate::{Error, Result};

/// Characteristic exponent `γ(t) = sqrt(((N−2)/2)² + t) − (N−2)/2`.
pub fn gamma(n: usize, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::NegativeInput { value: t });
    }
    Ok(gamma_unchecked(n, t))
}

fn gamma_unchecked(n: usize, t: f64) -> f64 {
    let c = (n as f64 - 2.0) / 2.0;
    if t == 0.0 {
        return 0.0;
    }
    // written to avoid cancellation for small t
    t / ((c * c + t).sqrt() + c)
}

pub fn gamma_prime(n: usize, t: f64) -> f64 {
    let c = (n as f64 - 2.0) / 2.0;
    0.5 / (c * c + t).sqrt()
}

/// Per-component ingredients of `I_β`.
struct Parts {
    /// `u_iᵀ K u_i`.
    dirichlet: Vec<f64>,
    /// `∫ u_i² Σ_{j≠i} u_j²` with lumped quadrature.
    overlap: Vec<f64>,
    /// `u_iᵀ M u_i`.
    mass: Vec<f64>,
}

impl Parts {
    fn new(mesh: &SphereMesh, u: &Array2<f64>) -> Self {
        let k = u.nrows();
        let m = mesh.mass();
        let total_sq: Vec<f64> = (0..u.ncols())
            .map(|v| (0..k).map(|i| u[[i, v]] * u[[i, v]]).sum())
            .collect();
        let mut dirichlet = Vec::with_capacity(k);
        let mut overlap = Vec::with_capacity(k);
        let mut mass = Vec::with_capacity(k);
        for i in 0..k {
            let row = u.row(i);
            let row = row.as_slice().expect("standard layout");
            dirichlet.push(mesh.energy(row));
            mass.push(mesh.mass_norm2(row));
            overlap.push(
                row.iter()
                    .enumerate()
                    .map(|(v, x)| m[v] * x * x * (total_sq[v] - x * x))
                    .sum(),
            );
        }
        Parts {
            dirichlet,
            overlap,
            mass,
        }
    }

    fn quotients(&self, beta: f64) -> Result<Vec<f64>> {
        (0..self.mass.len())
            .map(|i| {
                if self.mass[i] < 1e-30 {
                    Err(Error::ZeroComponent { component: i })
                } else {
                    Ok(((self.dirichlet[i] + 0.5 * beta * self.overlap[i]) / self.mass[i]).max(0.0))
                }
            })
            .collect()
    }
}

fn functional(n: usize, parts: &Parts, beta: f64) -> Result<f64> {
    let r = parts.quotients(beta)?;
    Ok(r.iter().map(|&t| gamma_unchecked(n, t)).sum::<f64>() / r.len() as f64)
}

/// `I_β(u) = (1/k) Σ γ((u_iᵀKu_i + ½βQ_i)/u_iᵀMu_i)`.
pub fn evaluate_i_beta(mesh: &SphereMesh, field: &Field, beta: f64) -> Result<f64> {
    functional(mesh.dimension(), &Parts::new(mesh, &field.values), beta)
}

/// `I_∞`: infinite when two components overlap by more than `overlap_tol`
/// at some vertex, otherwise the mean of `γ` of the Rayleigh quotients.
pub fn evaluate_i_infty(mesh: &SphereMesh, field: &Field, overlap_tol: f64) -> Result<f64> {
    if max_overlap(&field.values) > overlap_tol {
        return Ok(f64::INFINITY);
    }
    functional(mesh.dimension(), &Parts::new(mesh, &field.values), 0.0)
}

fn max_overlap(u: &Array2<f64>) -> f64 {
    let k = u.nrows();
    let mut worst: f64 = 0.0;
    for v in 0..u.ncols() {
        for i in 0..k {
            for j in (i + 1)..k {
                worst = worst.max(u[[i, v]] * u[[j, v]]);
            }
        }
    }
    worst
}

/// Gradient of `I_β` with respect to the nodal values.
pub fn gradient(mesh: &SphereMesh, u: &Array2<f64>, beta: f64) -> Result<Array2<f64>> {
    let (k, n) = u.dim();
    let dim = mesh.dimension();
    let parts = Parts::new(mesh, u);
    let r = parts.quotients(beta)?;
    let weights: Vec<f64> = r.iter().map(|&t| gamma_prime(dim, t)).collect();
    let m = mesh.mass();
    let total_sq: Vec<f64> = (0..n)
        .map(|v| (0..k).map(|i| u[[i, v]] * u[[i, v]]).sum())
        .collect();
    // Σ_j γ'(R_j) u_j² / D_j at each vertex
    let cross: Vec<f64> = (0..n)
        .map(|v| (0..k).map(|j| weights[j] * u[[j, v]] * u[[j, v]] / parts.mass[j]).sum())
        .collect();
    let mut g = Array2::zeros((k, n));
    let mut ku = vec![0.0; n];
    for i in 0..k {
        let row = u.row(i);
        let row = row.as_slice().unwrap();
        mesh.apply_stiffness(row, &mut ku);
        let own = weights[i] / parts.mass[i];
        for v in 0..n {
            let x = row[v];
            let others = total_sq[v] - x * x;
            let direct = own * (2.0 * ku[v] + beta * m[v] * x * others - 2.0 * r[i] * m[v] * x);
            let coupled = beta * m[v] * x * (cross[v] - own * x * x);
            g[[i, v]] = (direct + coupled) / k as f64;
        }
    }
    Ok(g)
}

/// `û_i = (u_i − Σ_{j≠i} u_j)⁺` at every vertex.
pub fn segregate(field: &Field) -> Field {
    let u = &field.values;
    let (k, n) = u.dim();
    let mut out = Array2::zeros((k, n));
    for v in 0..n {
        let total: f64 = (0..k).map(|j| u[[j, v]]).sum();
        for i in 0..k {
            out[[i, v]] = (2.0 * u[[i, v]] - total).max(0.0);
        }
    }
    field.with_values(out)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PartitionOptions {
    /// Relative decrease below which an accepted step counts as stalled.
    pub tol: f64,
    pub max_iters: usize,
    /// Consecutive stalled steps required to stop.
    pub patience: usize,
    /// Relative amplitude of the uniform noise added to the witness.
    pub noise: f64,
    /// Independent initializations tried by a sweep; the best is kept.
    pub seeds: Vec<u64>,
}

impl Default for PartitionOptions {
    fn default() -> Self {
        PartitionOptions {
            tol: 1e-9,
            max_iters: 20_000,
            patience: 3,
            noise: 0.01,
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug)]
pub struct PartitionResult {
    pub field: Field,
    pub beta: f64,
    pub ell_beta: f64,
    pub lambda_beta: f64,
    /// `Σ_{i≠j} β ∫ u_i² u_j²`.
    pub interaction: f64,
    pub iterations: usize,
    /// Relative decrease of the last accepted step.
    pub residual: f64,
    pub seed: Option<u64>,
}

/// Clamps negatives, projects onto equivariant fields and renormalizes.
fn retract(
    group: &SymmetryGroup,
    mesh: &SphereMesh,
    u: &Array2<f64>,
    target: f64,
) -> Result<std::result::Result<Array2<f64>, (usize, f64)>> {
    let clamped = u.mapv(|x| x.max(0.0));
    let mut p = project_values(group, mesh, &clamped)?;
    for i in 0..p.nrows() {
        let mut row = p.row_mut(i);
        let mass = mesh.mass_norm2(row.as_slice().unwrap());
        if mass < 1e-12 {
            return Ok(Err((i, mass)));
        }
        let s = (target / mass).sqrt();
        row.mapv_inplace(|x| x * s);
    }
    Ok(Ok(p))
}

/// Witness plus uniform noise of relative size `noise`, made feasible.
pub fn initial_field(
    triplet: &AdmissibleTriplet,
    mesh: &SphereMesh,
    seed: u64,
    noise: f64,
) -> Result<Field> {
    let w = &triplet.witness;
    if w.n() != mesh.n_vertices() {
        return Err(Error::IncompatibleMesh(
            "witness does not live on the solver mesh".into(),
        ));
    }
    let scale = w.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = w.values.mapv(|x| x + noise * scale * rng.random::<f64>());
    match retract(&triplet.group, mesh, &noisy, w.target_mass())? {
        Ok(values) => Ok(w.with_values(values)),
        Err((component, mass)) => Err(Error::ComponentCollapse { component, mass }),
    }
}

/// Preconditioned descent direction for one component.
fn precondition(mesh: &SphereMesh, shift: &[f64], g: &[f64]) -> Vec<f64> {
    if mesh.spec().base == MeshBase::Circle && mesh.n_vertices() >= 3 {
        let k = mesh.stiffness();
        let off = k.get(0, 1).copied().unwrap_or(0.0);
        let diag: Vec<f64> = linalg::diagonal(k)
            .iter()
            .zip(shift)
            .map(|(d, s)| d + s)
            .collect();
        linalg::solve_periodic_tridiagonal(&diag, off, g)
    } else {
        let mut x = vec![0.0; g.len()];
        linalg::pcg_shifted(mesh.stiffness(), shift, g, &mut x, 1e-6, 300);
        x
    }
}

fn direction(mesh: &SphereMesh, u: &Array2<f64>, g: &Array2<f64>, beta: f64) -> Array2<f64> {
    let (k, n) = u.dim();
    let m = mesh.mass();
    let total_sq: Vec<f64> = (0..n)
        .map(|v| (0..k).map(|i| u[[i, v]] * u[[i, v]]).sum())
        .collect();
    let mut d = Array2::zeros((k, n));
    for i in 0..k {
        let shift: Vec<f64> = (0..n)
            .map(|v| m[v] * (1.0 + beta * (total_sq[v] - u[[i, v]] * u[[i, v]])))
            .collect();
        let di = precondition(mesh, &shift, g.row(i).as_slice().unwrap());
        // remove the component along u_i, which only changes the mass
        let ui = u.row(i);
        let ui = ui.as_slice().unwrap();
        let mass = mesh.mass_norm2(ui);
        let along: f64 = (0..n).map(|v| m[v] * ui[v] * di[v]).sum::<f64>() / mass;
        for v in 0..n {
            d[[i, v]] = di[v] - along * ui[v];
        }
    }
    d
}

fn lambda_and_interaction(mesh: &SphereMesh, u: &Array2<f64>, beta: f64) -> (f64, f64) {
    let parts = Parts::new(mesh, u);
    let lambda = (parts.dirichlet[0] + beta * parts.overlap[0]) / parts.mass[0];
    (lambda, beta * parts.overlap.iter().sum::<f64>())
}

/// Minimizes `I_β` from `init` over nonnegative, equivariant fields with
/// normalized components.
pub fn minimize_i_beta(
    triplet: &AdmissibleTriplet,
    mesh: &SphereMesh,
    beta: f64,
    init: &Field,
    opts: &PartitionOptions,
) -> Result<PartitionResult> {
    if beta < 0.0 {
        return Err(Error::NegativeInput { value: beta });
    }
    let group = &triplet.group;
    let dim = mesh.dimension();
    let target = init.target_mass();
    let mut u = match retract(group, mesh, &init.values, target)? {
        Ok(u) => u,
        Err((component, mass)) => return Err(Error::ComponentCollapse { component, mass }),
    };
    let mut value = functional(dim, &Parts::new(mesh, &u), beta)?;
    let mut step: f64 = 1.0;
    let mut stalled = 0;
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iters {
        iterations += 1;
        let g = gradient(mesh, &u, beta)?;
        let d = direction(mesh, &u, &g, beta);
        let mut accepted = None;
        while step >= 1e-14 {
            let trial = &u - &(&d * step);
            if let Ok(candidate) = retract(group, mesh, &trial, target)? {
                let v = functional(dim, &Parts::new(mesh, &candidate), beta)?;
                if v < value {
                    accepted = Some((candidate, v));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((next, v)) = accepted else {
            // no descent at any step size: a discrete critical point
            residual = 0.0;
            break;
        };
        residual = (value - v) / v.abs().max(f64::MIN_POSITIVE);
        u = next;
        value = v;
        step = (step * 2.0).min(1e3);
        if residual < opts.tol {
            stalled += 1;
            if stalled >= opts.patience {
                break;
            }
        } else {
            stalled = 0;
        }
    }
    if iterations >= opts.max_iters && residual > 100.0 * opts.tol {
        return Err(Error::NonConvergence {
            iterations,
            residual,
        });
    }
    let (lambda_beta, interaction) = lambda_and_interaction(mesh, &u, beta);
    Ok(PartitionResult {
        field: init.with_values(u),
        beta,
        ell_beta: value,
        lambda_beta,
        interaction,
        iterations,
        residual,
        seed: None,
    })
}

#[derive(Clone, Debug)]
pub struct EllEstimate {
    pub betas: Vec<f64>,
    pub ell_betas: Vec<f64>,
    /// `I_∞(segregate(u_β))` per β.
    pub ell_uppers: Vec<f64>,
    /// Best segregated competitor over the sweep.
    pub ell_upper: f64,
    pub ell_extrapolated: f64,
    /// Slope of `log(ell_upper − ell_β)` against `log β` over the upper half.
    pub fit_slope: Option<f64>,
    pub results: Vec<PartitionResult>,
    pub seed: u64,
}

impl EllEstimate {
    pub fn lambda_betas(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.lambda_beta).collect()
    }

    pub fn interactions(&self) -> Vec<f64> {
        self.results.iter().map(|r| r.interaction).collect()
    }
}

/// Upper bound from the segregated competitor of `u`.
/// A competitor with an empty component is not admissible and counts as
/// infinite.
pub fn segregated_upper(mesh: &SphereMesh, field: &Field) -> Result<f64> {
    match evaluate_i_infty(mesh, &segregate(field), 0.0) {
        Err(Error::ZeroComponent { .. }) => Ok(f64::INFINITY),
        other => other,
    }
}

fn sweep_chain(
    triplet: &AdmissibleTriplet,
    mesh: &SphereMesh,
    betas: &[f64],
    opts: &PartitionOptions,
    seed: u64,
) -> Result<EllEstimate> {
    let fresh = initial_field(triplet, mesh, seed, opts.noise)?;
    let mut current = fresh.clone();
    let mut results = Vec::with_capacity(betas.len());
    let mut ell_uppers = Vec::with_capacity(betas.len());
    for (step, &beta) in betas.iter().enumerate() {
        // For small β the constant state wins and a warm start can stay
        // there long after it stops being optimal, so every β also restarts
        // from the witness and keeps the lower minimum.
        let mut r = minimize_i_beta(triplet, mesh, beta, &current, opts)?;
        if step > 0 {
            let cold = minimize_i_beta(triplet, mesh, beta, &fresh, opts)?;
            if cold.ell_beta < r.ell_beta {
                r = cold;
            }
        }
        r.seed = Some(seed);
        ell_uppers.push(segregated_upper(mesh, &r.field)?);
        current = r.field.clone();
        results.push(r);
    }
    let ell_betas: Vec<f64> = results.iter().map(|r| r.ell_beta).collect();
    let ell_upper = ell_uppers.iter().copied().fold(f64::INFINITY, f64::min);
    let half = betas.len() / 2;
    let (xs, ys): (Vec<f64>, Vec<f64>) = (half..betas.len())
        .filter(|&i| ell_uppers[i] > ell_betas[i])
        .map(|i| (betas[i].ln(), (ell_uppers[i] - ell_betas[i]).ln()))
        .unzip();
    Ok(EllEstimate {
        betas: betas.to_vec(),
        ell_betas,
        ell_uppers,
        ell_upper,
        ell_extrapolated: ell_upper,
        fit_slope: linalg::linear_fit(&xs, &ys).map(|(a, _)| a),
        results,
        seed,
    })
}

/// Warm-started continuation in β, repeated for every seed in `opts`; the
/// chain with the lowest segregated upper bound is returned.
pub fn beta_sweep(
    triplet: &AdmissibleTriplet,
    mesh: &SphereMesh,
    betas: &[f64],
    opts: &PartitionOptions,
) -> Result<EllEstimate> {
    if betas.is_empty() || betas.iter().any(|&b| b <= 0.0) || betas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput(
            "betas must be positive and strictly increasing".into(),
        ));
    }
    let seeds = if opts.seeds.is_empty() { vec![0] } else { opts.seeds.clone() };
    let chains: Vec<Result<EllEstimate>> = seeds
        .par_iter()
        .map(|&s| sweep_chain(triplet, mesh, betas, opts, s))
        .collect();
    let mut best: Option<EllEstimate> = None;
    let mut first_error = None;
    for c in chains {
        match c {
            Ok(e) => {
                if best.as_ref().is_none_or(|b| e.ell_upper < b.ell_upper) {
                    best = Some(e);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_error.expect("at least one seed ran"))
}

/// `β^{1/2} max u_i u_j` and `β ∫ u_i² u_j²` per result.
#[derive(Clone, Debug, Serialize)]
pub struct InteractionReport {
    pub betas: Vec<f64>,
    pub scaled_max_products: Vec<f64>,
    pub interactions: Vec<f64>,
}

pub fn interaction_bound_check(mesh: &SphereMesh, results: &[PartitionResult]) -> InteractionReport {
    InteractionReport {
        betas: results.iter().map(|r| r.beta).collect(),
        scaled_max_products: results
            .iter()
            .map(|r| r.beta.sqrt() * max_overlap(&r.field.values))
            .collect(),
        interactions: results
            .iter()
            .map(|r| lambda_and_interaction(mesh, &r.field.values, r.beta).1)
            .collect(),
    }
}

/// Relative distance of `λ_β` from `ℓ(ℓ+N−2)`.
pub fn lambda_identity_check(result: &PartitionResult, ell_ref: f64, n: usize) -> f64 {
    let target = ell_ref * (ell_ref + n as f64 - 2.0);
    (result.lambda_beta - target).abs() / target
}
