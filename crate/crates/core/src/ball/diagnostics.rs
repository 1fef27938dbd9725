use super::{check_mesh, p1_moments, pair_product, stiffness_rows, BallField, RadialGrid};
use crate::error::{Error, Result};
use crate::sphere::SphereMesh;
use ndarray::{s, Array3};
use serde::Serialize;

/// Shell quantities of a ball field at every grid radius.
///
/// `h` is the normalized boundary integral `r^{1−N}∫_{∂B_r}Σ U_i²`, `e` the
/// scaled energy `r^{2−N}∫_{B_r}(Σ|∇U_i|² + coupling Σ_{i<j}U_i²U_j²)`,
/// `nq = e/h`, `j[i]` the weighted energies
/// `∫_{B_r}(|∇U_i|² + coupling U_i²Σ_{j≠i}U_j²)|x|^{2−N}` and
/// `interaction` the unweighted `∫_{B_r}Σ_{i<j}U_i²U_j²`.
///
/// When the grid does not start at the origin, the core inside the first
/// radius is left out of every volume integral.
#[derive(Clone, Debug, Serialize)]
pub struct RadialDiagnostics {
    pub dimension: usize,
    pub coupling: f64,
    pub radii: Vec<f64>,
    pub h: Vec<f64>,
    pub e: Vec<f64>,
    pub nq: Vec<f64>,
    pub j: Vec<Vec<f64>>,
    pub interaction: Vec<f64>,
}

pub fn diagnostics(mesh: &SphereMesh, field: &BallField) -> Result<RadialDiagnostics> {
    check_mesh(mesh, field)?;
    Ok(diagnostics_of(mesh, &field.grid, &field.values, field.coupling))
}

fn diagnostics_of(mesh: &SphereMesh, grid: &RadialGrid, u: &Array3<f64>, coupling: f64) -> RadialDiagnostics {
    let (k, shells, n) = u.dim();
    let r = grid.radii();
    let dim = mesh.dimension();
    let nn = dim as i32;
    let mass = mesh.mass();

    // per-shell sphere integrals; q[i][s] = U_sᵀKU_s, qx[i][t] = U_tᵀKU_{t+1}
    let mut h = vec![0.0; shells];
    let mut q = vec![vec![0.0; shells]; k];
    let mut qx = vec![vec![0.0; shells]; k];
    let mut cross = vec![vec![0.0; shells]; k];
    let mut pairs = vec![0.0; shells];
    for i in 0..k {
        let ku = stiffness_rows(mesh, u, i);
        for sh in 0..shells {
            let x = u.slice(s![i, sh, ..]);
            h[sh] += (0..n).map(|v| mass[v] * x[v] * x[v]).sum::<f64>();
            q[i][sh] = x.iter().zip(&ku[sh]).map(|(a, b)| a * b).sum();
            if sh + 1 < shells {
                qx[i][sh] = u.slice(s![i, sh + 1, ..]).iter().zip(&ku[sh]).map(|(a, b)| a * b).sum();
            }
        }
    }
    for sh in 0..shells {
        for v in 0..n {
            let col: Vec<f64> = (0..k).map(|i| u[[i, sh, v]] * u[[i, sh, v]]).collect();
            let total: f64 = col.iter().sum();
            for i in 0..k {
                cross[i][sh] += mass[v] * col[i] * (total - col[i]);
            }
            pairs[sh] += mass[v] * pair_product((0..k).map(|i| u[[i, sh, v]]));
        }
    }

    let pow = |x: f64, p: i32| if x == 0.0 { 0.0 } else { x.powi(p) };
    let mut e = vec![0.0; shells];
    let mut nq = vec![0.0; shells];
    let mut j = vec![vec![0.0; shells]; k];
    let mut interaction = vec![0.0; shells];
    let mut dirichlet = 0.0;
    for t in 0..shells - 1 {
        let (a, b) = (r[t], r[t + 1]);
        let dr = b - a;
        let shell_volume = (b.powi(nn) - a.powi(nn)) / dim as f64;
        // the angular weight is r^{N−3} in the energy and r^{−1} in J
        let we = p1_moments(a, b, nn - 3);
        let wj = p1_moments(a, b, -1);
        let mut step = 0.0;
        for i in 0..k {
            let d: f64 = (0..n)
                .map(|v| mass[v] * (u[[i, t + 1, v]] - u[[i, t, v]]).powi(2))
                .sum::<f64>()
                / (dr * dr);
            let form = |w: [f64; 3]| w[0] * q[i][t] + 2.0 * w[1] * qx[i][t] + w[2] * q[i][t + 1];
            step += shell_volume * d + form(we);
            let inter_j = coupling * 0.5 * dr * (a * cross[i][t] + b * cross[i][t + 1]);
            j[i][t + 1] = j[i][t] + 0.5 * (b * b - a * a) * d + form(wj) + inter_j;
        }
        let inter = 0.5 * dr * (pow(a, nn - 1) * pairs[t] + pow(b, nn - 1) * pairs[t + 1]);
        interaction[t + 1] = interaction[t] + inter;
        dirichlet += step;
        let total = dirichlet + coupling * interaction[t + 1];
        e[t + 1] = total * b.powi(2 - nn);
        nq[t + 1] = e[t + 1] / h[t + 1];
    }
    nq[0] = if h[0] > 0.0 { e[0] / h[0] } else { 0.0 };
    RadialDiagnostics { dimension: dim, coupling, radii: r.to_vec(), h, e, nq, j, interaction }
}

#[derive(Clone, Debug, Serialize)]
pub struct AlmgrenReport {
    pub r_min: f64,
    /// Largest drop `max_{s<t} N(r_s) − N(r_t)` over radii ≥ `r_min`.
    pub max_violation: f64,
    /// `|N(r_last) − N(r_min)|`.
    pub range: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Monotonicity of the frequency over `[r_min, outer]`; the tolerance is
/// `rel_tol` times the range, with an absolute floor of `rel_tol · 1e−9`.
pub fn almgren_monotonicity_check(diag: &RadialDiagnostics, r_min: f64, rel_tol: f64) -> AlmgrenReport {
    let window: Vec<f64> = diag
        .radii
        .iter()
        .zip(&diag.nq)
        .filter(|(r, _)| **r >= r_min)
        .map(|(_, n)| *n)
        .collect();
    let mut running = f64::NEG_INFINITY;
    let mut max_violation = 0.0_f64;
    for &n in &window {
        running = running.max(n);
        max_violation = max_violation.max(running - n);
    }
    let range = match (window.first(), window.last()) {
        (Some(a), Some(b)) => (b - a).abs(),
        _ => 0.0,
    };
    let tolerance = rel_tol * range.max(1e-9);
    AlmgrenReport { r_min, max_violation, range, tolerance, passed: max_violation <= tolerance }
}

#[derive(Clone, Debug, Serialize)]
pub struct AcfReport {
    pub ell: f64,
    pub r_min: f64,
    pub radii: Vec<f64>,
    /// `log Π J_i − 2kℓ log r` on the radii used.
    pub f: Vec<f64>,
    /// Smallest `C ≥ 0` making `F(r) − C r^{−1/2}` nondecreasing.
    pub c: f64,
    pub c_max: f64,
    pub passed: bool,
}

pub const ACF_MIN_RADII: usize = 8;

pub fn acf_check(diag: &RadialDiagnostics, ell: f64, r_min: f64, c_max: f64) -> Result<AcfReport> {
    let k = diag.j.len();
    let idx: Vec<usize> = (0..diag.radii.len()).filter(|&s| diag.radii[s] >= r_min).collect();
    if idx.len() < ACF_MIN_RADII {
        return Err(Error::InsufficientRange { available: idx.len(), required: ACF_MIN_RADII });
    }
    let radii: Vec<f64> = idx.iter().map(|&s| diag.radii[s]).collect();
    let f: Vec<f64> = idx
        .iter()
        .map(|&s| {
            let logs: f64 = diag.j.iter().map(|j| j[s].ln()).sum();
            logs - 2.0 * k as f64 * ell * diag.radii[s].ln()
        })
        .collect();
    let mut c = 0.0_f64;
    for w in 0..radii.len() - 1 {
        let (a, b) = (radii[w], radii[w + 1]);
        let drop = f[w] - f[w + 1];
        if drop > 0.0 || drop.is_nan() {
            c = c.max(drop / (a.powf(-0.5) - b.powf(-0.5)));
        }
    }
    if c.is_nan() {
        c = f64::INFINITY;
    }
    Ok(AcfReport { ell, r_min, radii, f, c, c_max, passed: c <= c_max })
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthEstimate {
    /// Frequency at the largest radius.
    pub value: f64,
    /// Range of the frequency over the last quarter of the radii.
    pub tail_range: f64,
}

pub fn growth_rate_estimate(diag: &RadialDiagnostics) -> Result<GrowthEstimate> {
    let m = diag.nq.len();
    if m < ACF_MIN_RADII {
        return Err(Error::InsufficientRange { available: m, required: ACF_MIN_RADII });
    }
    let tail = &diag.nq[m - m.div_ceil(4)..];
    let (lo, hi) = tail.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    Ok(GrowthEstimate { value: diag.nq[m - 1], tail_range: hi - lo })
}

#[derive(Clone, Debug, Serialize)]
pub struct DoublingReport {
    pub ell: f64,
    /// `max_{R ≥ 1} (H(R)/R^{2ℓ}) / H(1)`.
    pub max_ratio: f64,
    pub bound: f64,
    /// Largest increase of `H(r)/r^{2ℓ}` between consecutive radii ≥ 1,
    /// relative to its value at 1.
    pub max_increase: f64,
    pub passed: bool,
}

/// Doubling bound `H(R)/R^{2ℓ} ≤ e^ℓ H(1)` on the radii ≥ 1 of a rescaled
/// field, with the bound relaxed by the factor `1 + rel_tol`.
pub fn doubling_check(diag: &RadialDiagnostics, ell: f64, rel_tol: f64) -> Result<DoublingReport> {
    let idx: Vec<usize> = (0..diag.radii.len()).filter(|&s| diag.radii[s] >= 1.0 - 1e-12).collect();
    if idx.is_empty() {
        return Err(Error::InsufficientRange { available: 0, required: 1 });
    }
    let scaled: Vec<f64> = idx.iter().map(|&s| diag.h[s] / diag.radii[s].powf(2.0 * ell)).collect();
    let h1 = scaled[0];
    let max_ratio = scaled.iter().fold(0.0_f64, |m, x| m.max(x / h1));
    let max_increase = scaled.windows(2).fold(0.0_f64, |m, w| m.max((w[1] - w[0]) / h1));
    let bound = ell.exp() * (1.0 + rel_tol);
    Ok(DoublingReport { ell, max_ratio, bound, max_increase, passed: max_ratio <= bound })
}

#[derive(Clone, Debug, Serialize)]
pub struct GrowthIdentityReport {
    /// Largest relative gap between the finite-difference `dH/dr` and
    /// `(2/r)E + (2 coupling / r^{N−1}) ∫_{B_r}Σ_{i<j}U_i²U_j²`.
    pub max_rel_error: f64,
    pub min_h: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Checks the derivative identity for `H` at interior radii ≥ `r_min`.
pub fn dh_identity_check(diag: &RadialDiagnostics, r_min: f64, tolerance: f64) -> GrowthIdentityReport {
    let r = &diag.radii;
    let nn = diag.dimension as i32;
    let mut max_rel_error = 0.0_f64;
    for s in 1..r.len() - 1 {
        if r[s] < r_min || r[s] == 0.0 {
            continue;
        }
        let (h1, h2) = (r[s] - r[s - 1], r[s + 1] - r[s]);
        let fd = -h2 / (h1 * (h1 + h2)) * diag.h[s - 1]
            + (h2 - h1) / (h1 * h2) * diag.h[s]
            + h1 / (h2 * (h1 + h2)) * diag.h[s + 1];
        let rhs = 2.0 / r[s] * diag.e[s] + 2.0 * diag.coupling * diag.interaction[s] / r[s].powi(nn - 1);
        max_rel_error = max_rel_error.max((fd - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
    }
    let min_h = diag.h.iter().copied().fold(f64::INFINITY, f64::min);
    GrowthIdentityReport { max_rel_error, min_h, tolerance, passed: max_rel_error <= tolerance && min_h > 0.0 }
}

/// Radius where `β r² H(r) = 1`, with `β` the field's coupling and `H`
/// evaluated on the monotone cubic radial interpolant of the values.
pub fn find_r_beta(mesh: &SphereMesh, field: &BallField) -> Result<f64> {
    check_mesh(mesh, field)?;
    let beta = field.coupling;
    let radii = field.radii();
    let mass = mesh.mass();
    let shell_h = |sh: &ndarray::Array2<f64>| -> f64 {
        sh.outer_iter().map(|row| row.iter().zip(mass).map(|(x, m)| m * x * x).sum::<f64>()).sum()
    };
    let sampled: Vec<f64> = (0..field.shells()).map(|s| beta * radii[s].powi(2) * shell_h(&field.shell(s))).collect();
    let last = sampled[sampled.len() - 1];
    let Some(t) = (0..sampled.len() - 1).find(|&t| sampled[t] < 1.0 && sampled[t + 1] >= 1.0) else {
        return Err(Error::NotBracketed { at_boundary: last });
    };
    if sampled[t + 1] == 1.0 {
        return Ok(radii[t + 1]);
    }
    let interp = field.radial_interpolant();
    let map = |r: f64| beta * r * r * shell_h(&interp.shell_at(r));
    let (mut lo, mut hi) = (radii[t], radii[t + 1]);
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let val = map(mid);
        if (val - 1.0).abs() < 1e-12 || hi - lo < 1e-15 {
            break;
        }
        if val < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let residual = (map(mid) - 1.0).abs();
    if residual >= 1e-8 {
        return Err(Error::NonConvergence { iterations: 200, residual });
    }
    Ok(mid)
}

/// `V(x) = β^{1/2} r_β U(r_β x)` on the radii `r/r_β`, with a shell inserted
/// at radius 1 from the radial interpolant. The result has unit coupling.
pub fn blow_up_rescale(mesh: &SphereMesh, field: &BallField, r_beta: f64) -> Result<BallField> {
    check_mesh(mesh, field)?;
    if !(r_beta > 0.0 && r_beta <= field.grid.outer()) {
        return Err(Error::InvalidInput(format!("r_beta = {r_beta} is outside the grid")));
    }
    let scale = field.coupling.sqrt() * r_beta;
    let old = field.radii();
    let (k, shells, n) = field.values.dim();
    let existing = old.iter().position(|&r| (r - r_beta).abs() <= 1e-14 * r_beta.max(1.0));
    let insert_at = old.partition_point(|&r| r < r_beta);
    let mut radii = Vec::with_capacity(shells + 1);
    let mut values = Vec::with_capacity(shells + 1);
    let interp = if existing.is_none() { Some(field.radial_interpolant()) } else { None };
    for s in 0..shells {
        if existing.is_none() && s == insert_at {
            radii.push(1.0);
            values.push(interp.as_ref().unwrap().shell_at(r_beta));
        }
        radii.push(if Some(s) == existing { 1.0 } else { old[s] / r_beta });
        values.push(field.shell(s));
    }
    let m = radii.len();
    let mut out = Array3::zeros((k, m, n));
    for (s, sh) in values.iter().enumerate() {
        out.slice_mut(s![.., s, ..]).assign(&(sh * scale));
    }
    BallField::new(mesh, RadialGrid::new(radii)?, out, 1.0)
}
