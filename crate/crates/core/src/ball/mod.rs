//! The penalized system on the unit ball, discretized on a tensor grid of
//! concentric copies of a sphere mesh, together with the radial quantities
//! used to study its blow-ups: Almgren frequency, doubling, and the
//! Alt–Caffarelli–Friedman product.
//!
//! Values are stored as `k × shells × n_vertices`. When the first radius is
//! zero the first shell is the origin and holds one value per component,
//! repeated across vertices.

mod diagnostics;
mod solve;

pub use diagnostics::*;
pub use solve::*;

use crate::error::{Error, Result};
use crate::linalg::Pchip;
use crate::sphere::{Field, SphereMesh};
use ndarray::{s, Array2, Array3};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    radii: Vec<f64>,
}

impl RadialGrid {
    /// Strictly increasing, nonnegative radii, at least two of them.
    pub fn new(radii: Vec<f64>) -> Result<Self> {
        if radii.len() < 2 || radii[0] < 0.0 || radii.iter().any(|r| !r.is_finite()) {
            return Err(Error::InvalidInput("a radial grid needs at least two finite radii ≥ 0".into()));
        }
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("radii must be strictly increasing".into()));
        }
        Ok(RadialGrid { radii })
    }

    /// `m + 1` radii on `[0, 1]` that are denser near the boundary:
    /// `r = x/2 + sin(πx/2)/2` for uniform `x`.
    pub fn clustered(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInput("need at least two shells".into()));
        }
        let radii = (0..=m)
            .map(|s| {
                let x = s as f64 / m as f64;
                if s == m {
                    1.0
                } else {
                    0.5 * x + 0.5 * (std::f64::consts::FRAC_PI_2 * x).sin()
                }
            })
            .collect();
        Self::new(radii)
    }

    pub fn uniform(m: usize) -> Result<Self> {
        Self::new((0..=m).map(|s| s as f64 / m as f64).collect())
    }

    /// `count` radii in geometric progression from `first` to `last`.
    pub fn geometric(first: f64, last: f64, count: usize) -> Result<Self> {
        if !(first > 0.0 && last > first) || count < 2 {
            return Err(Error::InvalidInput("geometric grid needs 0 < first < last".into()));
        }
        let q = (last / first).ln() / (count - 1) as f64;
        let mut radii: Vec<f64> = (0..count).map(|s| first * (q * s as f64).exp()).collect();
        radii[count - 1] = last;
        Self::new(radii)
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn len(&self) -> usize {
        self.radii.len()
    }

    pub fn is_empty(&self) -> bool {
        self.radii.is_empty()
    }

    pub fn has_origin(&self) -> bool {
        self.radii[0] == 0.0
    }

    pub fn outer(&self) -> f64 {
        self.radii[self.radii.len() - 1]
    }
}

/// Nodal values on a radial grid of sphere-mesh shells. `coupling` is the
/// interaction strength of the system the field is meant to solve: `β` for
/// fields on the unit ball, 1 after rescaling.
#[derive(Clone, Debug)]
pub struct BallField {
    pub grid: RadialGrid,
    pub values: Array3<f64>,
    pub coupling: f64,
    pub mesh_hash: String,
}

impl BallField {
    pub fn new(mesh: &SphereMesh, grid: RadialGrid, values: Array3<f64>, coupling: f64) -> Result<Self> {
        let (_, shells, n) = values.dim();
        if shells != grid.len() || n != mesh.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "ball values are {:?}, grid has {} radii and mesh {} vertices",
                values.dim(),
                grid.len(),
                mesh.n_vertices()
            )));
        }
        Ok(BallField { grid, values, coupling, mesh_hash: mesh.content_hash().to_string() })
    }

    pub fn k(&self) -> usize {
        self.values.dim().0
    }

    pub fn shells(&self) -> usize {
        self.values.dim().1
    }

    pub fn n(&self) -> usize {
        self.values.dim().2
    }

    pub fn radii(&self) -> &[f64] {
        self.grid.radii()
    }

    /// `k × n` values on shell `s`.
    pub fn shell(&self, s: usize) -> Array2<f64> {
        self.values.slice(s![.., s, ..]).to_owned()
    }

    pub fn set_shell(&mut self, s: usize, shell: &Array2<f64>) {
        self.values.slice_mut(s![.., s, ..]).assign(shell);
    }

    /// Value of each component at the origin (mean over the first shell).
    pub fn origin_values(&self) -> Option<Vec<f64>> {
        if !self.grid.has_origin() {
            return None;
        }
        let n = self.n() as f64;
        Some((0..self.k()).map(|i| self.values.slice(s![i, 0, ..]).sum() / n).collect())
    }

    /// The boundary shell as a sphere field.
    pub fn trace(&self, mesh: &SphereMesh) -> Result<Field> {
        Field::new(mesh, self.shell(self.shells() - 1))
    }

    /// Monotone cubic interpolation in `r` of every nodal value.
    pub fn radial_interpolant(&self) -> RadialInterpolant {
        let radii = self.radii();
        let (k, _, n) = self.values.dim();
        let mut splines = Vec::with_capacity(k * n);
        for i in 0..k {
            for v in 0..n {
                let y: Vec<f64> = self.values.slice(s![i, .., v]).to_vec();
                splines.push(Pchip::new(radii, &y));
            }
        }
        RadialInterpolant { k, n, splines }
    }

    pub fn document(&self) -> BallFieldDocument {
        let (k, _, n) = self.values.dim();
        BallFieldDocument {
            mesh_hash: self.mesh_hash.clone(),
            k,
            n,
            radii: self.radii().to_vec(),
            coupling: self.coupling,
            values: self.values.iter().copied().collect(),
        }
    }
}

pub struct RadialInterpolant {
    k: usize,
    n: usize,
    splines: Vec<Pchip>,
}

impl RadialInterpolant {
    /// `k × n` interpolated values at radius `r`.
    pub fn shell_at(&self, r: f64) -> Array2<f64> {
        Array2::from_shape_fn((self.k, self.n), |(i, v)| self.splines[i * self.n + v].eval(r))
    }
}

/// Structured-text form of a [`BallField`]; values are flattened in
/// component, shell, vertex order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BallFieldDocument {
    pub mesh_hash: String,
    pub k: usize,
    pub n: usize,
    pub radii: Vec<f64>,
    pub coupling: f64,
    pub values: Vec<f64>,
}

impl BallFieldDocument {
    pub fn to_field(&self, mesh: &SphereMesh) -> Result<BallField> {
        if self.mesh_hash != mesh.content_hash() {
            return Err(Error::IncompatibleMesh("ball field was computed on a different mesh".into()));
        }
        let grid = RadialGrid::new(self.radii.clone())?;
        let values = Array3::from_shape_vec((self.k, grid.len(), self.n), self.values.clone())
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        BallField::new(mesh, grid, values, self.coupling)
    }
}

/// `|x|^ℓ φ(x/|x|)` sampled on the grid.
pub fn homogeneous_extension(mesh: &SphereMesh, phi: &Field, ell: f64, grid: &RadialGrid) -> Result<BallField> {
    if ell <= 0.0 {
        return Err(Error::InvalidInput(format!("homogeneity degree must be positive, got {ell}")));
    }
    let (k, n) = phi.values.dim();
    let radii = grid.radii();
    let values = Array3::from_shape_fn((k, radii.len(), n), |(i, s, v)| radii[s].powf(ell) * phi.values[[i, v]]);
    BallField::new(mesh, grid.clone(), values, 1.0)
}

/// Quadrature weights of the discrete energy
/// `Σ_i [Σ_t a_t ‖U_{t+1} − U_t‖²_M + Σ_t A_t(U_i)] + Σ_s c_s Σ_v m_v Σ_{i<j} U_i²U_j²`,
/// where on each interval
/// `A_t(U) = b_t[0] U_tᵀKU_t + 2 b_t[1] U_tᵀKU_{t+1} + b_t[2] U_{t+1}ᵀKU_{t+1}`.
///
/// The Dirichlet part is the exact tensor-product form of P1 profiles in `r`
/// with weight `r^{N−1}` (radial) and `r^{N−3}` (angular); the interaction
/// uses the trapezoid rule in `r`.
#[derive(Clone, Debug)]
pub(crate) struct Weights {
    /// `a_t`, one per interval.
    pub radial: Vec<f64>,
    /// `b_t`, one per interval.
    pub angular: Vec<[f64; 3]>,
    /// `c_s = coupling · τ_s r_s^{N−1}`.
    pub interaction: Vec<f64>,
}

impl Weights {
    pub fn new(grid: &RadialGrid, dimension: usize, coupling: f64) -> Self {
        let r = grid.radii();
        let m = r.len();
        let nn = dimension as i32;
        let mut tau = vec![0.0; m];
        for s in 0..m - 1 {
            let h = r[s + 1] - r[s];
            tau[s] += 0.5 * h;
            tau[s + 1] += 0.5 * h;
        }
        let radial = (0..m - 1)
            .map(|s| {
                let h = r[s + 1] - r[s];
                (r[s + 1].powi(nn) - r[s].powi(nn)) / (dimension as f64 * h * h)
            })
            .collect();
        let angular = (0..m - 1).map(|s| p1_moments(r[s], r[s + 1], nn - 3)).collect();
        let interaction = (0..m).map(|s| coupling * tau[s] * r[s].powi(nn - 1)).collect();
        Weights { radial, angular, interaction }
    }

    /// Coefficient of `U_sᵀKU_s` summed over the two adjacent intervals.
    pub fn angular_diag(&self, s: usize) -> f64 {
        let left = if s > 0 { self.angular[s - 1][2] } else { 0.0 };
        let right = self.angular.get(s).map_or(0.0, |b| b[0]);
        left + right
    }
}

const GAUSS8: [(f64, f64); 8] = [
    (-0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
    (-0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (-0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (-0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.183_434_642_495_649_8, 0.362_683_783_378_362_0),
    (0.525_532_409_916_329_0, 0.313_706_645_877_887_3),
    (0.796_666_477_413_626_7, 0.222_381_034_453_374_47),
    (0.960_289_856_497_536_3, 0.101_228_536_290_376_26),
];

/// `∫_a^b r^p [(1−θ)², θ(1−θ), θ²] dr` with `θ = (r−a)/(b−a)`.
///
/// For `a = 0` and `p < 0` only the last moment is returned (the others
/// multiply forms of the constant origin shell, which `K` annihilates).
pub(crate) fn p1_moments(a: f64, b: f64, p: i32) -> [f64; 3] {
    if a == 0.0 && p < 0 {
        return [0.0, 0.0, b.powi(p + 1) / (p + 3) as f64];
    }
    let h = b - a;
    let mut out = [0.0; 3];
    for (x, w) in GAUSS8 {
        let theta = 0.5 * (x + 1.0);
        let r = a + h * theta;
        let f = 0.5 * h * w * r.powi(p);
        out[0] += f * (1.0 - theta) * (1.0 - theta);
        out[1] += f * theta * (1.0 - theta);
        out[2] += f * theta * theta;
    }
    out
}

/// Pairwise interaction density `Σ_{i<j} a_i² a_j²` at one node.
pub(crate) fn pair_product(column: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for a in column {
        let a2 = a * a;
        sum += a2;
        sum_sq += a2 * a2;
    }
    0.5 * (sum * sum - sum_sq)
}

/// Discrete `E(U) = ∫ Σ|∇U_i|² + coupling Σ_{i<j} U_i²U_j²` over the grid.
pub fn ball_energy(mesh: &SphereMesh, field: &BallField) -> Result<f64> {
    check_mesh(mesh, field)?;
    let w = Weights::new(&field.grid, mesh.dimension(), field.coupling);
    Ok(energy_with(mesh, &w, &field.values))
}

pub(crate) fn energy_with(mesh: &SphereMesh, w: &Weights, u: &Array3<f64>) -> f64 {
    let (k, shells, n) = u.dim();
    let mass = mesh.mass();
    let mut total = 0.0;
    for i in 0..k {
        let ku = stiffness_rows(mesh, u, i);
        for t in 0..shells - 1 {
            let (x, y) = (u.slice(s![i, t, ..]), u.slice(s![i, t + 1, ..]));
            let d: f64 = (0..n).map(|v| mass[v] * (y[v] - x[v]).powi(2)).sum();
            let b = w.angular[t];
            let xx: f64 = x.iter().zip(&ku[t]).map(|(a, c)| a * c).sum();
            let xy: f64 = y.iter().zip(&ku[t]).map(|(a, c)| a * c).sum();
            let yy: f64 = y.iter().zip(&ku[t + 1]).map(|(a, c)| a * c).sum();
            total += w.radial[t] * d + b[0] * xx + 2.0 * b[1] * xy + b[2] * yy;
        }
    }
    for s in 0..shells {
        if w.interaction[s] == 0.0 {
            continue;
        }
        let p: f64 = (0..n).map(|v| mass[v] * pair_product((0..k).map(|i| u[[i, s, v]]))).sum();
        total += w.interaction[s] * p;
    }
    total
}

/// `K U_{i,s}` for every shell of component `i`.
pub(crate) fn stiffness_rows(mesh: &SphereMesh, u: &Array3<f64>, i: usize) -> Vec<Vec<f64>> {
    let (_, shells, n) = u.dim();
    (0..shells)
        .map(|s| {
            let x = u.slice(s![i, s, ..]).to_vec();
            let mut y = vec![0.0; n];
            mesh.apply_stiffness(&x, &mut y);
            y
        })
        .collect()
}

pub(crate) fn check_mesh(mesh: &SphereMesh, field: &BallField) -> Result<()> {
    if field.mesh_hash != mesh.content_hash() || field.n() != mesh.n_vertices() {
        return Err(Error::IncompatibleMesh("ball field does not live on this mesh".into()));
    }
    Ok(())
}
