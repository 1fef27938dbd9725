//! Finite subgroups of O(N), permutation homomorphisms and the equivariant
//! action on k-component fields.
//!
//! Permutations are stored 0-based in one-line notation and compose as
//! functions: `(σ∘τ)(i) = σ(τ(i))`. A homomorphism `h` satisfies
//! `h(g₁g₂) = h(g₁)∘h(g₂)` where `g₁g₂` is the matrix product.
//!
//! The action of `g` on a field `u = (u_1, …, u_k)` is
//!
//! ```text
//! (g·u)_i = u_{h(g)⁻¹(i)} ∘ g⁻¹
//! ```
//!
//! which is a left action for every homomorphism. Its fixed points are the
//! fields with `u_{h(g)(i)} = u_i ∘ g⁻¹`, equivalently `u_i = u_{h(g)(i)} ∘ g`
//! for all `g`. When every image `h(g)` is an involution or the identity this
//! coincides with composing by `g` directly.

use std::fmt;

use nalgebra::DMatrix;
use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::sphere::{Field, SphereMesh};
use crate::{Error, Result};

/// Default Frobenius tolerance for matching group elements.
pub const MATCH_TOL: f64 = 1e-10;

#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn identity(k: usize) -> Self {
        Permutation((0..k).collect())
    }

    /// Builds a permutation from 0-based one-line notation.
    pub fn new(images: Vec<usize>) -> Result<Self> {
        let k = images.len();
        let mut seen = vec![false; k];
        for &i in &images {
            if i >= k || seen[i] {
                return Err(Error::InvalidInput(format!(
                    "{images:?} is not a permutation of 0..{k}"
                )));
            }
            seen[i] = true;
        }
        Ok(Permutation(images))
    }

    /// Builds a permutation from 1-based one-line notation.
    pub fn from_one_based(images: &[usize]) -> Result<Self> {
        if images.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "{images:?} is not 1-based"
            )));
        }
        Self::new(images.iter().map(|&i| i - 1).collect())
    }

    /// The k-cycle `i ↦ i+1 (mod k)`.
    pub fn cycle(k: usize) -> Self {
        Permutation((0..k).map(|i| (i + 1) % k).collect())
    }

    /// The transposition exchanging `a` and `b`.
    pub fn transposition(k: usize, a: usize, b: usize) -> Self {
        let mut p: Vec<usize> = (0..k).collect();
        p.swap(a, b);
        Permutation(p)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn apply(&self, i: usize) -> usize {
        self.0[i]
    }

    /// `self ∘ other`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation(other.0.iter().map(|&j| self.0[j]).collect())
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.0.len()];
        for (i, &j) in self.0.iter().enumerate() {
            inv[j] = i;
        }
        Permutation(inv)
    }

    pub fn is_identity(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &j)| i == j)
    }

    pub fn images(&self) -> &[usize] {
        &self.0
    }

    pub fn to_one_based(&self) -> Vec<usize> {
        self.0.iter().map(|&i| i + 1).collect()
    }
}

impl fmt::Debug for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Permutation{:?}", self.to_one_based())
    }
}

#[derive(Clone, Debug)]
pub struct GroupElement {
    pub matrix: DMatrix<f64>,
    pub label: usize,
}

impl GroupElement {
    pub fn determinant(&self) -> f64 {
        self.matrix.determinant()
    }

    /// Applies the matrix to a point given by its first `N` coordinates.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.matrix.nrows();
        (0..n)
            .map(|r| (0..n).map(|c| self.matrix[(r, c)] * x[c]).sum())
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct Homomorphism {
    pub k: usize,
    /// One permutation per element id.
    pub images: Vec<Permutation>,
    /// Images of the generators, as supplied.
    pub generator_images: Vec<Permutation>,
}

#[derive(Clone, Debug)]
pub struct SymmetryGroup {
    dimension: usize,
    elements: Vec<GroupElement>,
    generators: Vec<DMatrix<f64>>,
    generator_ids: Vec<usize>,
    /// `table[a][b]` is the id of the product `a·b`.
    table: Vec<Vec<usize>>,
    inverses: Vec<usize>,
    /// Element `e ≠ identity` equals `words[e].0 · generator[words[e].1]`.
    words: Vec<Option<(usize, usize)>>,
    hom: Option<Homomorphism>,
}

fn orthogonality_defect(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let p = m.transpose() * m;
    (p - DMatrix::<f64>::identity(n, n)).amax()
}

/// One Newton step of the polar decomposition, `X ← (X + X⁻ᵀ)/2`.
fn reorthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    match m.clone().try_inverse() {
        Some(inv) => (m + inv.transpose()) * 0.5,
        None => m.clone(),
    }
}

fn find_match(elements: &[GroupElement], m: &DMatrix<f64>, tol: f64) -> Option<usize> {
    elements
        .iter()
        .position(|e| (&e.matrix - m).norm() < tol)
}

/// Multiplicative closure of a set of orthogonal generators.
pub fn group_closure(
    generators: &[DMatrix<f64>],
    max_order: usize,
    tol: f64,
) -> Result<SymmetryGroup> {
    if max_order == 0 {
        return Err(Error::InvalidInput("max_order must be at least 1".into()));
    }
    let dimension = match generators.first() {
        Some(g) => g.nrows(),
        None => return Err(Error::InvalidInput("no generators given".into())),
    };
    for (index, g) in generators.iter().enumerate() {
        if g.nrows() != dimension || g.ncols() != dimension {
            return Err(Error::DimensionMismatch(format!(
                "generator {index} is {}x{}, expected {dimension}x{dimension}",
                g.nrows(),
                g.ncols()
            )));
        }
        let defect = orthogonality_defect(g);
        if defect > tol.max(1e-12) {
            return Err(Error::NotOrthogonal { index, defect });
        }
    }

    let mut elements = vec![GroupElement {
        matrix: DMatrix::identity(dimension, dimension),
        label: 0,
    }];
    let mut words = vec![None];
    let mut cursor = 0;
    while cursor < elements.len() {
        for (s, gen) in generators.iter().enumerate() {
            let product = reorthonormalize(&(&elements[cursor].matrix * gen));
            if find_match(&elements, &product, tol).is_none() {
                if elements.len() == max_order {
                    return Err(Error::ClosureOverflow { max_order });
                }
                let label = elements.len();
                elements.push(GroupElement {
                    matrix: product,
                    label,
                });
                words.push(Some((cursor, s)));
            }
        }
        cursor += 1;
    }

    let order = elements.len();
    let mut table = vec![vec![0; order]; order];
    for a in 0..order {
        for b in 0..order {
            let product = &elements[a].matrix * &elements[b].matrix;
            table[a][b] = find_match(&elements, &product, tol).ok_or_else(|| {
                Error::InvalidInput(format!("product of elements {a} and {b} left the group"))
            })?;
        }
    }
    let inverses = (0..order)
        .map(|a| {
            table[a].iter().position(|&c| c == 0).ok_or_else(|| {
                Error::InvalidInput(format!("element {a} has no inverse"))
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let generator_ids = generators
        .iter()
        .map(|g| find_match(&elements, g, tol).expect("generator is in its closure"))
        .collect();

    Ok(SymmetryGroup {
        dimension,
        elements,
        generators: generators.to_vec(),
        generator_ids,
        table,
        inverses,
        words,
        hom: None,
    })
}

/// Extends generator images to every element and checks the homomorphism
/// property on all pairs.
pub fn attach_homomorphism(
    group: &SymmetryGroup,
    k: usize,
    generator_images: &[Permutation],
) -> Result<SymmetryGroup> {
    if generator_images.len() != group.generators.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} generator images for {} generators",
            generator_images.len(),
            group.generators.len()
        )));
    }
    if let Some(p) = generator_images.iter().find(|p| p.len() != k) {
        return Err(Error::DimensionMismatch(format!(
            "permutation {p:?} does not act on {k} indices"
        )));
    }
    let mut images: Vec<Permutation> = Vec::with_capacity(group.order());
    for word in &group.words {
        let image = match word {
            None => Permutation::identity(k),
            Some((parent, s)) => images[*parent].compose(&generator_images[*s]),
        };
        images.push(image);
    }
    for a in 0..group.order() {
        for b in 0..group.order() {
            if images[group.table[a][b]] != images[a].compose(&images[b]) {
                return Err(Error::NotAHomomorphism { left: a, right: b });
            }
        }
    }
    let mut out = group.clone();
    out.hom = Some(Homomorphism {
        k,
        images,
        generator_images: generator_images.to_vec(),
    });
    Ok(out)
}

impl SymmetryGroup {
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn element(&self, id: usize) -> &GroupElement {
        &self.elements[id]
    }

    pub fn generators(&self) -> &[DMatrix<f64>] {
        &self.generators
    }

    pub fn generator_ids(&self) -> &[usize] {
        &self.generator_ids
    }

    pub fn identity(&self) -> usize {
        0
    }

    pub fn product(&self, a: usize, b: usize) -> usize {
        self.table[a][b]
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inverses[a]
    }

    pub fn table(&self) -> &[Vec<usize>] {
        &self.table
    }

    pub fn hom(&self) -> Option<&Homomorphism> {
        self.hom.as_ref()
    }

    /// Number of permuted components, if a homomorphism is attached.
    pub fn k(&self) -> Option<usize> {
        self.hom.as_ref().map(|h| h.k)
    }

    pub fn image(&self, id: usize) -> Option<&Permutation> {
        self.hom.as_ref().map(|h| &h.images[id])
    }

    /// Whether every element maps to the identity permutation.
    pub fn hom_is_trivial(&self) -> bool {
        self.hom
            .as_ref()
            .is_none_or(|h| h.images.iter().all(Permutation::is_identity))
    }

    /// Ids of elements fixing a point `x` within `tol`.
    pub fn stabilizer_of_point(&self, x: &[f64], tol: f64) -> Vec<usize> {
        self.elements
            .iter()
            .filter(|e| {
                let y = e.apply(x);
                y.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() < tol
            })
            .map(|e| e.label)
            .collect()
    }

    /// Checks associativity, identity and inverses of the composition table.
    pub fn check_table(&self) -> bool {
        let n = self.order();
        for a in 0..n {
            if self.table[0][a] != a || self.table[a][0] != a {
                return false;
            }
            if self.table[a][self.inverses[a]] != 0 || self.table[self.inverses[a]][a] != 0 {
                return false;
            }
            for b in 0..n {
                for c in 0..n {
                    if self.table[self.table[a][b]][c] != self.table[a][self.table[b][c]] {
                        return false;
                    }
                }
            }
        }
        true
    }

    fn require_hom(&self) -> Result<&Homomorphism> {
        self.hom.as_ref().ok_or_else(|| {
            Error::InvalidInput("group has no permutation homomorphism attached".into())
        })
    }
}

fn check_field(group: &SymmetryGroup, mesh: &SphereMesh, field: &Field) -> Result<usize> {
    let hom = group.require_hom()?;
    if field.k() != hom.k {
        return Err(Error::DimensionMismatch(format!(
            "field has {} components, homomorphism acts on {}",
            field.k(),
            hom.k
        )));
    }
    if field.n() != mesh.n_vertices() {
        return Err(Error::DimensionMismatch(format!(
            "field has {} nodes, mesh has {} vertices",
            field.n(),
            mesh.n_vertices()
        )));
    }
    Ok(hom.k)
}

/// Applies `g` to an array of nodal values (`k × n`) on `mesh`.
pub fn act_on_values(
    group: &SymmetryGroup,
    g: usize,
    mesh: &SphereMesh,
    values: &Array2<f64>,
) -> Result<Array2<f64>> {
    let hom = group.require_hom()?;
    let sigma_inv = hom.images[g].inverse();
    let pullback = mesh.transport(group.inverse(g))?;
    let mut out = Array2::zeros(values.raw_dim());
    for i in 0..hom.k {
        let src = values.row(sigma_inv.apply(i));
        let src = src.as_slice().expect("row-major field");
        let mut dst = out.row_mut(i);
        pullback.apply(src, dst.as_slice_mut().expect("row-major field"));
    }
    Ok(out)
}

/// `g·u` on the mesh.
pub fn equivariant_transport(
    group: &SymmetryGroup,
    g: usize,
    mesh: &SphereMesh,
    field: &Field,
) -> Result<Field> {
    check_field(group, mesh, field)?;
    Ok(field.with_values(act_on_values(group, g, mesh, &field.values)?))
}

/// Group average of the action on raw nodal values.
pub fn project_values(
    group: &SymmetryGroup,
    mesh: &SphereMesh,
    values: &Array2<f64>,
) -> Result<Array2<f64>> {
    let mut acc = Array2::zeros(values.raw_dim());
    for g in 0..group.order() {
        acc += &act_on_values(group, g, mesh, values)?;
    }
    acc /= group.order() as f64;
    Ok(acc)
}

/// Averages `g·u` over the group.
pub fn equivariant_project(
    group: &SymmetryGroup,
    mesh: &SphereMesh,
    field: &Field,
) -> Result<Field> {
    check_field(group, mesh, field)?;
    Ok(field.with_values(project_values(group, mesh, &field.values)?))
}

/// `max_g ‖g·u − u‖_∞`.
pub fn equivariance_defect(group: &SymmetryGroup, mesh: &SphereMesh, field: &Field) -> Result<f64> {
    check_field(group, mesh, field)?;
    let mut worst: f64 = 0.0;
    for g in 0..group.order() {
        let moved = act_on_values(group, g, mesh, &field.values)?;
        let d = (&moved - &field.values)
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()));
        worst = worst.max(d);
    }
    Ok(worst)
}

#[derive(Clone, Debug)]
pub struct AdmissibleTriplet {
    pub k: usize,
    pub group: SymmetryGroup,
    pub witness: Field,
    /// Element ids `g_i` with `u_i = u_1 ∘ g_i`; entry 0 is the identity.
    pub transfer: Vec<usize>,
}

#[derive(Clone, Copy, Debug)]
pub struct AdmissibilityTolerances {
    /// Nonnegativity slack and minimal L² norm per component.
    pub positivity: f64,
    /// Bound on `u_i u_j` at every vertex.
    pub segregation: f64,
    /// Sup-norm tolerance for `u_i = u_1 ∘ g` and for equivariance.
    pub matching: f64,
}

impl AdmissibilityTolerances {
    /// Scale-aware defaults relative to `max |witness|`.
    pub fn for_witness(witness: &Field) -> Self {
        let scale = witness.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        AdmissibilityTolerances {
            positivity: 1e-6 * scale,
            segregation: 1e-6 * scale * scale,
            matching: 1e-6 * scale,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AdmissibilityReport {
    pub min_value: f64,
    pub min_norm: f64,
    /// (i): nonnegative and nontrivial components.
    pub positivity: bool,
    pub max_overlap: f64,
    /// (ii): pairwise products vanish.
    pub segregation: bool,
    /// Found `g_i` per component, `None` where the search failed.
    pub transfers: Vec<Option<usize>>,
    /// (iii): every component is a transported copy of the first.
    pub transitivity: bool,
    pub equivariance_defect: f64,
    pub equivariant: bool,
    pub hom_nontrivial: bool,
    pub enough_elements: bool,
    pub passed: bool,
}

/// Checks conditions (i)–(iii) for the triplet's witness on `mesh`.
///
/// The search for `g_i` runs over all elements in id order and keeps the
/// first one with `h(g)(i) = 1` and `‖u_i − u_1∘g‖_∞ ≤ matching`; under the
/// action convention of this module equivariant fields then satisfy
/// `u_i = u_1 ∘ g_i`.
pub fn admissibility_check(
    triplet: &AdmissibleTriplet,
    mesh: &SphereMesh,
    tol: AdmissibilityTolerances,
) -> Result<AdmissibilityReport> {
    let group = &triplet.group;
    let k = check_field(group, mesh, &triplet.witness)?;
    let u = &triplet.witness.values;
    let hom = group.require_hom()?;

    let min_value = u.iter().fold(f64::INFINITY, |m, &v| m.min(v));
    let min_norm = (0..k)
        .map(|i| mesh.mass_norm2(u.row(i).as_slice().unwrap()).sqrt())
        .fold(f64::INFINITY, f64::min);
    let positivity = min_value >= -tol.positivity && min_norm >= tol.positivity.max(f64::MIN_POSITIVE);

    let mut max_overlap: f64 = 0.0;
    for v in 0..mesh.n_vertices() {
        for i in 0..k {
            for j in (i + 1)..k {
                max_overlap = max_overlap.max(u[[i, v]] * u[[j, v]]);
            }
        }
    }
    let segregation = max_overlap <= tol.segregation;

    let first = u.row(0).to_vec();
    let mut moved = vec![0.0; mesh.n_vertices()];
    let mut transfers = vec![None; k];
    for (i, slot) in transfers.iter_mut().enumerate() {
        for g in 0..group.order() {
            if hom.images[g].apply(i) != 0 {
                continue;
            }
            mesh.transport(g)?.apply(&first, &mut moved);
            let diff = u
                .row(i)
                .iter()
                .zip(&moved)
                .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
            if diff <= tol.matching {
                *slot = Some(g);
                break;
            }
        }
    }
    let transitivity = transfers.iter().all(Option::is_some);

    let equivariance_defect = equivariance_defect(group, mesh, &triplet.witness)?;
    let equivariant = equivariance_defect <= tol.matching;
    let hom_nontrivial = !group.hom_is_trivial();
    let enough_elements = group.order() >= k;

    let passed = positivity
        && segregation
        && transitivity
        && equivariant
        && hom_nontrivial
        && enough_elements;
    Ok(AdmissibilityReport {
        min_value,
        min_norm,
        positivity,
        max_overlap,
        segregation,
        transfers,
        transitivity,
        equivariance_defect,
        equivariant,
        hom_nontrivial,
        enough_elements,
        passed,
    })
}

/// Structured-text form of a group: generators and their images only. The
/// closure and homomorphism are recomputed on load.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct GroupDocument {
    pub dimension: usize,
    /// Row-major generator matrices.
    pub generators: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    /// 1-based one-line images of the generators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator_images: Option<Vec<Vec<usize>>>,
}

impl GroupDocument {
    pub fn from_group(group: &SymmetryGroup) -> Self {
        let n = group.dimension;
        GroupDocument {
            dimension: n,
            generators: group
                .generators
                .iter()
                .map(|g| (0..n * n).map(|idx| g[(idx / n, idx % n)]).collect())
                .collect(),
            k: group.k(),
            generator_images: group.hom.as_ref().map(|h| {
                h.generator_images
                    .iter()
                    .map(Permutation::to_one_based)
                    .collect()
            }),
        }
    }

    pub fn to_group(&self, max_order: usize) -> Result<SymmetryGroup> {
        let n = self.dimension;
        let generators = self
            .generators
            .iter()
            .map(|g| {
                if g.len() != n * n {
                    Err(Error::DimensionMismatch(format!(
                        "generator has {} entries, expected {}",
                        g.len(),
                        n * n
                    )))
                } else {
                    Ok(DMatrix::from_row_slice(n, n, g))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        let group = group_closure(&generators, max_order, MATCH_TOL)?;
        match (&self.k, &self.generator_images) {
            (Some(k), Some(images)) => {
                let perms = images
                    .iter()
                    .map(|p| Permutation::from_one_based(p))
                    .collect::<Result<Vec<_>>>()?;
                attach_homomorphism(&group, *k, &perms)
            }
            _ => Ok(group),
        }
    }
}

/// Reflection through the hyperplane orthogonal to `normal`.
pub fn reflection(normal: &[f64]) -> DMatrix<f64> {
    let n = normal.len();
    let norm2: f64 = normal.iter().map(|x| x * x).sum();
    DMatrix::from_fn(n, n, |r, c| {
        let delta = if r == c { 1.0 } else { 0.0 };
        delta - 2.0 * normal[r] * normal[c] / norm2
    })
}

/// Rotation by `angle` in the (x₁, x₂) plane, embedded in dimension `n`.
pub fn planar_rotation(n: usize, angle: f64) -> DMatrix<f64> {
    let mut m = DMatrix::identity(n, n);
    let (s, c) = angle.sin_cos();
    m[(0, 0)] = c;
    m[(0, 1)] = -s;
    m[(1, 0)] = s;
    m[(1, 1)] = c;
    m
}
