use std::collections::HashMap;
use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use sprs::CsMat;

use super::build::{cross, dot3, sub};
use super::{SphereMesh, VERTEX_MATCH_TOL};
use crate::linalg::{csr_from_triplets, matvec};
use crate::symmetry::SymmetryGroup;
use crate::{Error, Result};

/// Discrete pullback `f ↦ f∘g` on nodal values.
#[derive(Clone, Debug)]
pub enum Transport {
    /// `(A f)(v) = f(perm[v])`.
    Permutation(Vec<usize>),
    Interpolation(CsMat<f64>),
}

impl Transport {
    pub fn apply(&self, src: &[f64], dst: &mut [f64]) {
        match self {
            Transport::Permutation(p) => {
                for (d, &s) in dst.iter_mut().zip(p) {
                    *d = src[s];
                }
            }
            Transport::Interpolation(a) => matvec(a, src, dst),
        }
    }

    pub fn is_permutation(&self) -> bool {
        matches!(self, Transport::Permutation(_))
    }

    pub fn to_matrix(&self) -> CsMat<f64> {
        match self {
            Transport::Permutation(p) => {
                let entries: Vec<_> = p.iter().enumerate().map(|(v, &s)| (v, s, 1.0)).collect();
                csr_from_triplets(p.len(), &entries)
            }
            Transport::Interpolation(a) => a.clone(),
        }
    }
}

/// Returns a copy of `mesh` carrying one pullback operator per group element,
/// indexed by element id.
pub fn build_transports(mesh: &SphereMesh, group: &SymmetryGroup, tol: f64) -> Result<SphereMesh> {
    if group.dimension() != mesh.dimension() {
        return Err(Error::DimensionMismatch(format!(
            "group acts on R^{}, mesh lives in R^{}",
            group.dimension(),
            mesh.dimension()
        )));
    }
    let locator = Locator::new(mesh, tol);
    let mut transports = Vec::with_capacity(group.order());
    let mut exact = true;
    for element in group.elements() {
        let mut perm = Vec::with_capacity(mesh.n_vertices());
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(mesh.n_vertices());
        let mut all_matched = true;
        for v in 0..mesh.n_vertices() {
            let q = element.apply(mesh.vertex(v));
            let weights = locator.locate(&q, v)?;
            if weights.len() == 1 && all_matched {
                perm.push(weights[0].0);
            } else {
                all_matched = false;
            }
            rows.push(weights);
        }
        if all_matched {
            transports.push(Transport::Permutation(perm));
        } else {
            exact = false;
            let entries: Vec<_> = rows
                .iter()
                .enumerate()
                .flat_map(|(v, w)| w.iter().map(move |&(s, x)| (v, s, x)))
                .collect();
            transports.push(Transport::Interpolation(csr_from_triplets(
                mesh.n_vertices(),
                &entries,
            )));
        }
    }
    let mut out = mesh.clone();
    out.transports = transports;
    out.group_exact = exact;
    Ok(out)
}

struct Locator<'a> {
    mesh: &'a SphereMesh,
    tol: f64,
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<usize>>,
    incident: Vec<Vec<usize>>,
}

impl<'a> Locator<'a> {
    fn new(mesh: &'a SphereMesh, tol: f64) -> Self {
        let tol = if tol > 0.0 { tol } else { VERTEX_MATCH_TOL };
        let cell = 1e-3;
        let mut buckets: HashMap<(i64, i64, i64), Vec<usize>> = HashMap::new();
        for (v, p) in mesh.vertices.iter().enumerate() {
            buckets.entry(key(p, cell)).or_default().push(v);
        }
        let mut incident = vec![Vec::new(); mesh.n_vertices()];
        if mesh.dimension == 3 {
            for (c, cell) in mesh.cells.iter().enumerate() {
                for &v in cell {
                    incident[v].push(c);
                }
            }
        }
        Locator {
            mesh,
            tol,
            cell,
            buckets,
            incident,
        }
    }

    fn exact_match(&self, q: &[f64; 3]) -> Option<usize> {
        let (a, b, c) = key(q, self.cell);
        for da in -1..=1 {
            for db in -1..=1 {
                for dc in -1..=1 {
                    if let Some(list) = self.buckets.get(&(a + da, b + db, c + dc)) {
                        for &v in list {
                            let p = &self.mesh.vertices[v];
                            let d = sub(p, q);
                            if dot3(&d, &d).sqrt() <= self.tol {
                                return Some(v);
                            }
                        }
                    }
                }
            }
        }
        None
    }

    /// Interpolation weights for the mapped image of vertex `v`.
    fn locate(&self, q: &[f64], v: usize) -> Result<Vec<(usize, f64)>> {
        let q3 = [q[0], q[1], if q.len() > 2 { q[2] } else { 0.0 }];
        if let Some(w) = self.exact_match(&q3) {
            return Ok(vec![(w, 1.0)]);
        }
        if self.mesh.dimension == 2 {
            self.locate_circle(&q3, v)
        } else {
            self.locate_surface(&q3, v)
        }
    }

    fn locate_circle(&self, q: &[f64; 3], v: usize) -> Result<Vec<(usize, f64)>> {
        let angle = q[1].atan2(q[0]);
        for cell in &self.mesh.cells {
            let (a, b) = (cell[0], cell[1]);
            let pa = &self.mesh.vertices[a];
            let pb = &self.mesh.vertices[b];
            let ta = pa[1].atan2(pa[0]);
            let mut span = pb[1].atan2(pb[0]) - ta;
            if span <= 0.0 {
                span += 2.0 * PI;
            }
            let mut off = angle - ta;
            while off < 0.0 {
                off += 2.0 * PI;
            }
            if off <= span {
                let s = off / span;
                return Ok(vec![(a, 1.0 - s), (b, s)]);
            }
        }
        Err(Error::PointLocationFailure { vertex: v })
    }

    fn locate_surface(&self, q: &[f64; 3], v: usize) -> Result<Vec<(usize, f64)>> {
        let nearest = (0..self.mesh.n_vertices())
            .min_by(|&a, &b| {
                let da = sub(&self.mesh.vertices[a], q);
                let db = sub(&self.mesh.vertices[b], q);
                dot3(&da, &da).partial_cmp(&dot3(&db, &db)).unwrap()
            })
            .ok_or(Error::PointLocationFailure { vertex: v })?;
        let candidates = self.incident[nearest]
            .iter()
            .copied()
            .chain(0..self.mesh.cells.len());
        for c in candidates {
            if let Some(w) = self.barycentric(c, q) {
                return Ok(w);
            }
        }
        Err(Error::PointLocationFailure { vertex: v })
    }

    /// Weights of the central projection of `q` onto flat triangle `c`.
    fn barycentric(&self, c: usize, q: &[f64; 3]) -> Option<Vec<(usize, f64)>> {
        let cell = &self.mesh.cells[c];
        let p = [cell[0], cell[1], cell[2]].map(|i| self.mesh.vertices[i]);
        let normal = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
        if dot3(&normal, q) * dot3(&normal, &p[0]) <= 0.0 {
            return None;
        }
        let m = Matrix3::from_columns(&[
            Vector3::from(p[0]),
            Vector3::from(p[1]),
            Vector3::from(p[2]),
        ]);
        let w = m.lu().solve(&Vector3::from(*q))?;
        if w.iter().any(|&x| x < -1e-12) {
            return None;
        }
        let s = w.sum();
        Some(
            cell.iter()
                .zip(w.iter())
                .filter(|(_, &x)| x > 0.0)
                .map(|(&i, &x)| (i, x / s))
                .collect(),
        )
    }
}

fn key(p: &[f64; 3], cell: f64) -> (i64, i64, i64) {
    (
        (p[0] / cell).round() as i64,
        (p[1] / cell).round() as i64,
        (p[2] / cell).round() as i64,
    )
}
