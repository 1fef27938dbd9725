//! Built-in admissible triplets with closed-form witnesses.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::sphere::{build_mesh, build_transports, Field, MeshSpec, SphereMesh, VERTEX_MATCH_TOL};
use crate::symmetry::{
    admissibility_check, attach_homomorphism, group_closure, planar_rotation, reflection,
    AdmissibilityReport, AdmissibilityTolerances, AdmissibleTriplet, Permutation, SymmetryGroup,
    MATCH_TOL,
};
use crate::{Error, Result};

const MAX_ORDER: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    /// Coordinate reflections in R³, each swapping the two components.
    Xyz,
    /// Reflections of S¹ across the nodal lines of `cos(dθ)`.
    Dihedral(usize),
    /// Vertical nodal planes of `cos(dφ)` and the horizontal plane in R³.
    Prism(usize),
    /// Rotation by `π/d` acting as a k-cycle plus the conjugation `y ↦ −y`,
    /// with `d = mk/2`.
    Rotation { k: usize, m: usize },
    /// Three lunes of S² under the order-6 dihedral group about the z axis.
    Y3,
    /// Tetrahedral group permuting the four face bumps.
    Tetrahedron,
    /// Octahedral group permuting the six face bumps of the cube.
    Cube6,
    /// Octahedral group permuting the three pairs of opposite cube faces.
    Cube3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    /// Degree of an explicit homogeneous harmonic or eigenfunction.
    ClosedForm,
    /// Stated without a supporting computation.
    Asserted,
    Unknown,
}

#[derive(Clone, Debug, Serialize)]
pub struct CatalogEntry {
    pub id: String,
    #[serde(skip)]
    pub kind: Kind,
    pub k: usize,
    pub description: String,
    pub mesh: MeshSpec,
    pub ell_reference: Option<f64>,
    pub provenance: Provenance,
}

/// A mesh carrying transports for the entry's group, and the triplet on it.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub mesh: SphereMesh,
    pub triplet: AdmissibleTriplet,
}

/// Ids of the entries listed by default.
pub const DEFAULT_IDS: &[&str] = &[
    "xyz_r3",
    "dihedral2d:1",
    "dihedral2d:2",
    "dihedral2d:3",
    "prism3d:2",
    "rot2d:3:2",
    "y3_s2",
    "tetra_k4",
    "cube_k6",
    "cube_k3",
];

pub fn list() -> Vec<CatalogEntry> {
    DEFAULT_IDS
        .iter()
        .map(|id| entry(id).expect("default ids parse"))
        .collect()
}

fn parse_params(id: &str) -> (String, Vec<usize>, bool) {
    let normalized = id.replace(['(', ',', ')'], ":");
    let mut parts = normalized.split(':').filter(|s| !s.is_empty());
    let name = parts.next().unwrap_or_default().to_string();
    let mut ok = true;
    let params = parts
        .map(|p| {
            p.trim().parse::<usize>().unwrap_or_else(|_| {
                ok = false;
                0
            })
        })
        .collect();
    (name, params, ok)
}

/// Circle resolution near 2048 compatible with the reflection lines of
/// `cos(dθ)`.
fn circle_size(d: usize) -> usize {
    let step = 2 * d;
    2048usize.div_ceil(step) * step
}

pub fn entry(id: &str) -> Result<CatalogEntry> {
    let unknown = || Error::UnknownId(id.to_string());
    let (name, params, ok) = parse_params(id);
    if !ok {
        return Err(unknown());
    }
    let (kind, canonical) = match (name.as_str(), params.as_slice()) {
        ("xyz_r3", []) => (Kind::Xyz, "xyz_r3".to_string()),
        ("dihedral2d", [d]) if *d >= 1 => (Kind::Dihedral(*d), format!("dihedral2d:{d}")),
        ("prism3d", [d]) if *d >= 1 => (Kind::Prism(*d), format!("prism3d:{d}")),
        ("rot2d", [k, m]) if *k >= 2 && *m >= 1 && (k * m) % 2 == 0 => {
            (Kind::Rotation { k: *k, m: *m }, format!("rot2d:{k}:{m}"))
        }
        ("y3_s2", []) => (Kind::Y3, "y3_s2".to_string()),
        ("tetra_k4", []) => (Kind::Tetrahedron, "tetra_k4".to_string()),
        ("cube_k6", []) => (Kind::Cube6, "cube_k6".to_string()),
        ("cube_k3", []) => (Kind::Cube3, "cube_k3".to_string()),
        _ => return Err(unknown()),
    };
    let e = match kind {
        Kind::Xyz => CatalogEntry {
            id: canonical,
            kind,
            k: 2,
            description: "coordinate reflections of R^3 swapping ((xyz)+, (xyz)-)".into(),
            mesh: MeshSpec::octahedron(4),
            ell_reference: Some(3.0),
            provenance: Provenance::ClosedForm,
        },
        Kind::Dihedral(d) => CatalogEntry {
            id: canonical,
            kind,
            k: 2,
            description: format!("reflections of S^1 across the nodal lines of cos({d}t), witness cos({d}t)+-"),
            mesh: MeshSpec::circle(circle_size(d)),
            ell_reference: Some(d as f64),
            provenance: Provenance::ClosedForm,
        },
        Kind::Prism(d) => CatalogEntry {
            id: canonical,
            kind,
            k: 2,
            description: format!("nodal planes of Re((x+iy)^{d}) z, witness (Re((x+iy)^{d}) z)+-"),
            mesh: if d <= 2 {
                MeshSpec::octahedron(4)
            } else {
                MeshSpec::latlong(31, 64usize.div_ceil(2 * d) * 2 * d)
            },
            ell_reference: Some(d as f64 + 1.0),
            provenance: Provenance::ClosedForm,
        },
        Kind::Rotation { k, m } => {
            let d = m * k / 2;
            CatalogEntry {
                id: canonical,
                kind,
                k,
                description: format!(
                    "rotation by pi/{d} cycling {k} components, conjugation y -> -y, sectors of cos({d}t)"
                ),
                mesh: MeshSpec::circle(circle_size(d)),
                ell_reference: Some(d as f64),
                provenance: Provenance::Asserted,
            }
        }
        Kind::Y3 => CatalogEntry {
            id: canonical,
            kind,
            k: 3,
            description: "rotation by 2pi/3 about z and the reflection y -> -y, three lunes".into(),
            mesh: MeshSpec::latlong(47, 96),
            ell_reference: Some(1.5),
            provenance: Provenance::ClosedForm,
        },
        Kind::Tetrahedron => CatalogEntry {
            id: canonical,
            kind,
            k: 4,
            description: "tetrahedral group permuting four spherical face bumps".into(),
            mesh: MeshSpec::octahedron(4),
            ell_reference: None,
            provenance: Provenance::Unknown,
        },
        Kind::Cube6 => CatalogEntry {
            id: canonical,
            kind,
            k: 6,
            description: "octahedral group permuting six spherical face bumps of the cube".into(),
            mesh: MeshSpec::octahedron(4),
            ell_reference: None,
            provenance: Provenance::Unknown,
        },
        Kind::Cube3 => CatalogEntry {
            id: canonical,
            kind,
            k: 3,
            description: "octahedral group permuting three pairs of opposite cube face bumps".into(),
            mesh: MeshSpec::octahedron(4),
            ell_reference: None,
            provenance: Provenance::Unknown,
        },
    };
    Ok(e)
}

fn mat3(rows: [[f64; 3]; 3]) -> DMatrix<f64> {
    DMatrix::from_fn(3, 3, |r, c| rows[r][c])
}

/// Reflection of the plane across the line through the origin at `angle`.
fn line_reflection(angle: f64) -> DMatrix<f64> {
    reflection(&[-angle.sin(), angle.cos()])
}

/// Index permutation induced on `points` by `g`, up to the sign `±` when
/// `antipodal` is set.
fn induced_permutation(g: &DMatrix<f64>, points: &[[f64; 3]], antipodal: bool) -> Result<Permutation> {
    let images = points
        .iter()
        .map(|p| {
            let q = g * nalgebra::DVector::from_column_slice(p);
            points
                .iter()
                .position(|r| {
                    let d: f64 = (0..3).map(|c| (q[c] - r[c]).powi(2)).sum::<f64>().sqrt();
                    let e: f64 = (0..3).map(|c| (q[c] + r[c]).powi(2)).sum::<f64>().sqrt();
                    d < 1e-9 || (antipodal && e < 1e-9)
                })
                .ok_or_else(|| Error::InvalidInput("generator does not permute the points".into()))
        })
        .collect::<Result<Vec<_>>>()?;
    Permutation::new(images)
}

const TETRA_VERTICES: [[f64; 3]; 4] = [
    [1.0, 1.0, 1.0],
    [1.0, -1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
];

const CUBE_FACES: [[f64; 3]; 6] = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [0.0, 0.0, 1.0],
    [-1.0, 0.0, 0.0],
    [0.0, -1.0, 0.0],
    [0.0, 0.0, -1.0],
];

fn swap_xy() -> DMatrix<f64> {
    mat3([[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
}

fn swap_xz() -> DMatrix<f64> {
    mat3([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]])
}

fn swap_yz() -> DMatrix<f64> {
    mat3([[1.0, 0.0, 0.0], [0.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
}

impl CatalogEntry {
    /// The symmetry group with its homomorphism attached.
    pub fn group(&self) -> Result<SymmetryGroup> {
        let k = self.k;
        let swap = Permutation::transposition(2, 0, 1);
        let (generators, images): (Vec<DMatrix<f64>>, Vec<Permutation>) = match self.kind {
            Kind::Xyz => (
                vec![
                    reflection(&[1.0, 0.0, 0.0]),
                    reflection(&[0.0, 1.0, 0.0]),
                    reflection(&[0.0, 0.0, 1.0]),
                ],
                vec![swap.clone(), swap.clone(), swap],
            ),
            Kind::Dihedral(d) => {
                let gens: Vec<_> = (0..d.min(2))
                    .map(|j| line_reflection(PI / (2.0 * d as f64) + j as f64 * PI / d as f64))
                    .collect();
                let n = gens.len();
                (gens, vec![swap; n])
            }
            Kind::Prism(d) => {
                let mut gens: Vec<_> = (0..d.min(2))
                    .map(|j| {
                        let a = PI / (2.0 * d as f64) + j as f64 * PI / d as f64;
                        reflection(&[-a.sin(), a.cos(), 0.0])
                    })
                    .collect();
                gens.push(reflection(&[0.0, 0.0, 1.0]));
                let n = gens.len();
                (gens, vec![swap; n])
            }
            Kind::Rotation { k, m } => {
                let d = m * k / 2;
                let conj = Permutation::new((0..k).map(|i| (k - i) % k).collect())?;
                (
                    vec![planar_rotation(2, PI / d as f64), reflection(&[0.0, 1.0])],
                    vec![Permutation::cycle(k), conj],
                )
            }
            Kind::Y3 => (
                vec![planar_rotation(3, 2.0 * PI / 3.0), reflection(&[0.0, 1.0, 0.0])],
                vec![Permutation::cycle(3), Permutation::transposition(3, 1, 2)],
            ),
            Kind::Tetrahedron => {
                let gens = vec![
                    swap_xy(),
                    swap_xz(),
                    swap_yz(),
                    mat3([[1.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, -1.0]]),
                ];
                let images = gens
                    .iter()
                    .map(|g| induced_permutation(g, &TETRA_VERTICES, false))
                    .collect::<Result<Vec<_>>>()?;
                (gens, images)
            }
            Kind::Cube6 | Kind::Cube3 => {
                let gens = vec![swap_xy(), swap_yz(), reflection(&[1.0, 0.0, 0.0])];
                let images = gens
                    .iter()
                    .map(|g| {
                        if k == 6 {
                            induced_permutation(g, &CUBE_FACES, false)
                        } else {
                            induced_permutation(g, &CUBE_FACES[..3], true)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                (gens, images)
            }
        };
        let group = group_closure(&generators, MAX_ORDER, MATCH_TOL)?;
        attach_homomorphism(&group, k, &images)
    }

    /// Closed-form witness sampled at the vertices of `mesh`, normalized to
    /// unit mass per component.
    pub fn witness(&self, mesh: &SphereMesh) -> Result<Field> {
        let dim = if matches!(self.kind, Kind::Dihedral(_) | Kind::Rotation { .. }) {
            2
        } else {
            3
        };
        if mesh.dimension() != dim {
            return Err(Error::IncompatibleMesh(format!(
                "{} lives on S^{}, mesh is S^{}",
                self.id,
                dim - 1,
                mesh.dimension() - 1
            )));
        }
        let mut field = match self.kind {
            Kind::Xyz => sign_pair(mesh, |x| x[0] * x[1] * x[2])?,
            Kind::Dihedral(d) => sign_pair(mesh, |x| (d as f64 * x[1].atan2(x[0])).cos())?,
            Kind::Prism(d) => sign_pair(mesh, |x| {
                x[0].hypot(x[1]).powi(d as i32) * (d as f64 * x[1].atan2(x[0])).cos() * x[2]
            })?,
            Kind::Rotation { k, m } => rotation_sectors(mesh, k, m * k / 2)?,
            Kind::Y3 => lunes(mesh)?,
            Kind::Tetrahedron => face_bump_witness(Polyhedron::Tetrahedron, mesh, Pairing::None)?,
            Kind::Cube6 => face_bump_witness(Polyhedron::Cube, mesh, Pairing::None)?,
            Kind::Cube3 => face_bump_witness(Polyhedron::Cube, mesh, Pairing::Opposite)?,
        };
        field.normalize(mesh)?;
        Ok(field)
    }

    /// Builds the recommended mesh, or `spec` when given, with transports.
    pub fn prepare(&self, spec: Option<MeshSpec>) -> Result<Prepared> {
        let mesh = build_mesh(spec.unwrap_or(self.mesh))?;
        self.prepare_on(&mesh)
    }

    pub fn prepare_on(&self, mesh: &SphereMesh) -> Result<Prepared> {
        let group = self.group()?;
        let mesh = build_transports(mesh, &group, VERTEX_MATCH_TOL)?;
        let witness = self.witness(&mesh)?;
        let mut triplet = AdmissibleTriplet {
            k: self.k,
            group,
            witness,
            transfer: vec![0; self.k],
        };
        let report = admissibility_check(
            &triplet,
            &mesh,
            AdmissibilityTolerances::for_witness(&triplet.witness),
        )?;
        for (slot, found) in triplet.transfer.iter_mut().zip(&report.transfers) {
            *slot = found.unwrap_or(0);
        }
        Ok(Prepared { mesh, triplet })
    }

    /// Admissibility report of the witness on its prepared mesh.
    pub fn check(prepared: &Prepared) -> Result<AdmissibilityReport> {
        admissibility_check(
            &prepared.triplet,
            &prepared.mesh,
            AdmissibilityTolerances::for_witness(&prepared.triplet.witness),
        )
    }
}

fn sign_pair<F: Fn(&[f64]) -> f64>(mesh: &SphereMesh, f: F) -> Result<Field> {
    let values = mesh.sample(f);
    let plus: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    let minus: Vec<f64> = values.iter().map(|v| (-v).max(0.0)).collect();
    Field::from_components(mesh, &[plus, minus])
}

/// Angular sector index `t` of width `π/d` centred at `tπ/d`, and the
/// distance of `θ` from that centre.
fn sector(theta: f64, d: usize) -> (usize, f64) {
    let w = PI / d as f64;
    let s = (theta / w).round();
    let t = (s as i64).rem_euclid(2 * d as i64) as usize;
    (t, theta - s * w)
}

fn rotation_sectors(mesh: &SphereMesh, k: usize, d: usize) -> Result<Field> {
    let n = mesh.n_vertices();
    let mut comps = vec![vec![0.0; n]; k];
    for v in 0..n {
        let x = mesh.vertex(v);
        let (t, offset) = sector(x[1].atan2(x[0]), d);
        comps[t % k][v] = (d as f64 * offset).cos().max(0.0);
    }
    Field::from_components(mesh, &comps)
}

/// `(sin θ)^{3/2} cos(3φ/2)` on the lune `|φ − 2πj/3| < π/3`, component `j`.
fn lunes(mesh: &SphereMesh) -> Result<Field> {
    let n = mesh.n_vertices();
    let mut comps = vec![vec![0.0; n]; 3];
    for v in 0..n {
        let x = mesh.vertex(v);
        let rho = x[0].hypot(x[1]);
        if rho < 1e-14 {
            continue;
        }
        let phi = x[1].atan2(x[0]);
        let w = 2.0 * PI / 3.0;
        let s = (phi / w).round();
        let j = (s as i64).rem_euclid(3) as usize;
        let offset = phi - s * w;
        comps[j][v] = rho.powf(1.5) * (1.5 * offset).cos().max(0.0);
    }
    Field::from_components(mesh, &comps)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Polyhedron {
    Tetrahedron,
    Cube,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Pairing {
    None,
    /// Sum the bumps of opposite faces into one component.
    Opposite,
}

/// One bump per face of the polyhedron, radially projected to S²: the
/// smallest margin by which a point is closer to its own face centre than to
/// any other, which vanishes on the projected face boundary.
pub fn face_bump_witness(polyhedron: Polyhedron, mesh: &SphereMesh, pairing: Pairing) -> Result<Field> {
    if mesh.dimension() != 3 {
        return Err(Error::IncompatibleMesh("face bumps need a mesh of S^2".into()));
    }
    let centers: Vec<[f64; 3]> = match polyhedron {
        // the face opposite vertex a has outward centre −a
        Polyhedron::Tetrahedron => TETRA_VERTICES
            .iter()
            .map(|a| {
                let s = 3f64.sqrt();
                [-a[0] / s, -a[1] / s, -a[2] / s]
            })
            .collect(),
        Polyhedron::Cube => CUBE_FACES.to_vec(),
    };
    if pairing == Pairing::Opposite && polyhedron != Polyhedron::Cube {
        return Err(Error::InvalidInput("opposite pairing needs a centrally symmetric polyhedron".into()));
    }
    let n = mesh.n_vertices();
    let faces = centers.len();
    let mut bumps = vec![vec![0.0; n]; faces];
    for v in 0..n {
        let x = mesh.vertex(v);
        let proj: Vec<f64> = centers.iter().map(|c| c[0] * x[0] + c[1] * x[1] + c[2] * x[2]).collect();
        for i in 0..faces {
            let margin = (0..faces)
                .filter(|&j| j != i)
                .map(|j| proj[i] - proj[j])
                .fold(f64::INFINITY, f64::min);
            bumps[i][v] = margin.max(0.0);
        }
    }
    let comps = match pairing {
        Pairing::None => bumps,
        Pairing::Opposite => (0..3)
            .map(|i| bumps[i].iter().zip(&bumps[i + 3]).map(|(a, b)| a + b).collect())
            .collect(),
    };
    Field::from_components(mesh, &comps)
}
