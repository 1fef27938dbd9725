//! Meshes of S¹ and S², P1 finite element operators and pullback transports.

mod build;
mod transport;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sprs::CsMat;

use crate::linalg;
use crate::{Error, Result};

pub use build::{build_circle_mesh, build_icosphere_mesh, build_latlong_mesh, build_octasphere_mesh, build_mesh};
pub use transport::{build_transports, Transport};

/// Tolerance for treating a mapped point as a mesh vertex.
pub const VERTEX_MATCH_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshBase {
    Circle,
    Icosahedron,
    Octahedron,
    Latlong,
}

impl MeshBase {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "circle" => Ok(MeshBase::Circle),
            "icosahedron" | "icosphere" => Ok(MeshBase::Icosahedron),
            "octahedron" | "octasphere" => Ok(MeshBase::Octahedron),
            "latlong" => Ok(MeshBase::Latlong),
            other => Err(Error::InvalidInput(format!("unknown mesh base `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            MeshBase::Circle => "circle",
            MeshBase::Icosahedron => "icosahedron",
            MeshBase::Octahedron => "octahedron",
            MeshBase::Latlong => "latlong",
        }
    }
}

/// Resolution parameters of a mesh, enough to rebuild it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeshSpec {
    pub base: MeshBase,
    /// Subdivision level for icosahedron and octahedron bases.
    #[serde(default)]
    pub level: usize,
    /// Vertex count for circles, longitudes per ring for latlong.
    #[serde(default)]
    pub n: usize,
    /// Number of latitude rings for latlong (odd).
    #[serde(default)]
    pub rings: usize,
}

impl MeshSpec {
    pub fn circle(n: usize) -> Self {
        MeshSpec { base: MeshBase::Circle, level: 0, n, rings: 0 }
    }

    pub fn icosahedron(level: usize) -> Self {
        MeshSpec { base: MeshBase::Icosahedron, level, n: 0, rings: 0 }
    }

    pub fn octahedron(level: usize) -> Self {
        MeshSpec { base: MeshBase::Octahedron, level, n: 0, rings: 0 }
    }

    pub fn latlong(rings: usize, n: usize) -> Self {
        MeshSpec { base: MeshBase::Latlong, level: 0, n, rings }
    }

    pub fn dimension(&self) -> usize {
        if self.base == MeshBase::Circle {
            2
        } else {
            3
        }
    }
}

#[derive(Clone, Debug)]
pub struct SphereMesh {
    pub(crate) spec: MeshSpec,
    pub(crate) dimension: usize,
    /// Unit vectors; the third coordinate is zero on S¹.
    pub(crate) vertices: Vec<[f64; 3]>,
    /// Segments on S¹, triangles on S².
    pub(crate) cells: Vec<Vec<usize>>,
    pub(crate) lumped: Vec<f64>,
    pub(crate) consistent: CsMat<f64>,
    pub(crate) stiffness: CsMat<f64>,
    pub(crate) transports: Vec<Transport>,
    pub(crate) group_exact: bool,
    pub(crate) hash: String,
}

impl SphereMesh {
    pub(crate) fn assemble(spec: MeshSpec, vertices: Vec<[f64; 3]>, cells: Vec<Vec<usize>>) -> Self {
        let dimension = spec.dimension();
        let n = vertices.len();
        let (lumped, consistent, stiffness) = if dimension == 2 {
            build::assemble_circle(&vertices, &cells)
        } else {
            build::assemble_surface(&vertices, &cells)
        };
        let hash = content_hash(&vertices, &cells);
        let mut mesh = SphereMesh {
            spec,
            dimension,
            vertices,
            cells,
            lumped,
            consistent,
            stiffness,
            transports: Vec::new(),
            group_exact: false,
            hash,
        };
        mesh.transports.clear();
        debug_assert_eq!(mesh.lumped.len(), n);
        mesh
    }

    pub fn spec(&self) -> MeshSpec {
        self.spec
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn vertices(&self) -> &[[f64; 3]] {
        &self.vertices
    }

    pub fn vertex(&self, v: usize) -> &[f64] {
        &self.vertices[v][..self.dimension]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    /// Lumped vertex masses, the diagonal of the default mass operator.
    pub fn mass(&self) -> &[f64] {
        &self.lumped
    }

    pub fn consistent_mass(&self) -> &CsMat<f64> {
        &self.consistent
    }

    pub fn stiffness(&self) -> &CsMat<f64> {
        &self.stiffness
    }

    pub fn total_mass(&self) -> f64 {
        self.lumped.iter().sum()
    }

    /// `fᵀ M f` with the lumped mass.
    pub fn mass_norm2(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.lumped).map(|(x, m)| m * x * x).sum()
    }

    /// `fᵀ K f`.
    pub fn energy(&self, f: &[f64]) -> f64 {
        linalg::quadratic_form(&self.stiffness, f)
    }

    /// `y = K f`.
    pub fn apply_stiffness(&self, f: &[f64], y: &mut [f64]) {
        linalg::matvec(&self.stiffness, f, y);
    }

    /// Hex-encoded SHA-256 of the vertex coordinates and cells.
    pub fn content_hash(&self) -> &str {
        &self.hash
    }

    pub fn transports(&self) -> &[Transport] {
        &self.transports
    }

    /// Pullback operator of element `id`: `(A_g f)(v) = f(g v)`.
    pub fn transport(&self, id: usize) -> Result<&Transport> {
        self.transports
            .get(id)
            .ok_or(Error::MissingTransport { element: id })
    }

    /// True when every transport is a vertex permutation.
    pub fn is_group_exact(&self) -> bool {
        self.group_exact && !self.transports.is_empty()
    }

    /// Samples a function of the ambient coordinates at the vertices.
    pub fn sample<F: Fn(&[f64]) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.n_vertices()).map(|v| f(self.vertex(v))).collect()
    }

    pub fn document(&self) -> MeshDocument {
        MeshDocument {
            dimension: self.dimension,
            spec: self.spec,
            vertices: self.vertices.iter().map(|p| p[..self.dimension].to_vec()).collect(),
            cells: self.cells.clone(),
            hash: self.hash.clone(),
        }
    }
}

fn content_hash(vertices: &[[f64; 3]], cells: &[Vec<usize>]) -> String {
    let mut h = Sha256::new();
    for p in vertices {
        for x in p {
            h.update(format!("{x:.12e};").as_bytes());
        }
    }
    for c in cells {
        for i in c {
            h.update(i.to_le_bytes());
        }
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshDocument {
    pub dimension: usize,
    pub spec: MeshSpec,
    pub vertices: Vec<Vec<f64>>,
    pub cells: Vec<Vec<usize>>,
    pub hash: String,
}

/// Per-component target mass used when normalizing a field.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    Unit,
    OverK,
}

#[derive(Clone, Debug)]
pub struct Field {
    /// `k × n_vertices` nodal values.
    pub values: Array2<f64>,
    pub mesh_hash: String,
    pub normalization: Normalization,
}

impl Field {
    pub fn new(mesh: &SphereMesh, values: Array2<f64>) -> Result<Self> {
        if values.ncols() != mesh.n_vertices() {
            return Err(Error::DimensionMismatch(format!(
                "field has {} nodes, mesh has {} vertices",
                values.ncols(),
                mesh.n_vertices()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("field has non-finite entries".into()));
        }
        Ok(Field {
            values: values.as_standard_layout().to_owned(),
            mesh_hash: mesh.content_hash().to_string(),
            normalization: Normalization::Unit,
        })
    }

    pub fn from_components(mesh: &SphereMesh, components: &[Vec<f64>]) -> Result<Self> {
        let n = mesh.n_vertices();
        let mut values = Array2::zeros((components.len(), n));
        for (i, c) in components.iter().enumerate() {
            if c.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "component {i} has {} nodes, mesh has {n}",
                    c.len()
                )));
            }
            values.row_mut(i).assign(&ndarray::ArrayView1::from(c.as_slice()));
        }
        Self::new(mesh, values)
    }

    pub fn zeros(mesh: &SphereMesh, k: usize) -> Self {
        Field {
            values: Array2::zeros((k, mesh.n_vertices())),
            mesh_hash: mesh.content_hash().to_string(),
            normalization: Normalization::Unit,
        }
    }

    pub fn with_values(&self, values: Array2<f64>) -> Self {
        Field {
            values,
            mesh_hash: self.mesh_hash.clone(),
            normalization: self.normalization,
        }
    }

    pub fn k(&self) -> usize {
        self.values.nrows()
    }

    pub fn n(&self) -> usize {
        self.values.ncols()
    }

    pub fn component(&self, i: usize) -> &[f64] {
        self.values.row(i).to_slice().expect("standard layout")
    }

    pub fn component_mut(&mut self, i: usize) -> &mut [f64] {
        self.values.row_mut(i).into_slice().expect("standard layout")
    }

    pub fn masses(&self, mesh: &SphereMesh) -> Vec<f64> {
        (0..self.k()).map(|i| mesh.mass_norm2(self.component(i))).collect()
    }

    pub fn target_mass(&self) -> f64 {
        match self.normalization {
            Normalization::Unit => 1.0,
            Normalization::OverK => 1.0 / self.k() as f64,
        }
    }

    /// Rescales each component to the target mass.
    pub fn normalize(&mut self, mesh: &SphereMesh) -> Result<()> {
        let target = self.target_mass();
        for i in 0..self.k() {
            let m = mesh.mass_norm2(self.component(i));
            if m < 1e-30 {
                return Err(Error::ZeroComponent { component: i });
            }
            let s = (target / m).sqrt();
            self.component_mut(i).iter_mut().for_each(|v| *v *= s);
        }
        Ok(())
    }

    pub fn document(&self) -> FieldDocument {
        FieldDocument {
            mesh_hash: self.mesh_hash.clone(),
            k: self.k(),
            n: self.n(),
            normalization: self.normalization,
            values: self.values.iter().copied().collect(),
        }
    }
}

/// Flat structured-text form of a field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FieldDocument {
    pub mesh_hash: String,
    pub k: usize,
    pub n: usize,
    pub normalization: Normalization,
    /// Row-major `k × n` values.
    pub values: Vec<f64>,
}

impl FieldDocument {
    pub fn to_field(&self, mesh: &SphereMesh) -> Result<Field> {
        if self.mesh_hash != mesh.content_hash() {
            return Err(Error::IncompatibleMesh(format!(
                "field was written for mesh {}, got {}",
                self.mesh_hash,
                mesh.content_hash()
            )));
        }
        if self.values.len() != self.k * self.n {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {}x{} field",
                self.values.len(),
                self.k,
                self.n
            )));
        }
        let values = Array2::from_shape_vec((self.k, self.n), self.values.clone())
            .map_err(|e| Error::DimensionMismatch(e.to_string()))?;
        let mut f = Field::new(mesh, values)?;
        f.normalization = self.normalization;
        Ok(f)
    }
}

/// `uᵢᵀ K uᵢ / uᵢᵀ M uᵢ`.
pub fn rayleigh(mesh: &SphereMesh, field: &Field, i: usize) -> Result<f64> {
    rayleigh_values(mesh, field.component(i)).map_err(|_| Error::ZeroComponent { component: i })
}

/// Rayleigh quotient of a single nodal vector.
pub fn rayleigh_values(mesh: &SphereMesh, f: &[f64]) -> Result<f64> {
    let den = mesh.mass_norm2(f);
    if den < 1e-30 {
        return Err(Error::ZeroComponent { component: 0 });
    }
    Ok(mesh.energy(f) / den)
}

/// Surface measure of S^{N−1}.
pub fn sphere_measure(dimension: usize) -> f64 {
    match dimension {
        2 => 2.0 * std::f64::consts::PI,
        _ => 4.0 * std::f64::consts::PI,
    }
}
