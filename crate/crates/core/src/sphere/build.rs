use std::collections::HashMap;
use std::f64::consts::PI;

use sprs::CsMat;

use super::{MeshBase, MeshSpec, SphereMesh};
use crate::linalg::csr_from_triplets;
use crate::{Error, Result};

pub fn build_mesh(spec: MeshSpec) -> Result<SphereMesh> {
    match spec.base {
        MeshBase::Circle => build_circle_mesh(spec.n),
        MeshBase::Icosahedron => build_icosphere_mesh(spec.level),
        MeshBase::Octahedron => build_octasphere_mesh(spec.level),
        MeshBase::Latlong => build_latlong_mesh(spec.rings, spec.n),
    }
}

/// `n` equispaced vertices at angles `2πj/n`.
pub fn build_circle_mesh(n: usize) -> Result<SphereMesh> {
    if n < 3 {
        return Err(Error::InvalidInput(format!("circle mesh needs n >= 3, got {n}")));
    }
    let vertices = (0..n)
        .map(|j| {
            let t = 2.0 * PI * j as f64 / n as f64;
            [t.cos(), t.sin(), 0.0]
        })
        .collect();
    let cells = (0..n).map(|j| vec![j, (j + 1) % n]).collect();
    Ok(SphereMesh::assemble(MeshSpec::circle(n), vertices, cells))
}

pub fn build_icosphere_mesh(level: usize) -> Result<SphereMesh> {
    check_level(level)?;
    let phi = (1.0 + 5.0_f64.sqrt()) / 2.0;
    let mut vertices = Vec::new();
    for &(a, b) in &[(1.0, phi), (1.0, -phi), (-1.0, phi), (-1.0, -phi)] {
        vertices.push([0.0, a, b]);
        vertices.push([a, b, 0.0]);
        vertices.push([b, 0.0, a]);
    }
    let vertices: Vec<[f64; 3]> = vertices.into_iter().map(normalized).collect();
    // faces are the triples of mutually adjacent vertices
    let edge = distance(&vertices[0], &nearest_other(&vertices, 0));
    let adjacent = |a: usize, b: usize| (distance(&vertices[a], &vertices[b]) - edge).abs() < 1e-9;
    let mut faces = Vec::new();
    for a in 0..12 {
        for b in (a + 1)..12 {
            for c in (b + 1)..12 {
                if adjacent(a, b) && adjacent(b, c) && adjacent(a, c) {
                    faces.push(oriented([a, b, c], &vertices));
                }
            }
        }
    }
    let (vertices, faces) = subdivide(vertices, faces, level);
    Ok(SphereMesh::assemble(
        MeshSpec::icosahedron(level),
        vertices,
        faces.into_iter().map(|f| f.to_vec()).collect(),
    ))
}

/// Subdivided octahedron with vertices `±e_i`; invariant under the full
/// octahedral group.
pub fn build_octasphere_mesh(level: usize) -> Result<SphereMesh> {
    check_level(level)?;
    let vertices = vec![
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, -1.0],
    ];
    let mut faces = Vec::new();
    for &x in &[0, 3] {
        for &y in &[1, 4] {
            for &z in &[2, 5] {
                faces.push(oriented([x, y, z], &vertices));
            }
        }
    }
    let (vertices, faces) = subdivide(vertices, faces, level);
    Ok(SphereMesh::assemble(
        MeshSpec::octahedron(level),
        vertices,
        faces.into_iter().map(|f| f.to_vec()).collect(),
    ))
}

/// Latitude rings at polar angles `π(r+1)/(rings+1)` with `n` vertices each,
/// alternate rings offset by half a step, plus both poles. With an odd ring
/// count the mesh is invariant under `z ↦ −z`, `φ ↦ −φ` and rotations by
/// `2π/n` about the z axis.
pub fn build_latlong_mesh(rings: usize, n: usize) -> Result<SphereMesh> {
    if rings == 0 || rings % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "latlong mesh needs an odd ring count, got {rings}"
        )));
    }
    if n < 3 {
        return Err(Error::InvalidInput(format!(
            "latlong mesh needs at least 3 longitudes, got {n}"
        )));
    }
    let mut vertices = vec![[0.0, 0.0, 1.0]];
    for r in 0..rings {
        let theta = PI * (r + 1) as f64 / (rings + 1) as f64;
        let offset = if r % 2 == 1 { 0.5 } else { 0.0 };
        for j in 0..n {
            let phi = 2.0 * PI * (j as f64 + offset) / n as f64;
            vertices.push([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
        }
    }
    vertices.push([0.0, 0.0, -1.0]);
    let south = vertices.len() - 1;
    let ring = |r: usize, j: usize| 1 + r * n + (j % n);

    let mut faces = Vec::new();
    for j in 0..n {
        faces.push(oriented([0, ring(0, j), ring(0, j + 1)], &vertices));
        faces.push(oriented([south, ring(rings - 1, j), ring(rings - 1, j + 1)], &vertices));
    }
    for r in 0..rings - 1 {
        // the ring with offset 0 is `a`, the shifted one is `b`
        let (a, b) = if r % 2 == 0 { (r, r + 1) } else { (r + 1, r) };
        for j in 0..n {
            faces.push(oriented([ring(a, j), ring(a, j + 1), ring(b, j)], &vertices));
            faces.push(oriented([ring(b, j), ring(b, j + 1), ring(a, j + 1)], &vertices));
        }
    }
    Ok(SphereMesh::assemble(
        MeshSpec::latlong(rings, n),
        vertices,
        faces.into_iter().map(|f| f.to_vec()).collect(),
    ))
}

fn check_level(level: usize) -> Result<()> {
    if level > 7 {
        return Err(Error::InvalidInput(format!("subdivision level {level} exceeds 7")));
    }
    Ok(())
}

fn normalized(p: [f64; 3]) -> [f64; 3] {
    let n = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
    [p[0] / n, p[1] / n, p[2] / n]
}

fn distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

fn nearest_other(vertices: &[[f64; 3]], i: usize) -> [f64; 3] {
    *vertices
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .min_by(|a, b| {
            distance(&vertices[i], a.1)
                .partial_cmp(&distance(&vertices[i], b.1))
                .unwrap()
        })
        .unwrap()
        .1
}

pub(super) fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(super) fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub(super) fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Orders a triangle counter-clockwise seen from outside the sphere.
fn oriented(f: [usize; 3], vertices: &[[f64; 3]]) -> [usize; 3] {
    let [a, b, c] = f;
    let n = cross(&sub(&vertices[b], &vertices[a]), &sub(&vertices[c], &vertices[a]));
    let centroid = [
        vertices[a][0] + vertices[b][0] + vertices[c][0],
        vertices[a][1] + vertices[b][1] + vertices[c][1],
        vertices[a][2] + vertices[b][2] + vertices[c][2],
    ];
    if dot3(&n, &centroid) < 0.0 {
        [a, c, b]
    } else {
        f
    }
}

/// Midpoint subdivision with projection to the sphere after every level.
fn subdivide(
    mut vertices: Vec<[f64; 3]>,
    mut faces: Vec<[usize; 3]>,
    level: usize,
) -> (Vec<[f64; 3]>, Vec<[usize; 3]>) {
    for _ in 0..level {
        let mut midpoints: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        let mut midpoint = |a: usize, b: usize, vertices: &mut Vec<[f64; 3]>| {
            let key = (a.min(b), a.max(b));
            *midpoints.entry(key).or_insert_with(|| {
                let (p, q) = (vertices[a], vertices[b]);
                vertices.push(normalized([p[0] + q[0], p[1] + q[1], p[2] + q[2]]));
                vertices.len() - 1
            })
        };
        for &[a, b, c] in &faces {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.push([a, ab, ca]);
            next.push([b, bc, ab]);
            next.push([c, ca, bc]);
            next.push([ab, bc, ca]);
        }
        faces = next;
    }
    (vertices, faces)
}

/// Arc-length P1 operators on S¹: lumped mass, consistent mass, stiffness.
pub(super) fn assemble_circle(
    vertices: &[[f64; 3]],
    cells: &[Vec<usize>],
) -> (Vec<f64>, CsMat<f64>, CsMat<f64>) {
    let n = vertices.len();
    let mut lumped = vec![0.0; n];
    let mut mass = Vec::new();
    let mut stiff = Vec::new();
    for c in cells {
        let (a, b) = (c[0], c[1]);
        let cosine = dot3(&vertices[a], &vertices[b]).clamp(-1.0, 1.0);
        let h = cosine.acos();
        lumped[a] += h / 2.0;
        lumped[b] += h / 2.0;
        for (i, j, m, k) in [
            (a, a, h / 3.0, 1.0 / h),
            (b, b, h / 3.0, 1.0 / h),
            (a, b, h / 6.0, -1.0 / h),
            (b, a, h / 6.0, -1.0 / h),
        ] {
            mass.push((i, j, m));
            stiff.push((i, j, k));
        }
    }
    (lumped, csr_from_triplets(n, &mass), csr_from_triplets(n, &stiff))
}

/// Area of the spherical triangle with unit-vector corners.
pub(super) fn spherical_area(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    let num = dot3(a, &cross(b, c)).abs();
    let den = 1.0 + dot3(a, b) + dot3(b, c) + dot3(c, a);
    2.0 * num.atan2(den)
}

/// Cotangent stiffness on the flat triangles, consistent mass on the flat
/// triangles, and lumped mass from the spherical triangle areas so that the
/// total mass is exactly 4π.
pub(super) fn assemble_surface(
    vertices: &[[f64; 3]],
    cells: &[Vec<usize>],
) -> (Vec<f64>, CsMat<f64>, CsMat<f64>) {
    let n = vertices.len();
    let mut lumped = vec![0.0; n];
    let mut mass = Vec::with_capacity(cells.len() * 9);
    let mut stiff = Vec::with_capacity(cells.len() * 9);
    for c in cells {
        let idx = [c[0], c[1], c[2]];
        let p = idx.map(|i| vertices[i]);
        let area = 0.5 * {
            let n = cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]));
            dot3(&n, &n).sqrt()
        };
        let sphere_area = spherical_area(&p[0], &p[1], &p[2]);
        // edge opposite vertex i
        let e = [sub(&p[2], &p[1]), sub(&p[0], &p[2]), sub(&p[1], &p[0])];
        for i in 0..3 {
            lumped[idx[i]] += sphere_area / 3.0;
            for j in 0..3 {
                stiff.push((idx[i], idx[j], dot3(&e[i], &e[j]) / (4.0 * area)));
                let m = if i == j { area / 6.0 } else { area / 12.0 };
                mass.push((idx[i], idx[j], m));
            }
        }
    }
    (lumped, csr_from_triplets(n, &mass), csr_from_triplets(n, &stiff))
}
