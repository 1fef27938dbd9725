//! Dense reference eigensolver for the (K, M) pencil restricted to
//! equivariant fields, independent of the projector and the optimizer.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::sphere::{SphereMesh, Transport};
use crate::symmetry::SymmetryGroup;
use crate::{Error, Result};

fn find(parent: &mut [usize], mut x: usize) -> usize {
    while parent[x] != x {
        parent[x] = parent[parent[x]];
        x = parent[x];
    }
    x
}

/// Orbits of the (component, vertex) pairs under the action; equivariant
/// fields are exactly those constant on each orbit. Requires permutation
/// transports.
pub fn pair_orbits(group: &SymmetryGroup, mesh: &SphereMesh) -> Result<Vec<Vec<(usize, usize)>>> {
    let k = group
        .k()
        .ok_or_else(|| Error::InvalidInput("group has no homomorphism".into()))?;
    let n = mesh.n_vertices();
    let mut parent: Vec<usize> = (0..k * n).collect();
    for g in 0..group.order() {
        let perm = match mesh.transport(group.inverse(g))? {
            Transport::Permutation(p) => p,
            Transport::Interpolation(_) => {
                return Err(Error::IncompatibleMesh(
                    "the dense oracle needs vertex-exact transports".into(),
                ))
            }
        };
        let sigma_inv = group.image(g).expect("hom attached").inverse();
        // (g·u)_i(v) = u_{σ⁻¹(i)}(p(v)), so (i, v) and (σ⁻¹(i), p(v)) share a value
        for i in 0..k {
            for (v, &pv) in perm.iter().enumerate() {
                let a = find(&mut parent, i * n + v);
                let b = find(&mut parent, sigma_inv.apply(i) * n + pv);
                if a != b {
                    parent[a] = b;
                }
            }
        }
    }
    let mut index = vec![usize::MAX; k * n];
    let mut orbits: Vec<Vec<(usize, usize)>> = Vec::new();
    for x in 0..k * n {
        let r = find(&mut parent, x);
        if index[r] == usize::MAX {
            index[r] = orbits.len();
            orbits.push(Vec::new());
        }
        orbits[index[r]].push((x / n, x % n));
    }
    Ok(orbits)
}

/// Ascending eigenvalues of `Σ u_iᵀKu_i / Σ u_iᵀMu_i` over equivariant
/// fields, with the lumped mass.
pub fn equivariant_spectrum(group: &SymmetryGroup, mesh: &SphereMesh) -> Result<Vec<f64>> {
    let orbits = pair_orbits(group, mesh)?;
    let n = mesh.n_vertices();
    let b = orbits.len();
    let mut owner = vec![vec![usize::MAX; n]; group.k().unwrap()];
    for (o, orbit) in orbits.iter().enumerate() {
        for &(i, v) in orbit {
            owner[i][v] = o;
        }
    }
    // restricted stiffness: Bᵀ diag(K,…,K) B with orbit indicators as B
    let mut kr = DMatrix::<f64>::zeros(b, b);
    for own in &owner {
        for (r, row) in mesh.stiffness().outer_iterator().enumerate() {
            for (c, val) in row.iter() {
                kr[(own[r], own[c])] += val;
            }
        }
    }
    let mut mr = vec![0.0; b];
    for (o, orbit) in orbits.iter().enumerate() {
        mr[o] = orbit.iter().map(|&(_, v)| mesh.mass()[v]).sum();
    }
    let scaled = DMatrix::from_fn(b, b, |r, c| kr[(r, c)] / (mr[r] * mr[c]).sqrt());
    let mut ev: Vec<f64> = SymmetricEigen::new(scaled).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev)
}
