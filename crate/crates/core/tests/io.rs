use equipart::ball::{diagnostics, homogeneous_extension, RadialGrid};
use equipart::catalog;
use equipart::io::{read_diagnostics_csv, read_json, write_diagnostics_csv, write_json, write_sweep_csv};
use equipart::partition::{beta_sweep, PartitionOptions};
use equipart::sphere::{build_octasphere_mesh, FieldDocument, MeshSpec};

// [TRIVIAL] radial tables survive a write/read cycle
#[test]
fn diagnostics_csv_round_trip() {
    let prepared = catalog::entry("xyz_r3").unwrap().prepare_on(&build_octasphere_mesh(2).unwrap()).unwrap();
    let mesh = &prepared.mesh;
    let grid = RadialGrid::clustered(40).unwrap();
    let d = diagnostics(mesh, &homogeneous_extension(mesh, &prepared.triplet.witness, 3.0, &grid).unwrap()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("diag.csv");
    write_diagnostics_csv(&path, &d).unwrap();
    let back = read_diagnostics_csv(&path, d.dimension, d.coupling).unwrap();
    assert_eq!(back.radii, d.radii);
    assert_eq!(back.h, d.h);
    assert_eq!(back.e, d.e);
    assert_eq!(back.j, d.j);
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("r,H,E,N,J_1,J_2\n"));
}

// [TRIVIAL] malformed tables are rejected
#[test]
fn diagnostics_csv_rejects_other_tables() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "a,b\n1,2\n").unwrap();
    assert!(read_diagnostics_csv(&path, 3, 0.0).is_err());
}

// [TRIVIAL] one sweep row per beta, and identical runs write identical bytes
#[test]
fn sweep_csv_is_deterministic() {
    let prepared = catalog::entry("dihedral2d:2").unwrap().prepare(Some(MeshSpec::circle(128))).unwrap();
    let opts = PartitionOptions { seeds: vec![0], ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let est = beta_sweep(&prepared.triplet, &prepared.mesh, &[10.0, 40.0], &opts).unwrap();
        let path = dir.path().join(name);
        write_sweep_csv(&path, &est).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    let text = String::from_utf8(bytes.pop().unwrap()).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "beta,ell_beta,ell_upper,lambda_beta,interaction,iterations,residual");
    assert_eq!(lines.len(), 3);
}

// [TRIVIAL] field documents round-trip exactly through JSON
#[test]
fn field_json_round_trip() {
    let prepared = catalog::entry("dihedral2d:1").unwrap().prepare(Some(MeshSpec::circle(64))).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("field.json");
    write_json(&path, &prepared.triplet.witness.document()).unwrap();
    let doc: FieldDocument = read_json(&path).unwrap();
    assert_eq!(doc.to_field(&prepared.mesh).unwrap().values, prepared.triplet.witness.values);
}
