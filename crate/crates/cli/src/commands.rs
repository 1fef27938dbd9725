use crate::Global;
use clap::{Args, Subcommand};
use equipart::ball::{
    acf_check, almgren_monotonicity_check, blow_up_rescale, diagnostics, dh_identity_check, doubling_check,
    find_r_beta, growth_rate_estimate, solve_ball, BallOptions, RadialGrid,
};
use equipart::catalog::{self, CatalogEntry, Prepared};
use equipart::io::{
    parse_schedule, read_diagnostics_csv, read_json, write_diagnostics_csv, write_json, write_sweep_csv, VERSION,
};
use equipart::partition::{beta_sweep, evaluate_i_infty, interaction_bound_check, lambda_identity_check, PartitionOptions};
use equipart::sphere::{FieldDocument, MeshBase, MeshSpec};
use equipart::verify::{best_trace, criterion_id, Verifier};
use equipart::{Error, Result};
use serde::Serialize;
use std::path::{Path, PathBuf};

const DEFAULT_SCHEDULE: &str = "10:2560:x4";
const QUICK_SCHEDULE: &str = "10:160:x4";

#[derive(Args, Debug, Clone, Serialize)]
pub struct MeshArgs {
    /// Vertex count for circle meshes, longitudes for lat-long meshes
    #[arg(long)]
    pub n: Option<usize>,
    /// Subdivision level for octahedral and icosahedral meshes
    #[arg(long)]
    pub level: Option<usize>,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct SweepArgs {
    /// Catalog id, see `catalog list`
    #[arg(long)]
    pub triplet: String,
    /// `start:end:xFactor` or a comma-separated list
    #[arg(long)]
    pub betas: Option<String>,
    /// Number of independent initializations
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    #[command(flatten)]
    pub mesh: MeshArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct PartitionArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct BallArgs {
    #[command(flatten)]
    pub sweep: SweepArgs,
    /// Coupling inside the ball
    #[arg(long, default_value_t = 400.0)]
    pub beta: f64,
    /// Radial shells including the origin
    #[arg(long, default_value_t = 96)]
    pub shells: usize,
    /// Boundary field document; by default the best competitor of a sweep
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    /// Growth exponent for the checks; defaults to the catalog reference
    #[arg(long)]
    pub ell: Option<f64>,
    #[arg(long, default_value_t = 1.0)]
    pub r_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub c_max: f64,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct AcfArgs {
    /// Table written by `ball` (columns r,H,E,N,J_1..J_k)
    #[arg(long)]
    pub diagnostics: PathBuf,
    #[arg(long)]
    pub ell: f64,
    #[arg(long, default_value_t = 1.0)]
    pub r_min: f64,
    #[arg(long, default_value_t = 50.0)]
    pub c_max: f64,
    /// Ambient dimension N
    #[arg(long, default_value_t = 3)]
    pub dimension: usize,
}

#[derive(Subcommand, Debug)]
pub enum CatalogAction {
    List,
    Show { id: String },
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct VerifyArgs {
    /// Criterion number or name; repeat to run several
    #[arg(long)]
    pub criterion: Vec<String>,
}

#[derive(Serialize)]
struct RunConfig<'a, A: Serialize> {
    version: &'static str,
    command: &'static str,
    seed: u64,
    quick: bool,
    args: &'a A,
    mesh: Option<MeshSpec>,
    mesh_hash: Option<&'a str>,
    betas: Option<&'a [f64]>,
}

fn out_dir(g: &Global) -> Result<&Path> {
    std::fs::create_dir_all(&g.out)?;
    Ok(&g.out)
}

fn write_config<A: Serialize>(g: &Global, command: &'static str, args: &A, sweep: Option<&Sweep>) -> Result<()> {
    let prepared = sweep.map(|s| &s.prepared);
    let config = RunConfig {
        version: VERSION,
        command,
        seed: g.seed,
        quick: g.quick,
        args,
        mesh: prepared.map(|p| p.mesh.spec()),
        mesh_hash: prepared.map(|p| p.mesh.content_hash()),
        betas: sweep.map(|s| s.betas.as_slice()),
    };
    write_json(&out_dir(g)?.join("config.json"), &config)
}

fn mesh_spec(entry: &CatalogEntry, m: &MeshArgs) -> Result<MeshSpec> {
    let mut spec = entry.mesh;
    match spec.base {
        MeshBase::Circle | MeshBase::Latlong => {
            if m.level.is_some() {
                return Err(Error::InvalidInput(format!("--level does not apply to {} meshes", spec.base.name())));
            }
            spec.n = m.n.unwrap_or(spec.n);
        }
        MeshBase::Octahedron | MeshBase::Icosahedron => {
            if m.n.is_some() {
                return Err(Error::InvalidInput(format!("--n does not apply to {} meshes", spec.base.name())));
            }
            spec.level = m.level.unwrap_or(spec.level);
        }
    }
    Ok(spec)
}

struct Sweep {
    entry: CatalogEntry,
    prepared: Prepared,
    betas: Vec<f64>,
    opts: PartitionOptions,
}

fn setup(g: &Global, a: &SweepArgs) -> Result<Sweep> {
    let entry = catalog::entry(&a.triplet)?;
    let prepared = entry.prepare(Some(mesh_spec(&entry, &a.mesh)?))?;
    let schedule = a.betas.as_deref().unwrap_or(if g.quick { QUICK_SCHEDULE } else { DEFAULT_SCHEDULE });
    let betas = parse_schedule(schedule)?;
    if a.seeds == 0 {
        return Err(Error::InvalidInput("--seeds must be at least 1".into()));
    }
    let opts = PartitionOptions {
        patience: 20,
        max_iters: 200_000,
        seeds: (g.seed..g.seed + a.seeds).collect(),
        ..Default::default()
    };
    Ok(Sweep { entry, prepared, betas, opts })
}

#[derive(Serialize)]
struct PartitionSummary<'a> {
    version: &'static str,
    triplet: &'a str,
    mesh_hash: &'a str,
    vertices: usize,
    seed: u64,
    ell_extrapolated: f64,
    ell_upper: f64,
    ell_reference: Option<f64>,
    fit_slope: Option<f64>,
    /// Relative distance of the last λ_β from ℓ(ℓ+N−2), against the reference.
    lambda_identity: Option<f64>,
    interaction: equipart::partition::InteractionReport,
}

pub fn partition(g: &Global, a: &PartitionArgs) -> Result<u8> {
    let s = setup(g, &a.sweep)?;
    let (mesh, triplet) = (&s.prepared.mesh, &s.prepared.triplet);
    write_config(g, "partition", a, Some(&s))?;
    let est = beta_sweep(triplet, mesh, &s.betas, &s.opts)?;
    let dir = out_dir(g)?;
    write_sweep_csv(&dir.join("sweep.csv"), &est)?;
    let last = est.results.last().expect("nonempty schedule");
    write_json(&dir.join("field.json"), &last.field.document())?;
    write_json(&dir.join("boundary.json"), &best_trace(triplet, mesh, &est)?.document())?;
    let summary = PartitionSummary {
        version: VERSION,
        triplet: &s.entry.id,
        mesh_hash: mesh.content_hash(),
        vertices: mesh.n_vertices(),
        seed: est.seed,
        ell_extrapolated: est.ell_extrapolated,
        ell_upper: est.ell_upper,
        ell_reference: s.entry.ell_reference,
        fit_slope: est.fit_slope,
        lambda_identity: s.entry.ell_reference.map(|l| lambda_identity_check(last, l, mesh.dimension())),
        interaction: interaction_bound_check(mesh, &est.results),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    for (r, upper) in est.results.iter().zip(&est.ell_uppers) {
        println!(
            "beta {:>10.2}  ell_beta {:.6}  upper {:.6}  lambda {:.4}  interaction {:.3e}",
            r.beta, r.ell_beta, upper, r.lambda_beta, r.interaction
        );
    }
    match s.entry.ell_reference {
        Some(l) => println!("{}: ell = {:.6} (reference {l})", s.entry.id, est.ell_extrapolated),
        None => println!("{}: ell = {:.6}", s.entry.id, est.ell_extrapolated),
    }
    Ok(0)
}

#[derive(Serialize)]
struct BallReport {
    version: &'static str,
    mesh_hash: String,
    beta: f64,
    ell: f64,
    energy: f64,
    iterations: usize,
    residual: f64,
    r_beta: f64,
    unit_mass_error: f64,
    max_frequency: f64,
    frequency_bound_passed: bool,
    almgren: equipart::ball::AlmgrenReport,
    dh_identity: equipart::ball::GrowthIdentityReport,
    doubling: equipart::ball::DoublingReport,
    acf: equipart::ball::AcfReport,
    growth: equipart::ball::GrowthEstimate,
}

pub fn ball(g: &Global, a: &BallArgs) -> Result<u8> {
    let s = setup(g, &a.sweep)?;
    let (mesh, triplet) = (&s.prepared.mesh, &s.prepared.triplet);
    let shells = if g.quick && a.shells == 96 { 48 } else { a.shells };
    let grid = RadialGrid::clustered(shells)?;
    write_config(g, "ball", a, Some(&s))?;
    let dir = out_dir(g)?;
    let boundary = match &a.boundary {
        Some(path) => read_json::<FieldDocument>(path)?.to_field(mesh)?,
        None => best_trace(triplet, mesh, &beta_sweep(triplet, mesh, &s.betas, &s.opts)?)?,
    };
    write_json(&dir.join("boundary.json"), &boundary.document())?;
    let ell = match a.ell.or(s.entry.ell_reference) {
        Some(l) => l,
        None => evaluate_i_infty(mesh, &boundary, 0.0)?,
    };

    let solve = solve_ball(triplet, mesh, a.beta, &boundary, &grid, &BallOptions::default())?;
    write_json(&dir.join("ball_field.json"), &solve.field.document())?;
    let diag = diagnostics(mesh, &solve.field)?;
    write_diagnostics_csv(&dir.join("diagnostics.csv"), &diag)?;
    let almgren = almgren_monotonicity_check(&diag, 0.05, 1e-3);
    let dh_identity = dh_identity_check(&diag, 0.1, 0.05);

    let r_beta = find_r_beta(mesh, &solve.field)?;
    let rescaled = diagnostics(mesh, &blow_up_rescale(mesh, &solve.field, r_beta)?)?;
    write_diagnostics_csv(&dir.join("rescaled.csv"), &rescaled)?;
    let one = rescaled.radii.iter().position(|&r| r == 1.0).expect("rescaling inserts the unit shell");
    let max_frequency = rescaled.nq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let report = BallReport {
        version: VERSION,
        mesh_hash: mesh.content_hash().to_string(),
        beta: a.beta,
        ell,
        energy: solve.energy,
        iterations: solve.iterations,
        residual: solve.residual,
        r_beta,
        unit_mass_error: (rescaled.h[one] - 1.0).abs(),
        max_frequency,
        frequency_bound_passed: max_frequency <= ell * 1.02,
        almgren,
        dh_identity,
        doubling: doubling_check(&rescaled, ell, 0.02)?,
        acf: acf_check(&rescaled, ell, a.r_min, a.c_max)?,
        growth: growth_rate_estimate(&rescaled)?,
    };
    write_json(&dir.join("report.json"), &report)?;
    let checks = [
        ("almgren", report.almgren.passed),
        ("frequency bound", report.frequency_bound_passed),
        ("doubling", report.doubling.passed),
        ("acf", report.acf.passed),
        ("dH identity", report.dh_identity.passed),
    ];
    println!(
        "energy {:.6}  iterations {}  r_beta {:.5}  max N {:.4}  C {:.3}  growth {:.4}",
        report.energy, report.iterations, r_beta, max_frequency, report.acf.c, report.growth.value
    );
    for (name, ok) in checks {
        println!("{:<16} {}", name, if ok { "pass" } else { "FAIL" });
    }
    Ok(if checks.iter().all(|c| c.1) { 0 } else { 1 })
}

pub fn acf(g: &Global, a: &AcfArgs) -> Result<u8> {
    let diag = read_diagnostics_csv(&a.diagnostics, a.dimension, 0.0)?;
    let report = acf_check(&diag, a.ell, a.r_min, a.c_max)?;
    write_config(g, "acf-check", a, None)?;
    write_json(&out_dir(g)?.join("acf.json"), &report)?;
    println!(
        "C = {:.6} over {} radii in [{}, {}]: {}",
        report.c,
        report.radii.len(),
        a.r_min,
        report.radii.last().copied().unwrap_or(f64::NAN),
        if report.passed { "pass" } else { "FAIL" }
    );
    Ok(if report.passed { 0 } else { 1 })
}

pub fn catalog(action: &CatalogAction) -> Result<u8> {
    match action {
        CatalogAction::List => {
            for e in catalog::list() {
                let reference = e.ell_reference.map_or("-".to_string(), |l| l.to_string());
                println!("{:<14} k={:<2} ell={:<4} {}", e.id, e.k, reference, e.description);
            }
        }
        CatalogAction::Show { id } => {
            let e = catalog::entry(id)?;
            let order = e.group()?.order();
            let mut value = serde_json::to_value(&e)?;
            value["group_order"] = order.into();
            println!("{}", serde_json::to_string_pretty(&value)?);
        }
    }
    Ok(0)
}

pub fn verify(g: &Global, a: &VerifyArgs) -> Result<u8> {
    let v = Verifier::new();
    let outcomes = if a.criterion.is_empty() {
        v.run_all(g.quick)
    } else {
        let ids = a.criterion.iter().map(|c| criterion_id(c)).collect::<Result<Vec<_>>>()?;
        ids.into_iter().map(|id| v.run(id)).collect()
    };
    for o in &outcomes {
        println!("{o}");
    }
    write_config(g, "verify", a, None)?;
    write_json(&out_dir(g)?.join("verify.json"), &outcomes)?;
    let failed = outcomes.iter().filter(|o| !o.passed).count();
    println!("{} of {} criteria pass", outcomes.len() - failed, outcomes.len());
    Ok(if failed == 0 { 0 } else { 1 })
}
