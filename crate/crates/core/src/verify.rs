//! The acceptance checks, shared by the test suite and the `verify` command.
//!
//! Expensive intermediate runs (the xyz sweep and its ball solve) are
//! computed once per [`Verifier`] and reused by every criterion that needs
//! them.

use crate::ball::{
    acf_check, almgren_monotonicity_check, blow_up_rescale, diagnostics, doubling_check, find_r_beta,
    homogeneous_extension, solve_ball, BallOptions, BallSolve, RadialDiagnostics, RadialGrid,
};
use crate::catalog::{self, Prepared};
use crate::error::{Error, Result};
use crate::oracle::equivariant_spectrum;
use crate::partition::{
    beta_sweep, evaluate_i_beta, gamma, gradient, initial_field, minimize_i_beta, segregate, EllEstimate,
    PartitionOptions,
};
use crate::sphere::{build_octasphere_mesh, Field, MeshSpec, Normalization, SphereMesh};
use crate::symmetry::{project_values, AdmissibleTriplet};
use ndarray::Array2;
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fmt;
use std::sync::OnceLock;
use std::time::Instant;

/// Schedule used by every sweep criterion.
pub const SWEEP_BETAS: [f64; 5] = [10.0, 40.0, 160.0, 640.0, 2560.0];
pub const BALL_BETA: f64 = 400.0;
pub const BALL_SHELLS: usize = 96;

/// `(id, short name, description)` for each criterion.
pub const CRITERIA: [(usize, &str, &str); 12] = [
    (1, "dihedral", "ell for dihedral2d:d on the circle within 0.5% of d, under 60 s each"),
    (2, "xyz", "ell for xyz_r3 within 3% of 3, under 10 min"),
    (3, "prism", "ell for prism3d:2 within 3% of 3, under 10 min"),
    (4, "y3", "ell for y3_s2 within 3% of 1.5, under 10 min"),
    (5, "eigenvalue", "lambda_beta at the largest beta within 5% of 12"),
    (6, "gaps", "positive, eventually nonincreasing gaps and decreasing interaction"),
    (7, "almgren", "frequency nondecreasing on [0.05, 1] for the xyz ball solve"),
    (8, "blowup", "H(V,1) = 1 within 1e-6 and N(V,r) <= 1.02 ell"),
    (9, "doubling", "H(V,R)/R^{2 ell} <= 1.02 e^ell on [1, 1/r_beta]"),
    (10, "acf", "drift constant C <= 50 for the rescaled solve, C < 1e-6 for the homogeneous field"),
    (11, "oracle", "zero coupling optimizer matches the restricted eigensolve within 1e-6"),
    (12, "invariants", "projector, closure, gamma identity, gradient and determinism checks"),
];

/// Criteria that only touch the circle.
pub const QUICK: [usize; 3] = [1, 11, 12];
pub const QUICK_SECONDS: f64 = 60.0;
pub const FULL_SECONDS: f64 = 45.0 * 60.0;

/// Accepts a criterion number or its short name.
pub fn criterion_id(name: &str) -> Result<usize> {
    CRITERIA
        .iter()
        .find(|(id, short, _)| *short == name || id.to_string() == name)
        .map(|c| c.0)
        .ok_or_else(|| Error::InvalidInput(format!("unknown criterion `{name}`")))
}

#[derive(Clone, Debug, Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: &'static str,
    pub measured: f64,
    pub reference: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl fmt::Display for CriterionOutcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}] {:>2} {:<10} measured {:<11} reference {:<9} tol {:<8} {:>7.1}s  {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            short(self.measured),
            short(self.reference),
            short(self.tolerance),
            self.seconds,
            self.detail
        )
    }
}

fn short(x: f64) -> String {
    if x == 0.0 || !x.is_finite() || (1e-3..1e5).contains(&x.abs()) {
        format!("{x:.6}").trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        format!("{x:.2e}")
    }
}

fn options() -> PartitionOptions {
    PartitionOptions { patience: 20, max_iters: 200_000, seeds: vec![0], ..Default::default() }
}

struct SweepRun {
    prepared: Prepared,
    est: EllEstimate,
    seconds: f64,
}

struct BallRun {
    mesh: SphereMesh,
    solve: BallSolve,
    diag: RadialDiagnostics,
    r_beta: f64,
    rescaled: RadialDiagnostics,
}

type Cached<T> = OnceLock<std::result::Result<T, String>>;

#[derive(Default)]
pub struct Verifier {
    sweeps: [Cached<SweepRun>; 3],
    ball: Cached<BallRun>,
}

const SWEEP_IDS: [&str; 3] = ["xyz_r3", "prism3d:2", "y3_s2"];

impl Verifier {
    pub fn new() -> Self {
        Self::default()
    }

    /// Runs every criterion in order. The total wall time is charged to
    /// the invariants criterion, which carries the overall runtime bound.
    pub fn run_all(&self, quick: bool) -> Vec<CriterionOutcome> {
        let start = Instant::now();
        let mut out: Vec<CriterionOutcome> = CRITERIA
            .iter()
            .filter(|c| !quick || QUICK.contains(&c.0))
            .map(|c| self.run(c.0))
            .collect();
        let total = start.elapsed().as_secs_f64();
        let limit = if quick { QUICK_SECONDS } else { FULL_SECONDS };
        if let Some(last) = out.iter_mut().find(|o| o.id == 12) {
            last.passed &= total < limit;
            last.detail = format!("{}; total {total:.0}s of {limit:.0}s", last.detail);
        }
        out
    }

    pub fn run(&self, id: usize) -> CriterionOutcome {
        let start = Instant::now();
        let (_, name, _) = CRITERIA[id - 1];
        let result = match id {
            1 => self.dihedral(),
            2 => self.sweep_value(0, 3.0, 0.03, 600.0),
            3 => self.sweep_value(1, 3.0, 0.03, 600.0),
            4 => self.sweep_value(2, 1.5, 0.03, 600.0),
            5 => self.eigenvalue(),
            6 => self.gaps(),
            7 => self.almgren(),
            8 => self.blowup(),
            9 => self.doubling(),
            10 => self.acf(),
            11 => self.oracle(),
            12 => self.invariants(),
            _ => Err(format!("no criterion {id}")),
        };
        let seconds = start.elapsed().as_secs_f64();
        match result {
            Ok(m) => CriterionOutcome {
                id,
                name,
                measured: m.measured,
                reference: m.reference,
                tolerance: m.tolerance,
                passed: m.passed,
                detail: m.detail,
                seconds,
            },
            Err(detail) => CriterionOutcome {
                id,
                name,
                measured: f64::NAN,
                reference: f64::NAN,
                tolerance: f64::NAN,
                passed: false,
                detail: format!("error: {detail}"),
                seconds,
            },
        }
    }

    fn sweep(&self, which: usize) -> std::result::Result<&SweepRun, String> {
        self.sweeps[which].get_or_init(|| run_sweep(SWEEP_IDS[which]).map_err(|e| e.to_string())).as_ref().map_err(Clone::clone)
    }

    fn ball(&self) -> std::result::Result<&BallRun, String> {
        self.ball
            .get_or_init(|| {
                let run = self.sweep(0)?;
                run_ball(run).map_err(|e| e.to_string())
            })
            .as_ref()
            .map_err(Clone::clone)
    }
}

fn run_sweep(id: &str) -> Result<SweepRun> {
    let start = Instant::now();
    let prepared = catalog::entry(id)?.prepare(None)?;
    let est = beta_sweep(&prepared.triplet, &prepared.mesh, &SWEEP_BETAS, &options())?;
    Ok(SweepRun { prepared, est, seconds: start.elapsed().as_secs_f64() })
}

fn run_ball(run: &SweepRun) -> Result<BallRun> {
    let mesh = run.prepared.mesh.clone();
    let boundary = best_trace(&run.prepared.triplet, &mesh, &run.est)?;
    let grid = RadialGrid::clustered(BALL_SHELLS)?;
    let solve = solve_ball(&run.prepared.triplet, &mesh, BALL_BETA, &boundary, &grid, &BallOptions::default())?;
    let diag = diagnostics(&mesh, &solve.field)?;
    let r_beta = find_r_beta(&mesh, &solve.field)?;
    let rescaled = diagnostics(&mesh, &blow_up_rescale(&mesh, &solve.field, r_beta)?)?;
    Ok(BallRun { mesh, solve, diag, r_beta, rescaled })
}

/// Segregated competitor with the lowest value over the sweep, averaged
/// over the group and scaled so that `Σ∫φ_i² = 1`. The average removes the
/// round-off asymmetry that segregation leaves behind when the components
/// nearly coincide. A single factor is used for all components, since
/// per-component scaling breaks equivariance on meshes whose transports
/// interpolate.
pub fn best_trace(triplet: &AdmissibleTriplet, mesh: &SphereMesh, est: &EllEstimate) -> Result<Field> {
    let best = (0..est.ell_uppers.len())
        .min_by(|&a, &b| est.ell_uppers[a].total_cmp(&est.ell_uppers[b]))
        .ok_or_else(|| Error::InvalidInput("empty sweep".into()))?;
    let seg = segregate(&est.results[best].field);
    let mut phi = seg.with_values(project_values(&triplet.group, mesh, &seg.values)?.mapv(|x| x.max(0.0)));
    let total: f64 = phi.masses(mesh).iter().sum();
    if total < 1e-30 {
        return Err(Error::ZeroComponent { component: 0 });
    }
    phi.values.mapv_inplace(|x| x / total.sqrt());
    phi.normalization = Normalization::OverK;
    Ok(phi)
}

struct Measured {
    measured: f64,
    reference: f64,
    tolerance: f64,
    passed: bool,
    detail: String,
}

type Check = std::result::Result<Measured, String>;

fn relative(measured: f64, reference: f64) -> f64 {
    (measured - reference).abs() / reference.abs()
}

fn fail(e: Error) -> String {
    e.to_string()
}

impl Verifier {
    fn dihedral(&self) -> Check {
        let mut worst: f64 = 0.0;
        let mut slowest: f64 = 0.0;
        let mut found = Vec::new();
        for d in 1..=3 {
            let start = Instant::now();
            let run = run_sweep(&format!("dihedral2d:{d}")).map_err(fail)?;
            slowest = slowest.max(start.elapsed().as_secs_f64());
            worst = worst.max(relative(run.est.ell_extrapolated, d as f64));
            found.push(format!("{:.5}", run.est.ell_extrapolated));
        }
        Ok(Measured {
            measured: worst,
            reference: 0.0,
            tolerance: 5e-3,
            passed: worst <= 5e-3 && slowest < 60.0,
            detail: format!("ell = [{}], worst relative error, slowest {slowest:.1}s", found.join(", ")),
        })
    }

    fn sweep_value(&self, which: usize, reference: f64, tol: f64, limit: f64) -> Check {
        let run = self.sweep(which)?;
        let ell = run.est.ell_extrapolated;
        let rel = relative(ell, reference);
        Ok(Measured {
            measured: ell,
            reference,
            tolerance: tol,
            passed: rel <= tol && run.seconds < limit,
            detail: format!("relative error {rel:.4}, sweep {:.1}s", run.seconds),
        })
    }

    fn eigenvalue(&self) -> Check {
        let run = self.sweep(0)?;
        let last = run.est.results.last().ok_or("empty sweep")?;
        let rel = relative(last.lambda_beta, 12.0);
        Ok(Measured {
            measured: last.lambda_beta,
            reference: 12.0,
            tolerance: 0.05,
            passed: rel < 0.05,
            detail: format!("relative error {rel:.4} at beta {}", last.beta),
        })
    }

    fn gaps(&self) -> Check {
        let est = &self.sweep(0)?.est;
        let gaps: Vec<f64> = est.ell_uppers.iter().zip(&est.ell_betas).map(|(u, l)| u - l).collect();
        let inter = est.interactions();
        let tail = gaps.len().saturating_sub(3);
        let positive = gaps.iter().all(|&g| g > 0.0);
        let gaps_down = gaps[tail..].windows(2).all(|w| w[1] <= w[0]);
        let inter_down = inter[tail..].windows(2).all(|w| w[1] < w[0]);
        let min_gap = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(Measured {
            measured: min_gap,
            reference: 0.0,
            tolerance: 0.0,
            passed: positive && gaps_down && inter_down,
            detail: format!(
                "gaps [{}], interaction [{}]",
                gaps.iter().map(|g| format!("{g:.4}")).collect::<Vec<_>>().join(", "),
                inter.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>().join(", ")
            ),
        })
    }

    fn almgren(&self) -> Check {
        let run = self.ball()?;
        let report = almgren_monotonicity_check(&run.diag, 0.05, 1e-3);
        Ok(Measured {
            measured: report.max_violation,
            reference: 0.0,
            tolerance: report.tolerance,
            passed: report.passed,
            detail: format!(
                "frequency range {:.4}, energy {:.4}, {} iterations",
                report.range, run.solve.energy, run.solve.iterations
            ),
        })
    }

    fn blowup(&self) -> Check {
        let run = self.ball()?;
        let d = &run.rescaled;
        let one = d.radii.iter().position(|&r| r == 1.0).ok_or("no unit shell after rescaling")?;
        let h_err = (d.h[one] - 1.0).abs();
        let max_n = d.nq.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        Ok(Measured {
            measured: max_n,
            reference: 3.0,
            tolerance: 0.02,
            passed: h_err <= 1e-6 && max_n <= 3.0 * 1.02,
            detail: format!("|H(V,1) - 1| = {h_err:.2e}, r_beta {:.4}", run.r_beta),
        })
    }

    fn doubling(&self) -> Check {
        let run = self.ball()?;
        let report = doubling_check(&run.rescaled, 3.0, 0.02).map_err(fail)?;
        Ok(Measured {
            measured: report.max_ratio,
            reference: report.bound,
            tolerance: 0.02,
            passed: report.passed,
            detail: format!("R up to {:.2}", 1.0 / run.r_beta),
        })
    }

    fn acf(&self) -> Check {
        let run = self.ball()?;
        let report = acf_check(&run.rescaled, 3.0, 1.0, 50.0).map_err(fail)?;
        let phi = segregate(&catalog::entry("xyz_r3").map_err(fail)?.witness(&run.mesh).map_err(fail)?);
        let grid = RadialGrid::geometric(1e-3, 4.0, 300).map_err(fail)?;
        let ext = homogeneous_extension(&run.mesh, &phi, 3.0, &grid).map_err(fail)?;
        let oracle = acf_check(&diagnostics(&run.mesh, &ext).map_err(fail)?, 3.0, 1.0, 50.0).map_err(fail)?;
        Ok(Measured {
            measured: report.c,
            reference: 50.0,
            tolerance: 0.0,
            passed: report.c.is_finite() && report.passed && oracle.c < 1e-6,
            detail: format!("homogeneous field C = {:.2e}", oracle.c),
        })
    }

    fn oracle(&self) -> Check {
        let mut worst: f64 = 0.0;
        for d in 1..=3 {
            let prepared = catalog::entry(&format!("dihedral2d:{d}")).and_then(|e| e.prepare(None)).map_err(fail)?;
            let spectrum = equivariant_spectrum(&prepared.triplet.group, &prepared.mesh).map_err(fail)?;
            let init = initial_field(&prepared.triplet, &prepared.mesh, 0, 0.01).map_err(fail)?;
            let r = minimize_i_beta(&prepared.triplet, &prepared.mesh, 0.0, &init, &options()).map_err(fail)?;
            worst = worst.max((r.lambda_beta - spectrum[0]).abs() / spectrum[0].abs().max(1.0));
        }
        Ok(Measured {
            measured: worst,
            reference: 0.0,
            tolerance: 1e-6,
            passed: worst <= 1e-6,
            detail: "largest eigenvalue mismatch over d = 1, 2, 3".into(),
        })
    }

    fn invariants(&self) -> Check {
        let mut failed = Vec::new();
        let mut rng = ChaCha8Rng::seed_from_u64(7);

        let prepared = catalog::entry("dihedral2d:3").and_then(|e| e.prepare(Some(MeshSpec::circle(240)))).map_err(fail)?;
        let (mesh, group) = (&prepared.mesh, &prepared.triplet.group);
        let raw = Array2::from_shape_fn((2, mesh.n_vertices()), |_| rng.random::<f64>());
        let once = project_values(group, mesh, &raw).map_err(fail)?;
        let twice = project_values(group, mesh, &once).map_err(fail)?;
        if (&twice - &once).iter().any(|x| x.abs() > 1e-12) {
            failed.push("projector");
        }

        for entry in catalog::list() {
            if !entry.group().map_err(fail)?.check_table() {
                failed.push("closure");
                break;
            }
        }

        let identity = (2..=5).all(|n| {
            (0..200).all(|i| {
                let t = 1e-6 * 1.15_f64.powi(i);
                let g = gamma(n, t).unwrap_or(f64::NAN);
                (g * (g + n as f64 - 2.0) - t).abs() <= 1e-12 * t.max(1.0)
            })
        });
        if !identity {
            failed.push("gamma");
        }

        let worst_fd = gradient_check(&mut rng)?;
        if worst_fd >= 1e-5 {
            failed.push("gradient");
        }

        let det = catalog::entry("xyz_r3").and_then(|e| e.prepare(Some(MeshSpec::octahedron(2)))).map_err(fail)?;
        let solve = || -> Result<Array2<f64>> {
            let init = initial_field(&det.triplet, &det.mesh, 3, 0.05)?;
            Ok(minimize_i_beta(&det.triplet, &det.mesh, 100.0, &init, &options())?.field.values)
        };
        let (a, b) = (solve().map_err(fail)?, solve().map_err(fail)?);
        if a.iter().zip(b.iter()).any(|(x, y)| x.to_bits() != y.to_bits()) {
            failed.push("determinism");
        }

        Ok(Measured {
            measured: failed.len() as f64,
            reference: 0.0,
            tolerance: 0.0,
            passed: failed.is_empty(),
            detail: if failed.is_empty() {
                format!("all suites pass, gradient error {worst_fd:.1e}")
            } else {
                format!("failing: {}", failed.join(", "))
            },
        })
    }
}

/// Worst relative mismatch between the analytic gradient and central
/// differences along random equivariant directions.
fn gradient_check(rng: &mut ChaCha8Rng) -> std::result::Result<f64, String> {
    let mesh = build_octasphere_mesh(2).map_err(fail)?;
    let prepared = catalog::entry("xyz_r3").and_then(|e| e.prepare_on(&mesh)).map_err(fail)?;
    let (mesh, group) = (&prepared.mesh, &prepared.triplet.group);
    let shape = (prepared.triplet.k, mesh.n_vertices());
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let u = project_values(group, mesh, &Array2::from_shape_fn(shape, |_| rng.random::<f64>() + 0.1)).map_err(fail)?;
        let dir = project_values(group, mesh, &Array2::from_shape_fn(shape, |_| rng.random::<f64>() - 0.5)).map_err(fail)?;
        let beta = 50.0;
        let analytic = (&gradient(mesh, &u, beta).map_err(fail)? * &dir).sum();
        let at = |t: f64| -> Result<f64> { evaluate_i_beta(mesh, &Field::new(mesh, &u + &(&dir * t))?, beta) };
        let eps = 1e-5;
        let numeric = (at(eps).map_err(fail)? - at(-eps).map_err(fail)?) / (2.0 * eps);
        worst = worst.max((analytic - numeric).abs() / analytic.abs().max(1e-8));
    }
    Ok(worst)
}
