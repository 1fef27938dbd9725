use clap::{Args, Parser, Subcommand};
use equipart::Error;
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "equipart", version, about = "Equivariant optimal partitions of spheres and their ball extensions")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone, Serialize)]
pub struct Global {
    /// Output directory for the run
    #[arg(long, global = true, default_value = "runs")]
    pub out: PathBuf,
    /// Base seed; seeds `seed..seed+seeds` are tried
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (defaults to the number of logical cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Smaller meshes and schedules; for `verify`, the circle-only subset
    #[arg(long, global = true)]
    pub quick: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sweep the coupling for a catalog triplet and estimate its optimal value
    Partition(commands::PartitionArgs),
    /// Solve the penalized ball problem and run the radial diagnostics
    Ball(commands::BallArgs),
    /// Run the monotonicity check on a radial diagnostics table
    AcfCheck(commands::AcfArgs),
    /// Inspect the catalog of symmetry triplets
    Catalog {
        #[command(subcommand)]
        action: commands::CatalogAction,
    },
    /// Run the acceptance criteria
    Verify(commands::VerifyArgs),
}

/// Configuration problems exit with 2, numerical failures with 1.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::UnknownId(_)
        | Error::InvalidInput(_)
        | Error::IncompatibleMesh(_)
        | Error::DimensionMismatch(_)
        | Error::NegativeInput { .. }
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 2,
        _ => 1,
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("{e}");
            return ExitCode::from(2);
        }
    }
    let g = &cli.global;
    let result = match &cli.command {
        Command::Partition(a) => commands::partition(g, a),
        Command::Ball(a) => commands::ball(g, a),
        Command::AcfCheck(a) => commands::acf(g, a),
        Command::Catalog { action } => commands::catalog(action),
        Command::Verify(a) => commands::verify(g, a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            let record = ErrorRecord { error: e.kind(), message: e.to_string() };
            eprintln!("{}", serde_json::to_string(&record).expect("plain record"));
            ExitCode::from(exit_code(&e))
        }
    }
}
