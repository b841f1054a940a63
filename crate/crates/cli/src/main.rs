use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pq_spectra::kkt_check;
use pq_spectra_cli::{compute_threshold, emit_outputs, emit_threshold, parse_config, read_field, run_sweep, RunPlan};

#[derive(Parser)]
#[command(name = "pq-spectra", version, about = "Spectrum of the (p,q)-Laplacian with weighted Neumann/Robin data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute lambda_1 and sweep the configured lambda grid.
    Run {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Compute lambda_1 and its minimizer only.
    Lambda1 {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Check whether a field file is an eigenfunction for `lambda`.
    Verify {
        config: PathBuf,
        field: PathBuf,
        lambda: f64,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args)]
struct Overrides {
    /// Worker threads for the sweep (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn load(config: &Path, o: &Overrides) -> Result<RunPlan, ExitCode> {
    let mut plan = parse_config(config).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    })?;
    if let Some(dir) = &o.out {
        plan.outputs.dir = dir.clone();
    }
    if let Some(seed) = o.seed {
        plan.solver_opts.seed = seed;
    }
    if let Some(n) = o.workers {
        if n == 0 {
            eprintln!("error: --workers must be at least 1");
            return Err(ExitCode::from(2));
        }
        // Only fails if a global pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(plan)
}

fn io_failure(e: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(1)
}

fn run(config: &Path, o: &Overrides) -> Result<(), ExitCode> {
    let plan = load(config, o)?;
    let report = run_sweep(&plan).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    })?;
    emit_outputs(&report, &plan).map_err(io_failure)?;
    println!("lambda1 = {:.16e}", report.threshold.lambda1);
    for row in &report.rows {
        match &row.message {
            Some(m) => println!("{:.16e}  {}  ({m})", row.lambda, row.status),
            None => println!("{:.16e}  {}", row.lambda, row.status),
        }
    }
    println!("wrote {}", plan.outputs.dir.display());
    Ok(())
}

fn lambda1(config: &Path, o: &Overrides) -> Result<(), ExitCode> {
    let plan = load(config, o)?;
    let threshold = compute_threshold(&plan).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(e.exit_code() as u8)
    })?;
    emit_threshold(&threshold, &plan).map_err(io_failure)?;
    println!("lambda1 = {:.16e}", threshold.lambda1);
    println!("weak residual = {:e}", threshold.weak_residual);
    Ok(())
}

fn verify(config: &Path, field: &Path, lambda: f64, o: &Overrides) -> Result<(), ExitCode> {
    let plan = load(config, o)?;
    let u = read_field(field, &plan.spec.mesh).map_err(io_failure)?;
    let check = kkt_check(&plan.spec, lambda, &u, &plan.solver_opts).map_err(|e| {
        eprintln!("error: {e}");
        ExitCode::from(2)
    })?;
    println!("lambda = {:.16e}", check.lambda);
    println!("weak residual = {:.16e}", check.weak_residual_norm);
    println!("cone residual = {:.16e}", check.cone_residual);
    println!("mass identity defect = {:.16e}", check.mass_identity_defect);
    println!("nonconstant = {}", check.nonconstant);
    println!("{}", if check.passed { "PASS" } else { "FAIL" });
    if check.passed {
        Ok(())
    } else {
        Err(ExitCode::from(1))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { config, overrides } => run(config, overrides),
        Command::Lambda1 { config, overrides } => lambda1(config, overrides),
        Command::Verify { config, field, lambda, overrides } => verify(config, field, *lambda, overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
