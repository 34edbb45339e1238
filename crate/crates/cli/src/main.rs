//! `brokerage-lab`: run regret sweeps and the verification suite.
//!
//! Exit codes: 0 on success, 1 on an episode fault or failed check, 2 on an
//! invalid configuration.

mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use brokerage_core::distributions::ValuationPair;
use brokerage_core::gft::expected_gft;
use brokerage_core::harness::output::{render_table, summary_json, write_csv, write_transcript, TableRow};
use brokerage_core::harness::verify::{verify_suite_with, VerifyOptions};
use brokerage_core::harness::{sweep, ExperimentResult, FitOutcome, SweepError};
use brokerage_core::instances::{InstanceSpec, PairFamily};
use clap::{Args, Parser, Subcommand};

use config::{RunConfig, OUT_ENV};

#[derive(Parser)]
#[command(name = "brokerage-lab", version, about = "Contextual brokerage regret experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a horizon-by-seed sweep and write the regret CSV and JSON summary.
    Run(Box<RunArgs>),
    /// Check the analytic identities, inequalities and partition invariants.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON config; flags given alongside override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// biave, exbis, oracle, fixed or uniform.
    #[arg(long)]
    algo: Option<String>,
    /// full or limited.
    #[arg(long)]
    feedback: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// Comma-separated, strictly increasing.
    #[arg(long, value_delimiter = ',')]
    horizons: Option<Vec<u64>>,
    /// Number of seeds per horizon.
    #[arg(long)]
    seeds: Option<u64>,
    /// lattice-full, lattice-limited or smooth.
    #[arg(long)]
    instance: Option<String>,
    /// Roughness of the smooth instance family.
    #[arg(long)]
    roughness: Option<f64>,
    /// Price posted by the fixed baseline.
    #[arg(long)]
    fixed_price: Option<f64>,
    /// Output directory (overridden by BROKERAGE_LAB_OUT).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    master_seed: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Random pairs per check.
    #[arg(long, default_value_t = 200)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flip the sign of the linear term of the expected gain (mutation check).
    #[arg(long, hide = true)]
    mutate_expected_gft: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => cmd_run(*args),
        Command::Verify(args) => cmd_verify(args),
    }
}

fn flags_config(args: &RunArgs) -> Result<RunConfig, String> {
    let instance = match args.instance.as_deref() {
        Some(name) => {
            let mut spec = InstanceSpec::from_name(name).map_err(|e| e.to_string())?;
            if let (InstanceSpec::Smooth { roughness, .. }, Some(r)) = (&mut spec, args.roughness) {
                *roughness = r;
            } else if args.roughness.is_some() {
                return Err("--roughness only applies to the smooth instance".into());
            }
            Some(spec)
        }
        None if args.roughness.is_some() => {
            Some(InstanceSpec::Smooth { roughness: args.roughness.unwrap_or(1.0), family: PairFamily::default() })
        }
        None => None,
    };
    Ok(RunConfig {
        algo: args.algo.clone(),
        feedback: args.feedback.clone(),
        dim: args.dim,
        horizons: args.horizons.clone(),
        seeds: args.seeds,
        instance,
        out_dir: args.out.clone(),
        workers: args.workers,
        master_seed: args.master_seed,
        fixed_price: args.fixed_price,
    })
}

fn invalid(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let flags = match flags_config(&args) {
        Ok(c) => c,
        Err(e) => return invalid(e),
    };
    let file = match &args.config {
        Some(path) => match RunConfig::load(path) {
            Ok(c) => c,
            Err(e) => return invalid(e),
        },
        None => RunConfig::default(),
    };
    let env_out = std::env::var_os(OUT_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
    let run = match file.overlay(flags).resolve(env_out) {
        Ok(r) => r,
        Err(e) => return invalid(e),
    };
    if let Err(e) = fs::create_dir_all(&run.out_dir) {
        eprintln!("error: cannot create {}: {e}", run.out_dir.display());
        return ExitCode::from(1);
    }
    let stem = format!("{}_{}_d{}", run.sweep.algo, run.sweep.feedback, run.sweep.dim);

    match sweep(&run.sweep) {
        Ok(result) => match persist(&result, &run.out_dir, &stem) {
            Ok(()) => {
                print!("{}", slope_table(&result));
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: writing results: {e}");
                ExitCode::from(1)
            }
        },
        Err(SweepError::Setup(e)) => invalid(e),
        Err(SweepError::Episode { horizon, seed, fault }) => {
            let path = run.out_dir.join(format!("{stem}_fault_T{horizon}_seed{seed}.csv"));
            let written = File::create(&path).and_then(|f| write_transcript(&fault.transcript, BufWriter::new(f)));
            eprintln!("error: horizon {horizon}, seed {seed}: {fault}");
            match written {
                Ok(()) => eprintln!("transcript: {}", path.display()),
                Err(e) => eprintln!("could not write transcript {}: {e}", path.display()),
            }
            ExitCode::from(1)
        }
    }
}

fn persist(result: &ExperimentResult, dir: &Path, stem: &str) -> std::io::Result<()> {
    let stamp = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let csv = dir.join(format!("{stem}.csv"));
    let mut out = BufWriter::new(File::create(&csv)?);
    write_csv(result, &stamp.to_string(), &mut out)?;
    out.flush()?;
    fs::write(dir.join(format!("{stem}_summary.json")), summary_json(result) + "\n")?;
    Ok(())
}

fn slope_table(result: &ExperimentResult) -> String {
    let c = &result.config;
    let mut s = format!(
        "{} / {} feedback / d = {} / {} / {} seeds\n{:>10} {:>10} {:>14} {:>12} {:>14}\n",
        c.algo,
        c.feedback,
        c.dim,
        c.instance.name(),
        c.seeds,
        "T",
        "T_eff",
        "mean R_T",
        "std err",
        "median R_T"
    );
    for h in &result.horizons {
        s += &format!(
            "{:>10} {:>10} {:>14.6} {:>12.6} {:>14.6}\n",
            h.horizon, h.effective_horizon, h.mean_regret, h.std_error, h.median_regret
        );
    }
    let theory = result.theory_slope.map(|t| format!("{t:.4}")).unwrap_or_else(|| "-".into());
    match &result.fit {
        FitOutcome::Fitted(f) => {
            let robust = f.robust_slope.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into());
            s += &format!(
                "slope {:.4}  95% CI [{:.4}, {:.4}]  median-of-seeds {}  R^2 {:.4}  theory {}\n",
                f.fit.slope, f.ci_low, f.ci_high, robust, f.fit.r_squared, theory
            );
        }
        FitOutcome::Degenerate { reason } => s += &format!("slope degenerate: {reason}  theory {theory}\n"),
    }
    s
}

fn cmd_verify(args: VerifyArgs) -> ExitCode {
    let opts = VerifyOptions { pairs: args.pairs, seed: args.seed, ..Default::default() };
    let reports = if args.mutate_expected_gft {
        verify_suite_with(opts, mutated_expected_gft)
    } else {
        verify_suite_with(opts, |pair: &ValuationPair, p| expected_gft(pair, p).unwrap_or(f64::NAN))
    };
    let reports = match reports {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    };
    let rows: Vec<TableRow<'_>> =
        reports.iter().map(|r| TableRow { name: &r.name, passed: r.passed(), detail: r.summary() }).collect();
    print!("{}", render_table(&rows));
    if reports.iter().all(|r| r.passed()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn mutated_expected_gft(pair: &ValuationPair, p: f64) -> f64 {
    let (f, g) = (pair.left(), pair.right());
    let integral = f.cdf_integral(p).unwrap_or(f64::NAN) + g.cdf_integral(p).unwrap_or(f64::NAN);
    let mass = f.cdf(p).unwrap_or(f64::NAN) + g.cdf(p).unwrap_or(f64::NAN);
    integral - (pair.common_mean() - p) * mass
}
