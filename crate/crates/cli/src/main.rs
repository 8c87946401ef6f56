//! `greenop <command> --manifest path.json [--threads N] [--out dir]`
//!
//! Exit status: 0 every check passed, 1 a check failed, 2 the manifest or the
//! geometry was rejected, 3 a solve did not converge (summary still written).

mod commands;
mod manifest;
mod report;

use clap::Parser;
use greenop::Error;
use manifest::{Command, Run};
use report::{write_summary, Check, Summary};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

#[derive(Debug, Parser)]
#[command(name = "greenop", version, about = "Space-time Green operators of parabolic equations: solves and verification suites")]
struct Args {
    #[arg(value_enum)]
    command: Command,
    #[arg(long)]
    manifest: PathBuf,
    /// Worker threads; GREENOP_THREADS takes precedence.
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; defaults to the manifest's `out_dir`, then its directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn threads(args: &Args) -> Result<Option<usize>, String> {
    match std::env::var("GREENOP_THREADS") {
        Ok(v) => v.trim().parse::<usize>().map(Some).map_err(|_| format!("GREENOP_THREADS={v:?} is not a thread count")),
        Err(_) => Ok(args.threads),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. } => 3,
        Error::CertificateFailed { .. } | Error::NotElliptic(_) | Error::TruncationInsufficient(_) => 1,
        _ => 2,
    }
}

/// Failed runs still get a summary with the reason as a failing check.
fn failure_checks(e: &Error) -> Vec<Check> {
    match e {
        Error::NonConvergence { residual, .. } => vec![Check::at_most("convergence", "(H+kappa)u = f", *residual, 0.0).with_pass(false)],
        Error::CertificateFailed { min_ratio, threshold } => {
            vec![Check::at_least("coercivity", "Re<Hu,(Id+delta H_t)u> >= delta/2 ||u||^2", *min_ratio, *threshold)]
        }
        Error::NotElliptic(l) => vec![Check::at_least("ellipticity", "Re<A grad u, grad u> >= lambda ||grad u||^2", *l, 0.0).with_pass(false)],
        _ => Vec::new(),
    }
}

fn run_command(cmd: Command, run: &Run, out: &Path) -> Result<Vec<Check>, Error> {
    match cmd {
        Command::Verify => commands::verify(run, out),
        Command::Green => commands::green(run, out),
        Command::Cauchy => commands::cauchy(run, out),
        Command::Offdiag => commands::offdiag(run, out),
        Command::Gaussian => commands::gaussian(run, out),
        Command::Coulomb => commands::coulomb(run, out),
        Command::Gn => commands::gn(run, out),
        Command::Norms => commands::norms(run, out),
        Command::Solve => commands::solve(run, out),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let start = Instant::now();
    match threads(&args) {
        Ok(Some(n)) => {
            if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                eprintln!("greenop: thread pool: {e}");
                return ExitCode::from(2);
            }
        }
        Ok(None) => {}
        Err(msg) => {
            eprintln!("greenop: {msg}");
            return ExitCode::from(2);
        }
    }
    let run = match Run::load(&args.manifest) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("greenop: manifest {}: {e}", args.manifest.display());
            return ExitCode::from(2);
        }
    };
    if let Some(c) = run.manifest.command {
        if c != args.command {
            eprintln!("greenop: manifest is for `{}`, invoked as `{}`", c.name(), args.command.name());
            return ExitCode::from(2);
        }
    }
    let out = args
        .out
        .clone()
        .or_else(|| run.manifest.out_dir.as_ref().map(|d| run.resolve(d)))
        .unwrap_or_else(|| run.base.clone());
    let out = if out.as_os_str().is_empty() { PathBuf::from(".") } else { out };
    if let Err(e) = std::fs::create_dir_all(&out) {
        eprintln!("greenop: output directory {}: {e}", out.display());
        return ExitCode::from(2);
    }
    let result = run_command(args.command, &run, &out);
    let (checks, code, error) = match result {
        Ok(checks) => {
            let code = if checks.iter().all(|c| c.pass) { 0 } else { 1 };
            (checks, code, None)
        }
        Err(e) => {
            eprintln!("greenop: {}: {e}", args.command.name());
            (failure_checks(&e), exit_code(&e), Some(e.to_string()))
        }
    };
    let summary = Summary {
        command: args.command.name().into(),
        pass: code == 0,
        checks,
        wall_time: start.elapsed().as_secs_f64(),
        error,
    };
    if let Err(e) = write_summary(&out, &summary) {
        eprintln!("greenop: writing summary: {e}");
        return ExitCode::from(2);
    }
    for c in &summary.checks {
        println!("{:<28} {:>12.4e} {:>12.4e} {}", c.name, c.value, c.threshold, if c.pass { "PASS" } else { "FAIL" });
    }
    ExitCode::from(code)
}
