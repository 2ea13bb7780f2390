use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pabf::check::run_checks;
use pabf::fieldio::{fmt17, read_scalar, read_vector, scalar_to_csv, vector_to_csv};
use pabf::projection::{default_max_iter, project, DEFAULT_TOL};
use pabf::report::{compare, write_comparison, write_run, DEFAULT_FLATNESS_THRESHOLD};
use pabf::{parse_config, run, Error, Result, RunSpec};

/// ABF and projected ABF free-energy sampling.
#[derive(Parser)]
#[command(name = "pabf", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute one run described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Replicated runs in both modes with a joint variance/error/flatness table.
    Compare {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        replicas: usize,
        #[arg(long)]
        out: PathBuf,
        /// Marginal flatness used for the time-to-flatness column.
        #[arg(long, default_value_t = DEFAULT_FLATNESS_THRESHOLD)]
        flatness_threshold: f64,
    },
    /// Project a force field read from CSV onto gradients.
    ProjectFile {
        #[arg(long)]
        force: PathBuf,
        #[arg(long)]
        density: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Run the built-in numerical self-checks.
    Check {
        /// Shorter sampling, fewer random configurations.
        #[arg(long)]
        quick: bool,
    },
}

fn load(path: &Path) -> Result<RunSpec> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn execute(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run { config, seed, out } => {
            let mut spec = load(&config)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(o) = out {
                spec.output_dir = o;
            }
            let output = run(&spec)?;
            write_run(&spec.output_dir, &spec, &output)?;
            if let Some(last) = output.snapshots.last() {
                let l2 = last
                    .l2_error
                    .map_or("n/a".to_string(), |e| format!("{e:.4}"));
                println!(
                    "{} run finished at t = {}: l2_error {l2}, flatness ({:.3e}, {:.3e})",
                    spec.mode.name(),
                    last.time,
                    last.flatness.0,
                    last.flatness.1
                );
            }
            Ok(true)
        }
        Command::Compare {
            config,
            replicas,
            out,
            flatness_threshold,
        } => {
            let spec = load(&config)?;
            let cmp = compare(&spec, replicas, flatness_threshold)?;
            write_comparison(&out, &spec, &cmp)?;
            println!(
                "{:>12} {:>14} {:>14} {:>10} {:>10}",
                "t", "pabf var F", "pabf var gA", "pabf err", "abf err"
            );
            for (p, a) in cmp.pabf_stats.iter().zip(&cmp.abf_stats) {
                println!(
                    "{:>12.4} {:>14.4e} {:>14.4e} {:>10.4} {:>10.4}",
                    p.time, p.int_var_force, p.int_var_gradient, p.l2_error, a.l2_error
                );
            }
            Ok(true)
        }
        Command::ProjectFile {
            force,
            density,
            out,
            tol,
        } => {
            let f = read_vector(&force)?;
            let psi = read_scalar(&density)?;
            let p = project(&f, &psi, tol, default_max_iter(f.grid()))?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("A.csv"), scalar_to_csv(&p.potential))?;
            std::fs::write(out.join("gradA.csv"), vector_to_csv(&p.gradient))?;
            let mut m = String::new();
            let _ = writeln!(m, "tol = {}", fmt17(tol));
            let _ = writeln!(m, "residual = {}", fmt17(p.residual));
            let _ = writeln!(m, "iterations = {}", p.iterations);
            std::fs::write(out.join("manifest.txt"), m)?;
            Ok(true)
        }
        Command::Check { quick } => {
            let results = run_checks(quick);
            for r in &results {
                println!("{r}");
            }
            Ok(results.iter().all(|r| r.passed))
        }
    }
}

/// The error and its causes on one line.
fn one_line(e: &Error) -> String {
    let mut s = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(inner) = src {
        let text = inner.to_string();
        if !s.contains(&text) {
            s.push_str(": ");
            s.push_str(&text);
        }
        src = inner.source();
    }
    s
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {}", one_line(&e));
            ExitCode::FAILURE
        }
    }
}
