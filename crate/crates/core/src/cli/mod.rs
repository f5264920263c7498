//! `cubicsurf`: solve, immerse, verify and develop from a JSON config.

pub mod config;
pub mod export;
pub mod run;

pub use config::RunConfig;
pub use run::{execute, CheckEntry, Command, RunReport};

use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::PathBuf;

#[derive(Parser, Debug)]
#[command(name = "cubicsurf", version, about = "Surfaces from cubic differentials")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Solve the metric equation.
    Solve(Common),
    /// Solve and integrate the frame into a mesh.
    Immerse(Common),
    /// Solve, immerse and run the structure checks.
    Verify(Common),
    /// Solve, immerse and compute holonomy or the developing map.
    Develop(Common),
    /// Build a parabolic sphere from holomorphic data.
    Weierstrass(Common),
    /// Every stage, including `weierstrass` when configured.
    All(Common),
}

#[derive(Args, Debug)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Treat warnings as failures.
    #[arg(long)]
    strict: bool,
}

/// Parses `args`, runs, prints a summary and returns the exit code:
/// 0 all checks pass, 1 a check failed, 2 configuration error, 3 the
/// solver did not converge.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { run::EXIT_CONFIG } else { run::EXIT_OK };
        }
    };
    let (command, common) = match cli.command {
        Cmd::Solve(c) => (Command::Solve, c),
        Cmd::Immerse(c) => (Command::Immerse, c),
        Cmd::Verify(c) => (Command::Verify, c),
        Cmd::Develop(c) => (Command::Develop, c),
        Cmd::Weierstrass(c) => (Command::Weierstrass, c),
        Cmd::All(c) => (Command::All, c),
    };
    let go = || run_command(command, &common);
    match common.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(go),
            Err(e) => {
                eprintln!("error: cannot start {n} threads: {e}");
                run::EXIT_CONFIG
            }
        },
        None => go(),
    }
}

fn run_command(command: Command, common: &Common) -> i32 {
    let cfg = match RunConfig::load(&common.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            let report = RunReport::config_failure(command, e.to_string());
            if common.out_dir.is_dir() {
                let _ = report.write(&common.out_dir.join("report.json"));
            }
            return report.exit_code;
        }
    };
    let report = execute(&cfg, command, &common.out_dir, common.strict);
    print_summary(&report);
    report.exit_code
}

fn print_summary(r: &RunReport) {
    println!("{} {} on {}x{} (h = {:.4e})", r.command.name(), r.case, r.grid[0], r.grid[1], r.h);
    if let Some(s) = &r.solver {
        println!(
            "solver: converged = {}, {} iterations, residual {:.3e}, u in [{:.6}, {:.6}]",
            s.converged, s.iterations, s.residual_inf, s.u_min, s.u_max
        );
    }
    for c in &r.checks {
        let v = c.value.map_or("non-finite".to_string(), |v| format!("{v:.3e}"));
        println!("{} {} {} <= {:.3e}", if c.pass { "PASS" } else { "FAIL" }, c.name, v, c.tolerance);
    }
    for w in &r.warnings {
        println!("warning: {w}");
    }
    if let Some(m) = &r.mesh {
        println!("mesh: {m}");
    }
    if let Some(e) = &r.error {
        eprintln!("error: {e}");
    }
    println!("exit {}", r.exit_code);
}
