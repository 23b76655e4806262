mod commands;
mod config;
mod error;
mod report;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::*;
use error::CliResult;
use report::{ensure_dir, write_json, RunReport};

/// Numerical experiments on circle-invariant Kähler metrics: identity checks,
/// Kähler-Ricci flow on quotients, lifts and descents, the Monge-Ampère
/// solver and the flip model.
///
/// Exit status: 0 when every check passes, 1 when any check fails, 2 on a
/// configuration or usage error.
#[derive(Debug, Parser)]
#[command(name = "vsoliton", version)]
struct Cli {
    /// JSON experiment file; flags override it, it overrides defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Main resolution of the command.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Main tolerance of the command.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Write example experiment files for the command to <out>/fixtures and exit.
    #[arg(long, global = true)]
    seed_fixtures: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Convergence of the invariant-calculus identities on test charts.
    Verify,
    /// Kähler-Ricci flow of a quotient profile.
    Flow,
    /// Lift a flow, check the soliton equation and descend again.
    LiftDescend,
    /// Solve the regularized Monge-Ampère equation by continuity.
    Solve,
    /// Series, ODE and descent checks for the flip model.
    Flip,
}

fn fixtures(command: Command) -> Vec<(&'static str, ExperimentConfig)> {
    let base = ExperimentConfig::current;
    match command {
        Command::Verify => vec![
            ("verify.json", ExperimentConfig { verify: Some(VerifyConfig::default()), ..base() }),
            (
                "verify-corrupted.json",
                ExperimentConfig {
                    verify: Some(VerifyConfig { charts: vec![ChartKind::Harmonic], corrupt: true, ..Default::default() }),
                    ..base()
                },
            ),
        ],
        Command::Flow => vec![
            ("flow-ke.json", ExperimentConfig { flow: Some(FlowConfig::default()), ..base() }),
            (
                "flow-perturbed.json",
                ExperimentConfig { flow: Some(FlowConfig { amplitude: 0.1, t_end: 4.0, n_out: 41, ..Default::default() }), ..base() },
            ),
            (
                "flow-unstable.json",
                ExperimentConfig { flow: Some(FlowConfig { dt: Some(1.0), ..Default::default() }), ..base() },
            ),
        ],
        Command::LiftDescend => vec![
            ("lift-descend.json", ExperimentConfig { lift_descend: Some(LiftDescendConfig::default()), ..base() }),
            (
                "lift-descend-flat-product.json",
                ExperimentConfig {
                    lift_descend: Some(LiftDescendConfig {
                        product: ProductConfig { lambda: 0.0, ..Default::default() },
                        ..Default::default()
                    }),
                    ..base()
                },
            ),
            (
                "lift-descend-corrupted.json",
                ExperimentConfig {
                    lift_descend: Some(LiftDescendConfig { corrupt_f: true, ..Default::default() }),
                    ..base()
                },
            ),
        ],
        Command::Solve => vec![
            ("solve-torus.json", ExperimentConfig { solve: Some(SolveConfig::default()), ..base() }),
            (
                "solve-round.json",
                ExperimentConfig {
                    solve: Some(SolveConfig { chart: SolveChart::Round, n_tau: 65, ..Default::default() }),
                    ..base()
                },
            ),
        ],
        Command::Flip => vec![
            ("flip.json", ExperimentConfig { flip: Some(FlipConfig::default()), ..base() }),
            (
                "flip-critical.json",
                ExperimentConfig { flip: Some(FlipConfig { tau_range: (0.0, 0.3), ..Default::default() }), ..base() },
            ),
        ],
    }
}

fn execute(cli: &Cli, out: &Path) -> CliResult<RunReport> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::current(),
    };
    match cli.command {
        Command::Verify => {
            let mut c = cfg.verify.unwrap_or_default();
            c.grid = cli.grid.unwrap_or(c.grid);
            c.tol = cli.tol.unwrap_or(c.tol);
            commands::verify(&c, out)
        }
        Command::Flow => {
            let mut c = cfg.flow.unwrap_or_default();
            c.n = cli.grid.unwrap_or(c.n);
            c.tol = cli.tol.unwrap_or(c.tol);
            commands::flow(&c, out)
        }
        Command::LiftDescend => {
            let mut c = cfg.lift_descend.unwrap_or_default();
            c.n_tau = cli.grid.unwrap_or(c.n_tau);
            c.tol = cli.tol.unwrap_or(c.tol);
            commands::lift_descend(&c, out)
        }
        Command::Solve => {
            let mut c = cfg.solve.unwrap_or_default();
            c.n_tau = cli.grid.unwrap_or(c.n_tau);
            c.newton.tol = cli.tol.unwrap_or(c.newton.tol);
            commands::solve(&c, out)
        }
        Command::Flip => {
            let mut c = cfg.flip.unwrap_or_default();
            c.n_r = cli.grid.unwrap_or(c.n_r);
            c.tol = cli.tol.unwrap_or(c.tol);
            commands::flip(&c, out)
        }
    }
}

fn run(cli: &Cli) -> CliResult<bool> {
    if cli.seed_fixtures {
        let dir = cli.out.join("fixtures");
        ensure_dir(&dir)?;
        for (name, cfg) in fixtures(cli.command) {
            write_json(&dir.join(name), &cfg)?;
            println!("wrote {}", dir.join(name).display());
        }
        return Ok(true);
    }
    ensure_dir(&cli.out)?;
    let mut report = execute(cli, &cli.out)?;
    report.finish()?;
    report.write(&cli.out)?;
    for line in report.summary_lines() {
        println!("{line}");
    }
    println!("{} ({} checks) -> {}", report.command, report.checks.len(), cli.out.display());
    Ok(report.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
