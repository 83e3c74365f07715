//! `fuzzfix`: config-driven verification of common-fixed-point hypotheses
//! in fuzzy metric spaces.
//!
//! Exit codes: 0 when every check passes, 1 when a violation or witness was
//! found, 2 on input, config or numerical errors.

mod commands;
mod config;
mod report;
#[cfg(test)]
mod tests;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::{CommandError, Outcome};
use crate::config::{load_config, parse_config, Overrides, RunConfig};
use crate::report::{Envelope, ErrorKind, ErrorReport, Settings, Status};

const EXAMPLE6: &str = include_str!("../configs/example6.toml");
const EXAMPLE6_LABEL: &str = "configs/example6.toml";

#[derive(Debug, Parser)]
#[command(
    name = "fuzzfix",
    version,
    about = "Numerical checks for common fixed point theorems in fuzzy metric spaces"
)]
#[command(after_help = "\
Flags override values from the config file, which override built-in defaults.
  --grid    scan resolution: [carrier] grid for axioms, pairs and fixpoint;
            [contraction] grid for verify, theorem and reproduce-example6;
            [psi] grid for psi-check; [dp] grid for dp-solve
  --tol     [tolerances] tail for pairs; [tolerances] fixed_point for
            fixpoint, theorem and reproduce-example6; [dp] tol for dp-solve
  --t-grid  [metric] t_grid for axioms and pairs; [contraction] t_grid for
            verify, theorem and reproduce-example6
A flag that has no meaning for the chosen command is an error.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the JSON report; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Seed for randomized sampling.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; reports do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Scan resolution; see below for the key it replaces.
    #[arg(long, global = true)]
    grid: Option<usize>,
    /// Tolerance; see below for the key it replaces.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Comma-separated positive scales, e.g. "0.1,1,10".
    #[arg(long = "t-grid", global = true, value_parser = parse_t_grid)]
    t_grid: Option<TGrid>,
}

#[derive(Debug, Clone)]
struct TGrid(Vec<f64>);

fn parse_t_grid(s: &str) -> Result<TGrid, String> {
    let ts = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if ts.is_empty() || ts.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
        return Err("t-grid values must be positive and finite".into());
    }
    Ok(TGrid(ts))
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Check the fuzzy metric axioms on sampled triples.
    Axioms,
    /// Check the side conditions of the configured implicit relation.
    PsiCheck,
    /// Scan the configured contractive condition.
    Verify,
    /// Coincidence points, commutativity, (E.A.), compatibility, ranges.
    Pairs,
    /// Search for common fixed points.
    Fixpoint,
    /// Run the full hypothesis pipeline and the uniqueness scan.
    Theorem,
    /// Solve the functional-equation system by value iteration.
    DpSolve {
        /// Also write the four solutions as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Run the theorem pipeline on the bundled worked example.
    ReproduceExample6,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Axioms => "axioms",
            Command::PsiCheck => "psi-check",
            Command::Verify => "verify",
            Command::Pairs => "pairs",
            Command::Fixpoint => "fixpoint",
            Command::Theorem => "theorem",
            Command::DpSolve { .. } => "dp-solve",
            Command::ReproduceExample6 => "reproduce-example6",
        }
    }
}

fn usage(msg: String) -> ErrorReport {
    ErrorReport::new(ErrorKind::Usage, msg)
}

/// Maps the generic flags onto the config keys they replace for `cmd`.
fn overrides(cli: &Cli) -> Result<Overrides, ErrorReport> {
    let mut ov = Overrides::default();
    let name = cli.command.name();
    let unsupported = |flag: &str| usage(format!("--{flag} has no effect on {name}"));
    if let Some(g) = cli.grid {
        match cli.command {
            Command::Axioms | Command::Pairs | Command::Fixpoint => ov.carrier_grid = Some(g),
            Command::Verify | Command::Theorem | Command::ReproduceExample6 => {
                ov.contraction_grid = Some(g)
            }
            Command::PsiCheck => ov.psi_grid = Some(g),
            Command::DpSolve { .. } => ov.dp_grid = Some(g),
        }
    }
    if let Some(t) = cli.tol {
        if !(t > 0.0 && t.is_finite()) {
            return Err(usage(format!("--tol must be positive, got {t}")));
        }
        match cli.command {
            Command::Pairs => ov.tail_tol = Some(t),
            Command::Fixpoint | Command::Theorem | Command::ReproduceExample6 => {
                ov.fixed_point_tol = Some(t)
            }
            Command::DpSolve { .. } => ov.dp_tol = Some(t),
            Command::Axioms | Command::PsiCheck | Command::Verify => {
                return Err(unsupported("tol"))
            }
        }
    }
    if let Some(TGrid(ts)) = &cli.t_grid {
        match cli.command {
            Command::Axioms | Command::Pairs => ov.metric_t_grid = Some(ts.clone()),
            Command::Verify | Command::Theorem | Command::ReproduceExample6 => {
                ov.contraction_t_grid = Some(ts.clone())
            }
            Command::PsiCheck | Command::Fixpoint | Command::DpSolve { .. } => {
                return Err(unsupported("t-grid"))
            }
        }
    }
    Ok(ov)
}

fn load(cli: &Cli, ov: &Overrides) -> Result<RunConfig, ErrorReport> {
    match (&cli.command, &cli.config) {
        (Command::ReproduceExample6, None) => {
            parse_config(EXAMPLE6, EXAMPLE6_LABEL, ov).map_err(|e| ErrorReport::from(&e))
        }
        (Command::ReproduceExample6, Some(_)) => Err(usage(
            "reproduce-example6 runs the bundled config and does not take --config".into(),
        )),
        (_, Some(path)) => load_config(path, ov).map_err(|e| ErrorReport::from(&e)),
        (_, None) => Err(usage(format!("{} needs --config PATH", cli.command.name()))),
    }
}

fn dispatch(cli: &Cli, cfg: &RunConfig) -> Result<Outcome, CommandError> {
    match &cli.command {
        Command::Axioms => commands::axioms(cfg, cli.seed),
        Command::PsiCheck => commands::psi_check(cfg),
        Command::Verify => commands::verify(cfg),
        Command::Pairs => commands::pairs(cfg),
        Command::Fixpoint => commands::fixpoint(cfg),
        Command::Theorem => commands::theorem(cfg),
        Command::DpSolve { csv } => commands::dp_solve(cfg, csv.as_deref()),
        Command::ReproduceExample6 => commands::reproduce_example6(cfg),
    }
}

fn run(cli: &Cli) -> Envelope {
    let config_label = match (&cli.command, &cli.config) {
        (_, Some(p)) => Some(p.display().to_string()),
        (Command::ReproduceExample6, None) => Some(EXAMPLE6_LABEL.to_string()),
        _ => None,
    };
    let settings = Settings {
        seed: cli.seed,
        grid: cli.grid,
        tol: cli.tol,
        t_grid: cli.t_grid.as_ref().map(|t| t.0.clone()),
    };
    let env = Envelope::new(cli.command.name(), config_label, settings);
    let cfg = match overrides(cli).and_then(|ov| load(cli, &ov)) {
        Ok(cfg) => cfg,
        Err(e) => return env.finish(Status::Error, None, Some(e)),
    };
    match dispatch(cli, &cfg) {
        Ok(o) => {
            let status = if o.pass {
                Status::Pass
            } else {
                Status::Violation
            };
            env.finish(status, Some(o.result), None)
        }
        Err(e) => {
            let report = match &e {
                CommandError::Config(c) => ErrorReport::from(c.as_ref()),
                CommandError::Core(c) => ErrorReport::from(c),
                CommandError::Io { .. } => ErrorReport::new(ErrorKind::Io, e.to_string()),
            };
            env.finish(Status::Error, None, Some(report))
        }
    }
}

fn write_report(out: Option<&Path>, json: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, json),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(json.as_bytes())?;
            stdout.flush()
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = cli.jobs {
        if j == 0 {
            eprintln!("fuzzfix: error: --jobs must be at least 1");
            return ExitCode::from(2);
        }
        builder = builder.num_threads(j);
    }
    let env = match builder.build() {
        Ok(pool) => pool.install(|| run(&cli)),
        Err(e) => {
            eprintln!("fuzzfix: error: cannot start worker pool: {e}");
            return ExitCode::from(2);
        }
    };
    if let Some(e) = &env.error {
        eprintln!("fuzzfix: error: {}", e.message);
    }
    if let Err(e) = write_report(cli.out.as_deref(), &env.to_json()) {
        eprintln!("fuzzfix: error: cannot write report: {e}");
        return ExitCode::from(2);
    }
    ExitCode::from(env.exit_code as u8)
}
