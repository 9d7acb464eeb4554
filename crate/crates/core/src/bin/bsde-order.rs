use std::path::PathBuf;
use std::process::ExitCode;

use bsde_order::cli::{emit_tables, run_examples, run_scenario, CliError, Command, RunReport, ScenarioConfig};
use bsde_order::solver::SchemeKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bsde-order", version, about = "Comparison and viability experiments for multidimensional BSDEs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Solve one BSDE and write its solution table.
    Solve(Opts),
    /// Solve pairs of BSDEs and test the order of their solutions.
    Compare(Opts),
    /// Test that solutions stay in a half-space.
    Viability(Opts),
    /// Probe the generator-side comparison condition.
    CheckCondition(Opts),
    /// Report which coordinates each generator component depends on.
    DetectStructure(Opts),
    /// Run the built-in golden suite.
    Examples(Opts),
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Ode,
    Tree,
    Lsmc,
}

#[derive(Args)]
struct Opts {
    /// Scenario file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for report.json and the CSV tables.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    paths: Option<usize>,
    /// Print nothing but errors.
    #[arg(long)]
    quiet: bool,
}

fn execute(command: Command, opts: &Opts) -> Result<RunReport, CliError> {
    let report = match (&opts.config, command) {
        (None, Command::Examples) => run_examples(opts.seed.unwrap_or(1)),
        (None, _) => {
            return Err(CliError::Config(bsde_order::cli::ConfigError::at("--config", "required for this command")))
        }
        (Some(path), _) => {
            let scheme = opts.scheme.map(|s| match s {
                SchemeArg::Ode => SchemeKind::Ode,
                SchemeArg::Tree => SchemeKind::Tree,
                SchemeArg::Lsmc => SchemeKind::Lsmc,
            });
            let cfg = ScenarioConfig::load(path)?.with_overrides(opts.seed, scheme, opts.steps, opts.paths)?;
            run_scenario(command, &cfg)?
        }
    };
    emit_tables(&report, &opts.out)?;
    if let Some(g) = &report.golden {
        std::fs::write(opts.out.join("golden.md"), g.to_markdown())?;
    }
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, opts) = match &cli.command {
        Cmd::Solve(o) => (Command::Solve, o),
        Cmd::Compare(o) => (Command::Compare, o),
        Cmd::Viability(o) => (Command::Viability, o),
        Cmd::CheckCondition(o) => (Command::CheckCondition, o),
        Cmd::DetectStructure(o) => (Command::DetectStructure, o),
        Cmd::Examples(o) => (Command::Examples, o),
    };
    match execute(command, opts) {
        Ok(report) => {
            if !opts.quiet {
                for c in &report.checks {
                    println!("{} {}: {}", if c.holds { "ok  " } else { "FAIL" }, c.name, c.detail);
                }
                if let Some(s) = &report.solution {
                    println!("Y(0) = {:?}", s.root_y);
                }
                println!("wrote {} ({:.2} s)", opts.out.display(), report.timing.elapsed_seconds);
            }
            ExitCode::from(report.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
