//! Dispatch of a configured scenario to the library.

use std::time::Instant;

use thiserror::Error;

use super::config::{ConditionKind, ConfigError, OrderConfig, ScenarioConfig};
use super::golden::reproduce_examples;
use super::report::{Check, RunReport, SolutionSummary, Tables};
use crate::checker::{
    check_componentwise_equality, check_condition_ii, check_condition_uniform, check_condition_v,
    check_necessary_order, check_viability_condition, detect_structure, CheckerError, Classification,
};
use crate::dsl::TerminalFn;
use crate::harness::{
    run_comparison, run_viability, sample_componentwise_terminals, sample_ordered_terminals, ComparisonOrder,
    HarnessError, TerminalPair, Verdict,
};
use crate::solver::{solve, BsdeSpec, SchemeKind, Solution, SolverError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Compare,
    Viability,
    CheckCondition,
    DetectStructure,
    Examples,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Compare => "compare",
            Command::Viability => "viability",
            Command::CheckCondition => "check-condition",
            Command::DetectStructure => "detect-structure",
            Command::Examples => "examples",
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Checker(#[from] CheckerError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// Every error, including numerical failures, ends the run with 2;
    /// exit code 1 is reserved for completed runs with a failed property.
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// Runs `command` on `config`. The report's exit code tells whether every
/// asserted property held.
pub fn run_scenario(command: Command, config: &ScenarioConfig) -> Result<RunReport, CliError> {
    let start = Instant::now();
    config.validate()?;
    let mut report = RunReport::new(command.name(), Some(config.clone()));
    match command {
        Command::Solve => run_solve(config, &mut report)?,
        Command::Compare => run_compare(config, &mut report)?,
        Command::Viability => run_viab(config, &mut report)?,
        Command::CheckCondition => run_check(config, &mut report)?,
        Command::DetectStructure => run_structure(config, &mut report)?,
        Command::Examples => {
            let golden = reproduce_examples(config.seed);
            report.checks = golden.checks();
            report.golden = Some(golden);
        }
    }
    report.timing.elapsed_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

/// Golden suite without a configuration file.
pub fn run_examples(seed: u64) -> RunReport {
    let start = Instant::now();
    let mut report = RunReport::new(Command::Examples.name(), None);
    let golden = reproduce_examples(seed);
    report.checks = golden.checks();
    report.golden = Some(golden);
    report.timing.elapsed_seconds = start.elapsed().as_secs_f64();
    report
}

fn summarize(sol: &Solution<f64>, scheme: SchemeKind, rows: usize) -> SolutionSummary {
    SolutionSummary {
        scheme: format!("{scheme:?}").to_lowercase(),
        steps: sol.grid().steps(),
        root_y: sol.y(0, 0).to_vec(),
        root_z: sol.z(0, 0).to_vec(),
        std_error: match sol {
            Solution::Lsmc(s) => Some(s.std_error.clone()),
            _ => None,
        },
        rows,
    }
}

fn run_solve(config: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let scheme = config.scheme()?;
    let spec = BsdeSpec::new(config.generator()?, config.terminal()?, config.problem.horizon)?;
    let sol = solve::<f64>(&spec, scheme)?;
    let tables = Tables::from_solution(&sol);
    report.solution = Some(summarize(&sol, scheme.kind, tables.solution.len()));
    report.tables = tables;
    Ok(())
}

fn pairs(config: &ScenarioConfig, order: &OrderConfig) -> Result<Vec<TerminalPair>, CliError> {
    let (n, d) = (config.problem.n, config.problem.d);
    let mut out = Vec::new();
    for (i, p) in config.problem.pairs.iter().enumerate() {
        let parse = |texts: &[String], which: &str| {
            let t: Vec<&str> = texts.iter().map(String::as_str).collect();
            TerminalFn::parse(n, d, &t).map_err(|e| ConfigError::at(format!("problem.pairs[{i}].{which}"), e))
        };
        out.push(TerminalPair { first: parse(&p.first, "first")?, second: parse(&p.second, "second")? });
    }
    if let Some(s) = &config.problem.sampled_pairs {
        let t: Vec<&str> = s.base.iter().map(String::as_str).collect();
        let base = TerminalFn::parse(n, d, &t).map_err(|e| ConfigError::at("problem.sampled_pairs.base", e))?;
        let sampled = match order {
            OrderConfig::AllComponents => sample_componentwise_terminals(&base, s.count, config.seed)?,
            _ => sample_ordered_terminals(&order.direction(n)?, &base, s.count, config.seed)?,
        };
        out.extend(sampled);
    }
    Ok(out)
}

fn run_compare(config: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let order = config.order()?;
    let n = config.problem.n;
    let cmp: ComparisonOrder<f64> = order.comparison_order(n)?;
    let pairs = pairs(config, order)?;
    let rep = run_comparison(&config.generator()?, &config.generator2()?, &cmp, &pairs, config.problem.horizon, config.scheme()?)?;
    let detail = match rep.min_margin {
        Some(m) => format!("min margin {m:.6e} over {} pairs (tolerance {:.1e})", pairs.len(), rep.tolerance),
        None => "no pairs".to_string(),
    };
    report.checks.push(Check::new("comparison", rep.verdict == Verdict::Holds, detail));
    report.tables.margins = rep.margins.clone();
    report.comparison = Some(rep);
    Ok(())
}

fn run_viab(config: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let q = config.order()?.direction(config.problem.n)?;
    let terminals = config.terminals()?;
    let rep = run_viability(&config.generator()?, &q, &terminals, config.problem.horizon, config.scheme()?)?;
    let detail = format!("min level {:.6e} over {} terminals", rep.min_level.unwrap_or(f64::INFINITY), terminals.len());
    report.checks.push(Check::new("viability", rep.verdict == Verdict::Holds, detail));
    report.tables.margins = rep.margins.clone();
    report.viability = Some(rep);
    Ok(())
}

fn component(config: &ScenarioConfig, c: Option<usize>) -> Result<Option<usize>, ConfigError> {
    match c {
        None => Ok(None),
        Some(i) if i >= 1 && i <= config.problem.n => Ok(Some(i - 1)),
        Some(i) => Err(ConfigError::at("checker.component", format!("must lie in 1..={}, got {i}", config.problem.n))),
    }
}

fn run_check(config: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let chk = config.checker();
    let n = config.problem.n;
    let comp = component(config, chk.component)?;
    let (g1, g2) = (config.generator()?, config.generator2()?);
    let condition = match chk.condition {
        ConditionKind::Comparison => Some(check_condition_ii(&g1, &g2, &config.order()?.direction(n)?, &chk.schedule)?),
        ConditionKind::Componentwise => {
            let i = comp.ok_or_else(|| ConfigError::at("checker.component", "required for the componentwise condition"))?;
            Some(check_condition_v::<f64>(&g1, &g2, i, &chk.schedule)?)
        }
        ConditionKind::Uniform => Some(check_condition_uniform::<f64>(&g1, &g2, &chk.schedule)?),
        ConditionKind::Viability => Some(check_viability_condition(&g1, &config.order()?.direction(n)?, &chk.schedule)?),
        ConditionKind::NecessaryOrder => {
            let q = config.order()?.direction(n)?;
            let r = check_necessary_order(&g1, &g2, &q, &chk.state_region, chk.state_samples, config.seed)?;
            report.checks.push(Check::new("necessary_order", r.holds, format!("min margin {:.6e}", r.min_margin)));
            report.order_check = Some(r);
            None
        }
        ConditionKind::Equality => {
            let comps: Vec<usize> = comp.map_or_else(|| (0..n).collect(), |i| vec![i]);
            for i in comps {
                let r = check_componentwise_equality::<f64>(&g1, &g2, i, &chk.state_region, chk.state_samples, config.seed)?;
                report.checks.push(Check::new(format!("equality[{}]", i + 1), r.equal, format!("max gap {:.6e}", r.max_gap)));
                report.equality.push(r);
            }
            None
        }
    };
    if let Some(mut c) = condition {
        let bounded = c.classification == Classification::Bounded;
        let detail = format!(
            "sup C_required {:.6e}, growth exponent {}",
            c.sup_c_required,
            c.growth_exponent.map_or("n/a".to_string(), |s| format!("{s:.4}"))
        );
        report.checks.push(Check::new(format!("condition:{}", c.condition), bounded, detail));
        report.tables.probes = std::mem::take(&mut c.probes);
        report.condition = Some(c);
    }
    Ok(())
}

fn run_structure(config: &ScenarioConfig, report: &mut RunReport) -> Result<(), CliError> {
    let chk = config.checker();
    let n = config.problem.n;
    let g = config.generator()?;
    let comps: Vec<usize> = component(config, chk.component)?.map_or_else(|| (0..n).collect(), |i| vec![i]);
    for i in comps {
        let m = detect_structure::<f64>(&g, i, &chk.state_region, chk.state_samples, config.seed)?;
        let detail = format!("depends on y {:?}, on z rows {:?}", m.depends_on_y, m.depends_on_z);
        report.checks.push(Check::new(format!("diagonal[{}]", i + 1), m.diagonal, detail));
        report.structure.push(m);
    }
    Ok(())
}
