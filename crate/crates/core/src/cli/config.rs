//! JSON scenario configuration.
//!
//! Component indices in configuration files are one-based (matching the
//! `y1`, `z2` variable names); everything inside the library is zero-based.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::ProbeSchedule;
use crate::dsl::{builtin, DslError, Generator, Region, TerminalFn};
use crate::geometry::Direction;
use crate::harness::ComparisonOrder;
use crate::solver::{SchemeConfig, SchemeKind};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

impl ConfigError {
    pub fn at(path: impl Into<String>, message: impl ToString) -> Self {
        ConfigError::Invalid { path: path.into(), message: message.to_string() }
    }
}

/// A generator given either by a builtin name or by inline expressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GeneratorSpec {
    Builtin {
        builtin: String,
    },
    Expressions {
        expressions: Vec<String>,
        /// Lipschitz constant; estimated on the default region if absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mu: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        label: Option<String>,
    },
}

impl GeneratorSpec {
    pub fn build(&self, n: usize, d: usize, path: &str) -> Result<Generator, ConfigError> {
        let g = match self {
            GeneratorSpec::Builtin { builtin: name } => {
                let mut g = builtin(name).map_err(|e| ConfigError::at(format!("{path}.builtin"), e))?;
                if name.trim() == "zero" {
                    g = Generator::zero(n, d);
                }
                g
            }
            GeneratorSpec::Expressions { expressions, mu, label } => {
                let texts: Vec<&str> = expressions.iter().map(String::as_str).collect();
                Generator::parse(n, d, &texts, *mu, label.clone().unwrap_or_else(|| "inline".into()))
                    .map_err(|e| dsl_error(&format!("{path}.expressions"), e))?
            }
        };
        if g.n() != n || g.d() != d {
            return Err(ConfigError::at(path, format!("generator is ({}, {}) but problem is ({n}, {d})", g.n(), g.d())));
        }
        Ok(g)
    }
}

fn dsl_error(path: &str, e: DslError) -> ConfigError {
    match e {
        DslError::Parse { component, source } => ConfigError::at(format!("{path}[{component}]"), source),
        other => ConfigError::at(path, other),
    }
}

fn terminal(n: usize, d: usize, texts: &[String], path: &str) -> Result<TerminalFn, ConfigError> {
    let t: Vec<&str> = texts.iter().map(String::as_str).collect();
    TerminalFn::parse(n, d, &t).map_err(|e| dsl_error(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub first: Vec<String>,
    pub second: Vec<String>,
}

/// Constructed ordered pairs around a base terminal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampledPairs {
    pub base: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub d: usize,
    pub horizon: f64,
    pub generator: GeneratorSpec,
    /// Second generator of a comparison; defaults to `generator`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator2: Option<GeneratorSpec>,
    /// Terminal of `solve`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub terminal: Option<Vec<String>>,
    /// Terminals of `viability`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub terminals: Vec<Vec<String>>,
    /// Explicit pairs of `compare`.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<PairSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampled_pairs: Option<SampledPairs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OrderConfig {
    Direction { q: Vec<f64> },
    /// `e_i`, one-based `index`.
    Component { index: usize },
    Uniform,
    AllComponents,
}

impl OrderConfig {
    pub fn comparison_order(&self, n: usize) -> Result<ComparisonOrder<f64>, ConfigError> {
        Ok(match self {
            OrderConfig::Component { index } => {
                check_index(*index, n, "order.index")?;
                ComparisonOrder::Component(index - 1)
            }
            OrderConfig::AllComponents => ComparisonOrder::AllComponents,
            _ => ComparisonOrder::Direction(self.direction(n)?),
        })
    }

    pub fn direction(&self, n: usize) -> Result<Direction<f64>, ConfigError> {
        match self {
            OrderConfig::Direction { q } => {
                if q.len() != n {
                    return Err(ConfigError::at("order.q", format!("expected {n} entries, got {}", q.len())));
                }
                Direction::new(q).map_err(|e| ConfigError::at("order.q", e))
            }
            OrderConfig::Component { index } => {
                check_index(*index, n, "order.index")?;
                Ok(Direction::unit(n, index - 1))
            }
            OrderConfig::Uniform => Ok(Direction::uniform(n)),
            OrderConfig::AllComponents => {
                Err(ConfigError::at("order.type", "all_components has no single direction"))
            }
        }
    }
}

fn check_index(index: usize, n: usize, path: &str) -> Result<(), ConfigError> {
    if index == 0 || index > n {
        Err(ConfigError::at(path, format!("component index must lie in 1..={n}, got {index}")))
    } else {
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ConditionKind {
    /// Two-generator inequality in direction `order`.
    #[default]
    Comparison,
    /// Coordinate form for `component`.
    Componentwise,
    /// Uniform-direction form.
    Uniform,
    /// Single-generator viability inequality in direction `order`.
    Viability,
    /// `⟨q, g¹ − g²⟩ ≥ 0` at sampled states.
    NecessaryOrder,
    /// `g¹_i = g²_i` at sampled states.
    Equality,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckerConfig {
    pub condition: ConditionKind,
    /// One-based component for `componentwise`, `equality` and
    /// `detect-structure` (all components when absent).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    /// Probe schedule of the condition checks; its seed is replaced by the
    /// scenario seed.
    pub schedule: ProbeSchedule,
    /// State box of the order, equality and structure checks.
    pub state_region: Region,
    pub state_samples: usize,
}

impl Default for CheckerConfig {
    fn default() -> Self {
        CheckerConfig {
            condition: ConditionKind::Comparison,
            component: None,
            schedule: ProbeSchedule::default(),
            state_region: Region::default(),
            state_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub problem: ProblemConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<SchemeConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checker: Option<CheckerConfig>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ScenarioConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ConfigError::at(if path == "." { "config".into() } else { path }, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        ScenarioConfig::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Structural checks that do not need parsing of expressions.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let p = &self.problem;
        if p.n == 0 || p.d == 0 {
            return Err(ConfigError::at("problem", format!("dimensions must be positive (n={}, d={})", p.n, p.d)));
        }
        if !(p.horizon.is_finite() && p.horizon > 0.0) {
            return Err(ConfigError::at("problem.horizon", format!("must be positive, got {}", p.horizon)));
        }
        if let Some(s) = &self.scheme {
            if s.steps == 0 || s.steps > 1_000_000 {
                return Err(ConfigError::at("scheme.steps", format!("must lie in 1..=1000000, got {}", s.steps)));
            }
            if s.kind == SchemeKind::Lsmc && !(1..=3).contains(&s.basis_degree) {
                return Err(ConfigError::at("scheme.basis_degree", format!("must be 1, 2 or 3, got {}", s.basis_degree)));
            }
            if !(s.picard_tol.is_finite() && s.picard_tol > 0.0) {
                return Err(ConfigError::at("scheme.picard_tol", "must be positive"));
            }
        }
        Ok(())
    }

    pub fn generator(&self) -> Result<Generator, ConfigError> {
        self.problem.generator.build(self.problem.n, self.problem.d, "problem.generator")
    }

    pub fn generator2(&self) -> Result<Generator, ConfigError> {
        match &self.problem.generator2 {
            Some(g) => g.build(self.problem.n, self.problem.d, "problem.generator2"),
            None => self.generator(),
        }
    }

    pub fn terminal(&self) -> Result<TerminalFn, ConfigError> {
        let texts = self.problem.terminal.as_ref().ok_or_else(|| ConfigError::at("problem.terminal", "missing"))?;
        terminal(self.problem.n, self.problem.d, texts, "problem.terminal")
    }

    pub fn terminals(&self) -> Result<Vec<TerminalFn>, ConfigError> {
        let mut out = Vec::new();
        if let Some(t) = &self.problem.terminal {
            out.push(terminal(self.problem.n, self.problem.d, t, "problem.terminal")?);
        }
        for (i, t) in self.problem.terminals.iter().enumerate() {
            out.push(terminal(self.problem.n, self.problem.d, t, &format!("problem.terminals[{i}]"))?);
        }
        if out.is_empty() {
            return Err(ConfigError::at("problem.terminals", "at least one terminal is required"));
        }
        Ok(out)
    }

    pub fn order(&self) -> Result<&OrderConfig, ConfigError> {
        self.order.as_ref().ok_or_else(|| ConfigError::at("order", "missing"))
    }

    pub fn scheme(&self) -> Result<&SchemeConfig, ConfigError> {
        self.scheme.as_ref().ok_or_else(|| ConfigError::at("scheme", "missing"))
    }

    pub fn checker(&self) -> CheckerConfig {
        let mut c = self.checker.clone().unwrap_or_default();
        c.schedule.seed = self.seed;
        c
    }

    /// Applies command-line overrides.
    pub fn with_overrides(
        mut self,
        seed: Option<u64>,
        scheme: Option<SchemeKind>,
        steps: Option<usize>,
        paths: Option<usize>,
    ) -> Result<Self, ConfigError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if scheme.is_some() || steps.is_some() || paths.is_some() {
            let base = self.scheme.clone();
            let mut sc = match (base, scheme) {
                (Some(b), Some(k)) => SchemeConfig { kind: k, ..b },
                (Some(b), None) => b,
                (None, Some(k)) => SchemeConfig { kind: k, ..SchemeConfig::ode(steps.unwrap_or(16)) },
                (None, None) => return Err(ConfigError::at("scheme", "--steps/--paths given but no scheme configured")),
            };
            if let Some(n) = steps {
                sc.steps = n;
            }
            if let Some(m) = paths {
                sc.paths = m;
            }
            self.scheme = Some(sc);
        }
        if let Some(sc) = self.scheme.as_mut() {
            if sc.kind == SchemeKind::Lsmc {
                sc.seed = self.seed;
            }
        }
        self.validate()?;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SOLVE: &str = r#"{
        "seed": 3,
        "problem": {"n": 1, "d": 1, "horizon": 1.0,
                    "generator": {"builtin": "zero"}, "terminal": ["w1"]},
        "scheme": {"type": "tree", "steps": 4}
    }"#;

    #[test]
    fn parses_and_round_trips() {
        let c = ScenarioConfig::from_json(SOLVE).unwrap();
        assert_eq!(c.scheme().unwrap().kind, SchemeKind::Tree);
        assert_eq!(ScenarioConfig::from_json(&c.to_json()).unwrap(), c);
        assert_eq!(c.generator().unwrap().n(), 1);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = SOLVE.replace("\"seed\": 3,", "");
        assert!(matches!(ScenarioConfig::from_json(&text), Err(ConfigError::Invalid { .. })));
    }

    #[test]
    fn errors_carry_field_paths() {
        let bad = SOLVE.replace("\"steps\": 4", "\"steps\": \"four\"");
        match ScenarioConfig::from_json(&bad) {
            Err(ConfigError::Invalid { path, .. }) => assert_eq!(path, "scheme.steps"),
            other => panic!("{other:?}"),
        }
        let c = ScenarioConfig::from_json(&SOLVE.replace("[\"w1\"]", "[\"w1 +\"]")).unwrap();
        match c.terminal() {
            Err(ConfigError::Invalid { path, message }) => {
                assert_eq!(path, "problem.terminal[0]");
                assert!(message.contains('4'), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn orders() {
        let o: OrderConfig = serde_json::from_str(r#"{"type": "component", "index": 2}"#).unwrap();
        assert_eq!(o.direction(3).unwrap().as_slice(), &[0.0, 1.0, 0.0]);
        assert!(o.direction(1).is_err());
        let u: OrderConfig = serde_json::from_str(r#"{"type": "uniform"}"#).unwrap();
        assert_eq!(u.direction(4).unwrap().as_slice(), &[0.5; 4]);
    }

    #[test]
    fn overrides() {
        let c = ScenarioConfig::from_json(SOLVE).unwrap().with_overrides(Some(9), Some(SchemeKind::Lsmc), Some(8), Some(500)).unwrap();
        let s = c.scheme().unwrap();
        assert_eq!((c.seed, s.kind, s.steps, s.paths, s.seed), (9, SchemeKind::Lsmc, 8, 500, 9));
    }
}
