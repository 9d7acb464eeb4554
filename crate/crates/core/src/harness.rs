//! Empirical comparison and viability experiments.
//!
//! Both BSDEs of a comparison are solved on the same tree or path ensemble,
//! so margins are compared node by node. A verdict of `violated` requires the
//! worst margin to fall below `-tolerance`, where the tolerance is
//! [`BASE_TOLERANCE`] plus three Monte Carlo standard errors for LSMC runs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{DslError, Expr, Generator, TerminalFn};
use crate::geometry::{Direction, GeometryError};
use crate::linalg::dot;
use crate::sampling::{stream_rng, uniform};
use crate::scalar::Real;
use crate::solver::{solve, BsdeSpec, SchemeConfig, Solution, SolverError};

/// Margin tolerance for exact (tree / ODE) schemes.
pub const BASE_TOLERANCE: f64 = 1e-9;
/// Random `w` draws used to validate terminal preconditions.
const TERMINAL_CHECKS: usize = 1024;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("terminal {terminal} leaves K: <xi(w), q> = {value:e} at w = {w:?}")]
    TerminalNotInK { terminal: usize, value: f64, w: Vec<f64> },
    #[error("terminal pair {pair} is not ordered: <xi1 - xi2, q> = {value:e} at w = {w:?}")]
    NotOrdered { pair: usize, value: f64, w: Vec<f64> },
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Dsl(#[from] DslError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Holds,
    Violated,
}

/// Which order the comparison margin is measured in.
#[derive(Debug, Clone, PartialEq)]
pub enum ComparisonOrder<T> {
    /// `⟨Y¹ − Y², q⟩`.
    Direction(Direction<T>),
    /// `(Y¹ − Y²)_i` (zero-based `i`).
    Component(usize),
    /// `min_i (Y¹ − Y²)_i`.
    AllComponents,
}

/// Serializable description of a [`ComparisonOrder`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderDescription {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
}

impl<T: Real> ComparisonOrder<T> {
    pub fn describe(&self) -> OrderDescription {
        match self {
            ComparisonOrder::Direction(q) => OrderDescription {
                kind: "direction".into(),
                q: Some(q.as_slice().iter().map(|v| v.as_f64()).collect()),
                component: None,
            },
            ComparisonOrder::Component(i) => {
                OrderDescription { kind: "component".into(), q: None, component: Some(*i) }
            }
            ComparisonOrder::AllComponents => {
                OrderDescription { kind: "all_components".into(), q: None, component: None }
            }
        }
    }

    fn check_dim(&self, n: usize) -> Result<(), HarnessError> {
        match self {
            ComparisonOrder::Direction(q) if q.dim() != n => {
                Err(HarnessError::DimensionMismatch(format!("direction has dimension {}, BSDE has {n}", q.dim())))
            }
            ComparisonOrder::Component(i) if *i >= n => {
                Err(HarnessError::DimensionMismatch(format!("component {i} out of range for n = {n}")))
            }
            _ => Ok(()),
        }
    }

    /// Margin of `diff` and the component attaining it (componentwise modes).
    fn margin(&self, diff: &[T]) -> (T, Option<usize>) {
        match self {
            ComparisonOrder::Direction(q) => (dot(diff, q.as_slice()), None),
            ComparisonOrder::Component(i) => (diff[*i], Some(*i)),
            ComparisonOrder::AllComponents => {
                let (i, v) = diff
                    .iter()
                    .enumerate()
                    .fold((0, T::infinity()), |(bi, bv), (i, &v)| if v < bv { (i, v) } else { (bi, bv) });
                (v, Some(i))
            }
        }
    }

    /// Weights turning per-component standard errors into a margin error.
    fn weights(&self, n: usize) -> Vec<f64> {
        match self {
            ComparisonOrder::Direction(q) => q.as_slice().iter().map(|v| v.as_f64().abs()).collect(),
            ComparisonOrder::Component(i) => (0..n).map(|j| if j == *i { 1.0 } else { 0.0 }).collect(),
            ComparisonOrder::AllComponents => vec![1.0; n],
        }
    }
}

/// A terminal pair `(ξ¹, ξ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalPair {
    pub first: TerminalFn,
    pub second: TerminalFn,
}

/// Location of the worst margin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub trial: usize,
    pub step: usize,
    pub t: f64,
    pub state: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    pub margin: f64,
}

/// Worst margin over all states at one grid time of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub trial: usize,
    pub step: usize,
    pub t: f64,
    pub state: usize,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub min_margin: f64,
    /// Margin at `t = 0`.
    pub root_margin: f64,
    pub tolerance: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub order: OrderDescription,
    pub scheme: SchemeConfig,
    pub horizon: f64,
    pub trials: Vec<TrialResult>,
    pub margins: Vec<MarginRow>,
    /// `None` when there are no trials.
    pub min_margin: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViabilityReport {
    pub direction: Vec<f64>,
    pub scheme: SchemeConfig,
    pub horizon: f64,
    pub trials: Vec<TrialResult>,
    pub margins: Vec<MarginRow>,
    /// Minimum of `⟨Y_t, q⟩`; `None` when there are no terminals.
    pub min_level: Option<f64>,
    pub tolerance: f64,
    pub verdict: Verdict,
    pub witness: Option<Witness>,
}

/// `ḡ` on `2n` coordinates with `μ = 2μ₁ + 2μ₂`.
pub fn build_doubled_generator(g1: &Generator, g2: &Generator) -> Result<Generator, HarnessError> {
    Generator::doubled(g1, g2).map_err(|e| HarnessError::DimensionMismatch(e.to_string()))
}

/// `base + α·q + v` with `α ≥ 0` and `⟨v, q⟩ = 0` (checked on random `w`).
pub fn ordered_terminal(base: &TerminalFn, q: &[f64], alpha: Expr, v: &[Expr]) -> Result<TerminalFn, HarnessError> {
    let n = base.n();
    if q.len() != n || v.len() != n {
        return Err(HarnessError::DimensionMismatch(format!(
            "base has {n} components, q has {}, v has {}",
            q.len(),
            v.len()
        )));
    }
    let comps: Vec<Expr> = (0..n)
        .map(|i| base.components()[i].clone() + alpha.clone() * Expr::num(q[i]) + v[i].clone())
        .collect();
    let out = TerminalFn::from_exprs(n, base.d(), comps)?;
    let vt = TerminalFn::from_exprs(n, base.d(), v.to_vec())?;
    let at = TerminalFn::from_exprs(1, base.d(), vec![alpha])?;
    let mut rng = stream_rng(0, 0);
    for _ in 0..64 {
        let w: Vec<f64> = (0..base.d()).map(|_| uniform(&mut rng, -3.0, 3.0)).collect();
        let a = at.eval(&w).map_err(DslError::from)?[0];
        let ortho = dot(&vt.eval(&w).map_err(DslError::from)?, q);
        if a < 0.0 || ortho.abs() > 1e-9 {
            return Err(HarnessError::NotOrdered { pair: 0, value: a.min(-ortho.abs()), w });
        }
    }
    Ok(out)
}

/// Ordered pairs `(ξ¹, ξ²)` with `ξ² = base` and `ξ¹ = base + α·q + v`.
///
/// Trials cycle through shift shapes `α = a`, `α = a·(w_j)⁺` and
/// `α = a + b·w_j²` with `a, b ∈ [0, 1]`; the orthogonal part is
/// `v = Σ_k (c_k + c'_k·w_1) e_k` over an orthonormal basis of `q^⊥`.
pub fn sample_ordered_terminals<T: Real>(
    q: &Direction<T>,
    base: &TerminalFn,
    count: usize,
    seed: u64,
) -> Result<Vec<TerminalPair>, HarnessError> {
    let n = base.n();
    let d = base.d();
    if q.dim() != n {
        return Err(HarnessError::DimensionMismatch(format!("direction has dimension {}, terminal has {n}", q.dim())));
    }
    let qf: Vec<f64> = q.as_slice().iter().map(|v| v.as_f64()).collect();
    let basis: Vec<Vec<f64>> =
        q.orthogonal_basis().iter().map(|b| b.iter().map(|v| v.as_f64()).collect()).collect();
    (0..count)
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let a: f64 = uniform(&mut rng, 0.0, 1.0);
            let b: f64 = uniform(&mut rng, 0.0, 1.0);
            let j = r / 3 % d;
            let alpha = match r % 3 {
                0 => Expr::num(a),
                1 => Expr::num(a) * Expr::w(j).pos(),
                _ => Expr::num(a) + Expr::num(b) * Expr::w(j) * Expr::w(j),
            };
            let mut v = vec![Expr::num(0.0); n];
            for e in &basis {
                let c: f64 = uniform(&mut rng, -1.0, 1.0);
                let c1: f64 = uniform(&mut rng, -1.0, 1.0);
                let coef = Expr::num(c) + Expr::num(c1) * Expr::w(0);
                for i in 0..n {
                    if e[i] != 0.0 {
                        v[i] = v[i].clone() + coef.clone() * Expr::num(e[i]);
                    }
                }
            }
            let first = ordered_terminal(base, &qf, alpha, &v)?;
            Ok(TerminalPair { first, second: base.clone() })
        })
        .collect()
}

/// Pairs ordered in every coordinate: `ξ¹_i = ξ²_i + α_i` with each `α_i ≥ 0`
/// drawn from the shapes of [`sample_ordered_terminals`].
pub fn sample_componentwise_terminals(
    base: &TerminalFn,
    count: usize,
    seed: u64,
) -> Result<Vec<TerminalPair>, HarnessError> {
    let (n, d) = (base.n(), base.d());
    (0..count)
        .map(|r| {
            let mut rng = stream_rng(seed, r as u64);
            let comps = (0..n)
                .map(|i| {
                    let a: f64 = uniform(&mut rng, 0.0, 1.0);
                    let b: f64 = uniform(&mut rng, 0.0, 1.0);
                    let j = (r / 3 + i) % d;
                    let alpha = match (r + i) % 3 {
                        0 => Expr::num(a),
                        1 => Expr::num(a) * Expr::w(j).pos(),
                        _ => Expr::num(a) + Expr::num(b) * Expr::w(j) * Expr::w(j),
                    };
                    base.components()[i].clone() + alpha
                })
                .collect();
            Ok(TerminalPair { first: TerminalFn::from_exprs(n, d, comps)?, second: base.clone() })
        })
        .collect()
}

struct Scan {
    rows: Vec<MarginRow>,
    min: f64,
    root: f64,
    witness: Witness,
}

/// Worst margin per grid time, computed from `margin(k, s)`.
fn scan<T: Real>(
    trial: usize,
    sol: &Solution<T>,
    margin: impl Fn(usize, usize) -> (T, Option<usize>) + Sync,
) -> Scan {
    let grid = *sol.grid();
    let mut rows = Vec::with_capacity(grid.steps() + 1);
    let mut witness = Witness { trial, step: 0, t: 0.0, state: 0, component: None, margin: f64::INFINITY };
    for k in 0..=grid.steps() {
        let (s, (m, c)) = (0..sol.states(k))
            .into_par_iter()
            .map(|s| (s, margin(k, s)))
            .reduce(
                || (usize::MAX, (T::infinity(), None)),
                |a, b| if b.1 .0 < a.1 .0 || (b.1 .0 == a.1 .0 && b.0 < a.0) { b } else { a },
            );
        let m = m.as_f64();
        let t = grid.time(k).as_f64();
        if m < witness.margin {
            witness = Witness { trial, step: k, t, state: s, component: c, margin: m };
        }
        rows.push(MarginRow { trial, step: k, t, state: s, margin: m });
    }
    let root = rows[0].margin;
    Scan { min: witness.margin, root, rows, witness }
}

fn mc_tolerance<T: Real>(sols: &[&Solution<T>], weights: &[f64]) -> f64 {
    let se: f64 = sols
        .iter()
        .map(|s| match s {
            Solution::Lsmc(l) => l.std_error.iter().zip(weights).map(|(e, w)| e.as_f64() * w).sum(),
            _ => 0.0,
        })
        .sum();
    BASE_TOLERANCE + 3.0 * se
}

fn verdict(min: f64, tol: f64) -> Verdict {
    if min < -tol {
        Verdict::Violated
    } else {
        Verdict::Holds
    }
}

struct Merged {
    trials: Vec<TrialResult>,
    margins: Vec<MarginRow>,
    min: Option<f64>,
    tolerance: f64,
    verdict: Verdict,
    witness: Option<Witness>,
}

fn merge(results: Vec<(Scan, f64)>) -> Merged {
    let mut out = Merged {
        trials: Vec::with_capacity(results.len()),
        margins: Vec::new(),
        min: None,
        tolerance: BASE_TOLERANCE,
        verdict: Verdict::Holds,
        witness: None,
    };
    for (r, tol) in results {
        let v = verdict(r.min, tol);
        out.trials.push(TrialResult { trial: r.witness.trial, min_margin: r.min, root_margin: r.root, tolerance: tol, verdict: v });
        out.tolerance = out.tolerance.max(tol);
        if v == Verdict::Violated {
            out.verdict = Verdict::Violated;
        }
        if out.min.is_none_or(|m| r.min < m) {
            out.min = Some(r.min);
            out.witness = Some(r.witness.clone());
        }
        out.margins.extend(r.rows);
    }
    out
}

/// Solves `(g¹, ξ¹)` and `(g², ξ²)` for every pair and records the worst
/// order margin over all grid times and states.
pub fn run_comparison<T: Real>(
    g1: &Generator,
    g2: &Generator,
    order: &ComparisonOrder<T>,
    pairs: &[TerminalPair],
    horizon: f64,
    scheme: &SchemeConfig,
) -> Result<ComparisonReport, HarnessError> {
    if g1.n() != g2.n() || g1.d() != g2.d() {
        return Err(HarnessError::DimensionMismatch(format!(
            "generators are ({}, {}) and ({}, {})",
            g1.n(),
            g1.d(),
            g2.n(),
            g2.d()
        )));
    }
    let n = g1.n();
    order.check_dim(n)?;
    let weights = order.weights(n);
    let results = pairs
        .par_iter()
        .enumerate()
        .map(|(trial, pair)| {
            let s1 = solve::<T>(&BsdeSpec::new(g1.clone(), pair.first.clone(), horizon)?, scheme)?;
            let s2 = solve::<T>(&BsdeSpec::new(g2.clone(), pair.second.clone(), horizon)?, scheme)?;
            let scan = scan(trial, &s1, |k, s| {
                let diff: Vec<T> = s1.y(k, s).iter().zip(s2.y(k, s)).map(|(&a, &b)| a - b).collect();
                order.margin(&diff)
            });
            Ok((scan, mc_tolerance(&[&s1, &s2], &weights)))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let m = merge(results);
    Ok(ComparisonReport {
        order: order.describe(),
        scheme: scheme.clone(),
        horizon,
        trials: m.trials,
        margins: m.margins,
        min_margin: m.min,
        tolerance: m.tolerance,
        verdict: m.verdict,
        witness: m.witness,
    })
}

fn check_terminal_in_k<T: Real>(idx: usize, xi: &TerminalFn, q: &Direction<T>, horizon: f64) -> Result<(), HarnessError> {
    let qf: Vec<f64> = q.as_slice().iter().map(|v| v.as_f64()).collect();
    let mut rng = stream_rng(0, idx as u64);
    let spread = 5.0 * horizon.sqrt();
    for p in 0..TERMINAL_CHECKS {
        let w: Vec<f64> = if p == 0 { vec![0.0; xi.d()] } else { (0..xi.d()).map(|_| uniform(&mut rng, -spread, spread)).collect() };
        let value = dot(&xi.eval(&w).map_err(DslError::from)?, &qf);
        if value < -1e-12 {
            return Err(HarnessError::TerminalNotInK { terminal: idx, value, w });
        }
    }
    Ok(())
}

/// Solves `(g, ξ)` for each terminal with `⟨ξ, q⟩ ≥ 0` and records the
/// smallest `⟨Y_t, q⟩`.
pub fn run_viability<T: Real>(
    g: &Generator,
    q: &Direction<T>,
    terminals: &[TerminalFn],
    horizon: f64,
    scheme: &SchemeConfig,
) -> Result<ViabilityReport, HarnessError> {
    if q.dim() != g.n() {
        return Err(HarnessError::DimensionMismatch(format!("direction has dimension {}, generator has {}", q.dim(), g.n())));
    }
    for (i, xi) in terminals.iter().enumerate() {
        check_terminal_in_k(i, xi, q, horizon)?;
    }
    let weights: Vec<f64> = q.as_slice().iter().map(|v| v.as_f64().abs()).collect();
    let results = terminals
        .par_iter()
        .enumerate()
        .map(|(trial, xi)| {
            let sol = solve::<T>(&BsdeSpec::new(g.clone(), xi.clone(), horizon)?, scheme)?;
            let steps = sol.grid().steps();
            for s in 0..sol.states(steps) {
                let value = dot(sol.y(steps, s), q.as_slice()).as_f64();
                if value < -1e-12 {
                    let w = sol.w(steps, s).iter().map(|v| v.as_f64()).collect();
                    return Err(HarnessError::TerminalNotInK { terminal: trial, value, w });
                }
            }
            let scan = scan(trial, &sol, |k, s| (dot(sol.y(k, s), q.as_slice()), None));
            Ok((scan, mc_tolerance(&[&sol], &weights)))
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let m = merge(results);
    Ok(ViabilityReport {
        direction: q.as_slice().iter().map(|v| v.as_f64()).collect(),
        scheme: scheme.clone(),
        horizon,
        trials: m.trials,
        margins: m.margins,
        min_level: m.min,
        tolerance: m.tolerance,
        verdict: m.verdict,
        witness: m.witness,
    })
}

/// Outcome of solving the doubled system next to the two original BSDEs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DoubledConsistency {
    /// `max |Ȳ − (Y¹ − Y², Y²)|` over all grid times and states.
    pub residual: f64,
    /// `max |⟨Ȳ¹, q⟩ − ⟨Y¹ − Y², q⟩|` for the supplied direction.
    pub margin_gap: f64,
}

/// Solves `ḡ` with terminal `(ξ¹ − ξ², ξ²)` and compares with `(Y¹ − Y², Y²)`.
pub fn check_doubled_consistency<T: Real>(
    g1: &Generator,
    g2: &Generator,
    xi1: &TerminalFn,
    xi2: &TerminalFn,
    horizon: f64,
    scheme: &SchemeConfig,
) -> Result<f64, HarnessError> {
    let q = Direction::<T>::unit(g1.n(), 0);
    Ok(doubled_consistency(g1, g2, xi1, xi2, &q, horizon, scheme)?.residual)
}

/// As [`check_doubled_consistency`], also reporting the order-margin gap in
/// direction `q`.
pub fn doubled_consistency<T: Real>(
    g1: &Generator,
    g2: &Generator,
    xi1: &TerminalFn,
    xi2: &TerminalFn,
    q: &Direction<T>,
    horizon: f64,
    scheme: &SchemeConfig,
) -> Result<DoubledConsistency, HarnessError> {
    let gbar = build_doubled_generator(g1, g2)?;
    let xibar = xi1.minus(xi2)?.stack(xi2)?;
    let n = g1.n();
    if q.dim() != n {
        return Err(HarnessError::DimensionMismatch(format!("direction has dimension {}, BSDE has {n}", q.dim())));
    }
    let s1 = solve::<T>(&BsdeSpec::new(g1.clone(), xi1.clone(), horizon)?, scheme)?;
    let s2 = solve::<T>(&BsdeSpec::new(g2.clone(), xi2.clone(), horizon)?, scheme)?;
    let sb = solve::<T>(&BsdeSpec::new(gbar, xibar, horizon)?, scheme)?;
    let mut residual = 0.0_f64;
    let mut margin_gap = 0.0_f64;
    for k in 0..=sb.grid().steps() {
        for s in 0..sb.states(k) {
            let (y1, y2, yb) = (s1.y(k, s), s2.y(k, s), sb.y(k, s));
            let mut first_gap = T::zero();
            for i in 0..n {
                let a = (yb[i] - (y1[i] - y2[i])).as_f64().abs();
                let b = (yb[n + i] - y2[i]).as_f64().abs();
                residual = residual.max(a).max(b);
                first_gap += (yb[i] - (y1[i] - y2[i])) * q.as_slice()[i];
            }
            margin_gap = margin_gap.max(first_gap.as_f64().abs());
        }
    }
    Ok(DoubledConsistency { residual, margin_gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::builtin;

    fn tree(n: usize) -> SchemeConfig {
        SchemeConfig::tree(n)
    }

    #[test]
    fn doubled_generator_example() {
        let gb = build_doubled_generator(&builtin("ex31_g1").unwrap(), &builtin("ex31_g2").unwrap()).unwrap();
        let v = gb.eval(0.5, &[1.0, 0.0, 0.0, 2.0], &crate::linalg::Mat::zeros(4, 1)).unwrap();
        assert_eq!(v, vec![2.0, 0.0, 1.0, 0.5]);
        let z = Generator::zero(2, 1);
        let gz = build_doubled_generator(&z, &z).unwrap();
        assert_eq!(gz.eval(0.1, &[1.0, 2.0, 3.0, 4.0], &crate::linalg::Mat::zeros(4, 1)).unwrap(), vec![0.0; 4]);
        assert!(build_doubled_generator(&z, &Generator::zero(3, 1)).is_err());
    }

    #[test]
    fn sampled_pairs_are_ordered() {
        let q = Direction::new(&[1.0, 2.0, -1.0]).unwrap();
        let base = TerminalFn::parse(3, 2, &["w1", "sin(w2)", "1"]).unwrap();
        let pairs = sample_ordered_terminals(&q, &base, 30, 5).unwrap();
        let mut rng = stream_rng(9, 0);
        for p in &pairs {
            for _ in 0..50 {
                let w: Vec<f64> = (0..2).map(|_| uniform(&mut rng, -4.0, 4.0)).collect();
                let d: Vec<f64> =
                    p.first.eval(&w).unwrap().iter().zip(p.second.eval(&w).unwrap()).map(|(a, b)| a - b).collect();
                assert!(q.inner(&d).unwrap() >= -1e-12);
            }
        }
    }

    #[test]
    fn reflexive_comparison_has_zero_margin() {
        let g = builtin("ex32_g").unwrap();
        let xi = TerminalFn::parse(2, 1, &["w1", "pos(w1)"]).unwrap();
        let pairs = vec![TerminalPair { first: xi.clone(), second: xi }];
        let rep = run_comparison(&g, &g, &ComparisonOrder::Direction(Direction::<f64>::unit(2, 0)), &pairs, 1.0, &tree(6)).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds);
        assert!(rep.min_margin.unwrap().abs() <= 1e-12);
        assert_eq!(rep.margins.len(), 7);
    }

    #[test]
    fn empty_comparison() {
        let g = Generator::zero(1, 1);
        let rep = run_comparison::<f64>(&g, &g, &ComparisonOrder::Component(0), &[], 1.0, &tree(2)).unwrap();
        assert!(rep.trials.is_empty() && rep.min_margin.is_none() && rep.witness.is_none());
        assert_eq!(rep.verdict, Verdict::Holds);
    }

    #[test]
    fn row_norm_counterexample_violates_first_component() {
        let g = builtin("ex32_g").unwrap();
        let pairs = vec![TerminalPair {
            first: TerminalFn::constant(&[0.0, 0.0], 1),
            second: TerminalFn::constant(&[0.0, 1.0], 1),
        }];
        let ode = SchemeConfig::ode(400);
        let rep = run_comparison::<f64>(&g, &g, &ComparisonOrder::Component(0), &pairs, 1.0, &ode).unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
        assert!((rep.trials[0].root_margin + (std::f64::consts::E - 1.0)).abs() < 1e-9);
        let w = rep.witness.unwrap();
        assert_eq!((w.step, w.component), (0, Some(0)));
        let all = run_comparison::<f64>(&g, &g, &ComparisonOrder::AllComponents, &pairs, 1.0, &ode).unwrap();
        assert_eq!(all.verdict, Verdict::Violated);
    }

    #[test]
    fn diagonal_generators_preserve_order() {
        let g = Generator::parse(2, 1, &["y1", "y2"], Some(1.0), "diag").unwrap();
        let q = Direction::<f64>::unit(2, 0);
        let base = TerminalFn::parse(2, 1, &["w1", "w1 * w1"]).unwrap();
        let pairs = sample_ordered_terminals(&q, &base, 6, 1).unwrap();
        let rep = run_comparison(&g, &g, &ComparisonOrder::Direction(q), &pairs, 1.0, &tree(8)).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds);
        assert!(rep.min_margin.unwrap() >= -1e-9);
    }

    #[test]
    fn scaling_direction_leaves_verdict() {
        let g1 = builtin("ex31_g1").unwrap();
        let g2 = builtin("ex31_g2").unwrap();
        let pairs = vec![TerminalPair { first: TerminalFn::constant(&[0.0, 0.0], 1), second: TerminalFn::constant(&[0.0, 0.0], 1) }];
        let a = run_comparison(&g1, &g2, &ComparisonOrder::Direction(Direction::new(&[1.0, 1.0]).unwrap()), &pairs, 1.0, &tree(4)).unwrap();
        let b = run_comparison(&g1, &g2, &ComparisonOrder::Direction(Direction::new(&[2.0, 2.0]).unwrap()), &pairs, 1.0, &tree(4)).unwrap();
        assert_eq!(a.verdict, b.verdict);
        assert!((a.min_margin.unwrap() - b.min_margin.unwrap()).abs() < 1e-12);
    }

    #[test]
    fn viability_examples() {
        let q = Direction::new(&[1.0, -1.0]).unwrap();
        let qs = q.as_slice().to_vec();
        let xi = vec![TerminalFn::parse(2, 1, &["pos(w1)", "0"]).unwrap()];
        let zero = run_viability(&Generator::zero(2, 1), &q, &xi, 1.0, &tree(5)).unwrap();
        assert_eq!(zero.verdict, Verdict::Holds);

        let inward = Generator::constant(&qs, 1, "inward");
        let rep = run_viability(&inward, &q, &xi, 1.0, &tree(5)).unwrap();
        assert_eq!(rep.verdict, Verdict::Holds);
        // ⟨Y_t, q⟩ ≥ (u − t) at the worst node of each level.
        for row in &rep.margins {
            assert!(row.margin >= 1.0 - row.t - 1e-12);
        }

        let outward = Generator::constant(&[-qs[0], -qs[1]], 1, "outward");
        let flat = vec![TerminalFn::parse(2, 1, &["w1", "w1"]).unwrap()];
        let rep = run_viability(&outward, &q, &flat, 1.0, &tree(4)).unwrap();
        assert_eq!(rep.verdict, Verdict::Violated);
        for row in &rep.margins {
            assert!((row.margin + (1.0 - row.t)).abs() < 1e-12);
        }

        let bad = vec![TerminalFn::parse(2, 1, &["w1", "0"]).unwrap()];
        assert!(matches!(run_viability(&inward, &q, &bad, 1.0, &tree(3)), Err(HarnessError::TerminalNotInK { .. })));
    }

    #[test]
    fn doubled_system_matches_pair() {
        let z = Generator::zero(2, 1);
        let xi1 = TerminalFn::parse(2, 1, &["w1", "1"]).unwrap();
        let xi2 = TerminalFn::parse(2, 1, &["0", "w1 * w1"]).unwrap();
        assert!(check_doubled_consistency::<f64>(&z, &z, &xi1, &xi2, 1.0, &tree(6)).unwrap() <= 1e-12);
        let g1 = builtin("ex31_g1").unwrap();
        let g2 = builtin("ex31_g2").unwrap();
        let q = Direction::new(&[1.0, 3.0]).unwrap();
        let c = doubled_consistency(&g1, &g2, &xi1, &xi2, &q, 1.0, &tree(8)).unwrap();
        assert!(c.residual <= 1e-8 && c.margin_gap <= 1e-8);
    }
}
