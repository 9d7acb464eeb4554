//! Fixed scenario suite reproducing the reference counterexamples and
//! equivalences with known answers.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::report::Check;
use crate::checker::{
    c_required, check_componentwise_equality, check_condition_ii, check_condition_uniform, check_condition_v,
    check_necessary_order, detect_structure, Classification, ConditionReport, ProbeSchedule, ShrinkSequence,
};
use crate::dsl::{builtin, Generator, Region, TerminalFn};
use crate::geometry::Direction;
use crate::harness::{
    doubled_consistency, run_comparison, sample_componentwise_terminals, sample_ordered_terminals, ComparisonOrder,
    TerminalPair, Verdict,
};
use crate::linalg::Mat;
use crate::solver::SchemeConfig;

/// A reported number, with its reference value when one is known.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenValue {
    pub label: String,
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenCase {
    pub id: String,
    pub summary: String,
    pub values: Vec<GoldenValue>,
    pub checks: Vec<Check>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenReport {
    pub seed: u64,
    pub cases: Vec<GoldenCase>,
}

impl GoldenReport {
    /// All checks, prefixed with their case id.
    pub fn checks(&self) -> Vec<Check> {
        self.cases
            .iter()
            .flat_map(|c| c.checks.iter().map(move |k| Check { name: format!("{}/{}", c.id, k.name), ..k.clone() }))
            .collect()
    }

    pub fn passed(&self) -> bool {
        self.cases.iter().all(|c| c.checks.iter().all(|k| k.holds))
    }

    pub fn case(&self, id: &str) -> Option<&GoldenCase> {
        self.cases.iter().find(|c| c.id == id)
    }

    pub fn to_markdown(&self) -> String {
        let mut s = format!("# Golden runs (seed {})\n", self.seed);
        for c in &self.cases {
            let _ = write!(s, "\n## {}\n\n{}\n\n", c.id, c.summary);
            if !c.values.is_empty() {
                s.push_str("| quantity | value | reference |\n|---|---|---|\n");
                for v in &c.values {
                    let r = v.reference.map_or(String::new(), |r| format!("{r:.12e}"));
                    let _ = writeln!(s, "| {} | {:.12e} | {} |", v.label, v.value, r);
                }
                s.push('\n');
            }
            for k in &c.checks {
                let _ = writeln!(s, "- [{}] {}: {}", if k.holds { "x" } else { " " }, k.name, k.detail);
            }
        }
        s
    }
}

struct Case {
    inner: GoldenCase,
}

impl Case {
    fn new(id: &str, summary: &str) -> Self {
        Case { inner: GoldenCase { id: id.into(), summary: summary.into(), values: Vec::new(), checks: Vec::new() } }
    }

    fn value(&mut self, label: impl Into<String>, value: f64, reference: Option<f64>) {
        self.inner.values.push(GoldenValue { label: label.into(), value, reference });
    }

    fn check(&mut self, name: &str, holds: bool, detail: impl Into<String>) {
        self.inner.checks.push(Check::new(name, holds, detail));
    }

    fn close(&mut self, name: &str, value: f64, reference: f64, tol: f64) {
        self.value(name, value, Some(reference));
        let err = (value - reference).abs();
        self.check(name, err <= tol, format!("{value:.15e} vs {reference:.15e} (error {err:.2e}, tolerance {tol:.0e})"));
    }

    fn run(&mut self, name: &str, f: impl FnOnce(&mut Case) -> Result<(), String>) {
        if let Err(e) = f(self) {
            self.check(name, false, format!("error: {e}"));
        }
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn terminal(n: usize, d: usize, texts: &[&str]) -> Result<TerminalFn, String> {
    TerminalFn::parse(n, d, texts).map_err(err)
}

fn exponent(r: &ConditionReport) -> String {
    r.growth_exponent.map_or("none".into(), |s| format!("{s:.4}"))
}

fn doubled(case: &mut Case, g1: &Generator, g2: &Generator, xi1: &TerminalFn, xi2: &TerminalFn) -> Result<(), String> {
    let q = Direction::<f64>::unit(g1.n(), 0);
    let r = doubled_consistency(g1, g2, xi1, xi2, &q, 1.0, &SchemeConfig::tree(8)).map_err(err)?;
    case.value("doubled system residual (tree N=8)", r.residual, Some(0.0));
    case.check("doubled_system_identity", r.residual <= 1e-8, format!("max residual {:.3e}", r.residual));
    Ok(())
}

fn affine_shift(seed: u64) -> GoldenCase {
    let mut c = Case::new(
        "affine_shift_divergence",
        "g1 = (y1 + y2, t), g2 = (y1 + y2 - 1, t), q = e1. Although g1 dominates g2 in the q-order everywhere, \
         the constant needed at y = (y1, -3), y' = 0 is -8/y1 and blows up as y1 -> 0-.",
    );
    c.run("setup", |c| {
        let (g1, g2) = (builtin("ex31_g1").map_err(err)?, builtin("ex31_g2").map_err(err)?);
        let q = Direction::<f64>::unit(2, 0);
        let z = Mat::zeros(2, 1);
        for y1 in [-1.0, -0.5, -0.25, -0.125] {
            let v = c_required(&g1, &g2, &q, 0.5, &[y1, -3.0], &[0.0, 0.0], &z, &z).map_err(err)?;
            c.close(&format!("C_required(y1 = {y1})"), v, -8.0 / y1, 1e-12);
        }
        let schedule = ProbeSchedule::with_seed(seed).with_sequence(ShrinkSequence {
            direction: vec![1.0, 0.0],
            companion: vec![0.0, -3.0],
            y_prime: vec![],
            z: vec![],
            z_prime: vec![],
            t: 0.5,
        });
        let r = check_condition_ii(&g1, &g2, &q, &schedule).map_err(err)?;
        c.value("growth exponent", r.growth_exponent.unwrap_or(f64::NAN), Some(-1.0));
        let slope_ok = r.growth_exponent.is_some_and(|s| (s + 1.0).abs() <= 0.05);
        c.check(
            "divergent",
            r.classification == Classification::Divergent && slope_ok,
            format!("{:?}, exponent {}", r.classification, exponent(&r)),
        );
        let region = Region::default();
        let fwd = check_necessary_order(&g1, &g2, &q, &region, 2000, seed).map_err(err)?;
        c.close("necessary order margin", fwd.min_margin, 1.0, 1e-12);
        let back = check_necessary_order(&g2, &g1, &q, &region, 2000, seed).map_err(err)?;
        c.close("swapped necessary order margin", back.min_margin, -1.0, 1e-12);
        c.check("swapped_order_fails", !back.holds, format!("holds = {}", back.holds));
        let e1 = check_componentwise_equality::<f64>(&g1, &g2, 0, &region, 2000, seed).map_err(err)?;
        c.close("equality gap, component 1", e1.max_gap, 1.0, 1e-12);
        let e2 = check_componentwise_equality::<f64>(&g1, &g2, 1, &region, 2000, seed).map_err(err)?;
        c.check("component_2_equal", e2.equal, format!("max gap {:.3e}", e2.max_gap));
        let xi1 = terminal(2, 1, &["abs(w1)", "w1"])?;
        let xi2 = terminal(2, 1, &["0", "w1"])?;
        doubled(c, &g1, &g2, &xi1, &xi2)
    });
    c.inner
}

fn row_norm(seed: u64) -> GoldenCase {
    let mut c = Case::new(
        "row_norm_counterexample",
        "g = (y1 + y2, |z2|) for both equations with xi1 = (0, 0), xi2 = (0, 1), q = e1. The terminals are \
         equal in the q-order but Y1 - Y2 has first coordinate -(e - 1) at t = 0.",
    );
    c.run("setup", |c| {
        let g = builtin("ex32_g").map_err(err)?;
        let xi1 = TerminalFn::constant(&[0.0, 0.0], 1);
        let xi2 = TerminalFn::constant(&[0.0, 1.0], 1);
        let pair = [TerminalPair { first: xi1.clone(), second: xi2.clone() }];
        let order = ComparisonOrder::Direction(Direction::<f64>::unit(2, 0));
        let e1 = std::f64::consts::E - 1.0;
        let ode = run_comparison(&g, &g, &order, &pair, 1.0, &SchemeConfig::ode(64)).map_err(err)?;
        c.close("margin at t = 0 (ODE)", ode.trials[0].root_margin, -e1, 1e-6);
        c.check("comparison_violated", ode.verdict == Verdict::Violated, format!("{:?}", ode.verdict));
        let tree = run_comparison(&g, &g, &order, &pair, 1.0, &SchemeConfig::tree(16)).map_err(err)?;
        c.value("margin at t = 0 (tree N=16)", tree.trials[0].root_margin, Some(-e1));
        let region = Region::default();
        for i in 0..2 {
            let m = detect_structure::<f64>(&g, i, &region, 256, seed).map_err(err)?;
            let expected = i == 1;
            c.check(
                &format!("structure_component_{}", i + 1),
                m.diagonal == expected,
                format!("diagonal = {}, depends on y {:?}, on z rows {:?}", m.diagonal, m.depends_on_y, m.depends_on_z),
            );
        }
        doubled(c, &g, &g, &terminal(2, 1, &["0", "0"])?, &terminal(2, 1, &["w1", "1"])?)
    });
    c.inner
}

fn scalar_equivalence(seed: u64) -> GoldenCase {
    let mut c = Case::new(
        "scalar_order_equivalence",
        "n = 1, g2 = sin(y1) + z1, g1 = g2 + 1. In one dimension the comparison condition reduces to \
         g1 >= g2, with the constant bounded by 2 mu^2; the reversed order fails.",
    );
    c.run("setup", |c| {
        let g2 = Generator::parse(1, 1, &["sin(y1) + z1"], Some(1.0), "g2").map_err(err)?;
        let g1 = Generator::parse(1, 1, &["sin(y1) + z1 + 1"], Some(1.0), "g1").map_err(err)?;
        let q = Direction::<f64>::unit(1, 0);
        let r = check_condition_ii(&g1, &g2, &q, &ProbeSchedule::with_seed(seed)).map_err(err)?;
        let mu = g1.mu().max(g2.mu());
        let bound = 2.0 * mu * mu + 0.01;
        c.value("sup C_required", r.sup_c_required, Some(2.0 * mu * mu));
        c.check(
            "bounded",
            r.classification == Classification::Bounded && r.sup_c_required <= bound,
            format!("{:?}, sup {:.6e} (bound {bound})", r.classification, r.sup_c_required),
        );
        let base = terminal(1, 1, &["sin(w1)"])?;
        let pairs = sample_ordered_terminals(&q, &base, 100, seed).map_err(err)?;
        let cmp = run_comparison(&g1, &g2, &ComparisonOrder::Direction(q.clone()), &pairs, 1.0, &SchemeConfig::tree(12))
            .map_err(err)?;
        let m = cmp.min_margin.unwrap_or(f64::INFINITY);
        c.value("min margin over 100 pairs (tree N=12)", m, None);
        c.check("comparison_holds", m >= -1e-9, format!("min margin {m:.6e}"));
        let rev = check_condition_ii(&g1, &g2, &q.negated(), &ProbeSchedule::with_seed(seed)).map_err(err)?;
        c.check(
            "reverse_divergent",
            rev.classification == Classification::Divergent,
            format!("{:?}, exponent {}", rev.classification, exponent(&rev)),
        );
        Ok(())
    });
    c.inner
}

fn componentwise(seed: u64) -> GoldenCase {
    let mut c = Case::new(
        "componentwise_vs_full_order",
        "g = (y1 + y2, |z2|). Pairs ordered in every coordinate stay ordered, while the coordinate-1 \
         condition diverges and the e1 comparison of (0, 0) against (0, 1) fails.",
    );
    c.run("setup", |c| {
        let g = builtin("ex32_g").map_err(err)?;
        let base = terminal(2, 1, &["w1", "0"])?;
        let pairs = sample_componentwise_terminals(&base, 20, seed).map_err(err)?;
        let cmp = run_comparison(&g, &g, &ComparisonOrder::<f64>::AllComponents, &pairs, 1.0, &SchemeConfig::tree(8))
            .map_err(err)?;
        let m = cmp.min_margin.unwrap_or(f64::INFINITY);
        c.value("componentwise min margin over 20 pairs (tree N=8)", m, None);
        c.check("componentwise_pairs_hold", cmp.verdict == Verdict::Holds, format!("min margin {m:.6e}"));
        let pair = [TerminalPair { first: TerminalFn::constant(&[0.0, 0.0], 1), second: TerminalFn::constant(&[0.0, 1.0], 1) }];
        let full = run_comparison(&g, &g, &ComparisonOrder::<f64>::Component(0), &pair, 1.0, &SchemeConfig::tree(8))
            .map_err(err)?;
        c.check("e1_comparison_violated", full.verdict == Verdict::Violated, format!("{:?}", full.verdict));
        let s = ProbeSchedule::with_seed(seed);
        let v1 = check_condition_v::<f64>(&g, &g, 0, &s).map_err(err)?;
        c.check("component_1_divergent", v1.classification == Classification::Divergent, format!("exponent {}", exponent(&v1)));
        let v2 = check_condition_v::<f64>(&g, &g, 1, &s).map_err(err)?;
        c.value("component 2 sup C_required", v2.sup_c_required, None);
        c.check("component_2_bounded", v2.classification == Classification::Bounded, format!("sup {:.6e}", v2.sup_c_required));
        Ok(())
    });
    c.inner
}

fn uniform_direction(seed: u64) -> GoldenCase {
    let mut c = Case::new(
        "uniform_direction_condition",
        "q = (1, ..., 1)/sqrt(n). The dedicated uniform form agrees with the general inequality, and the \
         diagonal linear generator g = (y1, y2) satisfies it.",
    );
    c.run("setup", |c| {
        let g = Generator::parse(2, 1, &["y1", "y2"], Some(1.0), "linear_diagonal").map_err(err)?;
        let s = ProbeSchedule::with_seed(seed);
        let uni = check_condition_uniform::<f64>(&g, &g, &s).map_err(err)?;
        c.value("sup C_required (uniform form)", uni.sup_c_required, None);
        c.check("linear_diagonal_bounded", uni.classification == Classification::Bounded, format!("{:?}", uni.classification));
        let gen = check_condition_ii(&g, &g, &Direction::<f64>::uniform(2), &s).map_err(err)?;
        let gap = uni
            .probes
            .iter()
            .zip(&gen.probes)
            .map(|(a, b)| (a.c_required - b.c_required).abs() / (1.0 + b.c_required.abs()))
            .fold(0.0, f64::max);
        let same = uni.probes.len() == gen.probes.len() && gap <= 1e-9;
        c.value("max relative gap uniform vs general", gap, Some(0.0));
        c.check("uniform_matches_general", same, format!("{} probes, max relative gap {gap:.3e}", uni.probes.len()));
        let demo = builtin("diag_demo").map_err(err)?;
        let d = check_condition_uniform::<f64>(&demo, &demo, &s).map_err(err)?;
        c.value("diag_demo sup C_required", d.sup_c_required, None);
        c.value("diag_demo growth exponent", d.growth_exponent.unwrap_or(f64::NAN), None);
        Ok(())
    });
    c.inner
}

/// Runs the whole suite. Failures are reported as failed checks, never as
/// errors.
pub fn reproduce_examples(seed: u64) -> GoldenReport {
    let cases = vec![
        affine_shift(seed),
        row_norm(seed),
        scalar_equivalence(seed),
        componentwise(seed),
        uniform_direction(seed),
    ];
    GoldenReport { seed, cases }
}
