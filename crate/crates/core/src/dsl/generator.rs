use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::expr::{Env, Expr};
use super::parser::{parse_expr, ParseError, VarContext};
use crate::linalg::{add, norm, Mat};
use crate::sampling::{stream_rng, uniform, uniform_box};
use crate::scalar::Real;

/// Multiplier applied to the largest sampled difference quotient.
pub const LIPSCHITZ_SAFETY: f64 = 1.25;
/// Smallest Lipschitz estimate ever reported.
pub const LIPSCHITZ_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("component {component} evaluated to a non-finite value")]
    NonFinite { component: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("component {component}: {source}")]
    Parse { component: usize, source: ParseError },
    #[error("expected {expected} components, got {got}")]
    ComponentCount { expected: usize, got: usize },
    #[error("unknown builtin `{0}`")]
    UnknownBuiltin(String),
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("terminal component {0} is not structurally square-integrable")]
    NotSquareIntegrable(usize),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum GeneratorKind {
    Components(Vec<Expr>),
    /// Two-block generator on `2n` coordinates:
    /// `(g¹(t, y¹+y², z¹+z²) − g²(t, y², z²), g²(t, y², z²))`.
    Doubled { first: Box<Generator>, second: Box<Generator> },
}

/// A BSDE driver `g : [0,T] × ℝⁿ × ℝ^{n×d} → ℝⁿ` with a Lipschitz bound `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    n: usize,
    d: usize,
    mu: f64,
    label: String,
    kind: GeneratorKind,
}

impl Generator {
    pub fn from_exprs(
        n: usize,
        d: usize,
        components: Vec<Expr>,
        mu: f64,
        label: impl Into<String>,
    ) -> Result<Self, DslError> {
        if n == 0 || d == 0 {
            return Err(DslError::BadArgs(format!("dimensions must be positive (n={n}, d={d})")));
        }
        if components.len() != n {
            return Err(DslError::ComponentCount { expected: n, got: components.len() });
        }
        Ok(Generator {
            n,
            d,
            mu: sanitize_mu(mu),
            label: label.into(),
            kind: GeneratorKind::Components(components),
        })
    }

    /// Parses one expression per component. When `mu` is `None` the
    /// Lipschitz constant is estimated on the default [`Region`].
    pub fn parse(
        n: usize,
        d: usize,
        texts: &[&str],
        mu: Option<f64>,
        label: impl Into<String>,
    ) -> Result<Self, DslError> {
        let ctx = VarContext::state(n, d);
        let exprs = texts
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expr(s, &ctx).map_err(|source| DslError::Parse { component: i, source }))
            .collect::<Result<Vec<_>, _>>()?;
        let g = Generator::from_exprs(n, d, exprs, mu.unwrap_or(1.0), label)?;
        match mu {
            Some(_) => Ok(g),
            None => {
                let mu = estimate_lipschitz::<f64>(&g, &Region::default(), 8, 1000, 0)?;
                Ok(g.with_mu(mu))
            }
        }
    }

    pub fn doubled(first: &Generator, second: &Generator) -> Result<Self, EvalError> {
        if first.n != second.n || first.d != second.d {
            return Err(EvalError::DimensionMismatch {
                expected: format!("({}, {})", first.n, first.d),
                got: format!("({}, {})", second.n, second.d),
            });
        }
        Ok(Generator {
            n: 2 * first.n,
            d: first.d,
            mu: 2.0 * first.mu + 2.0 * second.mu,
            label: format!("doubled({}, {})", first.label, second.label),
            kind: GeneratorKind::Doubled {
                first: Box::new(first.clone()),
                second: Box::new(second.clone()),
            },
        })
    }

    pub fn zero(n: usize, d: usize) -> Self {
        Generator::from_exprs(n, d, vec![Expr::num(0.0); n], LIPSCHITZ_FLOOR, "zero")
            .expect("positive dimensions")
    }

    /// Constant driver `g ≡ c`.
    pub fn constant(c: &[f64], d: usize, label: impl Into<String>) -> Self {
        let exprs = c.iter().map(|&v| Expr::num(v)).collect();
        Generator::from_exprs(c.len(), d, exprs, LIPSCHITZ_FLOOR, label).expect("positive dimensions")
    }

    pub fn with_mu(mut self, mu: f64) -> Self {
        self.mu = sanitize_mu(mu);
        self
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn kind(&self) -> &GeneratorKind {
        &self.kind
    }

    /// Component expressions, if this is an expression generator.
    pub fn components(&self) -> Option<&[Expr]> {
        match &self.kind {
            GeneratorKind::Components(c) => Some(c),
            GeneratorKind::Doubled { .. } => None,
        }
    }

    /// Printable form of each component.
    pub fn describe(&self) -> Vec<String> {
        match &self.kind {
            GeneratorKind::Components(c) => c.iter().map(|e| e.to_string()).collect(),
            GeneratorKind::Doubled { first, second } => {
                let (a, b) = (first.describe(), second.describe());
                let mut out: Vec<String> =
                    a.iter().zip(&b).map(|(x, y)| format!("g1[{x}](y1+y2, z1+z2) - g2[{y}](y2, z2)")).collect();
                out.extend(b.iter().map(|y| format!("g2[{y}](y2, z2)")));
                out
            }
        }
    }

    pub fn eval<T: Real>(&self, t: T, y: &[T], z: &Mat<T>) -> Result<Vec<T>, EvalError> {
        let mut out = vec![T::zero(); self.n];
        self.eval_into(t, y, z, &mut out)?;
        Ok(out)
    }

    pub fn eval_into<T: Real>(&self, t: T, y: &[T], z: &Mat<T>, out: &mut [T]) -> Result<(), EvalError> {
        if y.len() != self.n || z.rows() != self.n || z.cols() != self.d || out.len() != self.n {
            return Err(EvalError::DimensionMismatch {
                expected: format!("y[{}], z[{}x{}]", self.n, self.n, self.d),
                got: format!("y[{}], z[{}x{}]", y.len(), z.rows(), z.cols()),
            });
        }
        match &self.kind {
            GeneratorKind::Components(c) => {
                let env = Env::state(t, y, z);
                for (i, (e, o)) in c.iter().zip(out.iter_mut()).enumerate() {
                    *o = e.eval(&env);
                    if !o.is_finite() {
                        return Err(EvalError::NonFinite { component: i });
                    }
                }
            }
            GeneratorKind::Doubled { first, second } => {
                let h = self.n / 2;
                let (y1, y2) = y.split_at(h);
                let (z1, z2) = (z.row_block(0, h), z.row_block(h, h));
                let zsum = Mat::from_rows(h, self.d, add(z1.as_slice(), z2.as_slice()));
                let a = first.eval(t, &add(y1, y2), &zsum)?;
                let (top, bottom) = out.split_at_mut(h);
                second.eval_into(t, y2, &z2, bottom)?;
                for ((o, &ai), &bi) in top.iter_mut().zip(&a).zip(bottom.iter()) {
                    *o = ai - bi;
                }
            }
        }
        Ok(())
    }

    fn nonlipschitz_sites(&self) -> Vec<String> {
        match &self.kind {
            GeneratorKind::Components(c) => c.iter().flat_map(|e| e.nonlipschitz_sites()).collect(),
            GeneratorKind::Doubled { first, second } => {
                let mut v = first.nonlipschitz_sites();
                v.extend(second.nonlipschitz_sites());
                v
            }
        }
    }
}

fn sanitize_mu(mu: f64) -> f64 {
    if mu.is_finite() {
        mu.max(LIPSCHITZ_FLOOR)
    } else {
        f64::MAX
    }
}

/// Terminal condition `ξ = φ(W_u)` as expressions in `w1..wd`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalFn {
    n: usize,
    d: usize,
    components: Vec<Expr>,
}

impl TerminalFn {
    pub fn from_exprs(n: usize, d: usize, components: Vec<Expr>) -> Result<Self, DslError> {
        if components.len() != n {
            return Err(DslError::ComponentCount { expected: n, got: components.len() });
        }
        if n == 0 || d == 0 {
            return Err(DslError::BadArgs(format!("dimensions must be positive (n={n}, d={d})")));
        }
        if let Some(i) = components.iter().position(|e| !e.is_square_integrable()) {
            return Err(DslError::NotSquareIntegrable(i));
        }
        Ok(TerminalFn { n, d, components })
    }

    pub fn parse(n: usize, d: usize, texts: &[&str]) -> Result<Self, DslError> {
        let ctx = VarContext::terminal(n, d);
        let exprs = texts
            .iter()
            .enumerate()
            .map(|(i, s)| parse_expr(s, &ctx).map_err(|source| DslError::Parse { component: i, source }))
            .collect::<Result<Vec<_>, _>>()?;
        TerminalFn::from_exprs(n, d, exprs)
    }

    pub fn constant(values: &[f64], d: usize) -> Self {
        TerminalFn::from_exprs(values.len(), d, values.iter().map(|&v| Expr::num(v)).collect())
            .expect("constant terminal")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn components(&self) -> &[Expr] {
        &self.components
    }

    /// True when no component references `w`.
    pub fn is_constant(&self) -> bool {
        self.components.iter().all(|e| !e.uses_w())
    }

    pub fn describe(&self) -> Vec<String> {
        self.components.iter().map(|e| e.to_string()).collect()
    }

    pub fn eval<T: Real>(&self, w: &[T]) -> Result<Vec<T>, EvalError> {
        let mut out = vec![T::zero(); self.n];
        self.eval_into(w, &mut out)?;
        Ok(out)
    }

    pub fn eval_into<T: Real>(&self, w: &[T], out: &mut [T]) -> Result<(), EvalError> {
        if w.len() != self.d || out.len() != self.n {
            return Err(EvalError::DimensionMismatch {
                expected: format!("w[{}]", self.d),
                got: format!("w[{}]", w.len()),
            });
        }
        let env = Env::terminal(w);
        for (i, (e, o)) in self.components.iter().zip(out.iter_mut()).enumerate() {
            *o = e.eval(&env);
            if !o.is_finite() {
                return Err(EvalError::NonFinite { component: i });
            }
        }
        Ok(())
    }

    /// Component-wise combination `self - other` (used for `ξ¹ − ξ²`).
    pub fn minus(&self, other: &TerminalFn) -> Result<TerminalFn, DslError> {
        if self.n != other.n || self.d != other.d {
            return Err(DslError::BadArgs("terminal dimensions differ".into()));
        }
        let comps = self.components.iter().zip(&other.components).map(|(a, b)| a.clone() - b.clone()).collect();
        TerminalFn::from_exprs(self.n, self.d, comps)
    }

    /// Concatenation `(self, other)` on `n₁ + n₂` components.
    pub fn stack(&self, other: &TerminalFn) -> Result<TerminalFn, DslError> {
        if self.d != other.d {
            return Err(DslError::BadArgs("terminal Brownian dimensions differ".into()));
        }
        let mut comps = self.components.clone();
        comps.extend(other.components.iter().cloned());
        TerminalFn::from_exprs(self.n + other.n, self.d, comps)
    }
}

/// Looks up a named generator.
///
/// Names: `ex31_g1`, `ex31_g2`, `ex32_g`, `zero`, `zero(n,d)`,
/// `linear(a,b,c)`, `diag_demo`.
pub fn builtin(name: &str) -> Result<Generator, DslError> {
    let name = name.trim();
    let sqrt2 = std::f64::consts::SQRT_2;
    let (head, args) = match name.split_once('(') {
        Some((h, rest)) => {
            let inner = rest
                .strip_suffix(')')
                .ok_or_else(|| DslError::BadArgs(format!("unterminated argument list in `{name}`")))?;
            let args = inner
                .split(',')
                .map(|a| a.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| DslError::BadArgs(format!("`{name}`: {e}")))?;
            (h.trim(), Some(args))
        }
        None => (name, None),
    };
    let state = |texts: &[&str], n, d, mu| Generator::parse(n, d, texts, Some(mu), name);
    match (head, args.as_deref()) {
        ("ex31_g1", None) => state(&["y1 + y2", "t"], 2, 1, sqrt2),
        ("ex31_g2", None) => state(&["y1 + y2 - 1", "t"], 2, 1, sqrt2),
        ("ex32_g", None) => state(&["y1 + y2", "abs(z2)"], 2, 1, sqrt2),
        ("diag_demo", None) => state(&["sin(y1) + z1_1", "y2 - abs(z2)"], 2, 1, 1.0),
        ("zero", None) => Ok(Generator::zero(1, 1)),
        ("zero", Some([n, d])) if *n >= 1.0 && *d >= 1.0 && n.fract() == 0.0 && d.fract() == 0.0 => {
            Ok(Generator::zero(*n as usize, *d as usize).with_label(name))
        }
        ("linear", Some(&[a, b, c])) => {
            let e = Expr::num(a) * Expr::y(0) + Expr::num(b) * Expr::z(0, 0) + Expr::num(c);
            Generator::from_exprs(1, 1, vec![e], a.abs() + b.abs(), name)
        }
        ("zero", Some(_)) | ("linear", _) => Err(DslError::BadArgs(format!("`{name}`"))),
        _ => Err(DslError::UnknownBuiltin(name.to_string())),
    }
}

/// Box of states `{ t ∈ [t_min, t_max], |y|∞ ≤ y_bound, |z|∞ ≤ z_bound }`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub t_min: f64,
    pub t_max: f64,
    pub y_bound: f64,
    pub z_bound: f64,
}

impl Default for Region {
    fn default() -> Self {
        Region { t_min: 0.0, t_max: 1.0, y_bound: 5.0, z_bound: 5.0 }
    }
}

impl Region {
    pub fn symmetric(y_bound: f64, z_bound: f64) -> Self {
        Region { y_bound, z_bound, ..Region::default() }
    }

    pub fn validate(&self) -> Result<(), DslError> {
        let ok = self.t_min.is_finite()
            && self.t_max.is_finite()
            && self.t_min <= self.t_max
            && self.y_bound.is_finite()
            && self.z_bound.is_finite()
            && self.y_bound >= 0.0
            && self.z_bound >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(DslError::BadArgs(format!("invalid region {self:?}")))
        }
    }
}

/// Sampled estimate of the constant in
/// `|g(t,y,z) − g(t,y',z')| ≤ μ(|y − y'| + |z − z'|)` over `region`.
///
/// Pairs cycle through four partner kinds (fully random, `y`-only,
/// `z`-only, single coordinate) so that block-wise constants are hit.
/// The largest quotient is multiplied by [`LIPSCHITZ_SAFETY`] and floored
/// at [`LIPSCHITZ_FLOOR`].
pub fn estimate_lipschitz<T: Real>(
    g: &Generator,
    region: &Region,
    t_samples: usize,
    pair_samples: usize,
    seed: u64,
) -> Result<T, DslError> {
    region.validate()?;
    if t_samples == 0 || pair_samples < 1000 {
        return Err(DslError::BadArgs(format!(
            "need t_samples >= 1 and pair_samples >= 1000 (got {t_samples}, {pair_samples})"
        )));
    }
    let (n, d) = (g.n(), g.d());
    let per_t: Vec<Result<T, EvalError>> = (0..t_samples)
        .into_par_iter()
        .map(|ti| {
            let frac = (ti as f64 + 0.5) / t_samples as f64;
            let t = T::lit(region.t_min + (region.t_max - region.t_min) * frac);
            let mut best = T::zero();
            for pj in 0..pair_samples {
                let mut rng = stream_rng(seed, (ti * pair_samples + pj) as u64);
                let y: Vec<T> = uniform_box(&mut rng, n, region.y_bound);
                let z = Mat::from_rows(n, d, uniform_box(&mut rng, n * d, region.z_bound));
                let (mut y2, mut z2) = (y.clone(), z.clone());
                match pj % 4 {
                    0 => {
                        y2 = uniform_box(&mut rng, n, region.y_bound);
                        z2 = Mat::from_rows(n, d, uniform_box(&mut rng, n * d, region.z_bound));
                    }
                    1 => y2 = uniform_box(&mut rng, n, region.y_bound),
                    2 => z2 = Mat::from_rows(n, d, uniform_box(&mut rng, n * d, region.z_bound)),
                    _ => {
                        let k = rng.random_range(0..n + n * d);
                        if k < n {
                            y2[k] = uniform(&mut rng, -region.y_bound, region.y_bound);
                        } else {
                            z2.as_mut_slice()[k - n] = uniform(&mut rng, -region.z_bound, region.z_bound);
                        }
                    }
                }
                let dy = norm(&crate::linalg::sub(&y, &y2));
                let dz = norm(&crate::linalg::sub(z.as_slice(), z2.as_slice()));
                let den = dy + dz;
                if den <= T::lit(1e-12) {
                    continue;
                }
                let ga = g.eval(t, &y, &z)?;
                let gb = g.eval(t, &y2, &z2)?;
                let q = norm(&crate::linalg::sub(&ga, &gb)) / den;
                if q > best {
                    best = q;
                }
            }
            Ok(best)
        })
        .collect();
    let mut best = T::zero();
    for r in per_t {
        best = best.max(r?);
    }
    Ok((best * T::lit(LIPSCHITZ_SAFETY)).max(T::lit(LIPSCHITZ_FLOOR)))
}

/// Result of the sampled regularity checks. The checks can refute but
/// never prove the assumptions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    /// Every evaluation on the scan was finite.
    pub finite: bool,
    /// First `(t, component)` with a non-finite value.
    pub nonfinite_at: Option<(f64, usize)>,
    /// No persistent jump in `t ↦ g(t, y, z)` was found.
    pub continuous_in_t: bool,
    /// Largest increment between neighbouring nodes of the finest grid.
    pub max_jump: f64,
    /// `t ↦ g(t, 0, 0)` is bounded on `[0, T]`.
    pub bounded_at_origin: bool,
    pub sup_norm_at_origin: f64,
    /// Sub-expressions that are not globally Lipschitz in the state.
    pub warnings: Vec<String>,
    pub passed: bool,
}

const SCAN_INTERVALS: usize = 1024;
const JUMP_FLOOR: f64 = 1e-6;
const JUMP_PERSISTENCE: f64 = 0.75;

/// Scans `t ↦ g(t, y, z)` on nested uniform grids of `[0, horizon]` at the
/// origin and at `samples` random states in the default region. A jump
/// that does not shrink under two successive refinements is reported as a
/// discontinuity.
pub fn validate_assumptions(g: &Generator, horizon: f64, samples: usize) -> AssumptionReport {
    let (n, d) = (g.n(), g.d());
    let region = Region::default();
    let states = samples.max(1);
    let mut report = AssumptionReport {
        finite: true,
        nonfinite_at: None,
        continuous_in_t: true,
        max_jump: 0.0,
        bounded_at_origin: true,
        sup_norm_at_origin: 0.0,
        warnings: g.nonlipschitz_sites().into_iter().map(|s| format!("not globally Lipschitz: {s}")).collect(),
        passed: true,
    };
    for s in 0..states {
        let (y, z) = if s == 0 {
            (vec![0.0; n], Mat::zeros(n, d))
        } else {
            let mut rng = stream_rng(0x5eed, s as u64);
            (uniform_box(&mut rng, n, region.y_bound), Mat::from_rows(n, d, uniform_box(&mut rng, n * d, region.z_bound)))
        };
        let mut jumps = [0.0_f64; 3];
        for (level, jump) in jumps.iter_mut().enumerate() {
            let intervals = SCAN_INTERVALS << level;
            let mut prev: Option<Vec<f64>> = None;
            for k in 0..=intervals {
                let t = horizon * k as f64 / intervals as f64;
                match g.eval(t, &y, &z) {
                    Ok(v) => {
                        if s == 0 {
                            report.sup_norm_at_origin = report.sup_norm_at_origin.max(norm(&v));
                        }
                        if let Some(p) = &prev {
                            *jump = jump.max(norm(&crate::linalg::sub(&v, p)));
                        }
                        prev = Some(v);
                    }
                    Err(EvalError::NonFinite { component }) => {
                        report.finite = false;
                        report.nonfinite_at.get_or_insert((t, component));
                        if s == 0 {
                            report.bounded_at_origin = false;
                        }
                        prev = None;
                    }
                    Err(EvalError::DimensionMismatch { .. }) => unreachable!("dimensions fixed by generator"),
                }
            }
        }
        report.max_jump = report.max_jump.max(jumps[2]);
        if jumps[2] > JUMP_FLOOR && jumps[2] > JUMP_PERSISTENCE * jumps[1] && jumps[1] > JUMP_PERSISTENCE * jumps[0] {
            report.continuous_in_t = false;
        }
    }
    if !report.finite {
        report.sup_norm_at_origin = if report.bounded_at_origin { report.sup_norm_at_origin } else { f64::INFINITY };
    }
    report.passed = report.finite && report.continuous_in_t && report.bounded_at_origin;
    report
}
