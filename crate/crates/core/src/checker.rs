//! Generator-side comparison and viability conditions.
//!
//! At a probe `(t, y, y′, z, z′)` with `a = ⟨y, q⟩⁻ > 0` the pointwise
//! minimal constant is
//!
//! ```text
//! C_required = (−4a⟨q, g¹(t, y + a q + y′, z) − g²(t, y′, z′)⟩ − 2|(z − z′)ᵀq|²) / a²
//! ```
//!
//! A bounded supremum over a compact region is always finite, so divergence
//! is detected from the growth of `C_required` along shrink sequences
//! `y_j = −ε_j u + c`, `ε_j = 2^{−j}`: a log-log slope `≤ −0.5` with
//! `R² ≥ 0.99` means no uniform constant exists. Verdicts hold "at all probe
//! points" only; a `bounded` classification is evidence, not proof.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{EvalError, Generator, Region};
use crate::geometry::Direction;
use crate::linalg::{dot, Mat};
use crate::sampling::{stream_rng, uniform, uniform_box};
use crate::scalar::Real;

/// Probes with `|⟨y, q⟩|` below this are resampled.
pub const HYPERPLANE_GAP: f64 = 1e-10;
pub const DIVERGENCE_SLOPE: f64 = -0.5;
pub const MIN_R_SQUARED: f64 = 0.99;
/// Tolerance of the necessary-order and equality checks.
pub const ORDER_TOLERANCE: f64 = 1e-9;
/// Relative threshold of the dependence detector.
pub const DEPENDENCE_THRESHOLD: f64 = 1e-9;
/// Offset separating shrink-sequence streams from random-probe streams.
const SHRINK_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckerError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("bad schedule: {0}")]
    BadSchedule(String),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Sampling box for `(t, y, y′, z, z′)` (sup norms).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeRegion {
    pub t_min: f64,
    pub t_max: f64,
    pub y_bound: f64,
    pub y_prime_bound: f64,
    pub z_bound: f64,
    pub z_prime_bound: f64,
}

impl Default for ProbeRegion {
    fn default() -> Self {
        ProbeRegion { t_min: 0.0, t_max: 1.0, y_bound: 5.0, y_prime_bound: 5.0, z_bound: 5.0, z_prime_bound: 5.0 }
    }
}

impl ProbeRegion {
    fn validate(&self) -> Result<(), CheckerError> {
        let ok = self.t_min.is_finite()
            && self.t_max.is_finite()
            && self.t_min <= self.t_max
            && [self.y_bound, self.y_prime_bound, self.z_bound, self.z_prime_bound]
                .iter()
                .all(|b| b.is_finite() && *b > 0.0);
        if ok {
            Ok(())
        } else {
            Err(CheckerError::BadSchedule(format!("invalid probe region {self:?}")))
        }
    }
}

/// A user-supplied shrink sequence `y_j = −ε_j·direction + companion`.
/// Empty `y_prime`, `z`, `z_prime` mean zero (and `z′ = z`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShrinkSequence {
    pub direction: Vec<f64>,
    pub companion: Vec<f64>,
    #[serde(default)]
    pub y_prime: Vec<f64>,
    /// Row-major `n × d`.
    #[serde(default)]
    pub z: Vec<f64>,
    #[serde(default)]
    pub z_prime: Vec<f64>,
    #[serde(default)]
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeSchedule {
    pub region: ProbeRegion,
    pub samples: usize,
    /// Number of random shrink sequences.
    pub shrink_directions: usize,
    /// Levels `j = 0..=J`.
    pub shrink_levels: usize,
    pub sequences: Vec<ShrinkSequence>,
    pub seed: u64,
}

impl Default for ProbeSchedule {
    fn default() -> Self {
        ProbeSchedule {
            region: ProbeRegion::default(),
            samples: 10_000,
            shrink_directions: 32,
            shrink_levels: 20,
            sequences: Vec::new(),
            seed: 0,
        }
    }
}

impl ProbeSchedule {
    pub fn with_seed(seed: u64) -> Self {
        ProbeSchedule { seed, ..ProbeSchedule::default() }
    }

    pub fn with_sequence(mut self, s: ShrinkSequence) -> Self {
        self.sequences.push(s);
        self
    }

    pub fn epsilons(&self) -> Vec<f64> {
        (0..=self.shrink_levels).map(|j| 0.5_f64.powi(j as i32)).collect()
    }

    fn validate(&self) -> Result<(), CheckerError> {
        self.region.validate()?;
        if self.samples == 0 && self.shrink_directions == 0 && self.sequences.is_empty() {
            return Err(CheckerError::BadSchedule("schedule has no probes".into()));
        }
        if self.shrink_levels < 2 || self.shrink_levels > 60 {
            return Err(CheckerError::BadSchedule(format!("shrink_levels must lie in 2..=60, got {}", self.shrink_levels)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Classification {
    Bounded,
    Divergent,
}

/// One evaluated probe. `sequence`/`epsilon` are set on shrink sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeRecord {
    pub id: usize,
    pub sequence: Option<usize>,
    pub t: f64,
    pub epsilon: Option<f64>,
    pub c_required: f64,
}

/// Probe point attaining the reported supremum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeWitness {
    pub id: usize,
    pub t: f64,
    pub y: Vec<f64>,
    pub y_prime: Vec<f64>,
    pub z: Vec<f64>,
    pub z_prime: Vec<f64>,
    pub c_required: f64,
}

/// Log-log fit of `C_required` against `ε` along one shrink sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShrinkFit {
    pub sequence: usize,
    pub points: usize,
    pub slope: f64,
    pub r_squared: f64,
    /// `C_required` at the smallest `ε`.
    pub last_c_required: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub condition: String,
    /// `max(0, sup C_required)` over binding random probes.
    pub sup_c_required: f64,
    /// Steepest well-fitted shrink slope (any slope if none is well fitted).
    pub growth_exponent: Option<f64>,
    pub r_squared: Option<f64>,
    pub classification: Classification,
    pub witness: Option<ProbeWitness>,
    pub binding_samples: usize,
    /// Binding random probes with `C_required > 0`.
    pub positive_samples: usize,
    pub mean_c_required: Option<f64>,
    pub fits: Vec<ShrinkFit>,
    #[serde(skip)]
    pub probes: Vec<ProbeRecord>,
}

/// Unnormalized probe point.
#[derive(Debug, Clone)]
struct Probe {
    t: f64,
    y: Vec<f64>,
    y_prime: Vec<f64>,
    z: Vec<f64>,
    z_prime: Vec<f64>,
}

fn mat<T: Real>(n: usize, d: usize, v: &[f64]) -> Mat<T> {
    Mat::from_rows(n, d, v.iter().map(|&x| T::lit(x)).collect())
}

fn cast<T: Real>(v: &[f64]) -> Vec<T> {
    v.iter().map(|&x| T::lit(x)).collect()
}

fn check_pair(g1: &Generator, g2: &Generator) -> Result<(), CheckerError> {
    if g1.n() != g2.n() || g1.d() != g2.d() {
        return Err(CheckerError::DimensionMismatch(format!(
            "generators are ({}, {}) and ({}, {})",
            g1.n(),
            g1.d(),
            g2.n(),
            g2.d()
        )));
    }
    Ok(())
}

/// `(−4a·inner − quad)/a²` evaluated as `(−4·inner − quad/a)/a`, so small
/// `a` never gets squared. `inner` within rounding of zero (relative to
/// `scale`) is treated as zero; otherwise projection round-off alone would
/// produce a spurious `1/a` law.
fn factored<T: Real>(a: T, inner: T, quad: T, scale: T) -> T {
    let inner = if inner.abs() <= T::lit(64.0) * T::epsilon() * scale { T::zero() } else { inner };
    (T::lit(-4.0) * inner - quad / a) / a
}

/// Magnitude of the terms entering `⟨q, g¹ − g²⟩`, for the round-off test.
fn rounding_scale<T: Real>(q: &[T], v1: &[T], v2: &[T], mu: f64, point: &[T]) -> T {
    let terms = (0..q.len()).fold(T::zero(), |s, i| s + q[i].abs() * (v1[i].abs() + v2[i].abs()));
    terms + T::lit(mu) * point.iter().fold(T::zero(), |s, v| s + v.abs())
}

/// Pointwise minimal `C` in the comparison inequality; `0` when `⟨y, q⟩ ≥ 0`.
/// May be negative (slack).
#[allow(clippy::too_many_arguments)]
pub fn c_required<T: Real>(
    g1: &Generator,
    g2: &Generator,
    q: &Direction<T>,
    t: T,
    y: &[T],
    y_prime: &[T],
    z: &Mat<T>,
    z_prime: &Mat<T>,
) -> Result<T, CheckerError> {
    check_pair(g1, g2)?;
    let n = g1.n();
    if q.dim() != n || y.len() != n || y_prime.len() != n || z.rows() != n || z_prime.rows() != n {
        return Err(CheckerError::DimensionMismatch(format!("probe does not match n = {n}")));
    }
    let qs = q.as_slice();
    let a = dot(y, qs).neg_part();
    if a <= T::zero() {
        return Ok(T::zero());
    }
    let point: Vec<T> = (0..n).map(|i| y[i] + a * qs[i] + y_prime[i]).collect();
    let v1 = g1.eval(t, &point, z)?;
    let v2 = g2.eval(t, y_prime, z_prime)?;
    let inner = (0..n).fold(T::zero(), |s, i| s + qs[i] * (v1[i] - v2[i]));
    let dz: Vec<T> = z.as_slice().iter().zip(z_prime.as_slice()).map(|(&a, &b)| a - b).collect();
    let quad = T::lit(2.0) * Mat::from_rows(n, z.cols(), dz).transpose_mul(qs).iter().fold(T::zero(), |s, &v| s + v * v);
    let scale = rounding_scale(qs, &v1, &v2, g1.mu(), &point);
    Ok(factored(a, inner, quad, scale))
}

/// Componentwise form with `q = e_i` (zero-based `i`):
/// `(−4y_i⁻[g¹_i(t, y + y_i⁻eⁱ + y′, z) − g²_i(t, y′, z′)] − 2|z_i − z′_i|²)/(y_i⁻)²`.
#[allow(clippy::too_many_arguments)]
pub fn c_required_componentwise<T: Real>(
    g1: &Generator,
    g2: &Generator,
    i: usize,
    t: T,
    y: &[T],
    y_prime: &[T],
    z: &Mat<T>,
    z_prime: &Mat<T>,
) -> Result<T, CheckerError> {
    check_pair(g1, g2)?;
    let n = g1.n();
    if i >= n || y.len() != n || y_prime.len() != n {
        return Err(CheckerError::DimensionMismatch(format!("component {i} / probe does not match n = {n}")));
    }
    let a = y[i].neg_part();
    if a <= T::zero() {
        return Ok(T::zero());
    }
    let mut point: Vec<T> = y.iter().zip(y_prime).map(|(&a, &b)| a + b).collect();
    point[i] = y[i] + a + y_prime[i];
    let (v1, v2) = (g1.eval(t, &point, z)?[i], g2.eval(t, y_prime, z_prime)?[i]);
    let row = z.row(i).iter().zip(z_prime.row(i)).fold(T::zero(), |s, (&a, &b)| s + (a - b) * (a - b));
    let scale = rounding_scale(&[T::one()], &[v1], &[v2], g1.mu(), &point);
    Ok(factored(a, v1 - v2, T::lit(2.0) * row, scale))
}

/// Uniform-direction form with `s = Σ y_j`:
/// `(−4s⁻ Σ_i[g¹_i(t, y + (s⁻/n)𝟏 + y′, z) − g²_i(t, y′, z′)] − 2|Σ_i (z_i − z′_i)|²)/(s⁻)²`.
///
/// Multiplying the general inequality at `q = 𝟏/√n` by `n` gives this form
/// with the same constant `C`.
#[allow(clippy::too_many_arguments)]
pub fn c_required_uniform<T: Real>(
    g1: &Generator,
    g2: &Generator,
    t: T,
    y: &[T],
    y_prime: &[T],
    z: &Mat<T>,
    z_prime: &Mat<T>,
) -> Result<T, CheckerError> {
    check_pair(g1, g2)?;
    let (n, d) = (g1.n(), g1.d());
    if y.len() != n || y_prime.len() != n {
        return Err(CheckerError::DimensionMismatch(format!("probe does not match n = {n}")));
    }
    let s = y.iter().fold(T::zero(), |s, &v| s + v).neg_part();
    if s <= T::zero() {
        return Ok(T::zero());
    }
    let shift = s / T::lit(n as f64);
    let point: Vec<T> = y.iter().zip(y_prime).map(|(&a, &b)| a + shift + b).collect();
    let v1 = g1.eval(t, &point, z)?;
    let v2 = g2.eval(t, y_prime, z_prime)?;
    let total = v1.iter().zip(&v2).fold(T::zero(), |acc, (&a, &b)| acc + (a - b));
    let mut col = vec![T::zero(); d];
    for i in 0..n {
        for (j, c) in col.iter_mut().enumerate() {
            *c += z.get(i, j) - z_prime.get(i, j);
        }
    }
    let quad = T::lit(2.0) * col.iter().fold(T::zero(), |acc, &v| acc + v * v);
    let ones = vec![T::one(); n];
    let scale = rounding_scale(&ones, &v1, &v2, g1.mu(), &point);
    Ok(factored(s, total, quad, scale))
}

/// Single-generator viability form:
/// `(−4a⟨q, g(t, Π_K(y), z)⟩ − 2|zᵀq|²)/a²` with `a = ⟨y, q⟩⁻`.
pub fn c_required_viability<T: Real>(g: &Generator, q: &Direction<T>, t: T, y: &[T], z: &Mat<T>) -> Result<T, CheckerError> {
    let n = g.n();
    if q.dim() != n || y.len() != n || z.rows() != n {
        return Err(CheckerError::DimensionMismatch(format!("probe does not match n = {n}")));
    }
    let qs = q.as_slice();
    let a = dot(y, qs).neg_part();
    if a <= T::zero() {
        return Ok(T::zero());
    }
    let proj: Vec<T> = (0..n).map(|i| y[i] + a * qs[i]).collect();
    let v = g.eval(t, &proj, z)?;
    let inner = dot(&v, qs);
    let zq = z.transpose_mul(qs);
    let quad = T::lit(2.0) * zq.iter().fold(T::zero(), |s, &v| s + v * v);
    let scale = rounding_scale(qs, &v, &vec![T::zero(); n], g.mu(), &proj);
    Ok(factored(a, inner, quad, scale))
}

/// Random binding probes: `⟨y, q⟩ < 0`, resampled within `HYPERPLANE_GAP`.
fn random_probe(q: &[f64], n: usize, d: usize, r: &ProbeRegion, seed: u64, id: usize, twin: bool) -> Probe {
    let mut rng = stream_rng(seed, id as u64);
    let t = uniform(&mut rng, r.t_min, r.t_max);
    let y = loop {
        let y: Vec<f64> = uniform_box(&mut rng, n, r.y_bound);
        if dot(&y, q).abs() >= HYPERPLANE_GAP {
            break y;
        }
    };
    let y_prime = if twin { uniform_box(&mut rng, n, r.y_prime_bound) } else { vec![0.0; n] };
    let z = uniform_box(&mut rng, n * d, r.z_bound);
    let z_prime = if twin { uniform_box(&mut rng, n * d, r.z_prime_bound) } else { z.clone() };
    Probe { t, y, y_prime, z, z_prime }
}

/// Anchor of a random shrink sequence.
///
/// The shrink direction is `q` itself, so `y_j + ⟨y_j,q⟩⁻q = c` for every
/// level and only the scale `ε_j` changes. `z′ − z` is chosen orthogonal to
/// `q` column-wise (or zero), which removes the quadratic term.
fn random_sequence(q: &[f64], n: usize, d: usize, r: &ProbeRegion, seed: u64, idx: usize, twin: bool) -> ShrinkSequence {
    let mut rng = stream_rng(seed, SHRINK_STREAM + idx as u64);
    let t = uniform(&mut rng, r.t_min, r.t_max);
    let project_out = |v: &mut [f64]| {
        let s = dot(v, q);
        for (x, &qi) in v.iter_mut().zip(q) {
            *x -= s * qi;
        }
    };
    let mut companion: Vec<f64> = uniform_box(&mut rng, n, r.y_bound);
    project_out(&mut companion);
    let y_prime = if twin { uniform_box(&mut rng, n, r.y_prime_bound) } else { vec![0.0; n] };
    let mut z: Vec<f64> = uniform_box(&mut rng, n * d, r.z_bound);
    let mut z_prime = z.clone();
    if twin {
        if idx % 2 == 1 {
            let mut dir: Vec<f64> = uniform_box(&mut rng, n, 1.0);
            project_out(&mut dir);
            let s: Vec<f64> = uniform_box(&mut rng, d, r.z_prime_bound);
            for i in 0..n {
                for j in 0..d {
                    z_prime[i * d + j] += dir[i] * s[j];
                }
            }
        }
    } else {
        // zᵀq = 0 column by column.
        for j in 0..d {
            let mut col: Vec<f64> = (0..n).map(|i| z[i * d + j]).collect();
            project_out(&mut col);
            for i in 0..n {
                z[i * d + j] = col[i];
            }
        }
        z_prime = z.clone();
    }
    ShrinkSequence { direction: q.to_vec(), companion, y_prime, z, z_prime, t }
}

fn sequence_probe(s: &ShrinkSequence, eps: f64, n: usize, d: usize) -> Probe {
    let fill = |v: &[f64], len: usize| if v.is_empty() { vec![0.0; len] } else { v.to_vec() };
    let z = fill(&s.z, n * d);
    let z_prime = if s.z_prime.is_empty() { z.clone() } else { s.z_prime.clone() };
    Probe {
        t: s.t,
        y: s.direction.iter().zip(&s.companion).map(|(&u, &c)| -eps * u + c).collect(),
        y_prime: fill(&s.y_prime, n),
        z,
        z_prime,
    }
}

fn validate_sequence(s: &ShrinkSequence, q: &[f64], n: usize, d: usize) -> Result<(), CheckerError> {
    let bad = |m: String| Err(CheckerError::BadSchedule(m));
    if s.direction.len() != n || s.companion.len() != n {
        return bad(format!("shrink direction and companion need {n} entries"));
    }
    if !s.y_prime.is_empty() && s.y_prime.len() != n {
        return bad(format!("y_prime needs {n} entries"));
    }
    for (name, v) in [("z", &s.z), ("z_prime", &s.z_prime)] {
        if !v.is_empty() && v.len() != n * d {
            return bad(format!("{name} needs {} entries", n * d));
        }
    }
    if dot(&s.direction, q) <= 0.0 {
        return bad("shrink direction must satisfy <u, q> > 0".into());
    }
    Ok(())
}

/// Least-squares line through `(x, y)`: `(slope, R²)`.
fn fit_line(x: &[f64], y: &[f64]) -> (f64, f64) {
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy <= 1e-300 { 1.0 } else { (sxy * sxy / (sxx * syy)).min(1.0) };
    (slope, r2)
}

/// Probe evaluation shared by all condition forms.
struct Engine<'a> {
    name: String,
    q: Vec<f64>,
    n: usize,
    d: usize,
    twin: bool,
    schedule: &'a ProbeSchedule,
}

impl Engine<'_> {
    fn run(&self, eval: impl Fn(&Probe) -> Result<f64, CheckerError> + Sync) -> Result<ConditionReport, CheckerError> {
        let s = self.schedule;
        s.validate()?;
        for seq in &s.sequences {
            validate_sequence(seq, &self.q, self.n, self.d)?;
        }
        let random: Vec<(Probe, f64)> = (0..s.samples)
            .into_par_iter()
            .map(|id| {
                let p = random_probe(&self.q, self.n, self.d, &s.region, s.seed, id, self.twin);
                let c = eval(&p)?;
                Ok((p, c))
            })
            .collect::<Result<_, CheckerError>>()?;

        let mut probes: Vec<ProbeRecord> = Vec::with_capacity(random.len());
        let mut sup = 0.0_f64;
        let mut witness: Option<ProbeWitness> = None;
        let (mut binding, mut positive, mut total) = (0usize, 0usize, 0.0_f64);
        for (id, (p, c)) in random.iter().enumerate() {
            probes.push(ProbeRecord { id, sequence: None, t: p.t, epsilon: None, c_required: *c });
            if dot(&p.y, &self.q) >= 0.0 {
                continue;
            }
            binding += 1;
            total += c;
            if *c > 0.0 {
                positive += 1;
            }
            if *c > sup || (witness.is_none() && *c >= sup) {
                sup = sup.max(*c);
                witness = Some(ProbeWitness {
                    id,
                    t: p.t,
                    y: p.y.clone(),
                    y_prime: p.y_prime.clone(),
                    z: p.z.clone(),
                    z_prime: p.z_prime.clone(),
                    c_required: *c,
                });
            }
        }

        let eps = s.epsilons();
        let mut sequences: Vec<ShrinkSequence> = s.sequences.clone();
        sequences.extend(
            (0..s.shrink_directions).map(|i| random_sequence(&self.q, self.n, self.d, &s.region, s.seed, i, self.twin)),
        );
        let shrink: Vec<Vec<(f64, f64)>> = sequences
            .par_iter()
            .map(|seq| {
                eps.iter()
                    .map(|&e| {
                        let p = sequence_probe(seq, e, self.n, self.d);
                        Ok((p.t, eval(&p)?))
                    })
                    .collect::<Result<Vec<_>, CheckerError>>()
            })
            .collect::<Result<_, _>>()?;
        let mut fits = Vec::new();
        for (k, values) in shrink.iter().enumerate() {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for (j, &(t, c)) in values.iter().enumerate() {
                probes.push(ProbeRecord { id: probes.len(), sequence: Some(k), t, epsilon: Some(eps[j]), c_required: c });
                if c > 0.0 && c.is_finite() {
                    xs.push(eps[j].ln());
                    ys.push(c.ln());
                }
            }
            if xs.len() >= 3 {
                let (slope, r_squared) = fit_line(&xs, &ys);
                fits.push(ShrinkFit { sequence: k, points: xs.len(), slope, r_squared, last_c_required: values.last().map_or(0.0, |v| v.1) });
            }
        }
        let steepest = |good: bool| {
            fits.iter()
                .filter(|f| !good || f.r_squared >= MIN_R_SQUARED)
                .min_by(|a, b| a.slope.total_cmp(&b.slope))
        };
        let best = steepest(true).or_else(|| steepest(false));
        let classification = match best {
            Some(f) if f.slope <= DIVERGENCE_SLOPE && f.r_squared >= MIN_R_SQUARED => Classification::Divergent,
            _ => Classification::Bounded,
        };
        Ok(ConditionReport {
            condition: self.name.clone(),
            sup_c_required: sup,
            growth_exponent: best.map(|f| f.slope),
            r_squared: best.map(|f| f.r_squared),
            classification,
            witness,
            binding_samples: binding,
            positive_samples: positive,
            mean_c_required: (binding > 0).then(|| total / binding as f64),
            fits,
            probes,
        })
    }
}

fn as_f64_dir<T: Real>(q: &Direction<T>) -> Vec<f64> {
    q.as_slice().iter().map(|v| v.as_f64()).collect()
}

/// Condition (ii) for the pair `(g¹, g²)` in direction `q`.
pub fn check_condition_ii<T: Real>(
    g1: &Generator,
    g2: &Generator,
    q: &Direction<T>,
    schedule: &ProbeSchedule,
) -> Result<ConditionReport, CheckerError> {
    check_pair(g1, g2)?;
    let (n, d) = (g1.n(), g1.d());
    if q.dim() != n {
        return Err(CheckerError::DimensionMismatch(format!("direction has dimension {}, generators have {n}", q.dim())));
    }
    let engine = Engine { name: "comparison".into(), q: as_f64_dir(q), n, d, twin: true, schedule };
    engine.run(|p| {
        let c = c_required(
            g1,
            g2,
            q,
            T::lit(p.t),
            &cast::<T>(&p.y),
            &cast::<T>(&p.y_prime),
            &mat(n, d, &p.z),
            &mat(n, d, &p.z_prime),
        )?;
        Ok(c.as_f64())
    })
}

/// Componentwise condition for coordinate `i` (zero-based), probed at the
/// same points as [`check_condition_ii`] with `q = e_i`.
pub fn check_condition_v<T: Real>(
    g1: &Generator,
    g2: &Generator,
    i: usize,
    schedule: &ProbeSchedule,
) -> Result<ConditionReport, CheckerError> {
    check_pair(g1, g2)?;
    let (n, d) = (g1.n(), g1.d());
    if i >= n {
        return Err(CheckerError::DimensionMismatch(format!("component {i} out of range for n = {n}")));
    }
    let q = Direction::<f64>::unit(n, i);
    let engine = Engine { name: format!("componentwise[{i}]"), q: q.as_slice().to_vec(), n, d, twin: true, schedule };
    engine.run(|p| {
        let c = c_required_componentwise::<T>(
            g1,
            g2,
            i,
            T::lit(p.t),
            &cast::<T>(&p.y),
            &cast::<T>(&p.y_prime),
            &mat(n, d, &p.z),
            &mat(n, d, &p.z_prime),
        )?;
        Ok(c.as_f64())
    })
}

/// Uniform-direction form, probed at the same points as
/// [`check_condition_ii`] with `q = 𝟏/√n`.
pub fn check_condition_uniform<T: Real>(
    g1: &Generator,
    g2: &Generator,
    schedule: &ProbeSchedule,
) -> Result<ConditionReport, CheckerError> {
    check_pair(g1, g2)?;
    let (n, d) = (g1.n(), g1.d());
    let q = Direction::<f64>::uniform(n);
    let engine = Engine { name: "uniform".into(), q: q.as_slice().to_vec(), n, d, twin: true, schedule };
    engine.run(|p| {
        let c = c_required_uniform::<T>(
            g1,
            g2,
            T::lit(p.t),
            &cast::<T>(&p.y),
            &cast::<T>(&p.y_prime),
            &mat(n, d, &p.z),
            &mat(n, d, &p.z_prime),
        )?;
        Ok(c.as_f64())
    })
}

/// Single-generator viability inequality for `K = {⟨y, q⟩ ≥ 0}`.
pub fn check_viability_condition<T: Real>(
    g: &Generator,
    q: &Direction<T>,
    schedule: &ProbeSchedule,
) -> Result<ConditionReport, CheckerError> {
    let (n, d) = (g.n(), g.d());
    if q.dim() != n {
        return Err(CheckerError::DimensionMismatch(format!("direction has dimension {}, generator has {n}", q.dim())));
    }
    let engine = Engine { name: "viability".into(), q: as_f64_dir(q), n, d, twin: false, schedule };
    engine.run(|p| Ok(c_required_viability(g, q, T::lit(p.t), &cast::<T>(&p.y), &mat(n, d, &p.z))?.as_f64()))
}

/// A sampled state `(t, y, z)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatePoint {
    pub t: f64,
    pub y: Vec<f64>,
    pub z: Vec<f64>,
}

fn sample_state(region: &Region, n: usize, d: usize, seed: u64, id: usize) -> StatePoint {
    let mut rng = stream_rng(seed, id as u64);
    StatePoint {
        t: uniform(&mut rng, region.t_min, region.t_max),
        y: uniform_box(&mut rng, n, region.y_bound),
        z: uniform_box(&mut rng, n * d, region.z_bound),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderCheckReport {
    /// `min ⟨q, g¹ − g²⟩` over samples.
    pub min_margin: f64,
    pub holds: bool,
    pub witness: Option<StatePoint>,
    pub samples: usize,
}

/// Necessary condition: `⟨q, g¹(t, y, z) − g²(t, y, z)⟩ ≥ 0` at every sample.
pub fn check_necessary_order<T: Real>(
    g1: &Generator,
    g2: &Generator,
    q: &Direction<T>,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<OrderCheckReport, CheckerError> {
    check_pair(g1, g2)?;
    let (n, d) = (g1.n(), g1.d());
    if q.dim() != n {
        return Err(CheckerError::DimensionMismatch(format!("direction has dimension {}, generators have {n}", q.dim())));
    }
    let values: Vec<(StatePoint, f64)> = (0..samples)
        .into_par_iter()
        .map(|id| {
            let p = sample_state(region, n, d, seed, id);
            let (y, z) = (cast::<T>(&p.y), mat::<T>(n, d, &p.z));
            let t = T::lit(p.t);
            let diff: Vec<T> = g1.eval(t, &y, &z)?.iter().zip(g2.eval(t, &y, &z)?).map(|(&a, b)| a - b).collect();
            let m = dot(&diff, q.as_slice()).as_f64();
            Ok((p, m))
        })
        .collect::<Result<_, CheckerError>>()?;
    let worst = values.into_iter().fold(None::<(StatePoint, f64)>, |acc, (p, m)| match acc {
        Some((_, bm)) if bm <= m => acc,
        _ => Some((p, m)),
    });
    let min_margin = worst.as_ref().map_or(f64::INFINITY, |w| w.1);
    Ok(OrderCheckReport { min_margin, holds: min_margin >= -ORDER_TOLERANCE, witness: worst.map(|w| w.0), samples })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqualityReport {
    pub component: usize,
    /// `max |g¹_i − g²_i|` over samples.
    pub max_gap: f64,
    pub equal: bool,
    pub witness: Option<StatePoint>,
    pub samples: usize,
}

/// `g¹_i = g²_i` at every sample (zero-based `i`).
pub fn check_componentwise_equality<T: Real>(
    g1: &Generator,
    g2: &Generator,
    i: usize,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<EqualityReport, CheckerError> {
    check_pair(g1, g2)?;
    let (n, d) = (g1.n(), g1.d());
    if i >= n {
        return Err(CheckerError::DimensionMismatch(format!("component {i} out of range for n = {n}")));
    }
    let values: Vec<(StatePoint, f64)> = (0..samples)
        .into_par_iter()
        .map(|id| {
            let p = sample_state(region, n, d, seed, id);
            let (y, z) = (cast::<T>(&p.y), mat::<T>(n, d, &p.z));
            let t = T::lit(p.t);
            let gap = (g1.eval(t, &y, &z)?[i] - g2.eval(t, &y, &z)?[i]).abs().as_f64();
            Ok((p, gap))
        })
        .collect::<Result<_, CheckerError>>()?;
    let worst = values.into_iter().fold(None::<(StatePoint, f64)>, |acc, (p, m)| match acc {
        Some((_, bm)) if bm >= m => acc,
        _ => Some((p, m)),
    });
    let max_gap = worst.as_ref().map_or(0.0, |w| w.1);
    Ok(EqualityReport { component: i, max_gap, equal: max_gap <= ORDER_TOLERANCE, witness: worst.map(|w| w.0), samples })
}

/// Which state coordinates component `i` of a generator reacts to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DependenceMask {
    pub component: usize,
    pub depends_on_y: Vec<bool>,
    /// Per row of `z`.
    pub depends_on_z: Vec<bool>,
    pub threshold: f64,
    /// `g_i` depends on no `y_j`, `z_j` with `j ≠ i`.
    pub diagonal: bool,
}

/// Perturbs one `y_j` or one row `z_j` at a time around random base points.
pub fn detect_structure<T: Real>(
    g: &Generator,
    i: usize,
    region: &Region,
    samples: usize,
    seed: u64,
) -> Result<DependenceMask, CheckerError> {
    let (n, d) = (g.n(), g.d());
    if i >= n {
        return Err(CheckerError::DimensionMismatch(format!("component {i} out of range for n = {n}")));
    }
    let flags: Vec<(Vec<bool>, Vec<bool>)> = (0..samples)
        .into_par_iter()
        .map(|id| {
            let mut rng = stream_rng(seed, id as u64);
            let base = sample_state(region, n, d, seed.wrapping_add(1), id);
            let t = T::lit(base.t);
            let y = cast::<T>(&base.y);
            let z = mat::<T>(n, d, &base.z);
            let g0 = g.eval(t, &y, &z)?[i];
            let thresh = T::lit(DEPENDENCE_THRESHOLD) * (T::one() + g0.abs());
            let mut fy = vec![false; n];
            let mut fz = vec![false; n];
            for j in 0..n {
                let mut yp = y.clone();
                yp[j] = uniform(&mut rng, -region.y_bound, region.y_bound);
                fy[j] = (g.eval(t, &yp, &z)?[i] - g0).abs() > thresh;
                let mut zp = z.clone();
                for v in zp.row_mut(j) {
                    *v = uniform(&mut rng, -region.z_bound, region.z_bound);
                }
                fz[j] = (g.eval(t, &y, &zp)?[i] - g0).abs() > thresh;
            }
            Ok((fy, fz))
        })
        .collect::<Result<_, CheckerError>>()?;
    let mut depends_on_y = vec![false; n];
    let mut depends_on_z = vec![false; n];
    for (fy, fz) in flags {
        for j in 0..n {
            depends_on_y[j] |= fy[j];
            depends_on_z[j] |= fz[j];
        }
    }
    let diagonal = (0..n).filter(|&j| j != i).all(|j| !depends_on_y[j] && !depends_on_z[j]);
    Ok(DependenceMask { component: i, depends_on_y, depends_on_z, threshold: DEPENDENCE_THRESHOLD, diagonal })
}
