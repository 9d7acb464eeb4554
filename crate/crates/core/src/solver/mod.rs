//! Backward solvers for `Y_t = ξ + ∫_t^u g(s, Y_s, Z_s) ds − ∫_t^u Z_s dW_s`.
//!
//! Three schemes share one time grid:
//! * [`solve_ode`]: deterministic data (constant `ξ`), where `Z ≡ 0` and
//!   `Y` solves `dY/dt = −g(t, Y, 0)`; classical RK4.
//! * [`solve_tree`]: exact conditional expectations on a non-recombining
//!   `±√Δt` Brownian tree with an implicit step solved by Picard iteration.
//! * [`solve_lsmc`]: least-squares Monte Carlo regression on simulated paths
//!   with the same implicit step.

mod lsmc;
mod ode;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsl::{EvalError, Generator, TerminalFn};
use crate::linalg::{norm, Mat};
use crate::scalar::Real;

pub use lsmc::{basis_size, solve_lsmc, LsmcSolution, RIDGE};
pub use ode::{solve_ode, OdeSolution};
pub use tree::{solve_tree, TreeSolution, MAX_TREE_LEAVES};

/// Default absolute tolerance on the Picard update norm.
pub const PICARD_TOL: f64 = 1e-12;
pub const PICARD_MAX_ITERS: usize = 50;
/// Largest accepted regression condition number.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error("bad arguments: {0}")]
    BadArgs(String),
    #[error("terminal condition depends on w; the ODE scheme needs a constant terminal value")]
    NotDeterministic,
    #[error("tree with {leaves} leaves exceeds the limit of {MAX_TREE_LEAVES}")]
    TooLarge { leaves: u128 },
    #[error("Picard iteration did not converge at t = {t} after {iterations} iterations (last update {residual:e}); refine the grid so that Δt·μ < 1")]
    PicardDiverged { t: f64, iterations: usize, residual: f64 },
    #[error("regression at step {step} is ill-conditioned (condition number {condition:e})")]
    IllConditioned { step: usize, condition: f64 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// One BSDE instance on `[0, u]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BsdeSpec {
    pub n: usize,
    pub d: usize,
    pub horizon: f64,
    pub generator: Generator,
    pub terminal: TerminalFn,
}

impl BsdeSpec {
    pub fn new(generator: Generator, terminal: TerminalFn, horizon: f64) -> Result<Self, SolverError> {
        if generator.n() != terminal.n() || generator.d() != terminal.d() {
            return Err(SolverError::BadArgs(format!(
                "generator is ({}, {}) but terminal is ({}, {})",
                generator.n(),
                generator.d(),
                terminal.n(),
                terminal.d()
            )));
        }
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SolverError::BadArgs(format!("horizon must be positive, got {horizon}")));
        }
        Ok(BsdeSpec { n: generator.n(), d: generator.d(), horizon, generator, terminal })
    }
}

/// Uniform grid `0 = t_0 < … < t_N = u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid<T> {
    horizon: T,
    steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(horizon: T, steps: usize) -> Result<Self, SolverError> {
        if !(horizon.is_finite() && horizon > T::zero()) {
            return Err(SolverError::BadArgs(format!("horizon must be positive, got {horizon}")));
        }
        if !(1..=1_000_000).contains(&steps) {
            return Err(SolverError::BadArgs(format!("steps must lie in 1..=1000000, got {steps}")));
        }
        Ok(TimeGrid { horizon, steps })
    }

    pub fn horizon(&self) -> T {
        self.horizon
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dt(&self) -> T {
        self.horizon / T::lit(self.steps as f64)
    }

    /// `t_k = u k / N`; the last node is exactly `u`.
    pub fn time(&self, k: usize) -> T {
        if k == self.steps {
            self.horizon
        } else {
            self.horizon * T::lit(k as f64) / T::lit(self.steps as f64)
        }
    }

    pub fn nodes(&self) -> Vec<T> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

pub fn build_grid<T: Real>(horizon: T, steps: usize) -> Result<TimeGrid<T>, SolverError> {
    TimeGrid::new(horizon, steps)
}

/// `ξ(w)`.
pub fn evaluate_terminal<T: Real>(f: &TerminalFn, w: &[T]) -> Result<Vec<T>, SolverError> {
    Ok(f.eval(w)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Ode,
    Tree,
    Lsmc,
}

/// Scheme selection and numerical parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(rename = "type")]
    pub kind: SchemeKind,
    pub steps: usize,
    #[serde(default = "default_paths")]
    pub paths: usize,
    #[serde(default = "default_degree")]
    pub basis_degree: usize,
    #[serde(default = "default_picard_tol")]
    pub picard_tol: f64,
    /// Seed of the path ensemble (LSMC only).
    #[serde(default)]
    pub seed: u64,
}

fn default_paths() -> usize {
    20_000
}

fn default_degree() -> usize {
    2
}

fn default_picard_tol() -> f64 {
    PICARD_TOL
}

impl SchemeConfig {
    pub fn ode(steps: usize) -> Self {
        SchemeConfig { kind: SchemeKind::Ode, steps, paths: default_paths(), basis_degree: 2, picard_tol: PICARD_TOL, seed: 0 }
    }

    pub fn tree(steps: usize) -> Self {
        SchemeConfig { kind: SchemeKind::Tree, ..SchemeConfig::ode(steps) }
    }

    pub fn lsmc(steps: usize, paths: usize, basis_degree: usize, seed: u64) -> Self {
        SchemeConfig { kind: SchemeKind::Lsmc, steps, paths, basis_degree, picard_tol: PICARD_TOL, seed }
    }
}

/// Output of any scheme, addressed by time index `k` and state index `s`
/// (tree node or simulated path; the ODE scheme has a single state).
#[derive(Debug, Clone)]
pub enum Solution<T> {
    Ode(OdeSolution<T>),
    Tree(TreeSolution<T>),
    Lsmc(LsmcSolution<T>),
}

impl<T: Real> Solution<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        match self {
            Solution::Ode(s) => &s.grid,
            Solution::Tree(s) => &s.grid,
            Solution::Lsmc(s) => &s.grid,
        }
    }

    pub fn n(&self) -> usize {
        match self {
            Solution::Ode(s) => s.n,
            Solution::Tree(s) => s.n,
            Solution::Lsmc(s) => s.n,
        }
    }

    pub fn d(&self) -> usize {
        match self {
            Solution::Ode(s) => s.d,
            Solution::Tree(s) => s.d,
            Solution::Lsmc(s) => s.d,
        }
    }

    pub fn states(&self, k: usize) -> usize {
        match self {
            Solution::Ode(_) => 1,
            Solution::Tree(s) => s.node_count(k),
            Solution::Lsmc(s) => s.paths,
        }
    }

    pub fn y(&self, k: usize, s: usize) -> &[T] {
        match self {
            Solution::Ode(sol) => sol.y(k),
            Solution::Tree(sol) => sol.y(k, s),
            Solution::Lsmc(sol) => sol.y(k, s),
        }
    }

    /// Reported control at `(k, s)`; at the terminal time this is the value
    /// from the last step.
    pub fn z(&self, k: usize, s: usize) -> &[T] {
        match self {
            Solution::Ode(sol) => sol.z(),
            Solution::Tree(sol) => sol.z_reported(k, s),
            Solution::Lsmc(sol) => sol.z(k.min(sol.grid.steps() - 1), s),
        }
    }

    /// Brownian state at `(k, s)`.
    pub fn w(&self, k: usize, s: usize) -> Vec<T> {
        match self {
            Solution::Ode(sol) => vec![T::zero(); sol.d],
            Solution::Tree(sol) => sol.w(k, s),
            Solution::Lsmc(sol) => sol.w(k, s).to_vec(),
        }
    }

    pub fn is_monte_carlo(&self) -> bool {
        matches!(self, Solution::Lsmc(_))
    }
}

/// Solves with the configured scheme.
pub fn solve<T: Real>(spec: &BsdeSpec, scheme: &SchemeConfig) -> Result<Solution<T>, SolverError> {
    let grid = TimeGrid::new(T::lit(spec.horizon), scheme.steps)?;
    let tol = T::lit(scheme.picard_tol);
    Ok(match scheme.kind {
        SchemeKind::Ode => Solution::Ode(solve_ode(spec, &grid)?),
        SchemeKind::Tree => Solution::Tree(tree::solve_tree_with_tol(spec, &grid, tol)?),
        SchemeKind::Lsmc => Solution::Lsmc(lsmc::solve_lsmc_with_tol(
            spec,
            &grid,
            scheme.paths,
            scheme.basis_degree,
            scheme.seed,
            tol,
        )?),
    })
}

/// Solves `y = mean + dt · g(t, y, z)` by fixed-point iteration starting
/// from `mean`. Returns the number of generator evaluations.
pub(crate) fn picard_step<T: Real>(
    g: &Generator,
    t: T,
    dt: T,
    mean: &[T],
    z: &Mat<T>,
    tol: T,
    y: &mut [T],
    scratch: &mut [T],
) -> Result<usize, SolverError> {
    y.copy_from_slice(mean);
    let four_eps = T::lit(4.0) * T::epsilon();
    let mut last = T::infinity();
    for it in 1..=PICARD_MAX_ITERS {
        g.eval_into(t, y, z, scratch)?;
        let mut delta = T::zero();
        for ((yi, &mi), &gi) in y.iter_mut().zip(mean).zip(scratch.iter()) {
            let next = mi + dt * gi;
            delta += (next - *yi) * (next - *yi);
            *yi = next;
        }
        let delta = delta.sqrt();
        let floor = four_eps * (T::one() + norm(y));
        if delta <= tol.max(floor) {
            return Ok(it);
        }
        if !delta.is_finite() {
            last = delta;
            break;
        }
        last = delta;
    }
    Err(SolverError::PicardDiverged { t: t.as_f64(), iterations: PICARD_MAX_ITERS, residual: last.as_f64() })
}
