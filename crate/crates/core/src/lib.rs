//! Numerical toolkit for comparison and viability of multidimensional
//! backward stochastic differential equations under a half-space order.
//!
//! * [`geometry`]: the order `a ≿^q b ⟺ ⟨a − b, q⟩ ≥ 0`, half-space
//!   projection, distance and squared-distance Hessian.
//! * [`dsl`]: expression language for generators and terminal conditions.
//! * [`solver`]: ODE, binomial-tree and least-squares Monte Carlo schemes.
//! * [`harness`]: empirical comparison and viability runs.
//! * [`checker`]: sampled evaluation of the generator-side condition.
//! * [`cli`]: scenario files, golden runs and report tables.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar.

pub mod checker;
pub mod cli;
pub mod dsl;
pub mod geometry;
pub mod harness;
pub mod linalg;
pub mod sampling;
pub mod scalar;
pub mod solver;

pub use checker::{Classification, ConditionReport, ProbeSchedule};
pub use dsl::{builtin, Expr, Generator, TerminalFn};
pub use geometry::{Direction, HalfSpace};
pub use harness::{ComparisonOrder, ComparisonReport, ViabilityReport};
pub use linalg::Mat;
pub use scalar::Real;
pub use solver::{solve, BsdeSpec, LsmcSolution, OdeSolution, SchemeConfig, Solution, TimeGrid, TreeSolution};

pub type Direction64 = Direction<f64>;
pub type Direction32 = Direction<f32>;
pub type HalfSpace64 = HalfSpace<f64>;
pub type HalfSpace32 = HalfSpace<f32>;
pub type Mat64 = Mat<f64>;
pub type TimeGrid64 = TimeGrid<f64>;
pub type Solution64 = Solution<f64>;
pub type TreeSolution64 = TreeSolution<f64>;
pub type LsmcSolution64 = LsmcSolution<f64>;
pub type OdeSolution64 = OdeSolution<f64>;
pub type ComparisonOrder64 = ComparisonOrder<f64>;
