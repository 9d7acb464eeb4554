//! Expression language for generators `g(t, y, z)` and terminal conditions
//! `ξ = φ(W_u)`.

mod expr;
mod generator;
mod parser;

pub use expr::{BinaryOp, Env, Expr, UnaryOp, Var};
pub use generator::{
    builtin, estimate_lipschitz, validate_assumptions, AssumptionReport, DslError, EvalError,
    Generator, GeneratorKind, Region, TerminalFn, LIPSCHITZ_FLOOR, LIPSCHITZ_SAFETY,
};
pub use parser::{parse_expr, ParseError, VarContext, VarScope};
