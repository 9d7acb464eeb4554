//! Expression trees for generator components and terminal conditions.

use std::fmt;
use std::ops;

use serde::{Deserialize, Serialize};

use crate::linalg::{norm, Mat};
use crate::scalar::Real;

/// Variable reference. Indices are zero-based internally; the textual form
/// is one-based (`y1`, `z2_1`, `w1`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Var {
    Time,
    Y(usize),
    Z(usize, usize),
    /// Euclidean norm of row `k` of `z`; only reachable through `abs(zk)`.
    ZRowNorm(usize),
    W(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum UnaryOp {
    Neg,
    Abs,
    /// `x⁺ = max(x, 0)`
    Pos,
    /// `x⁻ = max(-x, 0)`
    NegPart,
    Exp,
    Sin,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
    Min,
    Max,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

/// Values bound to the variables during evaluation.
#[derive(Debug, Clone, Copy)]
pub struct Env<'a, T> {
    pub t: T,
    pub y: &'a [T],
    pub z: Option<&'a Mat<T>>,
    pub w: &'a [T],
}

impl<'a, T: Real> Env<'a, T> {
    pub fn state(t: T, y: &'a [T], z: &'a Mat<T>) -> Self {
        Env { t, y, z: Some(z), w: &[] }
    }

    pub fn terminal(w: &'a [T]) -> Self {
        Env { t: T::zero(), y: &[], z: None, w }
    }
}

impl Expr {
    pub fn num(x: f64) -> Expr {
        Expr::Num(x)
    }

    pub fn t() -> Expr {
        Expr::Var(Var::Time)
    }

    /// `y_{k+1}` (zero-based index).
    pub fn y(k: usize) -> Expr {
        Expr::Var(Var::Y(k))
    }

    pub fn z(k: usize, j: usize) -> Expr {
        Expr::Var(Var::Z(k, j))
    }

    pub fn z_row_norm(k: usize) -> Expr {
        Expr::Var(Var::ZRowNorm(k))
    }

    pub fn w(k: usize) -> Expr {
        Expr::Var(Var::W(k))
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn binary(op: BinaryOp, a: Expr, b: Expr) -> Expr {
        Expr::Binary(op, Box::new(a), Box::new(b))
    }

    pub fn abs(self) -> Expr {
        Expr::unary(UnaryOp::Abs, self)
    }

    pub fn pos(self) -> Expr {
        Expr::unary(UnaryOp::Pos, self)
    }

    pub fn neg_part(self) -> Expr {
        Expr::unary(UnaryOp::NegPart, self)
    }

    pub fn exp(self) -> Expr {
        Expr::unary(UnaryOp::Exp, self)
    }

    pub fn sin(self) -> Expr {
        Expr::unary(UnaryOp::Sin, self)
    }

    pub fn min(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Min, self, other)
    }

    pub fn max(self, other: Expr) -> Expr {
        Expr::binary(BinaryOp::Max, self, other)
    }

    /// Evaluates the tree. Non-finite results are returned as-is; callers
    /// decide whether they are errors.
    pub fn eval<T: Real>(&self, env: &Env<'_, T>) -> T {
        match self {
            Expr::Num(x) => T::lit(*x),
            Expr::Var(v) => match *v {
                Var::Time => env.t,
                Var::Y(k) => env.y[k],
                Var::Z(k, j) => env.z.expect("state environment").get(k, j),
                Var::ZRowNorm(k) => norm(env.z.expect("state environment").row(k)),
                Var::W(k) => env.w[k],
            },
            Expr::Unary(op, a) => {
                let a = a.eval(env);
                match op {
                    UnaryOp::Neg => -a,
                    UnaryOp::Abs => a.abs(),
                    UnaryOp::Pos => a.pos_part(),
                    UnaryOp::NegPart => a.neg_part(),
                    UnaryOp::Exp => a.exp(),
                    UnaryOp::Sin => a.sin(),
                }
            }
            Expr::Binary(op, a, b) => {
                let (a, b) = (a.eval(env), b.eval(env));
                match op {
                    BinaryOp::Add => a + b,
                    BinaryOp::Sub => a - b,
                    BinaryOp::Mul => a * b,
                    BinaryOp::Div => a / b,
                    BinaryOp::Min => a.min(b),
                    BinaryOp::Max => a.max(b),
                }
            }
        }
    }

    /// Calls `f` on every variable occurrence.
    pub fn visit_vars(&self, f: &mut impl FnMut(Var)) {
        match self {
            Expr::Num(_) => {}
            Expr::Var(v) => f(*v),
            Expr::Unary(_, a) => a.visit_vars(f),
            Expr::Binary(_, a, b) => {
                a.visit_vars(f);
                b.visit_vars(f);
            }
        }
    }

    pub fn is_constant(&self) -> bool {
        let mut constant = true;
        self.visit_vars(&mut |_| constant = false);
        constant
    }

    /// True if the tree references `y`, `z` or `w`.
    pub fn depends_on_state(&self) -> bool {
        let mut dep = false;
        self.visit_vars(&mut |v| dep |= !matches!(v, Var::Time));
        dep
    }

    pub fn uses_w(&self) -> bool {
        let mut dep = false;
        self.visit_vars(&mut |v| dep |= matches!(v, Var::W(_)));
        dep
    }

    /// Sub-expressions that may break global Lipschitz continuity in the
    /// state: products/quotients of two state-dependent factors, division
    /// by a state-dependent denominator, and `exp` of state.
    pub fn nonlipschitz_sites(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.collect_nonlipschitz(&mut out);
        out
    }

    fn collect_nonlipschitz(&self, out: &mut Vec<String>) {
        match self {
            Expr::Num(_) | Expr::Var(_) => {}
            Expr::Unary(op, a) => {
                if *op == UnaryOp::Exp && a.depends_on_state() {
                    out.push(self.to_string());
                }
                a.collect_nonlipschitz(out);
            }
            Expr::Binary(op, a, b) => {
                let flagged = match op {
                    BinaryOp::Mul => a.depends_on_state() && b.depends_on_state(),
                    BinaryOp::Div => b.depends_on_state(),
                    _ => false,
                };
                if flagged {
                    out.push(self.to_string());
                }
                a.collect_nonlipschitz(out);
                b.collect_nonlipschitz(out);
            }
        }
    }

    /// Structural square-integrability under Gaussian `w`: polynomials and
    /// bounded primitives only. `exp` of a `w`-dependent argument and
    /// division by a `w`-dependent denominator are rejected.
    pub fn is_square_integrable(&self) -> bool {
        match self {
            Expr::Num(x) => x.is_finite(),
            Expr::Var(_) => true,
            Expr::Unary(op, a) => match op {
                UnaryOp::Exp => !a.uses_w() && a.is_square_integrable(),
                _ => a.is_square_integrable(),
            },
            Expr::Binary(op, a, b) => {
                let ok = a.is_square_integrable() && b.is_square_integrable();
                match op {
                    BinaryOp::Div => ok && !b.uses_w(),
                    _ => ok,
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(x) => {
                if x.is_sign_negative() {
                    write!(f, "(-{:?})", -x)
                } else {
                    write!(f, "{:?}", x)
                }
            }
            Expr::Var(v) => match *v {
                Var::Time => write!(f, "t"),
                Var::Y(k) => write!(f, "y{}", k + 1),
                Var::Z(k, j) => write!(f, "z{}_{}", k + 1, j + 1),
                Var::ZRowNorm(k) => write!(f, "abs(z{})", k + 1),
                Var::W(k) => write!(f, "w{}", k + 1),
            },
            Expr::Unary(op, a) => match op {
                UnaryOp::Neg => write!(f, "(-{})", a),
                UnaryOp::Abs => write!(f, "abs({})", a),
                UnaryOp::Pos => write!(f, "pos({})", a),
                UnaryOp::NegPart => write!(f, "neg({})", a),
                UnaryOp::Exp => write!(f, "exp({})", a),
                UnaryOp::Sin => write!(f, "sin({})", a),
            },
            Expr::Binary(op, a, b) => match op {
                BinaryOp::Add => write!(f, "({} + {})", a, b),
                BinaryOp::Sub => write!(f, "({} - {})", a, b),
                BinaryOp::Mul => write!(f, "({} * {})", a, b),
                BinaryOp::Div => write!(f, "({} / {})", a, b),
                BinaryOp::Min => write!(f, "min({}, {})", a, b),
                BinaryOp::Max => write!(f, "max({}, {})", a, b),
            },
        }
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:expr) => {
        impl ops::$trait for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::binary($op, self, rhs)
            }
        }
    };
}

impl_binop!(Add, add, BinaryOp::Add);
impl_binop!(Sub, sub, BinaryOp::Sub);
impl_binop!(Mul, mul, BinaryOp::Mul);
impl_binop!(Div, div, BinaryOp::Div);

impl ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::unary(UnaryOp::Neg, self)
    }
}
