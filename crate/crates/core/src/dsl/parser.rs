//! Recursive-descent parser for the expression grammar.
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = ("-" | "+") unary | atom ;
//! atom    = number | ident | call | "(" expr ")" ;
//! call    = fname "(" expr { "," expr } ")" ;
//! fname   = "abs" | "pos" | "neg" | "negpart" | "min" | "max" | "exp" | "sin" ;
//! ident   = "t" | "y" k | "w" k | "z" k | "z" k "_" j | "z" k j ;
//! ```

use thiserror::Error;

use super::expr::{BinaryOp, Expr, UnaryOp, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at position {pos}: {msg}")]
    Syntax { pos: usize, msg: String },
    #[error("unknown variable `{name}` at position {pos}")]
    UnknownVariable { name: String, pos: usize },
    #[error("index out of range in `{name}` at position {pos} (n={n}, d={d})")]
    IndexOutOfRange { name: String, pos: usize, n: usize, d: usize },
    #[error("row reference `{name}` at position {pos} is only allowed as abs({name}) when d > 1")]
    RowOutsideNorm { name: String, pos: usize },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::UnknownVariable { pos, .. }
            | ParseError::IndexOutOfRange { pos, .. }
            | ParseError::RowOutsideNorm { pos, .. } => *pos,
        }
    }
}

/// Which variables an expression may reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarScope {
    /// Generator components: `t`, `y<k>`, `z<k>...`.
    State,
    /// Terminal conditions: `w<k>` (terminal Brownian state).
    Terminal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VarContext {
    pub n: usize,
    pub d: usize,
    pub scope: VarScope,
}

impl VarContext {
    pub fn state(n: usize, d: usize) -> Self {
        VarContext { n, d, scope: VarScope::State }
    }

    pub fn terminal(n: usize, d: usize) -> Self {
        VarContext { n, d, scope: VarScope::Terminal }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    End,
}

struct Lexer<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> Lexer<'a> {
    fn tokens(text: &'a str) -> Result<Vec<(Tok, usize)>, ParseError> {
        let mut lx = Lexer { src: text.as_bytes(), pos: 0 };
        let mut out = Vec::new();
        loop {
            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_whitespace() {
                lx.pos += 1;
            }
            let start = lx.pos;
            let Some(&c) = lx.src.get(lx.pos) else {
                out.push((Tok::End, start));
                return Ok(out);
            };
            if c.is_ascii_digit() || c == b'.' {
                out.push((lx.number()?, start));
            } else if c.is_ascii_alphabetic() {
                while lx.pos < lx.src.len()
                    && (lx.src[lx.pos].is_ascii_alphanumeric() || lx.src[lx.pos] == b'_')
                {
                    lx.pos += 1;
                }
                let s = std::str::from_utf8(&lx.src[start..lx.pos]).expect("ascii");
                out.push((Tok::Ident(s.to_string()), start));
            } else if b"+-*/(),".contains(&c) {
                lx.pos += 1;
                out.push((Tok::Op(c as char), start));
            } else {
                return Err(ParseError::Syntax {
                    pos: start,
                    msg: format!("unexpected character `{}`", c as char),
                });
            }
        }
    }

    fn number(&mut self) -> Result<Tok, ParseError> {
        let start = self.pos;
        let digits = |lx: &mut Lexer| {
            while lx.pos < lx.src.len() && lx.src[lx.pos].is_ascii_digit() {
                lx.pos += 1;
            }
        };
        digits(self);
        if self.src.get(self.pos) == Some(&b'.') {
            self.pos += 1;
            digits(self);
        }
        if matches!(self.src.get(self.pos), Some(b'e') | Some(b'E')) {
            let save = self.pos;
            self.pos += 1;
            if matches!(self.src.get(self.pos), Some(b'+') | Some(b'-')) {
                self.pos += 1;
            }
            let exp_start = self.pos;
            digits(self);
            if self.pos == exp_start {
                self.pos = save;
            }
        }
        let s = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        s.parse::<f64>().map(Tok::Num).map_err(|_| ParseError::Syntax {
            pos: start,
            msg: format!("malformed number `{s}`"),
        })
    }
}

enum Resolved {
    Var(Var),
    Row(usize),
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    ctx: &'a VarContext,
}

/// Parses `text` into an expression whose variables are valid in `ctx`.
pub fn parse_expr(text: &str, ctx: &VarContext) -> Result<Expr, ParseError> {
    let toks = Lexer::tokens(text)?;
    let mut p = Parser { toks, at: 0, ctx };
    if p.peek() == &Tok::End {
        return Err(ParseError::Syntax { pos: 0, msg: "empty expression".into() });
    }
    let e = p.expr()?;
    match p.peek() {
        Tok::End => Ok(e),
        t => Err(ParseError::Syntax { pos: p.pos(), msg: format!("unexpected {}", describe(t)) }),
    }
}

fn describe(t: &Tok) -> String {
    match t {
        Tok::Num(x) => format!("number {x}"),
        Tok::Ident(s) => format!("identifier `{s}`"),
        Tok::Op(c) => format!("`{c}`"),
        Tok::End => "end of input".into(),
    }
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> (Tok, usize) {
        let t = self.toks[self.at].clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.peek() == &Tok::Op(c) {
            self.bump();
            Ok(())
        } else {
            Err(ParseError::Syntax {
                pos: self.pos(),
                msg: format!("expected `{c}`, found {}", describe(self.peek())),
            })
        }
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Op('+') => BinaryOp::Add,
                Tok::Op('-') => BinaryOp::Sub,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.term()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary()?;
        loop {
            let op = match self.peek() {
                Tok::Op('*') => BinaryOp::Mul,
                Tok::Op('/') => BinaryOp::Div,
                _ => return Ok(lhs),
            };
            self.bump();
            let rhs = self.unary()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Tok::Op('-') => {
                self.bump();
                Ok(Expr::unary(UnaryOp::Neg, self.unary()?))
            }
            Tok::Op('+') => {
                self.bump();
                self.unary()
            }
            _ => self.atom(),
        }
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let (tok, pos) = self.bump();
        match tok {
            Tok::Num(x) => Ok(Expr::Num(x)),
            Tok::Op('(') => {
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if self.peek() == &Tok::Op('(') {
                    self.call(&name, pos)
                } else {
                    match self.resolve(&name, pos)? {
                        Resolved::Var(v) => Ok(Expr::Var(v)),
                        Resolved::Row(k) if self.ctx.d == 1 => Ok(Expr::z(k, 0)),
                        Resolved::Row(_) => Err(ParseError::RowOutsideNorm { name, pos }),
                    }
                }
            }
            t => Err(ParseError::Syntax { pos, msg: format!("unexpected {}", describe(&t)) }),
        }
    }

    fn call(&mut self, name: &str, pos: usize) -> Result<Expr, ParseError> {
        let arity = match name {
            "abs" | "pos" | "neg" | "negpart" | "exp" | "sin" => 1,
            "min" | "max" => 2,
            _ => {
                return Err(ParseError::Syntax { pos, msg: format!("unknown function `{name}`") })
            }
        };
        self.expect('(')?;
        if name == "abs" {
            if let (Tok::Ident(arg), Tok::Op(')')) =
                (self.peek().clone(), self.toks.get(self.at + 1).map(|t| t.0.clone()).unwrap_or(Tok::End))
            {
                let arg_pos = self.pos();
                if let Ok(Resolved::Row(k)) = self.resolve(&arg, arg_pos) {
                    self.bump();
                    self.bump();
                    return Ok(Expr::z_row_norm(k));
                }
            }
        }
        let mut args = vec![self.expr()?];
        while self.peek() == &Tok::Op(',') {
            self.bump();
            args.push(self.expr()?);
        }
        if args.len() != arity {
            return Err(ParseError::Syntax {
                pos,
                msg: format!("`{name}` takes {arity} argument(s), got {}", args.len()),
            });
        }
        self.expect(')')?;
        let mut args = args.into_iter();
        let a = args.next().expect("arity >= 1");
        Ok(match name {
            "abs" => a.abs(),
            "pos" => a.pos(),
            "neg" | "negpart" => a.neg_part(),
            "exp" => a.exp(),
            "sin" => a.sin(),
            "min" => a.min(args.next().expect("arity 2")),
            _ => a.max(args.next().expect("arity 2")),
        })
    }

    fn resolve(&self, name: &str, pos: usize) -> Result<Resolved, ParseError> {
        let VarContext { n, d, scope } = *self.ctx;
        let unknown = || ParseError::UnknownVariable { name: name.to_string(), pos };
        let out_of_range = || ParseError::IndexOutOfRange { name: name.to_string(), pos, n, d };
        let index = |s: &str| -> Result<usize, ParseError> {
            if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) {
                return Err(unknown());
            }
            s.parse::<usize>().map_err(|_| out_of_range())
        };
        let in_range = |k: usize, max: usize| if (1..=max).contains(&k) { Ok(k - 1) } else { Err(out_of_range()) };

        match (scope, name.as_bytes().first()) {
            (VarScope::State, _) if name == "t" => Ok(Resolved::Var(Var::Time)),
            (VarScope::State, Some(b'y')) => Ok(Resolved::Var(Var::Y(in_range(index(&name[1..])?, n)?))),
            (VarScope::Terminal, Some(b'w')) => Ok(Resolved::Var(Var::W(in_range(index(&name[1..])?, d)?))),
            (VarScope::State, Some(b'z')) => {
                let rest = &name[1..];
                if let Some((k, j)) = rest.split_once('_') {
                    let (k, j) = (in_range(index(k)?, n)?, in_range(index(j)?, d)?);
                    return Ok(Resolved::Var(Var::Z(k, j)));
                }
                let compact = n <= 9 && d <= 9;
                if compact && rest.len() == 2 {
                    let (k, j) = (index(&rest[..1])?, index(&rest[1..])?);
                    return Ok(Resolved::Var(Var::Z(in_range(k, n)?, in_range(j, d)?)));
                }
                if compact && rest.len() > 2 {
                    return Err(out_of_range());
                }
                Ok(Resolved::Row(in_range(index(rest)?, n)?))
            }
            _ => Err(unknown()),
        }
    }
}
