//! Expression DSL for Hamiltonians, generating functions and profile functions.
//!
//! Grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' INT)?
//! atom   := NUMBER | VAR | FUNC '(' expr ')' | 'bump' '(' expr ';' NUMBER ')' | '(' expr ')'
//! VAR    := 'x' | 'y' | 'z' | 't'
//! FUNC   := 'sin' | 'cos' | 'exp' | 'sqrt' | 'neg'
//! ```
//!
//! `bump(r; R)` is the quintic smoothstep ramp: 1 for `r <= 0`, 0 for `r >= R`,
//! `1 - (10 s^3 - 15 s^4 + 6 s^5)` with `s = r / R` in between (C², monotone).

mod compile;
mod diff;
mod parser;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use compile::{Bindings, ScalarField};
pub use diff::differentiate;
pub use parser::{parse, parse_in, Domain};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExprError {
    #[error("syntax error at byte {position}: expected one of {expected:?}, found {found:?}")]
    Syntax {
        position: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("unknown variable `{name}` at byte {position}")]
    UnknownVariable { name: String, position: usize },
    #[error("division by `{denominator}` is not positive on the declared domain")]
    UnguardedDivision { denominator: String },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("variable `{0}` is not bound")]
    Unbound(Var),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Var {
    X,
    Y,
    Z,
    T,
}

impl Var {
    pub const ALL: [Var; 4] = [Var::X, Var::Y, Var::Z, Var::T];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Var::X => "x",
            Var::Y => "y",
            Var::Z => "z",
            Var::T => "t",
        }
    }

    fn from_name(s: &str) -> Option<Var> {
        match s {
            "x" => Some(Var::X),
            "y" => Some(Var::Y),
            "z" => Some(Var::Z),
            "t" => Some(Var::T),
            _ => None,
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Neg,
}

impl Func {
    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Sqrt => "sqrt",
            Func::Neg => "neg",
        }
    }

    fn from_name(s: &str) -> Option<Func> {
        match s {
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            "exp" => Some(Func::Exp),
            "sqrt" => Some(Func::Sqrt),
            "neg" => Some(Func::Neg),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            BinOp::Add => '+',
            BinOp::Sub => '-',
            BinOp::Mul => '*',
            BinOp::Div => '/',
        }
    }
}

/// Expression tree.
///
/// `Bump::order > 0` only arises from differentiation: it is the `order`-th
/// derivative of the ramp with respect to its argument. Such nodes print as
/// `bump_d<k>(..; R)`, which is outside the input grammar.
#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(Var),
    Func(Func, Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Bump {
        arg: Box<Expr>,
        width: f64,
        order: u8,
    },
}

impl Expr {
    pub fn num(v: f64) -> Expr {
        Expr::Num(v)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_num() == Some(0.0)
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x + y),
            (Some(x), _) if x == 0.0 => b,
            (_, Some(y)) if y == 0.0 => a,
            _ => Expr::Bin(BinOp::Add, Box::new(a), Box::new(b)),
        }
    }

    pub fn sub(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x - y),
            (_, Some(y)) if y == 0.0 => a,
            (Some(x), _) if x == 0.0 => Expr::neg(b),
            _ => Expr::Bin(BinOp::Sub, Box::new(a), Box::new(b)),
        }
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), Some(y)) => Expr::Num(x * y),
            (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Num(0.0),
            (Some(x), _) if x == 1.0 => b,
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Bin(BinOp::Mul, Box::new(a), Box::new(b)),
        }
    }

    pub fn div(a: Expr, b: Expr) -> Expr {
        match (a.as_num(), b.as_num()) {
            (Some(x), _) if x == 0.0 => Expr::Num(0.0),
            (_, Some(y)) if y == 1.0 => a,
            _ => Expr::Bin(BinOp::Div, Box::new(a), Box::new(b)),
        }
    }

    pub fn neg(a: Expr) -> Expr {
        match a {
            Expr::Num(v) => Expr::Num(-v),
            Expr::Func(Func::Neg, inner) => *inner,
            other => Expr::Func(Func::Neg, Box::new(other)),
        }
    }

    pub fn func(f: Func, a: Expr) -> Expr {
        if f == Func::Neg {
            return Expr::neg(a);
        }
        Expr::Func(f, Box::new(a))
    }

    pub fn pow(a: Expr, n: u32) -> Expr {
        match (n, a.as_num()) {
            (0, _) => Expr::Num(1.0),
            (1, _) => a,
            (_, Some(v)) => Expr::Num(v.powi(n as i32)),
            _ => Expr::Pow(Box::new(a), n),
        }
    }

    pub fn bump(arg: Expr, width: f64) -> Expr {
        Expr::Bump {
            arg: Box::new(arg),
            width,
            order: 0,
        }
    }

    /// Replace every occurrence of `var` by `with`.
    pub fn substitute(&self, var: Var, with: &Expr) -> Expr {
        match self {
            Expr::Num(_) => self.clone(),
            Expr::Var(v) if *v == var => with.clone(),
            Expr::Var(_) => self.clone(),
            Expr::Func(f, a) => Expr::func(*f, a.substitute(var, with)),
            Expr::Bin(op, a, b) => {
                let (a, b) = (a.substitute(var, with), b.substitute(var, with));
                match op {
                    BinOp::Add => Expr::add(a, b),
                    BinOp::Sub => Expr::sub(a, b),
                    BinOp::Mul => Expr::mul(a, b),
                    BinOp::Div => Expr::div(a, b),
                }
            }
            Expr::Pow(a, n) => Expr::pow(a.substitute(var, with), *n),
            Expr::Bump { arg, width, order } => Expr::Bump {
                arg: Box::new(arg.substitute(var, with)),
                width: *width,
                order: *order,
            },
        }
    }

    /// Bit mask of free variables (bit `Var::index`).
    pub fn free_vars(&self) -> u8 {
        match self {
            Expr::Num(_) => 0,
            Expr::Var(v) => 1 << v.index(),
            Expr::Func(_, a) | Expr::Pow(a, _) => a.free_vars(),
            Expr::Bump { arg, .. } => arg.free_vars(),
            Expr::Bin(_, a, b) => a.free_vars() | b.free_vars(),
        }
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.free_vars() & (1 << v.index()) != 0
    }

    pub fn node_count(&self) -> usize {
        match self {
            Expr::Num(_) | Expr::Var(_) => 1,
            Expr::Func(_, a) | Expr::Pow(a, _) => 1 + a.node_count(),
            Expr::Bump { arg, .. } => 1 + arg.node_count(),
            Expr::Bin(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    fn is_atomic(&self) -> bool {
        matches!(
            self,
            Expr::Num(_) | Expr::Var(_) | Expr::Func(..) | Expr::Bump { .. }
        ) && !matches!(self, Expr::Num(v) if *v < 0.0)
    }
}

fn write_num(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v < 0.0 || (v == 0.0 && v.is_sign_negative()) {
        write!(f, "neg({})", -v)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write_num(f, *v),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::Func(func, a) => write!(f, "{}({a})", func.name()),
            Expr::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Expr::Pow(a, n) => {
                if a.is_atomic() {
                    write!(f, "{a}^{n}")
                } else {
                    write!(f, "({a})^{n}")
                }
            }
            Expr::Bump { arg, width, order } => {
                if *order == 0 {
                    write!(f, "bump({arg}; {width})")
                } else {
                    write!(f, "bump_d{order}({arg}; {width})")
                }
            }
        }
    }
}

/// Quintic smoothstep ramp and its derivatives with respect to `r`.
pub fn bump_value(r: f64, width: f64, order: u8) -> f64 {
    if r <= 0.0 {
        return if order == 0 { 1.0 } else { 0.0 };
    }
    if r >= width {
        return 0.0;
    }
    let s = r / width;
    let scale = width.powi(order as i32);
    let p = match order {
        0 => 1.0 - s * s * s * (10.0 - 15.0 * s + 6.0 * s * s),
        1 => -30.0 * s * s * (1.0 - s) * (1.0 - s),
        2 => -(60.0 * s - 180.0 * s * s + 120.0 * s * s * s),
        3 => -(60.0 - 360.0 * s + 360.0 * s * s),
        4 => -(-360.0 + 720.0 * s),
        5 => 720.0,
        _ => 0.0,
    };
    p / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bump_closed_form() {
        assert_eq!(bump_value(-0.3, 0.5, 0), 1.0);
        assert_eq!(bump_value(0.7, 0.5, 0), 0.0);
        assert!((bump_value(0.25, 0.5, 0) - 0.5).abs() < 1e-15);
        // C² at the knots
        assert!(bump_value(1e-9, 0.5, 1).abs() < 1e-12);
        assert!(bump_value(0.5 - 1e-9, 0.5, 2).abs() < 1e-6);
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let w = 0.7;
        for k in 0..4u8 {
            for i in 1..20 {
                let r = w * i as f64 / 20.0;
                let h = 1e-6;
                let fd = (bump_value(r + h, w, k) - bump_value(r - h, w, k)) / (2.0 * h);
                let an = bump_value(r, w, k + 1);
                assert!((fd - an).abs() < 1e-5 * (1.0 + an.abs()), "k={k} r={r}");
            }
        }
    }

    #[test]
    fn substitution_replaces_time() {
        let e = parse("sin(x)*t").unwrap();
        let s = e.substitute(Var::T, &Expr::num(2.0));
        assert_eq!(s.free_vars(), 1);
    }
}
