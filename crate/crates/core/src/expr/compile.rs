use std::sync::Arc;

use super::{bump_value, differentiate, BinOp, Expr, ExprError, Func, Var};

#[derive(Clone, Debug)]
enum Op {
    Const(f64),
    Load(usize),
    Func(Func),
    Bin(BinOp),
    Pow(u32),
    Bump(f64, u8),
}

/// Postfix program compiled from an [`Expr`].
#[derive(Clone, Debug)]
pub(crate) struct Program {
    ops: Vec<Op>,
    depth: usize,
    constant: Option<f64>,
}

impl Program {
    pub(crate) fn compile(e: &Expr) -> Program {
        fn emit(e: &Expr, ops: &mut Vec<Op>, cur: &mut usize, max: &mut usize) {
            fn push(ops: &mut Vec<Op>, op: Op, delta: isize, cur: &mut usize, max: &mut usize) {
                ops.push(op);
                *cur = (*cur as isize + delta) as usize;
                *max = (*max).max(*cur);
            }
            match e {
                Expr::Num(v) => push(ops, Op::Const(*v), 1, cur, max),
                Expr::Var(v) => push(ops, Op::Load(v.index()), 1, cur, max),
                Expr::Func(f, a) => {
                    emit(a, ops, cur, max);
                    push(ops, Op::Func(*f), 0, cur, max);
                }
                Expr::Bin(op, a, b) => {
                    emit(a, ops, cur, max);
                    emit(b, ops, cur, max);
                    push(ops, Op::Bin(*op), -1, cur, max);
                }
                Expr::Pow(a, n) => {
                    emit(a, ops, cur, max);
                    push(ops, Op::Pow(*n), 0, cur, max);
                }
                Expr::Bump { arg, width, order } => {
                    emit(arg, ops, cur, max);
                    push(ops, Op::Bump(*width, *order), 0, cur, max);
                }
            }
        }
        let mut ops = Vec::new();
        let (mut cur, mut max) = (0, 0);
        emit(e, &mut ops, &mut cur, &mut max);
        let constant = e.as_num();
        Program {
            ops,
            depth: max,
            constant,
        }
    }

    pub(crate) fn run(&self, vars: &[f64; 4]) -> Result<f64, ExprError> {
        if let Some(c) = self.constant {
            return Ok(c);
        }
        if self.depth <= 32 {
            let mut stack = [0.0f64; 32];
            self.exec(vars, &mut stack)
        } else {
            let mut stack = vec![0.0f64; self.depth];
            self.exec(vars, &mut stack)
        }
    }

    fn exec(&self, vars: &[f64; 4], stack: &mut [f64]) -> Result<f64, ExprError> {
        let mut sp = 0usize;
        for op in &self.ops {
            match *op {
                Op::Const(v) => {
                    stack[sp] = v;
                    sp += 1;
                }
                Op::Load(i) => {
                    stack[sp] = vars[i];
                    sp += 1;
                }
                Op::Func(f) => {
                    let a = stack[sp - 1];
                    stack[sp - 1] = match f {
                        Func::Sin => a.sin(),
                        Func::Cos => a.cos(),
                        Func::Exp => a.exp(),
                        Func::Neg => -a,
                        Func::Sqrt => {
                            if a < 0.0 {
                                return Err(ExprError::Domain(format!("sqrt of {a}")));
                            }
                            a.sqrt()
                        }
                    };
                }
                Op::Bin(op) => {
                    let b = stack[sp - 1];
                    let a = stack[sp - 2];
                    sp -= 1;
                    stack[sp - 1] = match op {
                        BinOp::Add => a + b,
                        BinOp::Sub => a - b,
                        BinOp::Mul => a * b,
                        BinOp::Div => {
                            if b == 0.0 {
                                return Err(ExprError::Domain("division by zero".into()));
                            }
                            a / b
                        }
                    };
                }
                Op::Pow(n) => {
                    let a = stack[sp - 1];
                    stack[sp - 1] = a.powi(n as i32);
                }
                Op::Bump(w, k) => {
                    let a = stack[sp - 1];
                    stack[sp - 1] = bump_value(a, w, k);
                }
            }
        }
        let v = stack[0];
        if v.is_finite() {
            Ok(v)
        } else {
            Err(ExprError::Domain(format!("non-finite value {v}")))
        }
    }
}

/// Variable assignment for [`ScalarField::eval`]; unbound variables are errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Bindings {
    values: [f64; 4],
    mask: u8,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn set(mut self, var: Var, value: f64) -> Self {
        self.values[var.index()] = value;
        self.mask |= 1 << var.index();
        self
    }

    pub fn values(&self) -> &[f64; 4] {
        &self.values
    }
}

struct Compiled {
    ast: Expr,
    source: String,
    value: Program,
    first: [Program; 4],
    second: [[Program; 4]; 4],
    first_ast: [Expr; 4],
}

/// A compiled expression together with its first and second partial derivatives.
///
/// Cheap to clone; the compiled programs are shared.
#[derive(Clone)]
pub struct ScalarField {
    inner: Arc<Compiled>,
}

impl std::fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "ScalarField({})", self.inner.source)
    }
}

impl ScalarField {
    pub fn parse(src: &str) -> Result<Self, ExprError> {
        let e = super::parse(src)?;
        Self::from_expr(e, src)
    }

    pub fn parse_in(src: &str, domain: &super::Domain) -> Result<Self, ExprError> {
        let e = super::parse_in(src, domain)?;
        Self::from_expr(e, src)
    }

    pub fn from_expr(ast: Expr, source: &str) -> Result<Self, ExprError> {
        let first_ast = Var::ALL.map(|v| differentiate(&ast, v));
        let second = Var::ALL.map(|i| {
            Var::ALL.map(|j| {
                if ast.depends_on(i) && ast.depends_on(j) {
                    Program::compile(&differentiate(&first_ast[i.index()], j))
                } else {
                    Program::compile(&Expr::Num(0.0))
                }
            })
        });
        Ok(ScalarField {
            inner: Arc::new(Compiled {
                value: Program::compile(&ast),
                first: first_ast.clone().map(|e| Program::compile(&e)),
                second,
                first_ast,
                source: source.trim().to_string(),
                ast,
            }),
        })
    }

    pub fn ast(&self) -> &Expr {
        &self.inner.ast
    }

    /// Source text the field was parsed from (or a printed form).
    pub fn source(&self) -> &str {
        &self.inner.source
    }

    pub fn derivative_expr(&self, v: Var) -> &Expr {
        &self.inner.first_ast[v.index()]
    }

    pub fn free_vars(&self) -> u8 {
        self.inner.ast.free_vars()
    }

    pub fn depends_on(&self, v: Var) -> bool {
        self.inner.ast.depends_on(v)
    }

    pub fn eval(&self, b: &Bindings) -> Result<f64, ExprError> {
        let missing = self.free_vars() & !b.mask;
        if missing != 0 {
            let v = Var::ALL[missing.trailing_zeros() as usize];
            return Err(ExprError::Unbound(v));
        }
        self.inner.value.run(&b.values)
    }

    /// Evaluate with all four variables given as `[x, y, z, t]`.
    pub fn eval_at(&self, p: &[f64; 4]) -> Result<f64, ExprError> {
        self.inner.value.run(p)
    }

    pub fn partial_at(&self, v: Var, p: &[f64; 4]) -> Result<f64, ExprError> {
        self.inner.first[v.index()].run(p)
    }

    pub fn second_at(&self, a: Var, b: Var, p: &[f64; 4]) -> Result<f64, ExprError> {
        self.inner.second[a.index()][b.index()].run(p)
    }

    /// Spatial gradient `(∂x, ∂y, ∂z)`.
    pub fn gradient_at(&self, p: &[f64; 4]) -> Result<[f64; 3], ExprError> {
        Ok([
            self.partial_at(Var::X, p)?,
            self.partial_at(Var::Y, p)?,
            self.partial_at(Var::Z, p)?,
        ])
    }

    /// Spatial Hessian over `(x, y, z)`.
    pub fn hessian_at(&self, p: &[f64; 4]) -> Result<[[f64; 3]; 3], ExprError> {
        let mut h = [[0.0; 3]; 3];
        for (i, row) in h.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = self.inner.second[i][j].run(p)?;
            }
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::halton;

    #[test]
    fn evaluate_constant_and_quadratic() {
        let zero = ScalarField::parse("0").unwrap();
        assert_eq!(zero.eval(&Bindings::new().set(Var::X, 7.0)).unwrap(), 0.0);
        let q = ScalarField::parse("x^2+y^2").unwrap();
        let b = Bindings::new().set(Var::X, 3.0).set(Var::Y, 4.0);
        assert_eq!(q.eval(&b).unwrap(), 25.0);
        assert!(matches!(
            q.eval(&Bindings::new().set(Var::X, 1.0)),
            Err(ExprError::Unbound(Var::Y))
        ));
    }

    #[test]
    fn sqrt_of_negative_is_domain_error() {
        let f = ScalarField::parse("sqrt(x)").unwrap();
        assert!(matches!(
            f.eval_at(&[-1.0, 0.0, 0.0, 0.0]),
            Err(ExprError::Domain(_))
        ));
    }

    #[test]
    fn ladder_substitution_matches_hand_formula() {
        // K(x, rho) = -H(x) + m + rho with H = bump(x^2+y^2; 1), m = 1; rho is carried in z.
        let k = ScalarField::parse("neg(bump(x^2+y^2; 1)) + 1 + z").unwrap();
        let h = ScalarField::parse("bump(x^2+y^2; 1)").unwrap();
        for i in 0..50 {
            let p = [halton(i + 1, 2) - 0.5, halton(i + 1, 3) - 0.5, halton(i + 1, 5), 0.0];
            let hand = -h.eval_at(&p).unwrap() + 1.0 + p[2];
            assert!((k.eval_at(&p).unwrap() - hand).abs() < 1e-15);
        }
        // at rho = m on the plateau: K = -1 + 1 + 1
        assert_eq!(k.eval_at(&[0.0, 0.0, 1.0, 0.0]).unwrap(), 1.0);
    }

    #[test]
    fn shared_across_threads() {
        let f = ScalarField::parse("sin(x)*cos(y)+t").unwrap();
        let vals: Vec<f64> = std::thread::scope(|s| {
            (0..4)
                .map(|i| {
                    let f = f.clone();
                    s.spawn(move || f.eval_at(&[i as f64, 0.0, 0.0, 0.0]).unwrap())
                })
                .collect::<Vec<_>>()
                .into_iter()
                .map(|h| h.join().unwrap())
                .collect()
        });
        assert_eq!(vals.len(), 4);
    }
}
