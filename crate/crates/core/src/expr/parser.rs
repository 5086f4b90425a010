use super::compile::Program;
use super::{BinOp, Expr, ExprError, Func, Var};
use crate::util::halton;

/// Box on which division guards are sampled, plus the admitted variables.
#[derive(Clone, Debug, PartialEq)]
pub struct Domain {
    pub admitted: u8,
    pub bounds: [(f64, f64); 4],
}

impl Default for Domain {
    fn default() -> Self {
        Domain {
            admitted: 0b1111,
            bounds: [(-3.0, 3.0), (-3.0, 3.0), (-1.0, 1.0), (0.0, 1.0)],
        }
    }
}

impl Domain {
    pub fn with_vars(vars: &[Var]) -> Self {
        let mut d = Domain::default();
        d.admitted = vars.iter().fold(0, |m, v| m | (1 << v.index()));
        d
    }

    pub fn bounded(mut self, var: Var, lo: f64, hi: f64) -> Self {
        self.bounds[var.index()] = (lo, hi);
        self
    }

    pub fn admits(&self, v: Var) -> bool {
        self.admitted & (1 << v.index()) != 0
    }

    fn sample(&self, i: usize) -> [f64; 4] {
        let primes = [2, 3, 5, 7];
        let mut p = [0.0; 4];
        for k in 0..4 {
            let (lo, hi) = self.bounds[k];
            p[k] = lo + (hi - lo) * halton(i + 1, primes[k]);
        }
        p
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(f64, bool),
    Ident(String),
    Sym(char),
    End,
}

impl Tok {
    fn describe(&self) -> String {
        match self {
            Tok::Num(v, _) => format!("number {v}"),
            Tok::Ident(s) => s.clone(),
            Tok::Sym(c) => c.to_string(),
            Tok::End => "end of input".into(),
        }
    }
}

fn tokenize(src: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            let mut integer = true;
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                if bytes[i] == b'.' {
                    integer = false;
                }
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    integer = false;
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text.parse().map_err(|_| ExprError::Syntax {
                position: start,
                expected: vec!["number".into()],
                found: text.into(),
            })?;
            out.push((Tok::Num(v, integer), start));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((Tok::Ident(src[start..i].to_string()), start));
        } else if "+-*/^();".contains(c) {
            out.push((Tok::Sym(c), i));
            i += 1;
        } else {
            return Err(ExprError::Syntax {
                position: i,
                expected: vec!["token".into()],
                found: c.to_string(),
            });
        }
    }
    out.push((Tok::End, src.len()));
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    domain: &'a Domain,
    divisions: Vec<Expr>,
}

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.pos].0
    }

    fn offset(&self) -> usize {
        self.toks[self.pos].1
    }

    fn err<T>(&self, expected: &[&str]) -> Result<T, ExprError> {
        Err(ExprError::Syntax {
            position: self.offset(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
            found: self.peek().describe(),
        })
    }

    fn expect(&mut self, c: char) -> Result<(), ExprError> {
        if *self.peek() == Tok::Sym(c) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(&[&c.to_string()])
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('+') => BinOp::Add,
                Tok::Sym('-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Tok::Sym('*') => BinOp::Mul,
                Tok::Sym('/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            if op == BinOp::Div {
                self.divisions.push(rhs.clone());
            }
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Tok::Sym('^') {
            self.pos += 1;
            match *self.peek() {
                Tok::Num(v, true) if v <= i32::MAX as f64 => {
                    self.pos += 1;
                    return Ok(Expr::Pow(Box::new(base), v as u32));
                }
                _ => return self.err(&["integer exponent"]),
            }
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ExprError> {
        const ATOM: &[&str] = &["number", "variable", "function", "bump", "("];
        match self.peek().clone() {
            Tok::Num(v, _) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Tok::Sym('(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                let at = self.offset();
                if let Some(v) = Var::from_name(&name) {
                    if !self.domain.admits(v) {
                        return Err(ExprError::UnknownVariable { name, position: at });
                    }
                    self.pos += 1;
                    return Ok(Expr::Var(v));
                }
                if let Some(f) = Func::from_name(&name) {
                    self.pos += 1;
                    self.expect('(')?;
                    let a = self.expr()?;
                    self.expect(')')?;
                    return Ok(Expr::Func(f, Box::new(a)));
                }
                if name == "bump" {
                    self.pos += 1;
                    self.expect('(')?;
                    let arg = self.expr()?;
                    self.expect(';')?;
                    let width = match *self.peek() {
                        Tok::Num(w, _) if w > 0.0 => w,
                        _ => return self.err(&["positive width"]),
                    };
                    self.pos += 1;
                    self.expect(')')?;
                    return Ok(Expr::bump(arg, width));
                }
                let single = name.len() == 1;
                if single {
                    Err(ExprError::UnknownVariable { name, position: at })
                } else {
                    self.err(ATOM)
                }
            }
            _ => self.err(ATOM),
        }
    }
}

/// Parse with the default domain (all of x, y, z, t admitted).
pub fn parse(src: &str) -> Result<Expr, ExprError> {
    parse_in(src, &Domain::default())
}

/// Parse, restricting variables to `domain` and checking every division's
/// denominator is positive at 256 quasi-random points of the domain box.
pub fn parse_in(src: &str, domain: &Domain) -> Result<Expr, ExprError> {
    let toks = tokenize(src)?;
    let mut p = Parser {
        toks,
        pos: 0,
        domain,
        divisions: Vec::new(),
    };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return p.err(&["+", "-", "*", "/", "end of input"]);
    }
    for den in &p.divisions {
        let prog = Program::compile(den);
        let positive = (0..256).all(|i| {
            let pt = domain.sample(i);
            matches!(prog.run(&pt), Ok(v) if v > 0.0)
        });
        if !positive {
            return Err(ExprError::UnguardedDivision {
                denominator: den.to_string(),
            });
        }
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literal_zero() {
        assert_eq!(parse("0").unwrap(), Expr::Num(0.0));
    }

    #[test]
    fn product_of_sin_and_time() {
        let e = parse("sin(x)*t").unwrap();
        assert_eq!(
            e,
            Expr::Bin(
                BinOp::Mul,
                Box::new(Expr::Func(Func::Sin, Box::new(Expr::Var(Var::X)))),
                Box::new(Expr::Var(Var::T))
            )
        );
    }

    #[test]
    fn bump_node_with_radial_argument() {
        let e = parse("bump(x^2+y^2 - 1; 0.5)").unwrap();
        match &e {
            Expr::Bump { width, order, .. } => {
                assert_eq!(*width, 0.5);
                assert_eq!(*order, 0);
            }
            other => panic!("expected bump, got {other:?}"),
        }
        let f = crate::expr::ScalarField::from_expr(e, "b").unwrap();
        // r² = 0.9 -> argument -0.1 -> 1; r² = 2.3 -> argument 1.3 -> 0
        let at = |r2: f64| f.eval_at(&[r2.sqrt(), 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(at(0.9), 1.0);
        assert_eq!(at(2.3), 0.0);
    }

    #[test]
    fn precedence_and_power() {
        let e = parse("1 + 2*x^2").unwrap();
        let f = crate::expr::ScalarField::from_expr(e, "p").unwrap();
        assert_eq!(f.eval_at(&[3.0, 0.0, 0.0, 0.0]).unwrap(), 19.0);
    }

    #[test]
    fn syntax_errors_carry_position() {
        match parse("x + * y") {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("x^2.5"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("-x"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("sin x"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("bump(x; 0)"), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("(x"), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn unknown_variables() {
        assert!(matches!(parse("q + 1"), Err(ExprError::UnknownVariable { .. })));
        let plane = Domain::with_vars(&[Var::X, Var::Y, Var::T]);
        assert!(matches!(
            parse_in("z*x", &plane),
            Err(ExprError::UnknownVariable { .. })
        ));
    }

    #[test]
    fn division_guards() {
        assert!(parse("x / (2 + cos(y))").is_ok());
        assert!(matches!(
            parse("1 / x"),
            Err(ExprError::UnguardedDivision { .. })
        ));
    }

    #[test]
    fn print_parse_round_trip() {
        for src in [
            "x^2 + y^2",
            "bump(x^2+y^2 - 1; 0.5)*(1+t)",
            "sin(x)*t - cos(y)/(3+x^2)",
            "neg(2)*(x-y)^3",
            "exp(neg(x^2))*sqrt(1+y^2)",
        ] {
            let once = parse(src).unwrap().to_string();
            let twice = parse(&once).unwrap().to_string();
            assert_eq!(once, twice);
        }
    }
}
