use super::{BinOp, Expr, Func, Var};

/// Symbolic partial derivative of `e` with respect to `var`.
pub fn differentiate(e: &Expr, var: Var) -> Expr {
    if !e.depends_on(var) {
        return Expr::Num(0.0);
    }
    match e {
        Expr::Num(_) => Expr::Num(0.0),
        Expr::Var(v) => Expr::Num(if *v == var { 1.0 } else { 0.0 }),
        Expr::Func(f, a) => {
            let da = differentiate(a, var);
            let outer = match f {
                Func::Sin => Expr::func(Func::Cos, (**a).clone()),
                Func::Cos => Expr::neg(Expr::func(Func::Sin, (**a).clone())),
                Func::Exp => e.clone(),
                Func::Sqrt => Expr::div(Expr::Num(0.5), e.clone()),
                Func::Neg => return Expr::neg(da),
            };
            Expr::mul(outer, da)
        }
        Expr::Bin(op, a, b) => {
            let (da, db) = (differentiate(a, var), differentiate(b, var));
            match op {
                BinOp::Add => Expr::add(da, db),
                BinOp::Sub => Expr::sub(da, db),
                BinOp::Mul => Expr::add(
                    Expr::mul(da, (**b).clone()),
                    Expr::mul((**a).clone(), db),
                ),
                BinOp::Div => {
                    if db.is_zero() {
                        Expr::div(da, (**b).clone())
                    } else {
                        Expr::div(
                            Expr::sub(
                                Expr::mul(da, (**b).clone()),
                                Expr::mul((**a).clone(), db),
                            ),
                            Expr::pow((**b).clone(), 2),
                        )
                    }
                }
            }
        }
        Expr::Pow(_, 0) => Expr::Num(0.0),
        Expr::Pow(a, n) => {
            let da = differentiate(a, var);
            Expr::mul(
                Expr::mul(Expr::Num(*n as f64), Expr::pow((**a).clone(), n - 1)),
                da,
            )
        }
        Expr::Bump { arg, width, order } => {
            let da = differentiate(arg, var);
            let outer = Expr::Bump {
                arg: arg.clone(),
                width: *width,
                order: order + 1,
            };
            Expr::mul(outer, da)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse, ScalarField};

    fn eval(e: &Expr, p: [f64; 4]) -> f64 {
        ScalarField::from_expr(e.clone(), "d").unwrap().eval_at(&p).unwrap()
    }

    #[test]
    fn square_derivative() {
        let d = differentiate(&parse("x^2").unwrap(), Var::X);
        assert_eq!(d.to_string(), "(2 * x)");
    }

    #[test]
    fn zero_power_derivative() {
        let d = differentiate(&parse("(x + y)^0").unwrap(), Var::X);
        assert_eq!(d.to_string(), "0");
    }

    #[test]
    fn time_derivative_of_product() {
        let d = differentiate(&parse("sin(x)*t").unwrap(), Var::T);
        assert_eq!(d.to_string(), "sin(x)");
    }

    #[test]
    fn bump_derivative_matches_central_difference() {
        let e = parse("bump(x; 0.5)").unwrap();
        let d = differentiate(&e, Var::X);
        let h = 1e-5;
        let fd = (eval(&e, [0.25 + h, 0., 0., 0.]) - eval(&e, [0.25 - h, 0., 0., 0.])) / (2.0 * h);
        let an = eval(&d, [0.25, 0., 0., 0.]);
        assert!((fd - an).abs() < 1e-8, "fd={fd} an={an}");
    }

    #[test]
    fn quotient_rule() {
        let e = parse("x/(2+cos(y))").unwrap();
        let dy = differentiate(&e, Var::Y);
        let p = [0.7, 0.3, 0.0, 0.0];
        let expect = 0.7 * 0.3f64.sin() / (2.0 + 0.3f64.cos()).powi(2);
        assert!((eval(&dy, p) - expect).abs() < 1e-14);
    }
}
