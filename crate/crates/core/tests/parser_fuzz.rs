//! Random token streams against a recognizer for the DSL grammar:
//!
//! ```text
//! expr   := term (('+'|'-') term)*
//! term   := factor (('*'|'/') factor)*
//! factor := atom ('^' INT)?
//! atom   := NUMBER | VAR | FUNC '(' expr ')' | 'bump' '(' expr ';' NUMBER ')' | '(' expr ')'
//! ```

use hoferlab::expr::{parse, ScalarField};
use proptest::prelude::*;

const VOCAB: &[&str] = &[
    "x", "y", "z", "t", "w", "pi", "sin", "cos", "exp", "sqrt", "neg", "bump", "log", "(", ")", ";", "+", "-", "*", "/", "^", "0", "2",
    "3", "10", "0.5", "1.25", "1.2.3", "@", ",",
];

struct Recognizer<'a> {
    toks: &'a [&'a str],
    pos: usize,
}

fn is_int(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn is_number(s: &str) -> bool {
    match s.split_once('.') {
        None => is_int(s),
        Some((a, b)) => is_int(a) && is_int(b),
    }
}

impl<'a> Recognizer<'a> {
    fn peek(&self) -> Option<&'a str> {
        self.toks.get(self.pos).copied()
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.peek() == Some(s) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expr(&mut self) -> bool {
        if !self.term() {
            return false;
        }
        while self.eat("+") || self.eat("-") {
            if !self.term() {
                return false;
            }
        }
        true
    }

    fn term(&mut self) -> bool {
        if !self.factor() {
            return false;
        }
        while self.eat("*") || self.eat("/") {
            if !self.factor() {
                return false;
            }
        }
        true
    }

    fn factor(&mut self) -> bool {
        if !self.atom() {
            return false;
        }
        if self.eat("^") {
            return match self.peek() {
                Some(n) if is_int(n) => {
                    self.pos += 1;
                    true
                }
                _ => false,
            };
        }
        true
    }

    fn atom(&mut self) -> bool {
        let Some(tok) = self.peek() else {
            return false;
        };
        self.pos += 1;
        match tok {
            "x" | "y" | "z" | "t" => true,
            "sin" | "cos" | "exp" | "sqrt" | "neg" => self.eat("(") && self.expr() && self.eat(")"),
            "bump" => {
                if !(self.eat("(") && self.expr() && self.eat(";")) {
                    return false;
                }
                match self.peek() {
                    Some(n) if is_number(n) => {
                        self.pos += 1;
                        self.eat(")")
                    }
                    _ => false,
                }
            }
            "(" => self.expr() && self.eat(")"),
            n => is_number(n),
        }
    }
}

fn grammar_accepts(toks: &[&str]) -> bool {
    let mut r = Recognizer { toks, pos: 0 };
    r.expr() && r.pos == toks.len()
}

fn assert_fixpoint(src: &str) -> Result<(), TestCaseError> {
    let ast = parse(src).map_err(|e| TestCaseError::fail(format!("{src}: {e}")))?;
    let printed = ast.to_string();
    let again = parse(&printed).map_err(|e| TestCaseError::fail(format!("re-parse of {printed}: {e}")))?;
    prop_assert_eq!(again.to_string(), printed.clone());
    let (a, b) = (ScalarField::parse(src), ScalarField::parse(&printed));
    if let (Ok(a), Ok(b)) = (a, b) {
        let p = [0.3, -0.7, 0.2, 0.6];
        if let (Ok(u), Ok(v)) = (a.eval_at(&p), b.eval_at(&p)) {
            prop_assert!(u == v || (u.is_nan() && v.is_nan()), "{} = {} but {} = {}", src, u, printed, v);
        }
    }
    Ok(())
}

/// Grammar-valid source text, built bottom-up.
fn valid_expr() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        prop::sample::select(vec!["x", "y", "z", "t"]).prop_map(String::from),
        prop::sample::select(vec!["0", "1", "2", "0.5", "3.25", "12"]).prop_map(String::from),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        prop_oneof![
            (inner.clone(), prop::sample::select(vec!["+", "-", "*"]), inner.clone()).prop_map(|(a, op, b)| format!("{a} {op} {b}")),
            // constant denominators always pass the division guard
            (inner.clone(), prop::sample::select(vec!["2", "0.5", "(1 + 2)"])).prop_map(|(a, d)| format!("({a}) / {d}")),
            (prop::sample::select(vec!["sin", "cos", "exp", "neg"]), inner.clone()).prop_map(|(f, a)| format!("{f}({a})")),
            (inner.clone(), 0u32..5).prop_map(|(a, n)| format!("({a})^{n}")),
            (inner.clone(), prop::sample::select(vec!["0.5", "1", "2"])).prop_map(|(a, w)| format!("bump({a}; {w})")),
            inner.prop_map(|a| format!("({a})")),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn parser_accepts_only_grammar_strings(idx in prop::collection::vec(0..VOCAB.len(), 1..14)) {
        let toks: Vec<&str> = idx.iter().map(|&i| VOCAB[i]).collect();
        let src = toks.join(" ");
        if parse(&src).is_ok() {
            prop_assert!(grammar_accepts(&toks), "parser accepted {:?}", src);
            assert_fixpoint(&src)?;
        }
    }

    #[test]
    fn grammar_strings_round_trip(src in valid_expr()) {
        let toks: Vec<&str> = src
            .split_inclusive(|c: char| "()+-*/^;".contains(c) || c == ' ')
            .flat_map(|piece| {
                let (body, tail) = piece.split_at(piece.len() - 1);
                if tail == " " { vec![body] } else if "()+-*/^;".contains(tail) { vec![body, tail] } else { vec![piece] }
            })
            .filter(|s| !s.trim().is_empty())
            .collect();
        prop_assert!(grammar_accepts(&toks), "generator produced {:?} ({:?})", src, toks);
        assert_fixpoint(&src)?;
    }

    #[test]
    fn arbitrary_text_never_panics(src in "[ -~]{0,40}") {
        if parse(&src).is_ok() {
            assert_fixpoint(&src)?;
        }
    }
}

#[test]
fn recognizer_agrees_on_fixed_cases() {
    for (src, ok) in [
        ("sin ( x ) * t", true),
        ("bump ( x ^ 2 + y ^ 2 - 1 ; 0.5 )", true),
        ("x ^ 2 ^ 3", false),
        ("- x", false),
        ("bump ( x ; y )", false),
        ("x ^ 0.5", false),
        ("pi", false),
        ("( x", false),
    ] {
        let toks: Vec<&str> = src.split(' ').collect();
        assert_eq!(grammar_accepts(&toks), ok, "{src}");
        assert_eq!(parse(src).is_ok(), ok, "{src}");
    }
}
