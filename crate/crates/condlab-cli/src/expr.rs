// SPDX-License-Identifier: Apache-2.0

//! Restricted arithmetic expressions for scenario files.
//!
//! Grammar (lowest to highest precedence):
//!
//! ```text
//! sum     := product (('+' | '-') product)*
//! product := unary (('*' | '/') unary)*
//! unary   := ('+' | '-') unary | power
//! power   := atom ('^' unary)?          right associative
//! atom    := number | var | func '(' sum ')' | '(' sum ')'
//! var     := 'r' | 'x' digits | 'pi'
//! func    := exp | log | sin | cos | sinh | cosh | sqrt
//! ```
//!
//! `×`, `·`, `÷` and `−` are accepted as aliases of `*`, `*`, `/` and `-`.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset} in \"{source_text}\"")]
pub struct ParseError {
    pub source_text: String,
    pub offset: usize,
    pub message: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Func {
    Exp,
    Log,
    Sin,
    Cos,
    Sinh,
    Cosh,
    Sqrt,
}

impl Func {
    fn from_name(s: &str) -> Option<Func> {
        Some(match s {
            "exp" => Func::Exp,
            "log" => Func::Log,
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "sinh" => Func::Sinh,
            "cosh" => Func::Cosh,
            "sqrt" => Func::Sqrt,
            _ => return None,
        })
    }

    fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Sinh => "sinh",
            Func::Cosh => "cosh",
            Func::Sqrt => "sqrt",
        }
    }

    fn apply(self, v: f64) -> f64 {
        match self {
            Func::Exp => v.exp(),
            Func::Log => v.ln(),
            Func::Sin => v.sin(),
            Func::Cos => v.cos(),
            Func::Sinh => v.sinh(),
            Func::Cosh => v.cosh(),
            Func::Sqrt => v.sqrt(),
        }
    }
}

/// Which variables an expression may mention.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Vars {
    /// Largest admissible k in `xk` (0 forbids coordinates).
    pub coords: usize,
    pub radius: bool,
}

impl Vars {
    /// Functions of r alone (warpings, weights, θ).
    pub const RADIAL: Vars = Vars { coords: 0, radius: true };

    pub fn chart(n: usize) -> Vars {
        Vars { coords: n, radius: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    /// Zero-based coordinate index.
    X(usize),
    R,
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, Box<Expr>),
    Call(Func, Box<Expr>),
}

impl Expr {
    pub fn parse(src: &str, vars: Vars) -> Result<Expr, ParseError> {
        let mut p = Parser { src, chars: src.char_indices().collect(), pos: 0, vars };
        let e = p.sum()?;
        p.skip_ws();
        if p.pos < p.chars.len() {
            return Err(p.err("unexpected trailing input"));
        }
        Ok(e)
    }

    /// Evaluates with coordinates `x` and radius `r`.
    pub fn eval(&self, x: &[f64], r: f64) -> f64 {
        match self {
            Expr::Num(v) => *v,
            Expr::X(i) => x[*i],
            Expr::R => r,
            Expr::Neg(a) => -a.eval(x, r),
            Expr::Add(a, b) => a.eval(x, r) + b.eval(x, r),
            Expr::Sub(a, b) => a.eval(x, r) - b.eval(x, r),
            Expr::Mul(a, b) => a.eval(x, r) * b.eval(x, r),
            Expr::Div(a, b) => a.eval(x, r) / b.eval(x, r),
            Expr::Pow(a, b) => pow(a.eval(x, r), b, x, r),
            Expr::Call(f, a) => f.apply(a.eval(x, r)),
        }
    }

    /// Value of a radial expression at r = t.
    pub fn eval_r(&self, t: f64) -> f64 {
        self.eval(&[], t)
    }

    pub fn mentions_coords(&self) -> bool {
        match self {
            Expr::X(_) => true,
            Expr::Num(_) | Expr::R => false,
            Expr::Neg(a) | Expr::Call(_, a) => a.mentions_coords(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) | Expr::Pow(a, b) => {
                a.mentions_coords() || b.mentions_coords()
            }
        }
    }

    fn is_const(&self) -> Option<f64> {
        match self {
            Expr::Num(v) => Some(*v),
            _ => None,
        }
    }

    /// Symbolic ∂/∂r, lightly simplified.
    pub fn diff_r(&self) -> Expr {
        use Expr::*;
        match self {
            Num(_) | X(_) => Num(0.0),
            R => Num(1.0),
            Neg(a) => neg(a.diff_r()),
            Add(a, b) => add(a.diff_r(), b.diff_r()),
            Sub(a, b) => sub(a.diff_r(), b.diff_r()),
            Mul(a, b) => add(mul(a.diff_r(), (**b).clone()), mul((**a).clone(), b.diff_r())),
            Div(a, b) => {
                // (a'b − ab')/b²
                let num = sub(mul(a.diff_r(), (**b).clone()), mul((**a).clone(), b.diff_r()));
                div(num, pow_e((**b).clone(), Num(2.0)))
            }
            Pow(a, b) => match b.is_const() {
                Some(k) => mul(mul(Num(k), pow_e((**a).clone(), Num(k - 1.0))), a.diff_r()),
                // a^b (b' ln a + b a'/a)
                None => mul(
                    self.clone(),
                    add(
                        mul(b.diff_r(), Call(Func::Log, a.clone())),
                        div(mul((**b).clone(), a.diff_r()), (**a).clone()),
                    ),
                ),
            },
            Call(f, a) => {
                let inner = (**a).clone();
                let outer = match f {
                    Func::Exp => Call(Func::Exp, a.clone()),
                    Func::Log => div(Num(1.0), inner),
                    Func::Sin => Call(Func::Cos, a.clone()),
                    Func::Cos => neg(Call(Func::Sin, a.clone())),
                    Func::Sinh => Call(Func::Cosh, a.clone()),
                    Func::Cosh => Call(Func::Sinh, a.clone()),
                    Func::Sqrt => div(Num(0.5), Call(Func::Sqrt, a.clone())),
                };
                mul(outer, a.diff_r())
            }
        }
    }
}

/// Integer exponents go through `powi` so that negative bases work.
fn pow(base: f64, e: &Expr, x: &[f64], r: f64) -> f64 {
    match e.is_const() {
        Some(k) if k.fract() == 0.0 && k.abs() <= i32::MAX as f64 => base.powi(k as i32),
        _ => base.powf(e.eval(x, r)),
    }
}

fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(v) => Expr::Num(-v),
        Expr::Neg(b) => *b,
        a => Expr::Neg(Box::new(a)),
    }
}

fn add(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(x), Some(y)) => Expr::Num(x + y),
        (Some(0.0), _) => b,
        (_, Some(0.0)) => a,
        _ => Expr::Add(Box::new(a), Box::new(b)),
    }
}

fn sub(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(x), Some(y)) => Expr::Num(x - y),
        (Some(0.0), _) => neg(b),
        (_, Some(0.0)) => a,
        _ => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

fn mul(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(x), Some(y)) => Expr::Num(x * y),
        (Some(0.0), _) | (_, Some(0.0)) => Expr::Num(0.0),
        (Some(1.0), _) => b,
        (_, Some(1.0)) => a,
        _ => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

fn div(a: Expr, b: Expr) -> Expr {
    match (a.is_const(), b.is_const()) {
        (Some(0.0), _) => Expr::Num(0.0),
        (_, Some(1.0)) => a,
        _ => Expr::Div(Box::new(a), Box::new(b)),
    }
}

fn pow_e(a: Expr, b: Expr) -> Expr {
    match b.is_const() {
        Some(1.0) => a,
        Some(0.0) => Expr::Num(1.0),
        _ => Expr::Pow(Box::new(a), Box::new(b)),
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::X(i) => write!(f, "x{}", i + 1),
            Expr::R => f.write_str("r"),
            Expr::Neg(a) => write!(f, "(-{a})"),
            Expr::Add(a, b) => write!(f, "({a} + {b})"),
            Expr::Sub(a, b) => write!(f, "({a} - {b})"),
            Expr::Mul(a, b) => write!(f, "({a} * {b})"),
            Expr::Div(a, b) => write!(f, "({a} / {b})"),
            Expr::Pow(a, b) => write!(f, "({a} ^ {b})"),
            Expr::Call(func, a) => write!(f, "{}({a})", func.name()),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    chars: Vec<(usize, char)>,
    pos: usize,
    vars: Vars,
}

impl Parser<'_> {
    fn err(&self, msg: impl Into<String>) -> ParseError {
        let offset = self.chars.get(self.pos).map_or(self.src.len(), |c| c.0);
        ParseError { source_text: self.src.to_string(), offset, message: msg.into() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.chars.len() && self.chars[self.pos].1.is_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.skip_ws();
        self.chars.get(self.pos).map(|c| match c.1 {
            '×' | '·' => '*',
            '÷' => '/',
            '−' => '-',
            ch => ch,
        })
    }

    fn expect(&mut self, ch: char) -> Result<(), ParseError> {
        if self.peek() == Some(ch) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{ch}'")))
        }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.product()?;
        loop {
            match self.peek() {
                Some('+') => {
                    self.pos += 1;
                    e = Expr::Add(Box::new(e), Box::new(self.product()?));
                }
                Some('-') => {
                    self.pos += 1;
                    e = Expr::Sub(Box::new(e), Box::new(self.product()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn product(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.unary()?;
        loop {
            match self.peek() {
                Some('*') => {
                    self.pos += 1;
                    e = Expr::Mul(Box::new(e), Box::new(self.unary()?));
                }
                Some('/') => {
                    self.pos += 1;
                    e = Expr::Div(Box::new(e), Box::new(self.unary()?));
                }
                _ => return Ok(e),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            Some('-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some('+') => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek() == Some('^') {
            self.pos += 1;
            let e = self.unary()?;
            return Ok(Expr::Pow(Box::new(base), Box::new(e)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        match self.peek() {
            None => Err(self.err("unexpected end of expression")),
            Some('(') => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == '.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.word(),
            Some(c) => Err(self.err(format!("unexpected character '{c}'"))),
        }
    }

    fn number(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let mut end = self.pos;
        let n = self.chars.len();
        while end < n && (self.chars[end].1.is_ascii_digit() || self.chars[end].1 == '.') {
            end += 1;
        }
        if end < n && matches!(self.chars[end].1, 'e' | 'E') {
            let mut k = end + 1;
            if k < n && matches!(self.chars[k].1, '+' | '-') {
                k += 1;
            }
            if k < n && self.chars[k].1.is_ascii_digit() {
                while k < n && self.chars[k].1.is_ascii_digit() {
                    k += 1;
                }
                end = k;
            }
        }
        let text: String = self.chars[start..end].iter().map(|c| c.1).collect();
        let v: f64 = text.parse().map_err(|_| self.err(format!("malformed number '{text}'")))?;
        self.pos = end;
        Ok(Expr::Num(v))
    }

    fn word(&mut self) -> Result<Expr, ParseError> {
        let start = self.pos;
        let mut end = self.pos;
        while end < self.chars.len() && self.chars[end].1.is_ascii_alphanumeric() {
            end += 1;
        }
        let w: String = self.chars[start..end].iter().map(|c| c.1).collect();
        if let Some(f) = Func::from_name(&w) {
            self.pos = end;
            self.expect('(')?;
            let a = self.sum()?;
            self.expect(')')?;
            return Ok(Expr::Call(f, Box::new(a)));
        }
        let e = match w.as_str() {
            "r" if self.vars.radius => Expr::R,
            "pi" => Expr::Num(std::f64::consts::PI),
            _ => match w.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                Some(k) if k >= 1 && k <= self.vars.coords => Expr::X(k - 1),
                Some(k) => return Err(self.err(format!("coordinate x{k} is out of range 1..={}", self.vars.coords))),
                None => return Err(self.err(format!("unknown name '{w}'"))),
            },
        };
        self.pos = end;
        Ok(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(s: &str, x: &[f64], r: f64) -> f64 {
        Expr::parse(s, Vars::chart(x.len())).unwrap().eval(x, r)
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2*3", &[], 0.0), 7.0);
        assert_eq!(ev("2^3^2", &[], 0.0), 512.0);
        assert_eq!(ev("-2^2", &[], 0.0), -4.0);
        assert_eq!(ev("8/4/2", &[], 0.0), 1.0);
        assert_eq!(ev("(1+2)*3 − 4 ÷ 2 × 1", &[], 0.0), 7.0);
        assert_eq!(ev("x1*x2 + r", &[2.0, 3.0], 0.5), 6.5);
        assert_eq!(ev("1.5e-1*2", &[], 0.0), 0.3);
        assert!((ev("exp(log(2)) + sqrt(16) + cosh(0) + sinh(0) + sin(pi/2) + cos(0)", &[], 0.0) - 9.0).abs() < 1e-15);
        assert_eq!(ev("(-2)^3", &[], 0.0), -8.0);
    }

    #[test]
    fn rejects_malformed_input() {
        for s in ["", "1 +", "foo(1)", "x3", "x0", "2 ** 3", "(1", "1 2", "y", "exp 2"] {
            let e = Expr::parse(s, Vars::chart(2));
            assert!(e.is_err(), "{s} parsed as {e:?}");
        }
        assert!(Expr::parse("x1", Vars::RADIAL).is_err());
        let err = Expr::parse("1 + $", Vars::RADIAL).unwrap_err();
        assert_eq!(err.offset, 4);
    }

    #[test]
    fn symbolic_derivatives_match_differences() {
        for s in ["r^2", "exp(r^2/2)", "sinh(r)", "log(1+r^2)", "sqrt(r)*cos(r)", "r^r", "1/(1+r)", "-sin(2*r)", "cosh(r)^3"] {
            let e = Expr::parse(s, Vars::RADIAL).unwrap();
            let d = e.diff_r();
            let dd = d.diff_r();
            for t in [0.3, 1.1, 2.5] {
                let h = 1e-4;
                let num = (e.eval_r(t + h) - e.eval_r(t - h)) / (2.0 * h);
                let num2 = (e.eval_r(t + h) - 2.0 * e.eval_r(t) + e.eval_r(t - h)) / (h * h);
                assert!((d.eval_r(t) - num).abs() < 1e-6 * (1.0 + num.abs()), "{s}' at {t}");
                assert!((dd.eval_r(t) - num2).abs() < 1e-4 * (1.0 + num2.abs()), "{s}'' at {t}");
            }
        }
        assert_eq!(Expr::parse("3*r + 2", Vars::RADIAL).unwrap().diff_r().diff_r(), Expr::Num(0.0));
    }

    fn arb_expr() -> impl proptest::strategy::Strategy<Value = Expr> {
        use proptest::prelude::*;
        let funcs = [Func::Exp, Func::Log, Func::Sin, Func::Cos, Func::Sinh, Func::Cosh, Func::Sqrt];
        let leaf = prop_oneof![(0.0f64..100.0).prop_map(Expr::Num), (0usize..3).prop_map(Expr::X), Just(Expr::R)];
        leaf.prop_recursive(5, 32, 2, move |inner| {
            prop_oneof![
                inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
                (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Pow(Box::new(a), Box::new(b))),
                (0usize..7, inner).prop_map(move |(k, a)| Expr::Call(funcs[k], Box::new(a))),
            ]
        })
    }

    proptest::proptest! {
        #[test]
        fn display_parses_back_to_the_same_function(e in arb_expr(), x in proptest::collection::vec(-2.0f64..2.0, 3), r in 0.1f64..3.0) {
            let back = Expr::parse(&e.to_string(), Vars::chart(3)).unwrap();
            let (a, b) = (e.eval(&x, r), back.eval(&x, r));
            proptest::prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{e}: {a} vs {b}");
        }

        #[test]
        fn parser_never_panics(s in "[-+*/^()0-9a-z., ]{0,40}") {
            let _ = Expr::parse(&s, Vars::chart(3));
        }
    }
}
