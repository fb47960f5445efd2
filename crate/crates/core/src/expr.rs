//! A small expression language for constraint functions and state maps.
//!
//! Grammar (whitespace is insignificant):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := factor (('*' | '/') factor)*
//! factor := base ('^' uint)?
//! base   := literal | var | 'sqrt' '(' expr ')' | '(' expr ')' | '-' base
//! var    := 'x' index          (1-based, index <= n)
//! ```
//!
//! Unary minus is part of `base`, so `-x1^2` parses as `(-x1)^2`. Write
//! `-(x1^2)` or `0 - x1^2` for the negated square.

use alloc::boxed::Box;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use crate::poly::Polynomial;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("syntax error at byte {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unknown variable `{name}` at byte {position} (declared dimension {n})")]
    UnknownVariable { name: String, position: usize, n: usize },
    #[error("square root of negative value {0}")]
    Domain(f64),
    #[error("division by zero")]
    DivisionByZero,
    #[error("expression is not a polynomial: {0}")]
    NotPolynomial(String),
    #[error("expected {expected} variables, got {found}")]
    Arity { expected: usize, found: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Literal(f64),
    /// 0-based variable index.
    Var(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, u32),
    Sqrt(Box<Expr>),
}

/// Parses `text` as an expression over the variables `x1..xn`.
pub fn parse(text: &str, n: usize) -> Result<Expr, ExprError> {
    let mut p = Parser { src: text.as_bytes(), pos: 0, n };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos != p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

/// Evaluates `e` at `x`.
pub fn evaluate(e: &Expr, x: &[f64]) -> Result<f64, ExprError> {
    Ok(match e {
        Expr::Literal(v) => *v,
        Expr::Var(i) => *x.get(*i).ok_or(ExprError::Arity { expected: i + 1, found: x.len() })?,
        Expr::Neg(a) => -evaluate(a, x)?,
        Expr::Binary(op, a, b) => {
            let (a, b) = (evaluate(a, x)?, evaluate(b, x)?);
            match op {
                BinOp::Add => a + b,
                BinOp::Sub => a - b,
                BinOp::Mul => a * b,
                BinOp::Div => {
                    if b == 0.0 {
                        return Err(ExprError::DivisionByZero);
                    }
                    a / b
                }
            }
        }
        Expr::Pow(a, k) => {
            let base = evaluate(a, x)?;
            (0..*k).fold(1.0, |acc, _| acc * base)
        }
        Expr::Sqrt(a) => {
            let v = evaluate(a, x)?;
            if v < 0.0 {
                return Err(ExprError::Domain(v));
            }
            libm::sqrt(v)
        }
    })
}

/// Fully expands a polynomial expression into a term list over `n` variables.
pub fn expand_polynomial(e: &Expr, n: usize) -> Result<Polynomial, ExprError> {
    Ok(match e {
        Expr::Literal(v) => Polynomial::constant(n, *v),
        Expr::Var(i) => {
            if *i >= n {
                return Err(ExprError::Arity { expected: i + 1, found: n });
            }
            Polynomial::variable(n, *i)
        }
        Expr::Neg(a) => expand_polynomial(a, n)?.scale(-1.0),
        Expr::Binary(op, a, b) => {
            let (pa, pb) = (expand_polynomial(a, n)?, expand_polynomial(b, n)?);
            match op {
                BinOp::Add => pa.add(&pb),
                BinOp::Sub => pa.add(&pb.scale(-1.0)),
                BinOp::Mul => pa.mul(&pb),
                BinOp::Div => match pb.as_constant() {
                    Some(c) if c != 0.0 => pa.scale(1.0 / c),
                    Some(_) => return Err(ExprError::DivisionByZero),
                    None => {
                        return Err(ExprError::NotPolynomial(
                            "division by a variable-dependent expression".to_string(),
                        ))
                    }
                },
            }
        }
        Expr::Pow(a, k) => expand_polynomial(a, n)?.pow(*k),
        Expr::Sqrt(_) => return Err(ExprError::NotPolynomial("sqrt".to_string())),
    })
}

impl Expr {
    /// Largest variable index referenced, plus one.
    pub fn arity(&self) -> usize {
        match self {
            Expr::Literal(_) => 0,
            Expr::Var(i) => i + 1,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sqrt(a) => a.arity(),
            Expr::Binary(_, a, b) => a.arity().max(b.arity()),
        }
    }
}

// Printing is fully parenthesized so that re-parsing gives the same tree shape.
impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Literal(v) => write!(f, "{v:?}"),
            Expr::Var(i) => write!(f, "x{}", i + 1),
            Expr::Neg(a) => write!(f, "-({a})"),
            Expr::Binary(op, a, b) => {
                let c = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({a}){c}({b})")
            }
            Expr::Pow(a, k) => write!(f, "({a})^{k}"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    n: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> ExprError {
        ExprError::Syntax { position: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.src.get(self.pos).copied()
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(&alloc::format!("expected `{}`", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.term()?;
        loop {
            let op = match self.peek() {
                Some(b'+') => BinOp::Add,
                Some(b'-') => BinOp::Sub,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn term(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            let op = match self.peek() {
                Some(b'*') => BinOp::Mul,
                Some(b'/') => BinOp::Div,
                _ => return Ok(lhs),
            };
            self.pos += 1;
            let rhs = self.factor()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
    }

    fn factor(&mut self) -> Result<Expr, ExprError> {
        let base = self.base()?;
        if self.peek() == Some(b'^') {
            self.pos += 1;
            self.skip_ws();
            let start = self.pos;
            while self.pos < self.src.len() && self.src[self.pos].is_ascii_digit() {
                self.pos += 1;
            }
            if start == self.pos {
                return Err(self.error("expected a nonnegative integer exponent"));
            }
            let k = core::str::from_utf8(&self.src[start..self.pos])
                .ok()
                .and_then(|s| s.parse::<u32>().ok())
                .ok_or_else(|| self.error("exponent out of range"))?;
            return Ok(Expr::Pow(Box::new(base), k));
        }
        Ok(base)
    }

    fn base(&mut self) -> Result<Expr, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.base()?)))
            }
            Some(b'(') => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(b')')?;
                Ok(e)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.literal(),
            Some(c) if c.is_ascii_alphabetic() => self.identifier(),
            Some(_) => Err(self.error("unexpected character")),
            None => Err(self.error("unexpected end of input")),
        }
    }

    fn literal(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        let bytes = self.src;
        let mut i = self.pos;
        while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
            i += 1;
        }
        if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
            let mut j = i + 1;
            if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                j += 1;
            }
            if j < bytes.len() && bytes[j].is_ascii_digit() {
                while j < bytes.len() && bytes[j].is_ascii_digit() {
                    j += 1;
                }
                i = j;
            }
        }
        self.pos = i;
        core::str::from_utf8(&bytes[start..i])
            .ok()
            .and_then(|s| s.parse::<f64>().ok())
            .map(Expr::Literal)
            .ok_or(ExprError::Syntax { position: start, message: "malformed number".to_string() })
    }

    fn identifier(&mut self) -> Result<Expr, ExprError> {
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or("");
        if name == "sqrt" {
            self.expect(b'(')?;
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(Expr::Sqrt(Box::new(e)));
        }
        let index = name
            .strip_prefix('x')
            .filter(|d| !d.is_empty() && !d.starts_with('0'))
            .and_then(|d| d.parse::<usize>().ok());
        match index {
            Some(i) if i >= 1 && i <= self.n => Ok(Expr::Var(i - 1)),
            _ => Err(ExprError::UnknownVariable { name: name.to_string(), position: start, n: self.n }),
        }
    }
}

/// Parses each component of a vector-valued map.
pub fn parse_all<S: AsRef<str>>(texts: &[S], n: usize) -> Result<Vec<Expr>, ExprError> {
    texts.iter().map(|t| parse(t.as_ref(), n)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn quasi_smooth_example_at_origin() {
        let e = parse("sqrt(x1^2+x2^2+1)+2*x1+2*x2-2", 2).unwrap();
        assert_eq!(evaluate(&e, &[0.0, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn single_variable() {
        let e = parse("x1", 1).unwrap();
        assert_eq!(evaluate(&e, &[7.0]).unwrap(), 7.0);
    }

    #[test]
    fn unknown_variable() {
        assert!(matches!(parse("x3", 2), Err(ExprError::UnknownVariable { .. })));
        assert!(matches!(parse("y1", 2), Err(ExprError::UnknownVariable { .. })));
        assert!(matches!(parse("x0", 2), Err(ExprError::UnknownVariable { .. })));
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse("x1 + * x2", 2) {
            Err(ExprError::Syntax { position, .. }) => assert_eq!(position, 5),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(parse("(x1", 1), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x1^-2", 1), Err(ExprError::Syntax { .. })));
        assert!(matches!(parse("x1 x2", 2), Err(ExprError::Syntax { .. })));
    }

    #[test]
    fn quartic_output_map() {
        let e = parse("(x1-x2)+(x1-x2)^2+(x1-x2)^3-(x1-x2)^4", 2).unwrap();
        let v = evaluate(&e, &[0.3, -0.2]).unwrap();
        assert!((v - 0.8125).abs() < 1e-12);
    }

    #[test]
    fn evaluation_errors() {
        let e = parse("1/x1", 1).unwrap();
        assert_eq!(evaluate(&e, &[0.0]), Err(ExprError::DivisionByZero));
        let e = parse("sqrt(x1)", 1).unwrap();
        assert!(matches!(evaluate(&e, &[-1.0]), Err(ExprError::Domain(_))));
    }

    #[test]
    fn unary_minus_binds_to_base() {
        let e = parse("-x1^2", 1).unwrap();
        assert_eq!(evaluate(&e, &[3.0]).unwrap(), 9.0);
        let e = parse("-(x1^2)", 1).unwrap();
        assert_eq!(evaluate(&e, &[3.0]).unwrap(), -9.0);
    }

    #[test]
    fn expands_indefinite_quadratic() {
        let p = expand_polynomial(&parse("2*x1^2 - x2^2 + 0.4*x1*x2", 2).unwrap(), 2).unwrap();
        let terms = p.into_terms();
        assert_eq!(terms.len(), 3);
        let get = |e: [u32; 2]| terms.iter().find(|(k, _)| k[..] == e[..]).unwrap().1;
        assert_eq!(get([2, 0]), 2.0);
        assert_eq!(get([0, 2]), -1.0);
        assert!((get([1, 1]) - 0.4).abs() < 1e-15);
    }

    #[test]
    fn expands_binomial() {
        let p = expand_polynomial(&parse("(x1-x2)^2", 2).unwrap(), 2).unwrap();
        assert_eq!(p.into_terms(), vec![(vec![0, 2], 1.0), (vec![1, 1], -2.0), (vec![2, 0], 1.0)]);
    }

    #[test]
    fn rejects_non_polynomials() {
        let n = |s: &str| expand_polynomial(&parse(s, 2).unwrap(), 2);
        assert!(matches!(n("sqrt(x1)"), Err(ExprError::NotPolynomial(_))));
        assert!(matches!(n("1/x2"), Err(ExprError::NotPolynomial(_))));
        assert!(n("x1/4").is_ok());
    }

    #[test]
    fn literal_forms() {
        for (s, v) in [("1.5", 1.5), (".25", 0.25), ("1e-3", 1e-3), ("2E2", 200.0)] {
            assert_eq!(evaluate(&parse(s, 0).unwrap(), &[]).unwrap(), v);
        }
    }
}
