//! Arithmetic expressions in `x1..x9` and `t`, used to pass initial data and
//! velocity fields on the command line.
//!
//! ```
//! use pmreg::fieldexpr::FieldExpr;
//! let e: FieldExpr = "exp(x1 + x2/2)".parse().unwrap();
//! assert_eq!(e.eval(&[0.0, 0.0], 0.0).unwrap(), 1.0);
//! ```

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Sqrt,
    Abs,
}

impl Func {
    fn from_name(s: &str) -> Option<Self> {
        Some(match s {
            "sin" => Self::Sin,
            "cos" => Self::Cos,
            "exp" => Self::Exp,
            "sqrt" => Self::Sqrt,
            "abs" => Self::Abs,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Sin => "sin",
            Self::Cos => "cos",
            Self::Exp => "exp",
            Self::Sqrt => "sqrt",
            Self::Abs => "abs",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

impl BinOp {
    fn symbol(self) -> char {
        match self {
            Self::Add => '+',
            Self::Sub => '-',
            Self::Mul => '*',
            Self::Div => '/',
            Self::Pow => '^',
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldExpr {
    Num(f64),
    /// Spatial coordinate, 0-based (`x1` is `Var(0)`).
    Var(usize),
    Time,
    Neg(Box<FieldExpr>),
    Bin(BinOp, Box<FieldExpr>, Box<FieldExpr>),
    Call(Func, Box<FieldExpr>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at byte {offset}: expected {}, found {found}", .expected.join(" or "))]
pub struct ParseError {
    pub offset: usize,
    pub expected: Vec<&'static str>,
    pub found: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("square root of negative value {0}")]
    SqrtNegative(f64),
    #[error("variable x{} is missing from a point of dimension {dim}", .var + 1)]
    MissingVariable { var: usize, dim: usize },
    #[error("{0} is undefined here")]
    Undefined(&'static str),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Sym(char),
    End,
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    tok: Tok,
    tok_start: usize,
    depth: usize,
}

/// Deepest nesting of parentheses, signs and powers the parser accepts.
pub const MAX_DEPTH: usize = 200;

const EXPECT_OPERAND: &[&str] = &["number", "variable", "function", "'('", "'-'"];

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Result<Self, ParseError> {
        let mut p = Self {
            src,
            pos: 0,
            tok: Tok::End,
            tok_start: 0,
            depth: 0,
        };
        p.advance()?;
        Ok(p)
    }

    fn advance(&mut self) -> Result<(), ParseError> {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() && bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        self.tok_start = self.pos;
        if self.pos >= bytes.len() {
            self.tok = Tok::End;
            return Ok(());
        }
        let c = bytes[self.pos];
        if c.is_ascii_digit() || c == b'.' {
            let start = self.pos;
            while self.pos < bytes.len() && (bytes[self.pos].is_ascii_digit() || bytes[self.pos] == b'.') {
                self.pos += 1;
            }
            // exponent part, only when followed by digits
            if self.pos < bytes.len() && (bytes[self.pos] == b'e' || bytes[self.pos] == b'E') {
                let mut q = self.pos + 1;
                if q < bytes.len() && (bytes[q] == b'+' || bytes[q] == b'-') {
                    q += 1;
                }
                if q < bytes.len() && bytes[q].is_ascii_digit() {
                    while q < bytes.len() && bytes[q].is_ascii_digit() {
                        q += 1;
                    }
                    self.pos = q;
                }
            }
            let text = &self.src[start..self.pos];
            let v: f64 = text.parse().map_err(|_| ParseError {
                offset: start,
                expected: vec!["number"],
                found: format!("'{text}'"),
            })?;
            self.tok = Tok::Num(v);
        } else if c.is_ascii_alphabetic() {
            let start = self.pos;
            while self.pos < bytes.len() && bytes[self.pos].is_ascii_alphanumeric() {
                self.pos += 1;
            }
            self.tok = Tok::Ident(self.src[start..self.pos].to_string());
        } else if b"+-*/^(),".contains(&c) {
            self.pos += 1;
            self.tok = Tok::Sym(c as char);
        } else {
            let ch = self.src[self.pos..].chars().next().unwrap();
            return Err(ParseError {
                offset: self.pos,
                expected: vec!["token"],
                found: format!("'{ch}'"),
            });
        }
        Ok(())
    }

    fn found(&self) -> String {
        match &self.tok {
            Tok::Num(v) => format!("number {v}"),
            Tok::Ident(s) => format!("'{s}'"),
            Tok::Sym(c) => format!("'{c}'"),
            Tok::End => "end of input".to_string(),
        }
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        ParseError {
            offset: self.tok_start,
            expected: expected.to_vec(),
            found: self.found(),
        }
    }

    fn expr(&mut self) -> Result<FieldExpr, ParseError> {
        let mut lhs = self.term()?;
        while let Tok::Sym(c @ ('+' | '-')) = self.tok {
            self.advance()?;
            let rhs = self.term()?;
            let op = if c == '+' { BinOp::Add } else { BinOp::Sub };
            lhs = FieldExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<FieldExpr, ParseError> {
        let mut lhs = self.unary()?;
        while let Tok::Sym(c @ ('*' | '/')) = self.tok {
            self.advance()?;
            let rhs = self.unary()?;
            let op = if c == '*' { BinOp::Mul } else { BinOp::Div };
            lhs = FieldExpr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<FieldExpr, ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(self.error(&["shallower nesting"]));
        }
        let e = if self.tok == Tok::Sym('-') {
            self.advance()?;
            FieldExpr::Neg(Box::new(self.unary()?))
        } else {
            self.power()?
        };
        self.depth -= 1;
        Ok(e)
    }

    // `^` binds tighter than unary minus and associates to the right
    fn power(&mut self) -> Result<FieldExpr, ParseError> {
        let base = self.atom()?;
        if self.tok == Tok::Sym('^') {
            self.advance()?;
            let exp = self.unary()?;
            return Ok(FieldExpr::Bin(BinOp::Pow, Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<FieldExpr, ParseError> {
        match self.tok.clone() {
            Tok::Num(v) => {
                self.advance()?;
                Ok(FieldExpr::Num(v))
            }
            Tok::Sym('(') => {
                self.advance()?;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Tok::Ident(name) => {
                if name == "t" {
                    self.advance()?;
                    return Ok(FieldExpr::Time);
                }
                if let Some(k) = name.strip_prefix('x').and_then(|d| d.parse::<usize>().ok()) {
                    if (1..=9).contains(&k) {
                        self.advance()?;
                        return Ok(FieldExpr::Var(k - 1));
                    }
                }
                let Some(f) = Func::from_name(&name) else {
                    return Err(self.error(EXPECT_OPERAND));
                };
                self.advance()?;
                self.expect('(')?;
                let arg = self.expr()?;
                if self.tok == Tok::Sym(',') {
                    // every supported function takes exactly one argument
                    return Err(self.error(&["')'"]));
                }
                self.expect(')')?;
                Ok(FieldExpr::Call(f, Box::new(arg)))
            }
            _ => Err(self.error(EXPECT_OPERAND)),
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.tok == Tok::Sym(c) {
            self.advance()
        } else {
            Err(self.error(match c {
                ')' => &["')'"],
                '(' => &["'('"],
                _ => &["symbol"],
            }))
        }
    }
}

impl FieldExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        let mut p = Parser::new(text)?;
        let e = p.expr()?;
        if p.tok != Tok::End {
            return Err(p.error(&["operator", "end of input"]));
        }
        Ok(e)
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Result<f64, EvalError> {
        Ok(match self {
            Self::Num(v) => *v,
            Self::Var(k) => *x.get(*k).ok_or(EvalError::MissingVariable { var: *k, dim: x.len() })?,
            Self::Time => t,
            Self::Neg(e) => -e.eval(x, t)?,
            Self::Bin(op, a, b) => {
                let a = a.eval(x, t)?;
                let b = b.eval(x, t)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                    BinOp::Pow => {
                        let v = a.powf(b);
                        if v.is_nan() && !a.is_nan() && !b.is_nan() {
                            return Err(EvalError::Undefined("power"));
                        }
                        v
                    }
                }
            }
            Self::Call(f, e) => {
                let v = e.eval(x, t)?;
                match f {
                    Func::Sin => v.sin(),
                    Func::Cos => v.cos(),
                    Func::Exp => v.exp(),
                    Func::Abs => v.abs(),
                    Func::Sqrt => {
                        if v < 0.0 {
                            return Err(EvalError::SqrtNegative(v));
                        }
                        v.sqrt()
                    }
                }
            }
        })
    }

    /// Number of spatial coordinates the expression reads.
    pub fn arity(&self) -> usize {
        match self {
            Self::Num(_) | Self::Time => 0,
            Self::Var(k) => k + 1,
            Self::Neg(e) | Self::Call(_, e) => e.arity(),
            Self::Bin(_, a, b) => a.arity().max(b.arity()),
        }
    }

    pub fn uses_time(&self) -> bool {
        match self {
            Self::Time => true,
            Self::Num(_) | Self::Var(_) => false,
            Self::Neg(e) | Self::Call(_, e) => e.uses_time(),
            Self::Bin(_, a, b) => a.uses_time() || b.uses_time(),
        }
    }
}

impl FromStr for FieldExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, ParseError> {
        Self::parse(s)
    }
}

/// Fully parenthesized, so printing and reparsing gives the same tree.
impl fmt::Display for FieldExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Num(v) if *v < 0.0 || (*v == 0.0 && v.is_sign_negative()) => write!(f, "(-{})", -v),
            Self::Num(v) => write!(f, "{v}"),
            Self::Var(k) => write!(f, "x{}", k + 1),
            Self::Time => write!(f, "t"),
            Self::Neg(e) => write!(f, "(-{e})"),
            Self::Bin(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
            Self::Call(func, e) => write!(f, "{}({e})", func.name()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn variable_node() {
        assert_eq!(FieldExpr::parse("x1").unwrap(), FieldExpr::Var(0));
    }

    #[test]
    fn precedence() {
        let e = FieldExpr::parse("sin(t)*x2 + 2^3").unwrap();
        assert_eq!(e.eval(&[0.0, 5.0], 0.0).unwrap(), 8.0);
        assert_eq!(FieldExpr::parse("-2^2").unwrap().eval(&[], 0.0).unwrap(), -4.0);
        assert_eq!(FieldExpr::parse("2^3^2").unwrap().eval(&[], 0.0).unwrap(), 512.0);
        assert_eq!(FieldExpr::parse("2^-1").unwrap().eval(&[], 0.0).unwrap(), 0.5);
        assert_eq!(FieldExpr::parse("8/4/2").unwrap().eval(&[], 0.0).unwrap(), 1.0);
        assert_eq!(FieldExpr::parse("1 - 2 - 3").unwrap().eval(&[], 0.0).unwrap(), -4.0);
    }

    #[test]
    fn error_offset() {
        let e = FieldExpr::parse("x1 + * 2").unwrap_err();
        assert_eq!(e.offset, 5);
        assert!(e.expected.contains(&"number"));
        assert_eq!(FieldExpr::parse("sin(x1, x2)").unwrap_err().offset, 6);
        assert_eq!(FieldExpr::parse("x1 x2").unwrap_err().offset, 3);
        assert_eq!(FieldExpr::parse("foo(1)").unwrap_err().offset, 0);
        assert_eq!(FieldExpr::parse("(1").unwrap_err().found, "end of input");
        assert!(FieldExpr::parse(&"(".repeat(100_000)).is_err());
        assert!(FieldExpr::parse(&"-".repeat(100_000)).is_err());
    }

    #[test]
    fn evaluation() {
        assert_eq!(FieldExpr::parse("exp(x1)").unwrap().eval(&[0.0], 0.0).unwrap(), 1.0);
        assert_eq!(FieldExpr::parse("1/x1").unwrap().eval(&[0.0], 0.0), Err(EvalError::DivisionByZero));
        assert!(matches!(FieldExpr::parse("sqrt(x1)").unwrap().eval(&[-1.0], 0.0), Err(EvalError::SqrtNegative(_))));
        let v = FieldExpr::parse("exp(x1+x2/2)").unwrap().eval(&[0.3, 0.4], 0.0).unwrap();
        assert_eq!(v, 0.5f64.exp());
        assert!(matches!(FieldExpr::parse("x2").unwrap().eval(&[1.0], 0.0), Err(EvalError::MissingVariable { var: 1, dim: 1 })));
    }

    #[test]
    fn numbers_with_exponents() {
        assert_eq!(FieldExpr::parse("1.5e-3").unwrap(), FieldExpr::Num(1.5e-3));
        assert_eq!(FieldExpr::parse("2E2").unwrap(), FieldExpr::Num(200.0));
        // `e` without digits is not an exponent
        assert!(FieldExpr::parse("2e").is_err());
    }

    #[test]
    fn display_round_trip() {
        for s in ["-x1^2 + 3*sin(t)/x2", "abs(-1.25e-7) - (x1 - x2) - x3", "exp(-(x1^2+x2^2)/0.1)"] {
            let e = FieldExpr::parse(s).unwrap();
            assert_eq!(FieldExpr::parse(&e.to_string()).unwrap(), e);
        }
        assert_eq!(FieldExpr::parse("x3*t").unwrap().arity(), 3);
        assert!(FieldExpr::parse("x3*t").unwrap().uses_time());
    }
}
