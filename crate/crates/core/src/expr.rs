//! A deliberately tiny expression language for user-defined generators and
//! terminal conditions.
//!
//! ```text
//! expr   := sum
//! sum    := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?              right associative, -x^2 = -(x^2)
//! atom   := number | name | name '(' args ')' | '(' expr ')'
//! cond   := expr ('<' | '<=' | '>' | '>=' | '==' | '!=') expr
//! ```
//!
//! Names: `t`, `y`, `T` (horizon), `pi`, `e`, components `b1..b9`, `z1..z9`
//! (`b` and `z` alias the first component) and the Euclidean norms `bn`,
//! `zn`. Functions: `abs exp sin cos ln sqrt cbrt` (one argument),
//! `min max pow` (two), and `ind(cond)` which is 1 when `cond` holds, else 0.

use alloc::boxed::Box;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Func {
    Abs,
    Exp,
    Sin,
    Cos,
    Ln,
    Sqrt,
    Cbrt,
    Min,
    Max,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cmp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Var {
    T,
    Y,
    B(usize),
    Z(usize),
    BNorm,
    ZNorm,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Var(Var),
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Pow(Box<Node>, Box<Node>),
    Call(Func, Vec<Node>),
    Ind(Cmp, Box<Node>, Box<Node>),
}

/// Values the variables of an expression are bound to.
#[derive(Debug, Clone, Copy)]
pub struct Bindings<'a> {
    pub t: f64,
    pub y: f64,
    pub b: &'a [f64],
    pub z: &'a [f64],
}

/// A parsed expression.
#[derive(Debug, Clone, PartialEq)]
pub struct Expr {
    root: Node,
    source: String,
}

impl Expr {
    /// Parses `src`. Component references beyond `dim` are rejected;
    /// `horizon` is substituted for `T`.
    pub fn parse(src: &str, dim: usize, horizon: f64) -> Result<Self> {
        let mut p = Parser { src: src.as_bytes(), pos: 0, dim, horizon };
        let root = p.sum()?;
        p.skip_ws();
        if p.pos != p.src.len() {
            return Err(p.error("unexpected trailing input"));
        }
        Ok(Self { root, source: src.to_string() })
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    /// True when the expression mentions `var` (`"t"`, `"y"`, `"b"`, `"z"`).
    pub fn mentions(&self, var: &str) -> bool {
        fn walk(n: &Node, var: &str) -> bool {
            match n {
                Node::Num(_) => false,
                Node::Var(v) => matches!(
                    (v, var),
                    (Var::T, "t") | (Var::Y, "y") | (Var::B(_) | Var::BNorm, "b") | (Var::Z(_) | Var::ZNorm, "z")
                ),
                Node::Neg(a) => walk(a, var),
                Node::Add(a, b) | Node::Sub(a, b) | Node::Mul(a, b) | Node::Div(a, b) | Node::Pow(a, b) => {
                    walk(a, var) || walk(b, var)
                }
                Node::Ind(_, a, b) => walk(a, var) || walk(b, var),
                Node::Call(_, args) => args.iter().any(|a| walk(a, var)),
            }
        }
        walk(&self.root, var)
    }

    pub fn eval(&self, v: &Bindings<'_>) -> f64 {
        eval(&self.root, v)
    }
}

fn component(xs: &[f64], k: usize) -> f64 {
    xs.get(k).copied().unwrap_or(f64::NAN)
}

fn eval(n: &Node, v: &Bindings<'_>) -> f64 {
    match n {
        Node::Num(x) => *x,
        Node::Var(var) => match var {
            Var::T => v.t,
            Var::Y => v.y,
            Var::B(k) => component(v.b, *k),
            Var::Z(k) => component(v.z, *k),
            Var::BNorm => math::norm(v.b),
            Var::ZNorm => math::norm(v.z),
        },
        Node::Neg(a) => -eval(a, v),
        Node::Add(a, b) => eval(a, v) + eval(b, v),
        Node::Sub(a, b) => eval(a, v) - eval(b, v),
        Node::Mul(a, b) => eval(a, v) * eval(b, v),
        Node::Div(a, b) => eval(a, v) / eval(b, v),
        Node::Pow(a, b) => math::powf(eval(a, v), eval(b, v)),
        Node::Call(f, args) => {
            let x = eval(&args[0], v);
            match f {
                Func::Abs => math::abs(x),
                Func::Exp => math::exp(x),
                Func::Sin => math::sin(x),
                Func::Cos => math::cos(x),
                Func::Ln => math::ln(x),
                Func::Sqrt => math::sqrt(x),
                Func::Cbrt => math::cbrt(x),
                Func::Min => x.min(eval(&args[1], v)),
                Func::Max => x.max(eval(&args[1], v)),
                Func::Pow => math::powf(x, eval(&args[1], v)),
            }
        }
        Node::Ind(c, a, b) => {
            let (x, y) = (eval(a, v), eval(b, v));
            let hit = match c {
                Cmp::Lt => x < y,
                Cmp::Le => x <= y,
                Cmp::Gt => x > y,
                Cmp::Ge => x >= y,
                Cmp::Eq => x == y,
                Cmp::Ne => x != y,
            };
            if hit {
                1.0
            } else {
                0.0
            }
        }
    }
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
    dim: usize,
    horizon: f64,
}

impl Parser<'_> {
    fn error(&self, msg: &str) -> Error {
        Error::Parse { pos: self.pos, msg: msg.to_string() }
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

    fn eat(&mut self, c: u8) -> bool {
        if self.peek() == Some(c) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn sum(&mut self) -> Result<Node> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat(b'-') {
                lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Node> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Node> {
        if self.eat(b'-') {
            return Ok(Node::Neg(Box::new(self.unary()?)));
        }
        if self.eat(b'+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Node> {
        let base = self.atom()?;
        if self.eat(b'^') {
            let exp = self.unary()?;
            return Ok(Node::Pow(Box::new(base), Box::new(exp)));
        }
        Ok(base)
    }

    fn cond(&mut self) -> Result<Node> {
        let lhs = self.sum()?;
        self.skip_ws();
        let rest = &self.src[self.pos..];
        let (cmp, len) = if rest.starts_with(b"<=") {
            (Cmp::Le, 2)
        } else if rest.starts_with(b">=") {
            (Cmp::Ge, 2)
        } else if rest.starts_with(b"==") {
            (Cmp::Eq, 2)
        } else if rest.starts_with(b"!=") {
            (Cmp::Ne, 2)
        } else if rest.starts_with(b"<") {
            (Cmp::Lt, 1)
        } else if rest.starts_with(b">") {
            (Cmp::Gt, 1)
        } else {
            return Err(self.error("expected a comparison inside ind(...)"));
        };
        self.pos += len;
        let rhs = self.sum()?;
        Ok(Node::Ind(cmp, Box::new(lhs), Box::new(rhs)))
    }

    fn number(&mut self) -> Result<Node> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                self.pos = save;
            }
        }
        let text = core::str::from_utf8(&s[start..self.pos]).map_err(|_| self.error("bad number"))?;
        text.parse::<f64>().map(Node::Num).map_err(|_| Error::Parse { pos: start, msg: format!("bad number '{text}'") })
    }

    fn atom(&mut self) -> Result<Node> {
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(b'(') => {
                self.pos += 1;
                let inner = self.sum()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => {
                let start = self.pos;
                while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphanumeric() {
                    self.pos += 1;
                }
                let name = core::str::from_utf8(&self.src[start..self.pos]).unwrap_or_default();
                if self.peek() == Some(b'(') {
                    self.pos += 1;
                    return self.call(name, start);
                }
                self.variable(name, start)
            }
            Some(_) => Err(self.error("unexpected character")),
        }
    }

    fn call(&mut self, name: &str, start: usize) -> Result<Node> {
        if name == "ind" {
            let c = self.cond()?;
            self.expect(b')')?;
            return Ok(c);
        }
        let (func, arity) = match name {
            "abs" => (Func::Abs, 1),
            "exp" => (Func::Exp, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            "ln" => (Func::Ln, 1),
            "sqrt" => (Func::Sqrt, 1),
            "cbrt" => (Func::Cbrt, 1),
            "min" => (Func::Min, 2),
            "max" => (Func::Max, 2),
            "pow" => (Func::Pow, 2),
            _ => return Err(Error::Parse { pos: start, msg: format!("unknown function '{name}'") }),
        };
        let mut args = Vec::with_capacity(arity);
        args.push(self.sum()?);
        while self.eat(b',') {
            args.push(self.sum()?);
        }
        self.expect(b')')?;
        if args.len() != arity {
            return Err(Error::Parse {
                pos: start,
                msg: format!("'{name}' takes {arity} argument(s), got {}", args.len()),
            });
        }
        Ok(Node::Call(func, args))
    }

    fn variable(&self, name: &str, start: usize) -> Result<Node> {
        let comp = |prefix: char| -> Option<usize> {
            let rest = name.strip_prefix(prefix)?;
            if rest.is_empty() {
                return Some(0);
            }
            let k: usize = rest.parse().ok()?;
            (k >= 1).then(|| k - 1)
        };
        let var = match name {
            "t" => Var::T,
            "y" => Var::Y,
            "T" => return Ok(Node::Num(self.horizon)),
            "pi" => return Ok(Node::Num(core::f64::consts::PI)),
            "e" => return Ok(Node::Num(core::f64::consts::E)),
            "bn" => Var::BNorm,
            "zn" => Var::ZNorm,
            _ => {
                if let Some(k) = comp('b') {
                    Var::B(k)
                } else if let Some(k) = comp('z') {
                    Var::Z(k)
                } else {
                    return Err(Error::Parse { pos: start, msg: format!("unknown name '{name}'") });
                }
            }
        };
        if let Var::B(k) | Var::Z(k) = var {
            if k >= self.dim {
                return Err(Error::Parse {
                    pos: start,
                    msg: format!("'{name}' refers to component {} but d = {}", k + 1, self.dim),
                });
            }
        }
        Ok(Node::Var(var))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, t: f64, y: f64, b: &[f64], z: &[f64]) -> f64 {
        Expr::parse(src, b.len().max(z.len()).max(1), 1.0).unwrap().eval(&Bindings { t, y, b, z })
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0, &[], &[]), 7.0);
        assert_eq!(ev("-2^2", 0.0, 0.0, &[], &[]), -4.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0, &[], &[]), 512.0);
        assert_eq!(ev("(1 - 2) - 3", 0.0, 0.0, &[], &[]), -4.0);
        assert_eq!(ev("8 / 2 / 2", 0.0, 0.0, &[], &[]), 2.0);
        assert_eq!(ev("1.5e2 + T", 0.0, 0.0, &[], &[]), 151.0);
    }

    #[test]
    fn variables_and_functions() {
        assert_eq!(ev("2*y - t", 1.0, 3.0, &[0.0], &[0.0]), 5.0);
        assert_eq!(ev("zn + bn", 0.0, 0.0, &[3.0, 4.0], &[0.0, 1.0]), 6.0);
        assert_eq!(ev("b2 * z1", 0.0, 0.0, &[3.0, 4.0], &[2.0, 1.0]), 8.0);
        assert_eq!(ev("ind(y <= 0)*sin(y) + ind(y > 0)*cos(y)", 0.0, 0.0, &[0.0], &[0.0]), 0.0);
        assert_eq!(ev("max(abs(z), 1)", 0.0, 0.0, &[0.0], &[-3.0]), 3.0);
        assert!((ev("sqrt(abs(z)) + ln(e) + cbrt(8)", 0.0, 0.0, &[0.0], &[4.0]) - 5.0).abs() < 1e-15);
    }

    #[test]
    fn parse_errors() {
        for bad in ["1 +", "foo(1)", "min(1)", "ind(y)", "z3", "(1", "1 2", "q", "3 $ 4"] {
            assert!(Expr::parse(bad, 2, 1.0).is_err(), "{bad} should fail");
        }
        assert!(matches!(Expr::parse("1 + w", 1, 1.0), Err(Error::Parse { pos: 4, .. })));
    }

    #[test]
    fn mentions() {
        let e = Expr::parse("sin(zn) + t", 1, 1.0).unwrap();
        assert!(e.mentions("z") && e.mentions("t"));
        assert!(!e.mentions("y") && !e.mentions("b"));
    }
}
