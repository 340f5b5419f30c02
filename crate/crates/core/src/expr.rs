//! Tiny arithmetic expression grammar over the state variables `t` and `S`.
//!
//! Grammar: constants, `+`, `-`, `*`, `/`, `max(a, b)`, `min(a, b)`, the
//! variables `t` (time) and `S` (spot), parentheses and unary minus. The
//! shorthands `call(K)` and `put(K)` expand to `max(S - K, 0)` and
//! `max(K - S, 0)`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ExprError;

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Num(f64),
    Time,
    Spot,
    Neg(Box<Node>),
    Add(Box<Node>, Box<Node>),
    Sub(Box<Node>, Box<Node>),
    Mul(Box<Node>, Box<Node>),
    Div(Box<Node>, Box<Node>),
    Max(Box<Node>, Box<Node>),
    Min(Box<Node>, Box<Node>),
}

impl Node {
    fn eval(&self, t: f64, s: f64) -> f64 {
        match self {
            Node::Num(x) => *x,
            Node::Time => t,
            Node::Spot => s,
            Node::Neg(a) => -a.eval(t, s),
            Node::Add(a, b) => a.eval(t, s) + b.eval(t, s),
            Node::Sub(a, b) => a.eval(t, s) - b.eval(t, s),
            Node::Mul(a, b) => a.eval(t, s) * b.eval(t, s),
            Node::Div(a, b) => a.eval(t, s) / b.eval(t, s),
            Node::Max(a, b) => a.eval(t, s).max(b.eval(t, s)),
            Node::Min(a, b) => a.eval(t, s).min(b.eval(t, s)),
        }
    }
}

/// A parsed expression of `(t, S)`. Keeps its source text for display and
/// serialization.
#[derive(Debug, Clone)]
pub struct Expr {
    source: String,
    ast: Node,
}

impl Expr {
    /// Parses an expression from its textual form.
    pub fn parse(source: &str) -> Result<Self, ExprError> {
        let mut p = Parser {
            bytes: source.as_bytes(),
            pos: 0,
        };
        let ast = p.expression()?;
        p.skip_ws();
        if p.pos != p.bytes.len() {
            return Err(p.err("trailing input"));
        }
        Ok(Expr {
            source: source.to_string(),
            ast,
        })
    }

    /// Constant expression.
    pub fn constant(value: f64) -> Self {
        Expr {
            source: format!("{value}"),
            ast: Node::Num(value),
        }
    }

    /// Evaluates the expression at time `t` and spot `s`.
    pub fn eval(&self, t: f64, s: f64) -> f64 {
        self.ast.eval(t, s)
    }

    /// Source text the expression was parsed from.
    pub fn source(&self) -> &str {
        &self.source
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.source)
    }
}

impl FromStr for Expr {
    type Err = ExprError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl Serialize for Expr {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.source)
    }
}

impl<'de> Deserialize<'de> for Expr {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Expr::parse(&s).map_err(serde::de::Error::custom)
    }
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: &str) -> ExprError {
        ExprError {
            position: self.pos,
            message: message.to_string(),
        }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn peek(&mut self) -> Option<u8> {
        self.skip_ws();
        self.bytes.get(self.pos).copied()
    }

    fn expression(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(b'+') => {
                    self.pos += 1;
                    lhs = Node::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(b'-') => {
                    self.pos += 1;
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.factor()?;
        loop {
            match self.peek() {
                Some(b'*') => {
                    self.pos += 1;
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.factor()?));
                }
                Some(b'/') => {
                    self.pos += 1;
                    lhs = Node::Div(Box::new(lhs), Box::new(self.factor()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn factor(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'-') => {
                self.pos += 1;
                Ok(Node::Neg(Box::new(self.factor()?)))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Node, ExprError> {
        match self.peek() {
            Some(b'(') => {
                self.pos += 1;
                let inner = self.expression()?;
                self.expect(b')')?;
                Ok(inner)
            }
            Some(c) if c.is_ascii_digit() || c == b'.' => self.number(),
            Some(c) if c.is_ascii_alphabetic() => self.ident(),
            _ => Err(self.err("expected a number, variable, function or '('")),
        }
    }

    fn expect(&mut self, c: u8) -> Result<(), ExprError> {
        if self.peek() == Some(c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(&format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() {
            let c = self.bytes[self.pos];
            if c.is_ascii_digit() || c == b'.' || c == b'e' || c == b'E' {
                self.pos += 1;
            } else if (c == b'+' || c == b'-')
                && self.pos > start
                && matches!(self.bytes[self.pos - 1], b'e' | b'E')
            {
                self.pos += 1;
            } else {
                break;
            }
        }
        let text = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        text.parse::<f64>()
            .map(Node::Num)
            .map_err(|_| self.err("malformed number"))
    }

    fn ident(&mut self) -> Result<Node, ExprError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_alphanumeric() {
            self.pos += 1;
        }
        let name = std::str::from_utf8(&self.bytes[start..self.pos]).unwrap();
        match name {
            "t" => Ok(Node::Time),
            "S" | "s" => Ok(Node::Spot),
            "max" | "min" => {
                self.expect(b'(')?;
                let a = self.expression()?;
                self.expect(b',')?;
                let b = self.expression()?;
                self.expect(b')')?;
                Ok(if name == "max" {
                    Node::Max(Box::new(a), Box::new(b))
                } else {
                    Node::Min(Box::new(a), Box::new(b))
                })
            }
            "call" | "put" => {
                self.expect(b'(')?;
                let k = self.expression()?;
                self.expect(b')')?;
                let spot = Box::new(Node::Spot);
                let strike = Box::new(k);
                let diff = if name == "call" {
                    Node::Sub(spot, strike)
                } else {
                    Node::Sub(strike, spot)
                };
                Ok(Node::Max(Box::new(diff), Box::new(Node::Num(0.0))))
            }
            other => Err(self.err(&format!("unknown identifier '{other}'"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn arithmetic_and_variables() {
        let e = Expr::parse("-0.5*S + max(t, 0.25) / 2").unwrap();
        assert_eq!(e.eval(1.0, 100.0), -50.0 + 0.5);
        assert_eq!(e.eval(0.1, 10.0), -5.0 + 0.125);
    }

    #[test]
    fn call_put_shorthand() {
        let c = Expr::parse("call(100)").unwrap();
        assert_eq!(c.eval(0.0, 120.0), 20.0);
        assert_eq!(c.eval(0.0, 80.0), 0.0);
        let p = Expr::parse("put(100)").unwrap();
        assert_eq!(p.eval(0.0, 80.0), 20.0);
        assert_eq!(p.eval(0.0, 120.0), 0.0);
    }

    #[test]
    fn precedence_and_parens() {
        let e = Expr::parse("1 + 2 * 3").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 7.0);
        let e = Expr::parse("(1 + 2) * 3").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 9.0);
        let e = Expr::parse("min(2e-1, 0.3) - -1").unwrap();
        assert_eq!(e.eval(0.0, 0.0), 1.2);
    }

    #[test]
    fn rejects_garbage() {
        assert!(Expr::parse("foo(1)").is_err());
        assert!(Expr::parse("1 +").is_err());
        assert!(Expr::parse("max(1)").is_err());
        assert!(Expr::parse("1 2").is_err());
    }

    #[test]
    fn round_trips_through_serde() {
        let e = Expr::parse("max(S - 100, 0)").unwrap();
        let json = serde_json::to_string(&e).unwrap();
        assert_eq!(json, "\"max(S - 100, 0)\"");
        let back: Expr = serde_json::from_str(&json).unwrap();
        assert_eq!(back.eval(0.0, 130.0), 30.0);
    }
}
