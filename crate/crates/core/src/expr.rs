//! A minimal arithmetic expression language for metric coefficients.
//!
//! Grammar: numbers, the variables `x1..xn` and `y1..yn`, parentheses,
//! binary `+ - * / ^`, unary minus and `sqrt(...)`. Exponents must be
//! constant expressions; integer exponents are evaluated by repeated
//! multiplication so negative bases are allowed there.

use crate::error::{Error, Result};
use crate::jet::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Expr {
    Num(f64),
    X(usize),
    Y(usize),
    Neg(Box<Expr>),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Pow(Box<Expr>, f64),
    Sqrt(Box<Expr>),
}

#[derive(Clone, Debug, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let chars: Vec<char> = src.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            ' ' | '\t' | '\n' | '\r' => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let v: f64 = text
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad number '{text}'")))?;
                out.push(Token::Num(v));
            }
            c if c.is_ascii_alphabetic() => {
                let start = i;
                while i < chars.len() && chars[i].is_ascii_alphanumeric() {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => return Err(Error::Parse(format!("unexpected character '{other}'"))),
        }
    }
    Ok(out)
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: Token) -> Result<()> {
        match self.next() {
            Some(t) if t == want => Ok(()),
            other => Err(Error::Parse(format!("expected {want:?}, found {other:?}"))),
        }
    }

    // expr := term (('+'|'-') term)*
    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(op @ ('+' | '-'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.term()?;
            lhs = if op == '+' {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    // term := unary (('*'|'/') unary)*
    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(op @ ('*' | '/'))) = self.peek().cloned() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = if op == '*' {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            };
        }
        Ok(lhs)
    }

    // unary := '-' unary | power
    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if let Some(Token::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    // power := atom ('^' unary)?   (right associative)
    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            let p = exponent.constant_value().ok_or_else(|| {
                Error::Parse("exponent must be a constant expression".to_string())
            })?;
            return Ok(Expr::Pow(Box::new(base), p));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(v)) => Ok(Expr::Num(v)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                if name == "sqrt" {
                    self.expect(Token::LParen)?;
                    let e = self.expr()?;
                    self.expect(Token::RParen)?;
                    return Ok(Expr::Sqrt(Box::new(e)));
                }
                let (kind, idx) = name.split_at(1);
                let index: usize = idx
                    .parse()
                    .map_err(|_| Error::Parse(format!("unknown identifier '{name}'")))?;
                if index == 0 || index > self.dim {
                    return Err(Error::Parse(format!(
                        "variable '{name}' out of range for dimension {}",
                        self.dim
                    )));
                }
                match kind {
                    "x" => Ok(Expr::X(index - 1)),
                    "y" => Ok(Expr::Y(index - 1)),
                    _ => Err(Error::Parse(format!("unknown identifier '{name}'"))),
                }
            }
            other => Err(Error::Parse(format!("unexpected token {other:?}"))),
        }
    }
}

impl Expr {
    /// Parses `src` with variables `x1..x{dim}` and `y1..y{dim}`.
    pub fn parse(src: &str, dim: usize) -> Result<Expr> {
        let tokens = tokenize(src)?;
        if tokens.is_empty() {
            return Err(Error::Parse("empty expression".to_string()));
        }
        let mut p = Parser {
            tokens,
            pos: 0,
            dim,
        };
        let e = p.expr()?;
        if p.pos != p.tokens.len() {
            return Err(Error::Parse(format!(
                "trailing input at token {}: {:?}",
                p.pos,
                p.tokens[p.pos]
            )));
        }
        Ok(e)
    }

    /// Value of a variable-free expression.
    pub fn constant_value(&self) -> Option<f64> {
        Some(match self {
            Expr::Num(v) => *v,
            Expr::X(_) | Expr::Y(_) => return None,
            Expr::Neg(a) => -a.constant_value()?,
            Expr::Add(a, b) => a.constant_value()? + b.constant_value()?,
            Expr::Sub(a, b) => a.constant_value()? - b.constant_value()?,
            Expr::Mul(a, b) => a.constant_value()? * b.constant_value()?,
            Expr::Div(a, b) => a.constant_value()? / b.constant_value()?,
            Expr::Pow(a, p) => a.constant_value()?.powf(*p),
            Expr::Sqrt(a) => a.constant_value()?.sqrt(),
        })
    }

    pub fn depends_on_y(&self) -> bool {
        match self {
            Expr::Num(_) | Expr::X(_) => false,
            Expr::Y(_) => true,
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Sqrt(a) => a.depends_on_y(),
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.depends_on_y() || b.depends_on_y()
            }
        }
    }

    pub fn eval<S: Scalar>(&self, x: &[S], y: &[S]) -> S {
        let template = y.first().or(x.first()).expect("at least one variable");
        match self {
            Expr::Num(v) => template.lift(*v),
            Expr::X(i) => x[*i].clone(),
            Expr::Y(i) => y[*i].clone(),
            Expr::Neg(a) => -a.eval(x, y),
            Expr::Add(a, b) => a.eval(x, y) + b.eval(x, y),
            Expr::Sub(a, b) => a.eval(x, y) - b.eval(x, y),
            Expr::Mul(a, b) => a.eval(x, y) * b.eval(x, y),
            Expr::Div(a, b) => a.eval(x, y) / b.eval(x, y),
            Expr::Pow(a, p) => {
                let base = a.eval(x, y);
                if p.fract() == 0.0 && p.abs() < 1e6 {
                    base.powi(*p as i32)
                } else {
                    base.powf(*p)
                }
            }
            Expr::Sqrt(a) => a.eval(x, y).sqrt(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::{seed_point, JetSpace, Truncation};
    use approx::assert_relative_eq;

    #[test]
    fn precedence_and_associativity() {
        let e = Expr::parse("1 + 2*3^2 - -4/2", 1).unwrap();
        assert_relative_eq!(e.constant_value().unwrap(), 1.0 + 18.0 + 2.0);
        let e = Expr::parse("2^3^2", 1).unwrap();
        assert_relative_eq!(e.constant_value().unwrap(), 512.0);
        let e = Expr::parse("-2^2", 1).unwrap();
        assert_relative_eq!(e.constant_value().unwrap(), -4.0);
    }

    #[test]
    fn heisenberg_formula() {
        let e = Expr::parse("(y1*(y2 - x1*y3)*y3)^(2/3)", 3).unwrap();
        let v = e.eval(&[1.0, 0.0, 0.0], &[1.0, 2.0, 1.0]);
        assert_relative_eq!(v, 1.0, epsilon = 1e-14);
        let v = e.eval(&[0.0, 0.0, 0.0], &[8.0, 8.0, 8.0]);
        assert_relative_eq!(v, 64.0, epsilon = 1e-12);
    }

    #[test]
    fn evaluates_on_jets() {
        let e = Expr::parse("sqrt(y1^2 + y2^2) * (1 + x1)", 2).unwrap();
        let s = JetSpace::get(Truncation::new(2, 2, 1, 1, 2));
        let (x, y) = seed_point(&s, &[0.5, 0.0], &[3.0, 4.0]);
        let j = e.eval(&x, &y);
        assert_relative_eq!(j.value(), 7.5, epsilon = 1e-14);
        assert_relative_eq!(j.partial(&[0, 0, 1, 0]), 1.5 * 0.6, epsilon = 1e-14);
        assert_relative_eq!(j.partial(&[1, 0, 0, 0]), 5.0, epsilon = 1e-14);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Expr::parse("y1 ^ y2", 2).is_err());
        assert!(Expr::parse("y3", 2).is_err());
        assert!(Expr::parse("z1", 2).is_err());
        assert!(Expr::parse("(y1", 2).is_err());
        assert!(Expr::parse("y1 y2", 2).is_err());
        assert!(Expr::parse("", 2).is_err());
    }

    #[test]
    fn scientific_notation() {
        let e = Expr::parse("1.5e-3 * 2", 1).unwrap();
        assert_relative_eq!(e.constant_value().unwrap(), 3e-3);
    }
}
