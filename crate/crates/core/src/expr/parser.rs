//! Recursive-descent parser for Hamiltonian expressions.
//!
//! Grammar (EBNF):
//!
//! ```text
//! expr    = term { ("+" | "-") term } ;
//! term    = unary { ("*" | "/") unary } ;
//! unary   = "-" unary | power ;
//! power   = primary [ "^" [ "-" ] integer ] ;
//! primary = number | "pi" | variable | call | "(" expr ")" ;
//! call    = ("exp" | "sin" | "cos") "(" expr ")"
//!         | "flat_exp" "(" expr [ "," integer ] ")"
//!         | "piecewise" "(" cond "," expr "," expr ")" ;
//! cond    = expr ("<" | "<=" | ">" | ">=") expr ;
//! variable = ("x" | "y" | "p" | "q") [ digits ] ;
//! ```
//!
//! A bare `x`, `y`, `p` or `q` is shorthand for index 1.

use super::{CmpOp, Cond, Expr, Var, VarKind};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    Cmp(CmpOp),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => out.push((start, Tok::Plus)),
            '-' => out.push((start, Tok::Minus)),
            '*' => out.push((start, Tok::Star)),
            '/' => out.push((start, Tok::Slash)),
            '^' => out.push((start, Tok::Caret)),
            '(' => out.push((start, Tok::LParen)),
            ')' => out.push((start, Tok::RParen)),
            ',' => out.push((start, Tok::Comma)),
            '<' | '>' => {
                let eq = bytes.get(i + 1) == Some(&b'=');
                let op = match (c, eq) {
                    ('<', false) => CmpOp::Lt,
                    ('<', true) => CmpOp::Le,
                    ('>', false) => CmpOp::Gt,
                    _ => CmpOp::Ge,
                };
                if eq {
                    i += 1;
                }
                out.push((start, Tok::Cmp(op)));
            }
            _ if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_digit() || bytes[j] == b'.') {
                    j += 1;
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && bytes[k].is_ascii_digit() {
                        while k < bytes.len() && bytes[k].is_ascii_digit() {
                            k += 1;
                        }
                        j = k;
                    }
                }
                let text = &src[i..j];
                let v: f64 = text.parse().map_err(|_| Error::Syntax {
                    position: start,
                    message: format!("malformed number `{text}`"),
                })?;
                out.push((start, Tok::Num(v)));
                i = j;
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j].is_ascii_alphanumeric() || bytes[j] == b'_') {
                    j += 1;
                }
                out.push((start, Tok::Ident(src[i..j].to_string())));
                i = j;
                continue;
            }
            _ => {
                return Err(Error::Syntax {
                    position: start,
                    message: format!("unexpected character `{c}`"),
                })
            }
        }
        i += 1;
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(o, _)| *o).unwrap_or(self.end)
    }

    fn err<T>(&self, message: impl Into<String>) -> Result<T> {
        Err(Error::Syntax {
            position: self.offset(),
            message: message.into(),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> Result<()> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected {what}"))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Plus) => {
                    self.pos += 1;
                    lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
                }
                Some(Tok::Minus) => {
                    self.pos += 1;
                    lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Star) => {
                    self.pos += 1;
                    lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Some(Tok::Slash) => {
                    self.pos += 1;
                    lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let inner = self.unary()?;
            return Ok(match inner {
                Expr::Const(c) => Expr::Const(-c),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.power()
    }

    fn integer(&mut self) -> Result<i64> {
        match self.peek() {
            Some(Tok::Num(v)) if v.fract() == 0.0 && v.abs() < 1e9 => {
                let v = *v as i64;
                self.pos += 1;
                Ok(v)
            }
            _ => self.err("expected an integer"),
        }
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.primary()?;
        if self.peek() == Some(&Tok::Caret) {
            self.pos += 1;
            let neg = if self.peek() == Some(&Tok::Minus) {
                self.pos += 1;
                true
            } else {
                false
            };
            let k = self.integer()?;
            let k = if neg { -k } else { k };
            return Ok(Expr::Pow(Box::new(base), k as i32));
        }
        Ok(base)
    }

    fn primary(&mut self) -> Result<Expr> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Const(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    self.pos += 1;
                    let e = self.call(&name, at)?;
                    self.expect(Tok::RParen, "`)`")?;
                    return Ok(e);
                }
                if name == "pi" {
                    return Ok(Expr::Const(std::f64::consts::PI));
                }
                parse_var(&name)
                    .map(Expr::Var)
                    .ok_or(Error::UnknownIdentifier(name))
            }
            Some(_) => self.err("expected an operand"),
            None => self.err("unexpected end of input"),
        }
    }

    fn call(&mut self, name: &str, at: usize) -> Result<Expr> {
        match name {
            "exp" => Ok(Expr::Exp(Box::new(self.expr()?))),
            "sin" => Ok(Expr::Sin(Box::new(self.expr()?))),
            "cos" => Ok(Expr::Cos(Box::new(self.expr()?))),
            "flat_exp" => {
                let arg = self.expr()?;
                let order = if self.peek() == Some(&Tok::Comma) {
                    self.pos += 1;
                    let k = self.integer()?;
                    if k < 0 {
                        return self.err("flat_exp order must be nonnegative");
                    }
                    k as u32
                } else {
                    0
                };
                Ok(Expr::Flat(Box::new(arg), order))
            }
            "piecewise" => {
                let lhs = self.expr()?;
                let op = match self.peek() {
                    Some(Tok::Cmp(op)) => *op,
                    _ => return self.err("expected a comparison in piecewise guard"),
                };
                self.pos += 1;
                let rhs = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let a = self.expr()?;
                self.expect(Tok::Comma, "`,`")?;
                let b = self.expr()?;
                Ok(Expr::Piecewise(
                    Box::new(Cond { lhs, op, rhs }),
                    Box::new(a),
                    Box::new(b),
                ))
            }
            _ => Err(Error::Syntax {
                position: at,
                message: format!("unknown function `{name}`"),
            }),
        }
    }
}

fn parse_var(name: &str) -> Option<Var> {
    let mut chars = name.chars();
    let kind = match chars.next()? {
        'x' => VarKind::X,
        'y' => VarKind::Y,
        'p' => VarKind::P,
        'q' => VarKind::Q,
        _ => return None,
    };
    let rest = chars.as_str();
    let index = if rest.is_empty() {
        1
    } else {
        let i: u32 = rest.parse().ok()?;
        if i == 0 || rest.starts_with('0') {
            return None;
        }
        i
    };
    Some(Var { kind, index })
}

/// Parses an expression string into an AST.
pub fn parse(src: &str) -> Result<Expr> {
    let toks = lex(src)?;
    if toks.is_empty() {
        return Err(Error::Syntax {
            position: 0,
            message: "empty expression".into(),
        });
    }
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
    };
    let e = p.expr()?;
    if p.pos != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_is_a_syntax_error() {
        assert!(matches!(parse(""), Err(Error::Syntax { position: 0, .. })));
        assert!(matches!(parse("   "), Err(Error::Syntax { .. })));
    }

    #[test]
    fn reports_position() {
        match parse("x1 + * y1") {
            Err(Error::Syntax { position, .. }) => assert_eq!(position, 5),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_identifier() {
        assert_eq!(parse("x1 + z"), Err(Error::UnknownIdentifier("z".into())));
        assert!(matches!(parse("foo(x)"), Err(Error::Syntax { .. })));
    }

    #[test]
    fn precedence() {
        let e = parse("-x^2 + 2*y").unwrap();
        match e {
            Expr::Add(l, _) => assert!(matches!(*l, Expr::Neg(_))),
            _ => panic!(),
        }
        assert!(matches!(parse("x^-2").unwrap(), Expr::Pow(_, -2)));
        assert!(parse("x^1.5").is_err());
    }

    #[test]
    fn scientific_numbers() {
        assert_eq!(parse("1.5e-3").unwrap(), Expr::Const(1.5e-3));
        assert_eq!(parse("-2").unwrap(), Expr::Const(-2.0));
    }
}
