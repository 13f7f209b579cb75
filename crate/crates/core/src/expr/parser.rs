//! Recursive-descent parser for the expression language.
//!
//! ```text
//! expr     := term (('+'|'-') term)*
//! term     := factor (('*'|'/') factor)*
//! factor   := ('-')? power
//! power    := atom ('^' exponent)?
//! exponent := number | '(' '-'? number ('/' number)? ')'
//! atom     := number | 't' | funcall | stateref | '(' expr ')'
//! funcall  := ('exp'|'ln'|'sin'|'cos') '(' expr ')'
//! stateref := ident prime* ('@' ident)?
//! ```
//!
//! Operations on two constants are folded while parsing, so `5/2*t` yields
//! `Mul(Const(2.5), Time)`.

use std::fmt;

use thiserror::Error;

use super::{Expr, Func, StateRef, Symbols};

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{line}:{column}: {kind}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ParseErrorKind {
    UnexpectedChar(char),
    UnexpectedToken {
        found: String,
        expected: &'static str,
    },
    UnexpectedEnd {
        expected: &'static str,
    },
    UnknownIdentifier(String),
    UnknownDelay(String),
    TooManyPrimes {
        name: String,
        primes: usize,
        max: usize,
    },
    InvalidNumber(String),
    NonFiniteConstant,
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ParseErrorKind::UnexpectedChar(c) => write!(f, "unexpected character '{c}'"),
            ParseErrorKind::UnexpectedToken { found, expected } => {
                write!(f, "expected {expected}, found '{found}'")
            }
            ParseErrorKind::UnexpectedEnd { expected } => {
                write!(f, "expected {expected}, found end of input")
            }
            ParseErrorKind::UnknownIdentifier(name) => write!(f, "unknown identifier '{name}'"),
            ParseErrorKind::UnknownDelay(name) => write!(f, "unknown delay '{name}'"),
            ParseErrorKind::TooManyPrimes { name, primes, max } => write!(
                f,
                "'{name}' has {primes} primes but the equation order allows at most {max}"
            ),
            ParseErrorKind::InvalidNumber(s) => write!(f, "invalid number '{s}'"),
            ParseErrorKind::NonFiniteConstant => f.write_str("constant expression is not finite"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Prime,
    At,
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(v) => write!(f, "{v}"),
            Tok::Ident(s) => f.write_str(s),
            Tok::Prime => f.write_str("'"),
            Tok::At => f.write_str("@"),
            Tok::Plus => f.write_str("+"),
            Tok::Minus => f.write_str("-"),
            Tok::Star => f.write_str("*"),
            Tok::Slash => f.write_str("/"),
            Tok::Caret => f.write_str("^"),
            Tok::LParen => f.write_str("("),
            Tok::RParen => f.write_str(")"),
        }
    }
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    column: usize,
    /// No whitespace between this token and the previous one.
    glued: bool,
}

fn lex(text: &str) -> Result<Vec<Spanned>, ParseError> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let (mut line, mut column) = (1, 1);
    let mut i = 0;
    let mut glued = false;
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            line += 1;
            column = 1;
            i += 1;
            glued = false;
            continue;
        }
        if c.is_whitespace() {
            i += 1;
            column += 1;
            glued = false;
            continue;
        }
        let start = (line, column);
        let (tok, len) = if c.is_ascii_digit() || c == '.' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_digit() || chars[j] == '.') {
                j += 1;
            }
            if j < chars.len() && (chars[j] == 'e' || chars[j] == 'E') {
                let mut k = j + 1;
                if k < chars.len() && (chars[k] == '+' || chars[k] == '-') {
                    k += 1;
                }
                if k < chars.len() && chars[k].is_ascii_digit() {
                    while k < chars.len() && chars[k].is_ascii_digit() {
                        k += 1;
                    }
                    j = k;
                }
            }
            let s: String = chars[i..j].iter().collect();
            let v: f64 = s.parse().map_err(|_| ParseError {
                line: start.0,
                column: start.1,
                kind: ParseErrorKind::InvalidNumber(s.clone()),
            })?;
            (Tok::Num(v), j - i)
        } else if c.is_ascii_alphabetic() || c == '_' {
            let mut j = i;
            while j < chars.len() && (chars[j].is_ascii_alphanumeric() || chars[j] == '_') {
                j += 1;
            }
            (Tok::Ident(chars[i..j].iter().collect()), j - i)
        } else {
            let tok = match c {
                '\'' => Tok::Prime,
                '@' => Tok::At,
                '+' => Tok::Plus,
                '-' => Tok::Minus,
                '*' => Tok::Star,
                '/' => Tok::Slash,
                '^' => Tok::Caret,
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                other => {
                    return Err(ParseError {
                        line,
                        column,
                        kind: ParseErrorKind::UnexpectedChar(other),
                    })
                }
            };
            (tok, 1)
        };
        out.push(Spanned {
            tok,
            line: start.0,
            column: start.1,
            glued,
        });
        glued = true;
        i += len;
        column += len;
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    pos: usize,
    symbols: &'a Symbols,
    end: (usize, usize),
}

/// Parses `text` against the names in `symbols`.
pub fn parse_expression(text: &str, symbols: &Symbols) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    let end = text
        .lines()
        .enumerate()
        .last()
        .map_or((1, 1), |(i, l)| (i + 1, l.chars().count() + 1));
    let mut p = Parser {
        toks,
        pos: 0,
        symbols,
        end,
    };
    let e = p.expr()?;
    if let Some(t) = p.peek() {
        return Err(p.error_at(
            t,
            ParseErrorKind::UnexpectedToken {
                found: t.tok.to_string(),
                expected: "operator or end of expression",
            },
        ));
    }
    Ok(e)
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Spanned> {
        self.toks.get(self.pos)
    }

    fn peek_tok(&self) -> Option<&Tok> {
        self.peek().map(|s| &s.tok)
    }

    fn error_at(&self, t: &Spanned, kind: ParseErrorKind) -> ParseError {
        ParseError {
            line: t.line,
            column: t.column,
            kind,
        }
    }

    fn next(&mut self, expected: &'static str) -> Result<Spanned, ParseError> {
        match self.toks.get(self.pos) {
            Some(t) => {
                self.pos += 1;
                Ok(t.clone())
            }
            None => Err(ParseError {
                line: self.end.0,
                column: self.end.1,
                kind: ParseErrorKind::UnexpectedEnd { expected },
            }),
        }
    }

    fn expect(&mut self, tok: Tok, expected: &'static str) -> Result<Spanned, ParseError> {
        let t = self.next(expected)?;
        if t.tok != tok {
            return Err(self.error_at(
                &t,
                ParseErrorKind::UnexpectedToken {
                    found: t.tok.to_string(),
                    expected,
                },
            ));
        }
        Ok(t)
    }

    fn expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.term()?;
        while let Some(op) = self.peek_tok().cloned() {
            if op != Tok::Plus && op != Tok::Minus {
                break;
            }
            let at = self.next("operator")?;
            let rhs = self.term()?;
            lhs = fold(if op == Tok::Plus {
                Expr::Add(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Sub(Box::new(lhs), Box::new(rhs))
            })
            .map_err(|k| self.error_at(&at, k))?;
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.factor()?;
        while let Some(op) = self.peek_tok().cloned() {
            if op != Tok::Star && op != Tok::Slash {
                break;
            }
            let at = self.next("operator")?;
            let rhs = self.factor()?;
            lhs = fold(if op == Tok::Star {
                Expr::Mul(Box::new(lhs), Box::new(rhs))
            } else {
                Expr::Div(Box::new(lhs), Box::new(rhs))
            })
            .map_err(|k| self.error_at(&at, k))?;
        }
        Ok(lhs)
    }

    fn factor(&mut self) -> Result<Expr, ParseError> {
        if self.peek_tok() == Some(&Tok::Minus) {
            let at = self.next("'-'")?;
            let inner = self.power()?;
            return fold(Expr::Neg(Box::new(inner))).map_err(|k| self.error_at(&at, k));
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr, ParseError> {
        let base = self.atom()?;
        if self.peek_tok() == Some(&Tok::Caret) {
            let at = self.next("'^'")?;
            let exponent = self.exponent()?;
            return fold(Expr::Pow(Box::new(base), exponent)).map_err(|k| self.error_at(&at, k));
        }
        Ok(base)
    }

    fn number(&mut self) -> Result<f64, ParseError> {
        let t = self.next("number")?;
        match &t.tok {
            Tok::Num(v) => Ok(*v),
            other => Err(self.error_at(
                &t,
                ParseErrorKind::UnexpectedToken {
                    found: other.to_string(),
                    expected: "number",
                },
            )),
        }
    }

    fn exponent(&mut self) -> Result<f64, ParseError> {
        if self.peek_tok() != Some(&Tok::LParen) {
            return self.number();
        }
        let open = self.next("'('")?;
        let sign = if self.peek_tok() == Some(&Tok::Minus) {
            self.pos += 1;
            -1.0
        } else {
            1.0
        };
        let mut value = sign * self.number()?;
        if self.peek_tok() == Some(&Tok::Slash) {
            self.pos += 1;
            value /= self.number()?;
        }
        self.expect(Tok::RParen, "')' closing the exponent")?;
        if !value.is_finite() {
            return Err(self.error_at(&open, ParseErrorKind::NonFiniteConstant));
        }
        Ok(value)
    }

    fn atom(&mut self) -> Result<Expr, ParseError> {
        let t = self.next("number, 't', function call, variable or '('")?;
        match t.tok.clone() {
            Tok::Num(v) => Ok(Expr::Const(v)),
            Tok::LParen => {
                let e = self.expr()?;
                self.expect(Tok::RParen, "')'")?;
                Ok(e)
            }
            Tok::Ident(name) if name == "t" => Ok(Expr::Time),
            Tok::Ident(name) => {
                if let Some(func) = Func::from_name(&name) {
                    self.expect(Tok::LParen, "'(' after function name")?;
                    let arg = self.expr()?;
                    self.expect(Tok::RParen, "')' closing the function call")?;
                    return fold(Expr::Func(func, Box::new(arg))).map_err(|k| self.error_at(&t, k));
                }
                self.state_ref(&t, name)
            }
            other => Err(self.error_at(
                &t,
                ParseErrorKind::UnexpectedToken {
                    found: other.to_string(),
                    expected: "number, 't', function call, variable or '('",
                },
            )),
        }
    }

    fn state_ref(&mut self, at: &Spanned, name: String) -> Result<Expr, ParseError> {
        let var = self
            .symbols
            .var_index(&name)
            .ok_or_else(|| self.error_at(at, ParseErrorKind::UnknownIdentifier(name.clone())))?;
        let mut primes = 0;
        while matches!(self.peek(), Some(s) if s.tok == Tok::Prime && s.glued) {
            self.pos += 1;
            primes += 1;
        }
        if primes > self.symbols.order {
            return Err(self.error_at(
                at,
                ParseErrorKind::TooManyPrimes {
                    name,
                    primes,
                    max: self.symbols.order,
                },
            ));
        }
        let mut delay = None;
        if self.peek_tok() == Some(&Tok::At) {
            self.pos += 1;
            let d = self.next("delay name after '@'")?;
            let Tok::Ident(dname) = d.tok.clone() else {
                return Err(self.error_at(
                    &d,
                    ParseErrorKind::UnexpectedToken {
                        found: d.tok.to_string(),
                        expected: "delay name after '@'",
                    },
                ));
            };
            delay = Some(
                self.symbols
                    .delay_index(&dname)
                    .ok_or_else(|| self.error_at(&d, ParseErrorKind::UnknownDelay(dname)))?,
            );
        }
        Ok(Expr::State(StateRef {
            var,
            deriv: primes,
            delay,
        }))
    }
}

fn finite(v: f64) -> Result<Expr, ParseErrorKind> {
    if v.is_finite() {
        Ok(Expr::Const(v))
    } else {
        Err(ParseErrorKind::NonFiniteConstant)
    }
}

fn fold(e: Expr) -> Result<Expr, ParseErrorKind> {
    use Expr::*;
    match &e {
        Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b) => {
            if let (Const(x), Const(y)) = (&**a, &**b) {
                let v = match e {
                    Add(..) => x + y,
                    Sub(..) => x - y,
                    Mul(..) => x * y,
                    _ => x / y,
                };
                return finite(v);
            }
            Ok(e)
        }
        Neg(a) => match **a {
            Const(x) => Ok(Const(-x)),
            _ => Ok(e),
        },
        Pow(a, p) => match **a {
            Const(x) => finite(if p.fract() == 0.0 && p.abs() < 1024.0 {
                x.powi(*p as i32)
            } else {
                x.powf(*p)
            }),
            _ => Ok(e),
        },
        Func(f, a) => match **a {
            Const(x) => finite(match f {
                super::Func::Exp => x.exp(),
                super::Func::Ln => x.ln(),
                super::Func::Sin => x.sin(),
                super::Func::Cos => x.cos(),
            }),
            _ => Ok(e),
        },
        _ => Ok(e),
    }
}
