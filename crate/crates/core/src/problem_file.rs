//! Line-oriented problem files.
//!
//! ```text
//! # comment
//! order = 2
//! vars = u1, u2
//! delay a_half = proportional(1/2)
//! delay a1 = constant(1)
//! delay v = vary(exp(-t)/2)
//! eq u1'' = 2*u1@a_half*u2@a1 + u1'
//! eq u2'' = ...
//! init u1 = [0, 0]
//! phi u1 = 2*t^2
//! horizon = 2
//! taylor_order = 10
//! ```
//!
//! Header keys (`order`, `vars`, `delay`, `horizon`, `taylor_order`) are read
//! first, so lines may appear in any order.

use std::fmt;

use thiserror::Error;

use crate::expr::{parse_expression, Expr, ParseError, Symbols};
use crate::problem::{CauchyProblem, DelayKind, DelaySpec};

/// A problem-file error; `line` is 0 for a missing entry.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct FileError {
    pub line: usize,
    pub column: usize,
    pub kind: FileErrorKind,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FileErrorKind {
    Syntax(String),
    Expression(crate::expr::ParseErrorKind),
    UnknownKey(String),
    Duplicate(String),
    Missing(String),
    UnknownVariable(String),
    PrimeCount { found: usize, order: usize },
    NotConstant,
}

impl fmt::Display for FileError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.kind)
        } else {
            write!(
                f,
                "line {}, column {}: {}",
                self.line, self.column, self.kind
            )
        }
    }
}

impl fmt::Display for FileErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FileErrorKind::Syntax(msg) => f.write_str(msg),
            FileErrorKind::Expression(kind) => write!(f, "{kind}"),
            FileErrorKind::UnknownKey(k) => write!(f, "unknown key '{k}'"),
            FileErrorKind::Duplicate(k) => write!(f, "duplicate '{k}'"),
            FileErrorKind::Missing(k) => write!(f, "missing '{k}'"),
            FileErrorKind::UnknownVariable(v) => write!(f, "unknown variable '{v}'"),
            FileErrorKind::PrimeCount { found, order } => {
                write!(f, "equation has {found} primes but the order is {order}")
            }
            FileErrorKind::NotConstant => f.write_str("expected a constant"),
        }
    }
}

/// A piece of a line with its 1-based starting column.
#[derive(Clone, Copy)]
struct Span<'a> {
    text: &'a str,
    column: usize,
}

impl<'a> Span<'a> {
    fn trim(self) -> Span<'a> {
        let start = self.text.len() - self.text.trim_start().len();
        Span {
            text: self.text.trim(),
            column: self.column + self.text[..start].chars().count(),
        }
    }

    fn split_at(self, i: usize, skip: usize) -> (Span<'a>, Span<'a>) {
        let column = self.column + self.text[..i + skip].chars().count();
        (
            Span {
                text: &self.text[..i],
                column: self.column,
            },
            Span {
                text: &self.text[i + skip..],
                column,
            },
        )
    }
}

struct Line<'a> {
    number: usize,
    key: Span<'a>,
    /// Name after the key for `delay`, `eq`, `init` and `phi`.
    name: Option<Span<'a>>,
    value: Span<'a>,
}

impl Line<'_> {
    fn err(&self, span: Span<'_>, kind: FileErrorKind) -> FileError {
        FileError {
            line: self.number,
            column: span.column,
            kind,
        }
    }
}

fn split_line(number: usize, raw: &str) -> Result<Option<Line<'_>>, FileError> {
    let body = raw.split('#').next().unwrap_or("");
    let span = Span {
        text: body,
        column: 1,
    }
    .trim();
    if span.text.is_empty() {
        return Ok(None);
    }
    let Some(eq) = span.text.find('=') else {
        return Err(FileError {
            line: number,
            column: span.column,
            kind: FileErrorKind::Syntax("expected '='".into()),
        });
    };
    let (lhs, value) = span.split_at(eq, 1);
    let lhs = lhs.trim();
    let (key, name) = match lhs.text.find(char::is_whitespace) {
        Some(i) => {
            let (k, rest) = lhs.split_at(i, 0);
            (k, Some(rest.trim()))
        }
        None => (lhs, None),
    };
    Ok(Some(Line {
        number,
        key,
        name,
        value: value.trim(),
    }))
}

fn expression(line: &Line, span: Span, symbols: &Symbols) -> Result<Expr, FileError> {
    parse_expression(span.text, symbols).map_err(|e: ParseError| FileError {
        line: line.number,
        column: span.column + e.column - 1,
        kind: FileErrorKind::Expression(e.kind),
    })
}

fn constant(line: &Line, span: Span) -> Result<f64, FileError> {
    match expression(line, span, &Symbols::time_only())? {
        Expr::Const(c) => Ok(c),
        _ => Err(line.err(span, FileErrorKind::NotConstant)),
    }
}

/// Contents of `head(...)`.
fn call<'a>(line: &Line, span: Span<'a>, head: &str) -> Result<Option<Span<'a>>, FileError> {
    let Some(rest) = span.text.strip_prefix(head) else {
        return Ok(None);
    };
    let rest_span = Span {
        text: rest,
        column: span.column + head.len(),
    }
    .trim();
    if !rest_span.text.starts_with('(')
        || !rest_span.text.ends_with(')')
        || rest_span.text.len() < 2
    {
        return Err(line.err(span, FileErrorKind::Syntax(format!("expected {head}(...)"))));
    }
    let inner = &rest_span.text[1..rest_span.text.len() - 1];
    Ok(Some(Span {
        text: inner,
        column: rest_span.column + 1,
    }))
}

fn set_once<T>(slot: &mut Option<T>, value: T, line: &Line, key: &str) -> Result<(), FileError> {
    if slot.is_some() {
        return Err(line.err(line.key, FileErrorKind::Duplicate(key.into())));
    }
    *slot = Some(value);
    Ok(())
}

fn required_name<'a>(line: &Line<'a>) -> Result<Span<'a>, FileError> {
    line.name.filter(|n| !n.text.is_empty()).ok_or_else(|| {
        line.err(
            line.key,
            FileErrorKind::Syntax(format!("'{}' needs a name", line.key.text)),
        )
    })
}

fn missing(key: &str) -> FileError {
    FileError {
        line: 0,
        column: 0,
        kind: FileErrorKind::Missing(key.into()),
    }
}

/// Parses a problem file. Semantic checks (delay ranges, initial functions)
/// are left to [`CauchyProblem::validate`].
pub fn parse_problem(text: &str) -> Result<CauchyProblem, FileError> {
    let lines = text
        .lines()
        .enumerate()
        .map(|(i, raw)| split_line(i + 1, raw))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();

    let mut order = None;
    let mut vars: Option<Vec<String>> = None;
    let mut delays: Vec<DelaySpec> = Vec::new();
    let mut horizon = None;
    let mut trunc = None;
    for line in &lines {
        match line.key.text {
            "order" | "taylor_order" => {
                let v: usize = line.value.text.parse().map_err(|_| {
                    line.err(
                        line.value,
                        FileErrorKind::Syntax("expected a non-negative integer".into()),
                    )
                })?;
                let slot = if line.key.text == "order" {
                    &mut order
                } else {
                    &mut trunc
                };
                set_once(slot, v, line, line.key.text)?;
            }
            "horizon" => set_once(&mut horizon, constant(line, line.value)?, line, "horizon")?,
            "vars" => {
                let names: Vec<String> = line
                    .value
                    .text
                    .split(',')
                    .map(|s| s.trim().to_string())
                    .collect();
                for name in &names {
                    let ok = name
                        .chars()
                        .next()
                        .is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
                        && !matches!(name.as_str(), "t" | "exp" | "ln" | "sin" | "cos");
                    if !ok {
                        return Err(line.err(
                            line.value,
                            FileErrorKind::Syntax(format!("invalid variable name '{name}'")),
                        ));
                    }
                    if names.iter().filter(|n| *n == name).count() > 1 {
                        return Err(line.err(line.value, FileErrorKind::Duplicate(name.clone())));
                    }
                }
                set_once(&mut vars, names, line, "vars")?;
            }
            "delay" => {
                let name = required_name(line)?;
                if delays.iter().any(|d| d.name == name.text) {
                    return Err(line.err(name, FileErrorKind::Duplicate(name.text.into())));
                }
                let kind = if let Some(arg) = call(line, line.value, "constant")? {
                    DelayKind::Constant(constant(line, arg)?)
                } else if let Some(arg) = call(line, line.value, "proportional")? {
                    DelayKind::Proportional(constant(line, arg)?)
                } else if let Some(arg) = call(line, line.value, "vary")? {
                    DelayKind::TimeDependent(expression(line, arg, &Symbols::time_only())?)
                } else {
                    return Err(line.err(
                        line.value,
                        FileErrorKind::Syntax(
                            "expected constant(..), proportional(..) or vary(..)".into(),
                        ),
                    ));
                };
                delays.push(DelaySpec::new(name.text, kind));
            }
            "eq" | "init" | "phi" => {}
            other => return Err(line.err(line.key, FileErrorKind::UnknownKey(other.into()))),
        }
    }
    let order = order.ok_or_else(|| missing("order"))?;
    let vars = vars.ok_or_else(|| missing("vars"))?;
    let horizon = horizon.ok_or_else(|| missing("horizon"))?;
    let trunc = trunc.ok_or_else(|| missing("taylor_order"))?;
    let symbols = Symbols::new(
        vars.clone(),
        delays.iter().map(|d| d.name.clone()).collect(),
        order,
    );

    let p = vars.len();
    let mut equations: Vec<Option<Expr>> = vec![None; p];
    let mut init: Vec<Option<Vec<f64>>> = vec![None; p];
    let mut phi: Vec<Option<Expr>> = vec![None; p];
    for line in &lines {
        let key = line.key.text;
        if !matches!(key, "eq" | "init" | "phi") {
            continue;
        }
        let name = required_name(line)?;
        let base = name.text.trim_end_matches('\'');
        let primes = name.text.len() - base.len();
        let var = symbols
            .var_index(base)
            .ok_or_else(|| line.err(name, FileErrorKind::UnknownVariable(base.into())))?;
        match key {
            "eq" => {
                if primes != order {
                    return Err(line.err(
                        name,
                        FileErrorKind::PrimeCount {
                            found: primes,
                            order,
                        },
                    ));
                }
                let e = expression(line, line.value, &symbols)?;
                set_once(&mut equations[var], e, line, &format!("eq {base}"))?;
            }
            _ if primes > 0 => {
                return Err(line.err(
                    name,
                    FileErrorKind::Syntax(format!("'{key}' takes a plain variable name")),
                ))
            }
            "init" => {
                let v = line.value;
                if !v.text.starts_with('[') || !v.text.ends_with(']') || v.text.len() < 2 {
                    return Err(line.err(v, FileErrorKind::Syntax("expected [v0, v1, ...]".into())));
                }
                let inner = Span {
                    text: &v.text[1..v.text.len() - 1],
                    column: v.column + 1,
                };
                let mut values = Vec::new();
                if !inner.text.trim().is_empty() {
                    let mut rest = inner;
                    loop {
                        match rest.text.find(',') {
                            Some(i) => {
                                let (item, tail) = rest.split_at(i, 1);
                                values.push(constant(line, item.trim())?);
                                rest = tail;
                            }
                            None => {
                                values.push(constant(line, rest.trim())?);
                                break;
                            }
                        }
                    }
                }
                set_once(&mut init[var], values, line, &format!("init {base}"))?;
            }
            _ => {
                let e = expression(line, line.value, &Symbols::time_only())?;
                set_once(&mut phi[var], e, line, &format!("phi {base}"))?;
            }
        }
    }

    let equations = equations
        .into_iter()
        .zip(&vars)
        .map(|(e, v)| e.ok_or_else(|| missing(&format!("eq {v}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let init = init
        .into_iter()
        .zip(&vars)
        .map(|(e, v)| e.ok_or_else(|| missing(&format!("init {v}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let phi = if phi.iter().all(Option::is_none) {
        None
    } else {
        Some(
            phi.into_iter()
                .zip(&vars)
                .map(|(e, v)| e.ok_or_else(|| missing(&format!("phi {v}"))))
                .collect::<Result<Vec<_>, _>>()?,
        )
    };

    Ok(CauchyProblem {
        order,
        vars,
        equations,
        delays,
        phi,
        init,
        horizon,
        trunc_order: trunc,
    })
}
