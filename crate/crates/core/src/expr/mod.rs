//! Right-hand side expressions, initial functions and delay laws.
//!
//! Expressions are parsed from a small text language (see [`parse_expression`])
//! against a [`Symbols`] table naming the state variables and delays. State
//! references carry 0-based indices into that table.

mod analyze;
mod eval;
mod parser;

use std::fmt;

use crate::series::{Elementary, Series};

pub use analyze::{analyze, AnalyzeError, DelayUsage, StructureReport};
pub use eval::{eval_scalar, eval_series, EvalError, NoState, ScalarEnv, SeriesEnv};
pub use parser::{parse_expression, ParseError, ParseErrorKind};

/// Elementary functions available in the expression language.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Exp,
    Ln,
    Sin,
    Cos,
}

impl Func {
    pub fn name(self) -> &'static str {
        match self {
            Func::Exp => "exp",
            Func::Ln => "ln",
            Func::Sin => "sin",
            Func::Cos => "cos",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        match name {
            "exp" => Some(Func::Exp),
            "ln" => Some(Func::Ln),
            "sin" => Some(Func::Sin),
            "cos" => Some(Func::Cos),
            _ => None,
        }
    }

    pub fn elementary(self) -> Elementary {
        match self {
            Func::Exp => Elementary::Exp,
            Func::Ln => Elementary::Ln,
            Func::Sin => Elementary::Sin,
            Func::Cos => Elementary::Cos,
        }
    }
}

/// Reference to `u_var^{(deriv)}` evaluated at `t` or at a delayed argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StateRef {
    /// 0-based variable index.
    pub var: usize,
    pub deriv: usize,
    /// 0-based delay index, `None` for the undelayed value.
    pub delay: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Time,
    State(StateRef),
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Neg(Box<Expr>),
    /// Power with a literal real exponent.
    Pow(Box<Expr>, f64),
    Func(Func, Box<Expr>),
    /// A term already known as a Taylor series; produced by history substitution.
    Known(Series),
}

impl Expr {
    pub fn state(var: usize, deriv: usize, delay: Option<usize>) -> Expr {
        Expr::State(StateRef { var, deriv, delay })
    }

    /// Visits every node in prefix order.
    pub fn walk<'a>(&'a self, visit: &mut impl FnMut(&'a Expr)) {
        visit(self);
        match self {
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => {
                a.walk(visit);
                b.walk(visit);
            }
            Expr::Neg(a) | Expr::Pow(a, _) | Expr::Func(_, a) => a.walk(visit),
            Expr::Const(_) | Expr::Time | Expr::State(_) | Expr::Known(_) => {}
        }
    }

    /// All state references, in left-to-right order.
    pub fn state_refs(&self) -> Vec<StateRef> {
        let mut out = Vec::new();
        self.walk(&mut |e| {
            if let Expr::State(r) = e {
                out.push(*r);
            }
        });
        out
    }

    pub fn has_state(&self) -> bool {
        let mut found = false;
        self.walk(&mut |e| found |= matches!(e, Expr::State(_)));
        found
    }

    /// Rebuilds the tree, replacing each state reference by `f(r)`.
    pub fn map_states<E>(
        &self,
        f: &mut impl FnMut(&StateRef) -> Result<Expr, E>,
    ) -> Result<Expr, E> {
        Ok(match self {
            Expr::State(r) => f(r)?,
            Expr::Add(a, b) => Expr::Add(Box::new(a.map_states(f)?), Box::new(b.map_states(f)?)),
            Expr::Sub(a, b) => Expr::Sub(Box::new(a.map_states(f)?), Box::new(b.map_states(f)?)),
            Expr::Mul(a, b) => Expr::Mul(Box::new(a.map_states(f)?), Box::new(b.map_states(f)?)),
            Expr::Div(a, b) => Expr::Div(Box::new(a.map_states(f)?), Box::new(b.map_states(f)?)),
            Expr::Neg(a) => Expr::Neg(Box::new(a.map_states(f)?)),
            Expr::Pow(a, p) => Expr::Pow(Box::new(a.map_states(f)?), *p),
            Expr::Func(g, a) => Expr::Func(*g, Box::new(a.map_states(f)?)),
            Expr::Const(_) | Expr::Time | Expr::Known(_) => self.clone(),
        })
    }

    /// Pretty-prints in the text syntax, resolving names through `symbols`.
    pub fn display<'a>(&'a self, symbols: &'a Symbols) -> DisplayExpr<'a> {
        DisplayExpr {
            expr: self,
            symbols,
        }
    }
}

/// Names visible to the parser and printer.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Symbols {
    pub vars: Vec<String>,
    pub delays: Vec<String>,
    /// Equation order `n`; at most `n` primes are accepted on a reference.
    pub order: usize,
}

impl Symbols {
    pub fn new(vars: Vec<String>, delays: Vec<String>, order: usize) -> Self {
        Symbols {
            vars,
            delays,
            order,
        }
    }

    /// Symbols for expressions in `t` only.
    pub fn time_only() -> Self {
        Symbols::default()
    }

    pub fn var_index(&self, name: &str) -> Option<usize> {
        self.vars.iter().position(|v| v == name)
    }

    pub fn delay_index(&self, name: &str) -> Option<usize> {
        self.delays.iter().position(|v| v == name)
    }

    /// `u2'''@a1` style rendering of a reference.
    pub fn ref_name(&self, r: &StateRef) -> String {
        let mut s = self
            .vars
            .get(r.var)
            .cloned()
            .unwrap_or_else(|| format!("#{}", r.var + 1));
        s.extend(std::iter::repeat_n('\'', r.deriv));
        if let Some(d) = r.delay {
            s.push('@');
            s.push_str(self.delays.get(d).map(String::as_str).unwrap_or("?"));
        }
        s
    }
}

pub struct DisplayExpr<'a> {
    expr: &'a Expr,
    symbols: &'a Symbols,
}

fn fmt_real(f: &mut fmt::Formatter<'_>, v: f64) -> fmt::Result {
    if v < 0.0 {
        write!(f, "(-{})", -v)
    } else {
        write!(f, "{v}")
    }
}

impl fmt::Display for DisplayExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self.expr, self.symbols)
    }
}

fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, sy: &Symbols) -> fmt::Result {
    let bin = |f: &mut fmt::Formatter<'_>, a: &Expr, op: &str, b: &Expr| {
        f.write_str("(")?;
        write_expr(f, a, sy)?;
        write!(f, " {op} ")?;
        write_expr(f, b, sy)?;
        f.write_str(")")
    };
    match e {
        Expr::Const(c) => fmt_real(f, *c),
        Expr::Time => f.write_str("t"),
        Expr::State(r) => f.write_str(&sy.ref_name(r)),
        Expr::Add(a, b) => bin(f, a, "+", b),
        Expr::Sub(a, b) => bin(f, a, "-", b),
        Expr::Mul(a, b) => bin(f, a, "*", b),
        Expr::Div(a, b) => bin(f, a, "/", b),
        Expr::Neg(a) => {
            f.write_str("(-")?;
            write_expr(f, a, sy)?;
            f.write_str(")")
        }
        Expr::Pow(a, p) => {
            if matches!(**a, Expr::Pow(..)) {
                f.write_str("(")?;
                write_expr(f, a, sy)?;
                f.write_str(")")?;
            } else {
                write_expr(f, a, sy)?;
            }
            if *p < 0.0 {
                write!(f, "^(-{})", -p)
            } else {
                write!(f, "^({p})")
            }
        }
        Expr::Func(g, a) => {
            write!(f, "{}(", g.name())?;
            write_expr(f, a, sy)?;
            f.write_str(")")
        }
        Expr::Known(s) => write!(f, "<series {s}>"),
    }
}
