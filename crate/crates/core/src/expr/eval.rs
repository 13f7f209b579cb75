use thiserror::Error;

use super::{Expr, Func, StateRef};
use crate::series::{Elementary, Series, SeriesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error("state reference (variable {}, derivative {}, delay {:?}) has no value here", .0.var + 1, .0.deriv, .0.delay)]
    UnboundState(StateRef),
    #[error("known series of order {have} is too short for order {need}")]
    KnownTooShort { have: usize, need: usize },
    #[error("{func} is undefined at {value}")]
    Domain { func: String, value: f64 },
}

/// Supplies series values for state references.
pub trait SeriesEnv {
    fn state(&self, r: &StateRef, order: usize) -> Result<Series, EvalError>;
}

impl<F> SeriesEnv for F
where
    F: Fn(&StateRef, usize) -> Result<Series, EvalError>,
{
    fn state(&self, r: &StateRef, order: usize) -> Result<Series, EvalError> {
        self(r, order)
    }
}

/// Supplies scalar values for state references.
pub trait ScalarEnv {
    fn state_at(&self, r: &StateRef) -> Result<f64, EvalError>;
}

/// Environment for expressions in `t` only.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoState;

impl SeriesEnv for NoState {
    fn state(&self, r: &StateRef, _order: usize) -> Result<Series, EvalError> {
        Err(EvalError::UnboundState(*r))
    }
}

impl ScalarEnv for NoState {
    fn state_at(&self, r: &StateRef) -> Result<f64, EvalError> {
        Err(EvalError::UnboundState(*r))
    }
}

/// Evaluates `expr` over series arithmetic. `time` is the series that `t`
/// stands for and fixes the truncation order of the result.
pub fn eval_series(expr: &Expr, time: &Series, env: &impl SeriesEnv) -> Result<Series, EvalError> {
    let order = time.order();
    let go = |e: &Expr| eval_series(e, time, env);
    Ok(match expr {
        Expr::Const(c) => Series::constant(*c, order),
        Expr::Time => time.clone(),
        Expr::State(r) => {
            let s = env.state(r, order)?;
            if s.order() != order {
                return Err(SeriesError::OrderMismatch {
                    left: s.order(),
                    right: order,
                }
                .into());
            }
            s
        }
        Expr::Add(a, b) => go(a)?.add(&go(b)?)?,
        Expr::Sub(a, b) => go(a)?.sub(&go(b)?)?,
        Expr::Mul(a, b) => go(a)?.mul(&go(b)?)?,
        Expr::Div(a, b) => go(a)?.div(&go(b)?)?,
        Expr::Neg(a) => go(a)?.neg(),
        Expr::Pow(a, p) => go(a)?.compose_elementary(Elementary::Pow(*p))?,
        Expr::Func(f, a) => go(a)?.compose_elementary(f.elementary())?,
        Expr::Known(s) => {
            if s.order() < order {
                return Err(EvalError::KnownTooShort {
                    have: s.order(),
                    need: order,
                });
            }
            s.truncate(order)?
        }
    })
}

fn domain(func: impl Into<String>, value: f64) -> EvalError {
    EvalError::Domain {
        func: func.into(),
        value,
    }
}

/// Pointwise evaluation at time `t`.
pub fn eval_scalar(expr: &Expr, t: f64, env: &impl ScalarEnv) -> Result<f64, EvalError> {
    let go = |e: &Expr| eval_scalar(e, t, env);
    let v = match expr {
        Expr::Const(c) => *c,
        Expr::Time => t,
        Expr::State(r) => env.state_at(r)?,
        Expr::Add(a, b) => go(a)? + go(b)?,
        Expr::Sub(a, b) => go(a)? - go(b)?,
        Expr::Mul(a, b) => go(a)? * go(b)?,
        Expr::Div(a, b) => {
            let d = go(b)?;
            if d == 0.0 {
                return Err(domain("division", d));
            }
            go(a)? / d
        }
        Expr::Neg(a) => -go(a)?,
        Expr::Pow(a, p) => {
            let base = go(a)?;
            if p.fract() == 0.0 && p.abs() <= i32::MAX as f64 {
                if base == 0.0 && *p < 0.0 {
                    return Err(domain(format!("pow({p})"), base));
                }
                base.powi(*p as i32)
            } else {
                if base < 0.0 || (base == 0.0 && *p < 0.0) {
                    return Err(domain(format!("pow({p})"), base));
                }
                base.powf(*p)
            }
        }
        Expr::Func(f, a) => {
            let x = go(a)?;
            match f {
                Func::Exp => x.exp(),
                Func::Ln => {
                    if x <= 0.0 {
                        return Err(domain("ln", x));
                    }
                    x.ln()
                }
                Func::Sin => x.sin(),
                Func::Cos => x.cos(),
            }
        }
        Expr::Known(s) => s.evaluate(t),
    };
    if !v.is_finite() {
        return Err(domain("evaluation", v));
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, Symbols};
    use approx::assert_abs_diff_eq;

    #[test]
    fn time_series_matches_pointwise() {
        let e =
            parse_expression("exp(-t)/2 + sin(t)*t^2 - ln(1+t)", &Symbols::time_only()).unwrap();
        let s = eval_series(&e, &Series::monomial(1, 40), &NoState).unwrap();
        for &t in &[0.0, 0.1, 0.25, 0.4] {
            let direct = eval_scalar(&e, t, &NoState).unwrap();
            assert_abs_diff_eq!(s.evaluate(t), direct, epsilon = 1e-12);
        }
    }

    #[test]
    fn state_lookups_go_through_env() {
        let sy = Symbols::new(vec!["u".into()], vec![], 1);
        let e = parse_expression("u * t", &sy).unwrap();
        assert!(matches!(
            eval_series(&e, &Series::monomial(1, 3), &NoState),
            Err(EvalError::UnboundState(_))
        ));
        let env = |_: &StateRef, order: usize| Ok(Series::constant(2.0, order));
        let s = eval_series(&e, &Series::monomial(1, 3), &env).unwrap();
        assert_eq!(s.coeffs(), &[0.0, 2.0, 0.0, 0.0]);
    }

    #[test]
    fn scalar_domain_errors() {
        let sy = Symbols::time_only();
        for text in ["ln(t - 1)", "1/(t-0.5)", "(t-1)^(0.5)"] {
            let e = parse_expression(text, &sy).unwrap();
            assert!(
                matches!(
                    eval_scalar(&e, 0.5, &NoState),
                    Err(EvalError::Domain { .. })
                ),
                "{text}"
            );
        }
    }

    #[test]
    fn known_leaf_truncates() {
        let k = Expr::Known(Series::exp_linear(1.0, 6));
        let s = eval_series(&k, &Series::monomial(1, 3), &NoState).unwrap();
        assert_eq!(s.order(), 3);
        assert!(matches!(
            eval_series(&k, &Series::monomial(1, 9), &NoState),
            Err(EvalError::KnownTooShort { have: 6, need: 9 })
        ));
    }
}
