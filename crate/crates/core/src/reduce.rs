//! Method of steps on the first interval.
//!
//! Every state reference at a constant or time-dependent delay reads the
//! initial function while `t ∈ [0, t_α]`, so it is replaced by the Taylor
//! series of `φ_j^{(d)}(α(t))` about 0. What remains references the unknowns
//! only at `t` or at proportional delays.

use thiserror::Error;

use crate::expr::{eval_series, EvalError, Expr, NoState, StateRef};
use crate::problem::{
    compute_validity, CauchyProblem, DelayKind, DelaySpec, ProblemError, ValidityInterval,
};
use crate::series::{Series, SeriesError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReduceError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("delay {0} is proportional and has no history argument")]
    Proportional(String),
    #[error("no initial function for variable {var}")]
    MissingPhi { var: usize },
    #[error("expanding the delayed argument of {delay}: {source}")]
    DelayArgument {
        delay: String,
        #[source]
        source: EvalError,
    },
    #[error("expanding the initial function of variable {var} about {center}: {source}")]
    History {
        var: usize,
        center: f64,
        #[source]
        source: EvalError,
    },
}

/// A system whose delayed terms are all proportional; former history terms
/// are [`Expr::Known`] leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedSystem {
    pub order: usize,
    pub vars: Vec<String>,
    /// Declared delays; equations only reference the proportional ones.
    pub delays: Vec<DelaySpec>,
    pub equations: Vec<Expr>,
    pub init: Vec<Vec<f64>>,
    pub trunc_order: usize,
    pub validity: ValidityInterval,
}

impl ReducedSystem {
    pub fn dimension(&self) -> usize {
        self.vars.len()
    }

    /// Order to which history series are expanded.
    pub fn history_order(&self) -> usize {
        self.trunc_order + self.order
    }

    /// Proportional factor of a reference, or `None` for an undelayed one.
    pub fn proportional_factor(&self, r: &StateRef) -> Option<f64> {
        r.delay.and_then(|d| match self.delays[d].kind {
            DelayKind::Proportional(q) => Some(q),
            _ => None,
        })
    }

    /// References to `u_j^{(n)}` at proportional delays in equation `j`.
    pub fn neutral_refs(&self, j: usize) -> Vec<StateRef> {
        self.equations[j]
            .state_refs()
            .into_iter()
            .filter(|r| r.deriv == self.order && r.delay.is_some())
            .collect()
    }

    pub fn has_neutral_terms(&self) -> bool {
        (0..self.dimension()).any(|j| !self.neutral_refs(j).is_empty())
    }
}

/// Taylor series of `α(t) = t - τ(t)` about 0.
pub fn delay_argument_series(delay: &DelaySpec, order: usize) -> Result<Series, ReduceError> {
    let t = Series::monomial(1, order);
    match &delay.kind {
        DelayKind::Constant(tau) => Ok(t.sub(&Series::constant(*tau, order)).expect("same order")),
        DelayKind::Proportional(_) => Err(ReduceError::Proportional(delay.name.clone())),
        DelayKind::TimeDependent(tau) => eval_series(tau, &t, &NoState)
            .and_then(|s| Ok(t.sub(&s)?))
            .map_err(|source| ReduceError::DelayArgument {
                delay: delay.name.clone(),
                source,
            }),
    }
}

/// Series of `φ^{(deriv)}(α(t))` to `order`.
///
/// The initial function is first expanded about `a₀ = α(0)` in a local
/// variable `s` (with `t ↦ a₀ + s`), differentiated there, and then `s` is
/// replaced by `α(t) - a₀`, which has a zero constant term.
pub fn history_series(
    phi: &Expr,
    deriv: usize,
    alpha: &Series,
    var: usize,
) -> Result<Series, ReduceError> {
    let order = alpha.order();
    let center = alpha.coeff(0);
    let err = |source: EvalError| ReduceError::History {
        var,
        center,
        source,
    };
    let local_time = Series::monomial(1, order + deriv)
        .add(&Series::constant(center, order + deriv))
        .expect("same order");
    let about_center = eval_series(phi, &local_time, &NoState).map_err(err)?;
    let derived = about_center
        .differentiate(deriv)
        .map_err(|e| err(e.into()))?;
    let shift = alpha
        .sub(&Series::constant(center, order))
        .map_err(|e: SeriesError| err(e.into()))?;
    derived.compose(&shift).map_err(|e| err(e.into()))
}

/// Replaces constant and time-dependent delayed references in `equations`.
///
/// Equations with no such references come back unchanged, so applying this
/// to an already reduced system is the identity.
pub fn reduce_equations(
    equations: &[Expr],
    delays: &[DelaySpec],
    phi: Option<&[Expr]>,
    history_order: usize,
) -> Result<Vec<Expr>, ReduceError> {
    let mut alphas: Vec<Option<Series>> = vec![None; delays.len()];
    equations
        .iter()
        .map(|eq| {
            eq.map_states(&mut |r| {
                let Some(d) = r.delay else {
                    return Ok(Expr::State(*r));
                };
                if delays[d].is_proportional() {
                    return Ok(Expr::State(*r));
                }
                if alphas[d].is_none() {
                    alphas[d] = Some(delay_argument_series(&delays[d], history_order)?);
                }
                let alpha = alphas[d].as_ref().expect("filled above");
                let phi = phi
                    .and_then(|p| p.get(r.var))
                    .ok_or(ReduceError::MissingPhi { var: r.var })?;
                Ok(Expr::Known(history_series(phi, r.deriv, alpha, r.var)?))
            })
        })
        .collect()
}

/// Runs the first step of the method of steps on `problem`.
pub fn substitute_history(problem: &CauchyProblem) -> Result<ReducedSystem, ReduceError> {
    problem.validate()?;
    let validity = compute_validity(problem)?;
    let history_order = problem.trunc_order + problem.order;
    let equations = reduce_equations(
        &problem.equations,
        &problem.delays,
        problem.phi.as_deref(),
        history_order,
    )?;
    Ok(ReducedSystem {
        order: problem.order,
        vars: problem.vars.clone(),
        delays: problem.delays.clone(),
        equations,
        init: problem.init.clone(),
        trunc_order: problem.trunc_order,
        validity,
    })
}
