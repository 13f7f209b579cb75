//! Differential-transformation recurrence on a reduced system.
//!
//! With `U_j(k) = u_j^{(k)}(0)/k!`, an equation `u_j^{(n)} = f_j` becomes
//!
//! ```text
//! (k+n)!/k! · U_j(k+n) = F_j(k)
//! ```
//!
//! where `F_j(k)` is coefficient `k` of `f_j` evaluated over series
//! arithmetic. `F_j(k)` only reads coefficients up to `k+n-1`, except for
//! neutral terms `c(t)·u_j^{(n)}(q t)` which contribute
//! `C(0)·(k+n)!/k!·q^k·U_j(k+n)` and are moved to the left as a pivot
//! `1 - Σ C_s(0) q_s^k`.

use thiserror::Error;

use crate::expr::{analyze, eval_series, AnalyzeError, EvalError, Expr, StateRef, Symbols};
use crate::problem::{check_h2, CauchyProblem, ProblemError, ValidityInterval};
use crate::reduce::{substitute_history, ReduceError, ReducedSystem};
use crate::series::{falling_ratio, Series};

/// Pivots below this magnitude are treated as zero.
pub const PIVOT_TOL: f64 = 1e-12;
/// Right-hand side magnitude above which a zero pivot is inconsistent.
pub const RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error(transparent)]
    Reduce(#[from] ReduceError),
    #[error(transparent)]
    Analyze(#[from] AnalyzeError),
    #[error("equation {equation} is neutral at delay {delay} but references {term}")]
    H2 {
        equation: String,
        term: String,
        delay: String,
    },
    #[error("equation {equation}: neutral term {term} must enter linearly with a state-free coefficient")]
    NonlinearNeutral { equation: String, term: String },
    #[error(
        "equation {equation}, k = {k}: zero pivot {pivot} with residual {residual}; no analytic solution is consistent with the data"
    )]
    ZeroPivotInconsistent {
        equation: String,
        k: usize,
        pivot: f64,
        residual: f64,
    },
    #[error("equation {equation}, k = {k}: zero pivot {pivot} with residual {residual}; the next coefficient is not determined")]
    ZeroPivotUnderdetermined {
        equation: String,
        k: usize,
        pivot: f64,
        residual: f64,
    },
    #[error("equation {equation}, k = {k}: {source}")]
    Eval {
        equation: String,
        k: usize,
        #[source]
        source: EvalError,
    },
    #[error("interval length {delta} must lie in (0, {upper}]")]
    DeltaOutOfRange { delta: f64, upper: f64 },
    #[error("t = {t} lies outside the validity interval [0, {upper}]")]
    OutsideValidity { t: f64, upper: f64 },
}

impl EngineError {
    /// Step at which the recurrence failed, if it failed inside one.
    pub fn step(&self) -> Option<usize> {
        match self {
            EngineError::ZeroPivotInconsistent { k, .. }
            | EngineError::ZeroPivotUnderdetermined { k, .. }
            | EngineError::Eval { k, .. } => Some(*k),
            _ => None,
        }
    }
}

/// A failed solve together with the coefficients computed before the failure.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("{error}")]
pub struct SolveFailure {
    pub error: EngineError,
    pub vars: Vec<String>,
    /// Per variable, `U(0..)` as far as it was computed.
    pub partial: Vec<Vec<f64>>,
}

impl From<EngineError> for SolveFailure {
    fn from(error: EngineError) -> Self {
        SolveFailure {
            error,
            vars: Vec::new(),
            partial: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PivotEntry {
    pub equation: usize,
    pub k: usize,
    pub pivot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VariableBound {
    pub k_hat: f64,
    pub bound: f64,
}

/// Truncation error estimate `K̂ δ^{N+1}/(N+1)!` per variable.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorEstimate {
    pub order: usize,
    pub delta: f64,
    pub per_variable: Vec<VariableBound>,
}

impl ErrorEstimate {
    pub fn bound(&self) -> f64 {
        self.per_variable
            .iter()
            .map(|b| b.bound)
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaylorSolution {
    pub vars: Vec<String>,
    /// Equation order `n`.
    pub order: usize,
    /// One series of truncation order `N` per variable.
    pub series: Vec<Series>,
    /// `U(N+1)` per variable, used by the error estimate.
    pub next_coeffs: Option<Vec<f64>>,
    pub validity: ValidityInterval,
    pub pivot_log: Vec<PivotEntry>,
    pub error_estimate: Option<ErrorEstimate>,
}

impl TaylorSolution {
    pub fn trunc_order(&self) -> usize {
        self.series[0].order()
    }
}

/// `U_j(k) = v_{k,j}/k!` for `k < n`.
pub fn transform_initial_conditions(init: &[Vec<f64>]) -> Vec<Vec<f64>> {
    init.iter()
        .map(|row| {
            let mut fact = 1.0;
            row.iter()
                .enumerate()
                .map(|(k, v)| {
                    if k > 0 {
                        fact *= k as f64;
                    }
                    v / fact
                })
                .collect()
        })
        .collect()
}

/// `F_j(k)` and, for equations with neutral terms, the pivot `P(k)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhsCoefficient {
    /// `F_j(k)` with the unknown `U_j(k+n)` set to 0.
    pub value: f64,
    pub pivot: Option<f64>,
}

/// Output of one recurrence step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepOutput {
    /// `U_j(k+n)` for every `j`.
    pub values: Vec<f64>,
    pub pivots: Vec<PivotEntry>,
}

fn symbols(reduced: &ReducedSystem) -> Symbols {
    Symbols::new(
        reduced.vars.clone(),
        reduced.delays.iter().map(|d| d.name.clone()).collect(),
        reduced.order,
    )
}

fn is_neutral(r: &StateRef, order: usize) -> bool {
    r.deriv == order && r.delay.is_some()
}

fn contains_neutral(e: &Expr, order: usize) -> bool {
    e.state_refs().iter().any(|r| is_neutral(r, order))
}

/// The neutral references in `e` enter linearly with state-free coefficients.
fn linear_in_neutral(e: &Expr, order: usize) -> bool {
    if !contains_neutral(e, order) {
        return true;
    }
    match e {
        Expr::State(_) => true,
        Expr::Add(a, b) | Expr::Sub(a, b) => {
            linear_in_neutral(a, order) && linear_in_neutral(b, order)
        }
        Expr::Neg(a) => linear_in_neutral(a, order),
        Expr::Mul(a, b) => {
            if contains_neutral(a, order) {
                !b.has_state() && linear_in_neutral(a, order)
            } else {
                !a.has_state() && linear_in_neutral(b, order)
            }
        }
        Expr::Div(a, b) => !b.has_state() && linear_in_neutral(a, order),
        Expr::Pow(..) | Expr::Func(..) => false,
        Expr::Const(_) | Expr::Time | Expr::Known(_) => true,
    }
}

/// Checks the structural preconditions of the recurrence and returns, per
/// equation, whether it carries neutral terms.
pub fn neutral_plan(reduced: &ReducedSystem) -> Result<Vec<bool>, EngineError> {
    let sy = symbols(reduced);
    let n = reduced.order;
    let mut plan = Vec::with_capacity(reduced.dimension());
    for (j, eq) in reduced.equations.iter().enumerate() {
        let refs = reduced.neutral_refs(j);
        if let Some(r) = refs.iter().find(|r| r.var != j) {
            return Err(EngineError::H2 {
                equation: reduced.vars[j].clone(),
                term: sy.ref_name(r),
                delay: sy.delays[r.delay.unwrap_or_default()].clone(),
            });
        }
        if !linear_in_neutral(eq, n) {
            return Err(EngineError::NonlinearNeutral {
                equation: reduced.vars[j].clone(),
                term: sy.ref_name(&refs[0]),
            });
        }
        plan.push(!refs.is_empty());
    }
    Ok(plan)
}

/// Coefficient `k` of `f_j` with `U_j(k+n)` replaced by `trial` where a
/// neutral term needs it.
fn rhs_with_trial(
    reduced: &ReducedSystem,
    j: usize,
    k: usize,
    table: &[Vec<f64>],
    trial: Option<f64>,
) -> Result<f64, EvalError> {
    let env = |r: &StateRef, order: usize| -> Result<Series, EvalError> {
        let top = order + r.deriv;
        let col = &table[r.var];
        let coeffs = if top < col.len() {
            col[..=top].to_vec()
        } else {
            match trial {
                Some(x) if r.var == j && top == col.len() => {
                    let mut c = col.clone();
                    c.push(x);
                    c
                }
                _ => return Err(EvalError::UnboundState(*r)),
            }
        };
        let s = Series::new(coeffs)?.differentiate(r.deriv)?;
        Ok(match reduced.proportional_factor(r) {
            Some(q) => s.scale_arg(q)?,
            None => s,
        })
    };
    let time = Series::monomial(1, k);
    Ok(eval_series(&reduced.equations[j], &time, &env)?.coeff(k))
}

/// `F_j(k)` from coefficients `U_•(0..k+n-1)` in `table`.
pub fn rhs_coefficient(
    reduced: &ReducedSystem,
    j: usize,
    k: usize,
    table: &[Vec<f64>],
) -> Result<RhsCoefficient, EngineError> {
    let eval_err = |source| EngineError::Eval {
        equation: reduced.vars[j].clone(),
        k,
        source,
    };
    if reduced.neutral_refs(j).is_empty() {
        let value = rhs_with_trial(reduced, j, k, table, None).map_err(eval_err)?;
        return Ok(RhsCoefficient { value, pivot: None });
    }
    let f0 = rhs_with_trial(reduced, j, k, table, Some(0.0)).map_err(eval_err)?;
    let f1 = rhs_with_trial(reduced, j, k, table, Some(1.0)).map_err(eval_err)?;
    let pivot = 1.0 - (f1 - f0) / falling_ratio(k, reduced.order);
    Ok(RhsCoefficient {
        value: f0,
        pivot: Some(pivot),
    })
}

/// Computes `U_•(k+n)`; `table` must hold `U_•(0..k+n-1)`.
pub fn step(
    reduced: &ReducedSystem,
    k: usize,
    table: &[Vec<f64>],
) -> Result<StepOutput, EngineError> {
    let n = reduced.order;
    let factor = falling_ratio(k, n);
    let mut values = Vec::with_capacity(reduced.dimension());
    let mut pivots = Vec::new();
    for j in 0..reduced.dimension() {
        let rhs = rhs_coefficient(reduced, j, k, table)?;
        let value = match rhs.pivot {
            None => rhs.value / factor,
            Some(pivot) => {
                pivots.push(PivotEntry {
                    equation: j,
                    k,
                    pivot,
                });
                if pivot.abs() < PIVOT_TOL {
                    let equation = reduced.vars[j].clone();
                    return Err(if rhs.value.abs() > RESIDUAL_TOL {
                        EngineError::ZeroPivotInconsistent {
                            equation,
                            k,
                            pivot,
                            residual: rhs.value,
                        }
                    } else {
                        EngineError::ZeroPivotUnderdetermined {
                            equation,
                            k,
                            pivot,
                            residual: rhs.value,
                        }
                    });
                }
                rhs.value / (factor * pivot)
            }
        };
        values.push(value);
    }
    Ok(StepOutput { values, pivots })
}

/// Solves a Cauchy problem: structural checks, history substitution, then
/// the recurrence up to the truncation order.
#[allow(clippy::result_large_err)]
pub fn solve(problem: &CauchyProblem) -> Result<TaylorSolution, SolveFailure> {
    problem.validate().map_err(EngineError::from)?;
    let structure = analyze(
        &problem.equations,
        problem.order,
        problem.dimension(),
        &problem.delays,
    )
    .map_err(EngineError::from)?;
    if let Some(v) = check_h2(&structure).violations.first() {
        let sy = Symbols::new(
            problem.vars.clone(),
            problem.delays.iter().map(|d| d.name.clone()).collect(),
            problem.order,
        );
        return Err(EngineError::H2 {
            equation: problem.vars[v.equation].clone(),
            term: sy.ref_name(&StateRef {
                var: v.var,
                deriv: problem.order,
                delay: Some(v.delay),
            }),
            delay: problem.delays[v.delay].name.clone(),
        }
        .into());
    }
    let reduced = substitute_history(problem).map_err(EngineError::from)?;
    solve_reduced(&reduced)
}

/// Runs the recurrence on an already reduced system.
#[allow(clippy::result_large_err)]
pub fn solve_reduced(reduced: &ReducedSystem) -> Result<TaylorSolution, SolveFailure> {
    neutral_plan(reduced)?;
    let n = reduced.order;
    let big_n = reduced.trunc_order;
    let mut table = transform_initial_conditions(&reduced.init);
    let mut pivot_log = Vec::new();
    let mut complete_extra = true;
    // one step past N feeds the error estimate
    for k in 0..=(big_n + 1 - n) {
        match step(reduced, k, &table) {
            Ok(out) => {
                for (col, v) in table.iter_mut().zip(out.values) {
                    col.push(v);
                }
                pivot_log.extend(out.pivots);
            }
            Err(error) if k + n > big_n => {
                let _ = error;
                complete_extra = false;
                break;
            }
            Err(error) => {
                return Err(SolveFailure {
                    error,
                    vars: reduced.vars.clone(),
                    partial: table,
                })
            }
        }
    }
    let series = table
        .iter()
        .map(|col| Series::new(col[..=big_n].to_vec()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| SolveFailure {
            error: EngineError::Eval {
                equation: String::new(),
                k: big_n,
                source: e.into(),
            },
            vars: reduced.vars.clone(),
            partial: table.clone(),
        })?;
    let next_coeffs = complete_extra.then(|| table.iter().map(|c| c[big_n + 1]).collect());
    let mut solution = TaylorSolution {
        vars: reduced.vars.clone(),
        order: n,
        series,
        next_coeffs,
        validity: reduced.validity.clone(),
        pivot_log,
        error_estimate: None,
    };
    let upper = solution.validity.upper;
    if upper.is_finite() && upper > 0.0 {
        solution.error_estimate = estimate_error(&solution, upper).ok();
    }
    Ok(solution)
}

/// Number of trailing coefficients used to estimate the decay ratio.
const RATIO_WINDOW: usize = 3;

/// Geometric decay ratio of the coefficients ending in `|U(N+1)| = next`:
/// the smallest of `(|U(N+1)| / |U(N+1-i)|)^{1/i}` for `i = 1..=3`, so that
/// one accidentally tiny coefficient does not dominate. Falls back to
/// `|U(N+1)|^{1/(N+1)}` when the window holds only zeros.
fn decay_ratio(s: &Series, next: f64) -> f64 {
    let big_n = s.order();
    (1..=RATIO_WINDOW.min(big_n + 1))
        .filter_map(|i| {
            let prev = s.coeff(big_n + 1 - i).abs();
            (prev > 0.0).then(|| (next / prev).powf(1.0 / i as f64))
        })
        .reduce(f64::min)
        .unwrap_or_else(|| next.powf(1.0 / (big_n + 1) as f64))
}

/// Estimates the truncation error on `[0, delta]` from the first dropped
/// coefficient `U(N+1)`.
///
/// The `(N+1)`-th derivative on `[0, δ]` is estimated by assuming the tail
/// coefficients decay geometrically with ratio `ρ` (see [`decay_ratio`]),
/// which gives `K̂ = (N+1)! |U(N+1)| (1 - ρδ)^{-(N+2)}`. When `ρδ ≥ 1` the series
/// is not expected to converge on the interval and the bound is infinite.
/// This is an estimate, not a rigorous bound.
pub fn estimate_error(solution: &TaylorSolution, delta: f64) -> Result<ErrorEstimate, EngineError> {
    let upper = solution.validity.upper;
    if !(delta > 0.0 && delta <= upper) {
        return Err(EngineError::DeltaOutOfRange { delta, upper });
    }
    let big_n = solution.trunc_order();
    let next = solution
        .next_coeffs
        .clone()
        .unwrap_or_else(|| vec![f64::INFINITY; solution.series.len()]);
    let fact: f64 = (1..=big_n + 1).map(|i| i as f64).product();
    let per_variable = solution
        .series
        .iter()
        .zip(next)
        .map(|(s, u_next)| {
            let a = u_next.abs();
            if a == 0.0 {
                return VariableBound {
                    k_hat: 0.0,
                    bound: 0.0,
                };
            }
            let rho = decay_ratio(s, a);
            let growth = if rho * delta < 1.0 {
                (1.0 - rho * delta).powi(-(big_n as i32 + 2))
            } else {
                f64::INFINITY
            };
            VariableBound {
                k_hat: fact * a * growth,
                bound: a * growth * delta.powi(big_n as i32 + 1),
            }
        })
        .collect();
    Ok(ErrorEstimate {
        order: big_n,
        delta,
        per_variable,
    })
}

/// Values `u_j(t)` of the Taylor polynomials. In strict mode `t` must lie in
/// the validity interval.
pub fn evaluate_solution(
    solution: &TaylorSolution,
    t: f64,
    strict: bool,
) -> Result<Vec<f64>, EngineError> {
    let upper = solution.validity.upper;
    if strict && !(t >= 0.0 && t <= upper) {
        return Err(EngineError::OutsideValidity { t, upper });
    }
    Ok(solution.series.iter().map(|s| s.evaluate(t)).collect())
}

/// Residual series `u_j^{(n)} - f_j(u)` of the truncated solution, of order
/// `N - n`, computed by substituting the polynomials into the reduced system.
pub fn residual(
    reduced: &ReducedSystem,
    solution: &TaylorSolution,
) -> Result<Vec<Series>, EngineError> {
    let n = reduced.order;
    let big_n = solution.trunc_order();
    let order = big_n - n;
    let env = |r: &StateRef, ord: usize| -> Result<Series, EvalError> {
        let s = solution.series[r.var]
            .truncate(ord + r.deriv)?
            .differentiate(r.deriv)?;
        Ok(match reduced.proportional_factor(r) {
            Some(q) => s.scale_arg(q)?,
            None => s,
        })
    };
    let time = Series::monomial(1, order);
    (0..reduced.dimension())
        .map(|j| {
            let err = |source: EvalError| EngineError::Eval {
                equation: reduced.vars[j].clone(),
                k: order,
                source,
            };
            let lhs = solution.series[j]
                .differentiate(n)
                .map_err(|e| err(e.into()))?;
            let rhs = eval_series(&reduced.equations[j], &time, &env).map_err(err)?;
            lhs.sub(&rhs).map_err(|e| err(e.into()))
        })
        .collect()
}
