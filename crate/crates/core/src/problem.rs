//! Cauchy problems for delayed and neutral systems.
//!
//! A [`CauchyProblem`] holds `p` right-hand sides of order `n`, the declared
//! delays, the initial function on `[t*, 0]` and the initial values at `0`.
//! Validity of a single reduction step is described by [`ValidityInterval`].

use thiserror::Error;

use crate::expr::{eval_scalar, eval_series, EvalError, Expr, NoState, StructureReport};
use crate::series::Series;

/// Samples used to check `τ(t) > 0` and to bracket roots of `α(t)`.
pub const SCAN_POINTS: usize = 1000;
/// Bisection steps once a sign change is bracketed.
pub const BISECTION_STEPS: usize = 80;
/// Tolerance for the initial-function compatibility check.
pub const COMPAT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProblemError {
    #[error("expected {expected} equations, found {found}")]
    EquationCount { expected: usize, found: usize },
    #[error("variable {var}: expected {expected} initial values, found {found}")]
    InitLength {
        var: String,
        expected: usize,
        found: usize,
    },
    #[error("delay {name}: {reason}")]
    InvalidDelay { name: String, reason: String },
    #[error("an initial function is required because delay {delay} reaches back before t = 0")]
    MissingPhi { delay: String },
    #[error("expected {expected} initial functions, found {found}")]
    PhiCount { expected: usize, found: usize },
    #[error("{what} must depend on t only")]
    NotTimeOnly { what: String },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
    #[error("equation order must be at least 1")]
    ZeroOrder,
    #[error("truncation order {trunc} must be at least the equation order {order}")]
    TruncationTooLow { trunc: usize, order: usize },
    #[error("root search for delay {delay} did not converge")]
    RootNotConverged { delay: String },
    #[error("evaluating {what}: {source}")]
    Eval {
        what: String,
        #[source]
        source: EvalError,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum DelayKind {
    /// `α(t) = t - τ`
    Constant(f64),
    /// `α(t) = q t`
    Proportional(f64),
    /// `α(t) = t - τ(t)` with `τ` an expression in `t`.
    TimeDependent(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelaySpec {
    pub name: String,
    pub kind: DelayKind,
}

impl DelaySpec {
    pub fn new(name: impl Into<String>, kind: DelayKind) -> Self {
        DelaySpec {
            name: name.into(),
            kind,
        }
    }

    pub fn is_proportional(&self) -> bool {
        matches!(self.kind, DelayKind::Proportional(_))
    }

    /// The delayed argument `α(t)`.
    pub fn alpha(&self, t: f64) -> Result<f64, ProblemError> {
        match &self.kind {
            DelayKind::Constant(tau) => Ok(t - tau),
            DelayKind::Proportional(q) => Ok(q * t),
            DelayKind::TimeDependent(tau) => Ok(t - self.tau_at(tau, t)?),
        }
    }

    fn tau_at(&self, tau: &Expr, t: f64) -> Result<f64, ProblemError> {
        eval_scalar(tau, t, &NoState).map_err(|source| ProblemError::Eval {
            what: format!("delay {}", self.name),
            source,
        })
    }

    fn invalid(&self, reason: impl Into<String>) -> ProblemError {
        ProblemError::InvalidDelay {
            name: self.name.clone(),
            reason: reason.into(),
        }
    }

    /// Checks the kind-specific constraints on `[0, horizon]`.
    pub fn validate(&self, horizon: f64) -> Result<(), ProblemError> {
        match &self.kind {
            DelayKind::Constant(tau) if !(tau.is_finite() && *tau > 0.0) => {
                Err(self.invalid(format!("constant delay must be positive, got {tau}")))
            }
            DelayKind::Proportional(q) if !(*q > 0.0 && *q < 1.0) => {
                Err(self.invalid(format!("proportional factor must lie in (0, 1), got {q}")))
            }
            DelayKind::TimeDependent(tau) => {
                if tau.has_state() {
                    return Err(ProblemError::NotTimeOnly {
                        what: format!("delay {}", self.name),
                    });
                }
                for i in 0..SCAN_POINTS {
                    let t = horizon * i as f64 / (SCAN_POINTS - 1) as f64;
                    let v = self.tau_at(tau, t)?;
                    if v <= 0.0 {
                        return Err(self.invalid(format!("τ({t}) = {v} is not positive")));
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Where one delay stops reaching into the history.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    /// Constant delay: `t_α = τ`.
    Constant(f64),
    /// Proportional delay: `α(t) > 0` for all `t > 0`; excluded from `t_α`.
    Proportional,
    /// First positive root of `t - τ(t)`.
    Root(f64),
    /// `α > 0` already right after 0 with no sign change; excluded from `t_α`.
    PositiveAtZero,
    /// `α < 0` on the whole horizon; the root lies beyond it.
    BeyondHorizon,
}

impl Threshold {
    /// Contribution to `min { t_α_i : t_α_i ≠ 0 }`, or `None` when excluded.
    pub fn value(self) -> Option<f64> {
        match self {
            Threshold::Constant(v) | Threshold::Root(v) => Some(v),
            Threshold::BeyondHorizon => Some(f64::INFINITY),
            Threshold::Proportional | Threshold::PositiveAtZero => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityInterval {
    /// Lowest point of the history that is read; `t* ≤ 0`.
    pub t_star: f64,
    /// `+∞` when no delay reaches into the history.
    pub t_alpha: f64,
    /// `min(t_α, T*)`
    pub upper: f64,
    /// One entry per declared delay.
    pub thresholds: Vec<Threshold>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CauchyProblem {
    /// Equation order `n`.
    pub order: usize,
    pub vars: Vec<String>,
    /// Right-hand sides `f_j`, one per variable.
    pub equations: Vec<Expr>,
    pub delays: Vec<DelaySpec>,
    /// Initial functions `φ_j`, expressions in `t`.
    pub phi: Option<Vec<Expr>>,
    /// `init[j][k] = u_j^{(k)}(0)` for `k < n`.
    pub init: Vec<Vec<f64>>,
    pub horizon: f64,
    pub trunc_order: usize,
}

impl CauchyProblem {
    pub fn dimension(&self) -> usize {
        self.vars.len()
    }

    pub fn has_history_delays(&self) -> bool {
        self.delays.iter().any(|d| !d.is_proportional())
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if self.order == 0 {
            return Err(ProblemError::ZeroOrder);
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(ProblemError::BadHorizon(self.horizon));
        }
        if self.trunc_order < self.order {
            return Err(ProblemError::TruncationTooLow {
                trunc: self.trunc_order,
                order: self.order,
            });
        }
        let p = self.dimension();
        if self.equations.len() != p {
            return Err(ProblemError::EquationCount {
                expected: p,
                found: self.equations.len(),
            });
        }
        if self.init.len() != p {
            return Err(ProblemError::InitLength {
                var: format!("{} variables", p),
                expected: p,
                found: self.init.len(),
            });
        }
        for (name, row) in self.vars.iter().zip(&self.init) {
            if row.len() != self.order {
                return Err(ProblemError::InitLength {
                    var: name.clone(),
                    expected: self.order,
                    found: row.len(),
                });
            }
        }
        for d in &self.delays {
            d.validate(self.horizon)?;
        }
        match &self.phi {
            Some(phi) => {
                if phi.len() != p {
                    return Err(ProblemError::PhiCount {
                        expected: p,
                        found: phi.len(),
                    });
                }
                if let Some(i) = phi.iter().position(Expr::has_state) {
                    return Err(ProblemError::NotTimeOnly {
                        what: format!("initial function of {}", self.vars[i]),
                    });
                }
            }
            None => {
                if let Some(d) = self.delays.iter().find(|d| !d.is_proportional()) {
                    return Err(ProblemError::MissingPhi {
                        delay: d.name.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn delay_threshold(d: &DelaySpec, horizon: f64) -> Result<Threshold, ProblemError> {
    match &d.kind {
        DelayKind::Constant(tau) => Ok(Threshold::Constant(*tau)),
        DelayKind::Proportional(_) => Ok(Threshold::Proportional),
        DelayKind::TimeDependent(_) => {
            let step = horizon / SCAN_POINTS as f64;
            let mut prev_t = 0.0;
            let mut prev = d.alpha(0.0)?;
            if prev >= 0.0 {
                return Ok(Threshold::PositiveAtZero);
            }
            for i in 1..=SCAN_POINTS {
                let t = step * i as f64;
                let g = d.alpha(t)?;
                if g == 0.0 {
                    return Ok(Threshold::Root(t));
                }
                if g > 0.0 {
                    return bisect(d, prev_t, t, prev).map(Threshold::Root);
                }
                prev_t = t;
                prev = g;
            }
            Ok(Threshold::BeyondHorizon)
        }
    }
}

fn bisect(d: &DelaySpec, mut lo: f64, mut hi: f64, mut g_lo: f64) -> Result<f64, ProblemError> {
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let g = d.alpha(mid)?;
        if g == 0.0 {
            return Ok(mid);
        }
        if (g < 0.0) == (g_lo < 0.0) {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    if d.alpha(root)?.abs() > 1e-10 || root <= 0.0 {
        return Err(ProblemError::RootNotConverged {
            delay: d.name.clone(),
        });
    }
    Ok(root)
}

/// Lowest delayed argument over `(0, T*]`, floored at 0.
fn lowest_argument(d: &DelaySpec, horizon: f64) -> Result<f64, ProblemError> {
    Ok(match &d.kind {
        DelayKind::Constant(tau) => -tau,
        DelayKind::Proportional(_) => 0.0,
        DelayKind::TimeDependent(_) => {
            let mut lowest = d.alpha(0.0)?;
            for i in 1..=SCAN_POINTS {
                lowest = lowest.min(d.alpha(horizon * i as f64 / SCAN_POINTS as f64)?);
            }
            lowest.min(0.0)
        }
    })
}

/// Computes `t*`, `t_α` and the interval `[0, min(t_α, T*)]` on which a
/// single reduction step is valid.
pub fn compute_validity(problem: &CauchyProblem) -> Result<ValidityInterval, ProblemError> {
    let horizon = problem.horizon;
    let mut t_star: f64 = 0.0;
    let mut t_alpha = f64::INFINITY;
    let mut thresholds = Vec::with_capacity(problem.delays.len());
    for d in &problem.delays {
        t_star = t_star.min(lowest_argument(d, horizon)?);
        let th = delay_threshold(d, horizon)?;
        if let Some(v) = th.value() {
            t_alpha = t_alpha.min(v);
        }
        thresholds.push(th);
    }
    Ok(ValidityInterval {
        t_star,
        t_alpha,
        upper: t_alpha.min(horizon),
        thresholds,
    })
}

/// One compared entry `φ_j^{(k)}(0)` against `u_j^{(k)}(0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CompatEntry {
    pub var: usize,
    pub k: usize,
    pub expected: f64,
    pub phi_value: f64,
    /// `init - φ^{(k)}(0)`
    pub residual: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompatibilityReport {
    /// `false` when the problem has no initial function.
    pub checked: bool,
    pub entries: Vec<CompatEntry>,
    /// Variables whose initial function could not be expanded at 0.
    pub failures: Vec<(usize, String)>,
}

impl CompatibilityReport {
    pub fn pass(&self) -> bool {
        self.failures.is_empty() && self.entries.iter().all(|e| e.pass)
    }

    pub fn first_failure(&self) -> Option<&CompatEntry> {
        self.entries.iter().find(|e| !e.pass)
    }
}

/// Checks `Φ^{(k)}(0) = u^{(k)}(0)` for `k < n`.
pub fn check_compatibility(problem: &CauchyProblem) -> CompatibilityReport {
    let Some(phi) = &problem.phi else {
        return CompatibilityReport::default();
    };
    let n = problem.order;
    let mut report = CompatibilityReport {
        checked: true,
        ..Default::default()
    };
    let time = Series::monomial(1, n.saturating_sub(1));
    for (j, (f, init)) in phi.iter().zip(&problem.init).enumerate() {
        let s = match eval_series(f, &time, &NoState) {
            Ok(s) => s,
            Err(e) => {
                report.failures.push((j, e.to_string()));
                continue;
            }
        };
        let mut factorial = 1.0;
        for (k, &expected) in init.iter().enumerate() {
            if k > 0 {
                factorial *= k as f64;
            }
            let phi_value = factorial * s.coeff(k);
            let residual = expected - phi_value;
            report.entries.push(CompatEntry {
                var: j,
                k,
                expected,
                phi_value,
                residual,
                pass: residual.abs() <= COMPAT_TOL,
            });
        }
    }
    report
}

/// A neutral proportional reference to another variable's top derivative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct H2Violation {
    pub equation: usize,
    pub var: usize,
    pub delay: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct H2Report {
    pub violations: Vec<H2Violation>,
}

impl H2Report {
    pub fn pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// An equation that is neutral with respect to a proportional delay may only
/// reference the top derivative of its own variable at that delay.
pub fn check_h2(structure: &StructureReport) -> H2Report {
    let violations = structure
        .neutral_proportional
        .iter()
        .enumerate()
        .flat_map(|(j, refs)| {
            refs.iter()
                .filter(move |r| r.var != j)
                .map(move |r| H2Violation {
                    equation: j,
                    var: r.var,
                    delay: r.delay.unwrap_or_default(),
                })
        })
        .collect();
    H2Report { violations }
}
