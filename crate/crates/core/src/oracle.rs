//! Independent numerical reference: fixed-step RK4 on the first-order form
//! of a reduced system, with cubic Hermite dense output serving the
//! proportional-delay lookups.

use std::cell::{Cell, RefCell};

use thiserror::Error;

use crate::engine::{evaluate_solution, TaylorSolution};
use crate::expr::{eval_scalar, EvalError, ScalarEnv, StateRef, Symbols};
use crate::reduce::ReducedSystem;

/// Fixed-point passes over a step whose lookups reach past the front.
const MAX_PASSES: usize = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("neutral term {term} is not supported by the reference integrator")]
    NeutralTerm { term: String },
    #[error("step size {0} must be positive and finite")]
    BadStep(f64),
    #[error("horizon {t} must lie in (0, {upper}]")]
    BeyondValidity { t: f64, upper: f64 },
    #[error("history lookup at {at} lies ahead of the computed front {front}")]
    LookupAhead { at: f64, front: f64 },
    #[error("right-hand side at t = {t}: {source}")]
    Eval {
        t: f64,
        #[source]
        source: EvalError,
    },
    #[error("t = {t} lies outside [0, {end}]")]
    OutOfRange { t: f64, end: f64 },
    #[error("derivative order {d} is not stored (equation order {order})")]
    BadDerivative { d: usize, order: usize },
    #[error("interval [{a}, {b}] is not inside [0, {end}]")]
    BadInterval { a: f64, b: f64, end: f64 },
}

/// RK4 trajectory with node values `y(tᵢ)` and slopes `y'(tᵢ)`.
///
/// Component `j·n + d` of a state vector holds `u_j^{(d)}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTrajectory {
    pub h: f64,
    pub end: f64,
    pub order: usize,
    pub dimension: usize,
    pub states: Vec<Vec<f64>>,
    pub derivs: Vec<Vec<f64>>,
    /// Number of stage lookups that fell inside the step being computed.
    pub ahead_lookups: usize,
}

fn hermite(y0: f64, y1: f64, f0: f64, f1: f64, h: f64, theta: f64) -> f64 {
    let t2 = theta * theta;
    let t3 = t2 * theta;
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = t3 - 2.0 * t2 + theta;
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = t3 - t2;
    h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1
}

impl DenseTrajectory {
    pub fn steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn node_time(&self, i: usize) -> f64 {
        if i == self.steps() {
            self.end
        } else {
            i as f64 * self.h
        }
    }

    fn component(&self, t: f64, c: usize) -> f64 {
        interpolate(&self.states, &self.derivs, self.h, self.steps(), t, c)
    }

    /// `u_j^{(d)}(t)` for every `j`.
    pub fn sample(&self, t: f64, d: usize) -> Result<Vec<f64>, OracleError> {
        if d >= self.order {
            return Err(OracleError::BadDerivative {
                d,
                order: self.order,
            });
        }
        if !(t >= 0.0 && t <= self.end) {
            return Err(OracleError::OutOfRange { t, end: self.end });
        }
        Ok((0..self.dimension)
            .map(|j| self.component(t, j * self.order + d))
            .collect())
    }
}

/// Hermite value of component `c` at `t` using nodes `0..=last`.
fn interpolate(
    states: &[Vec<f64>],
    derivs: &[Vec<f64>],
    h: f64,
    last: usize,
    t: f64,
    c: usize,
) -> f64 {
    if last == 0 {
        return states[0][c];
    }
    let i = ((t / h).floor() as usize).min(last - 1);
    let theta = (t - i as f64 * h) / h;
    if theta == 0.0 {
        return states[i][c];
    }
    hermite(
        states[i][c],
        states[i + 1][c],
        derivs[i][c],
        derivs[i + 1][c],
        h,
        theta,
    )
}

struct Marcher<'a> {
    reduced: &'a ReducedSystem,
    n: usize,
    h: f64,
    states: Vec<Vec<f64>>,
    derivs: Vec<Vec<f64>>,
    ahead: Cell<usize>,
}

struct StageEnv<'a, 'm> {
    marcher: &'m Marcher<'a>,
    t: f64,
    y: &'m [f64],
    provisional: Option<&'m (Vec<f64>, Vec<f64>)>,
    failure: &'m RefCell<Option<OracleError>>,
}

impl Marcher<'_> {
    fn front(&self) -> f64 {
        (self.states.len() - 1) as f64 * self.h
    }

    fn lookup(
        &self,
        s: f64,
        c: usize,
        provisional: Option<&(Vec<f64>, Vec<f64>)>,
    ) -> Result<f64, OracleError> {
        let last = self.states.len() - 1;
        let front = self.front();
        if s <= front {
            return Ok(interpolate(&self.states, &self.derivs, self.h, last, s, c));
        }
        if s > front + self.h * (1.0 + 1e-12) {
            return Err(OracleError::LookupAhead { at: s, front });
        }
        self.ahead.set(self.ahead.get() + 1);
        let (y0, f0) = (self.states[last][c], self.derivs[last][c]);
        Ok(match provisional {
            Some((y1, f1)) => hermite(y0, y1[c], f0, f1[c], self.h, (s - front) / self.h),
            None => y0 + (s - front) * f0,
        })
    }

    fn rhs(
        &self,
        t: f64,
        y: &[f64],
        provisional: Option<&(Vec<f64>, Vec<f64>)>,
    ) -> Result<Vec<f64>, OracleError> {
        let n = self.n;
        let failure = RefCell::new(None);
        let env = StageEnv {
            marcher: self,
            t,
            y,
            provisional,
            failure: &failure,
        };
        let mut dy = vec![0.0; y.len()];
        for (j, eq) in self.reduced.equations.iter().enumerate() {
            for d in 0..n - 1 {
                dy[j * n + d] = y[j * n + d + 1];
            }
            dy[j * n + n - 1] = eval_scalar(eq, t, &env).map_err(|source| {
                failure
                    .borrow_mut()
                    .take()
                    .unwrap_or(OracleError::Eval { t, source })
            })?;
        }
        Ok(dy)
    }

    fn rk4(
        &self,
        t: f64,
        y: &[f64],
        f0: &[f64],
        provisional: Option<&(Vec<f64>, Vec<f64>)>,
    ) -> Result<Vec<f64>, OracleError> {
        let h = self.h;
        let axpy =
            |a: f64, k: &[f64]| -> Vec<f64> { y.iter().zip(k).map(|(y, k)| y + a * k).collect() };
        let k1 = f0;
        let k2 = self.rhs(t + 0.5 * h, &axpy(0.5 * h, k1), provisional)?;
        let k3 = self.rhs(t + 0.5 * h, &axpy(0.5 * h, &k2), provisional)?;
        let k4 = self.rhs(t + h, &axpy(h, &k3), provisional)?;
        Ok((0..y.len())
            .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
            .collect())
    }
}

impl ScalarEnv for StageEnv<'_, '_> {
    fn state_at(&self, r: &StateRef) -> Result<f64, EvalError> {
        let n = self.marcher.n;
        let c = r.var * n + r.deriv;
        match self.marcher.reduced.proportional_factor(r) {
            None => Ok(self.y[c]),
            Some(q) => self
                .marcher
                .lookup(q * self.t, c, self.provisional)
                .map_err(|e| {
                    *self.failure.borrow_mut() = Some(e);
                    EvalError::UnboundState(*r)
                }),
        }
    }
}

/// Integrates `reduced` on `[0, end]` with RK4. The step is shrunk so that
/// an integral number of steps lands on `end`.
pub fn integrate_reference(
    reduced: &ReducedSystem,
    h: f64,
    end: f64,
) -> Result<DenseTrajectory, OracleError> {
    let symbols = Symbols::new(
        reduced.vars.clone(),
        reduced.delays.iter().map(|d| d.name.clone()).collect(),
        reduced.order,
    );
    for j in 0..reduced.dimension() {
        if let Some(r) = reduced.neutral_refs(j).first() {
            return Err(OracleError::NeutralTerm {
                term: symbols.ref_name(r),
            });
        }
    }
    if !(h > 0.0 && h.is_finite()) {
        return Err(OracleError::BadStep(h));
    }
    let upper = reduced.validity.upper;
    if !(end > 0.0 && end <= upper * (1.0 + 1e-12)) {
        return Err(OracleError::BeyondValidity { t: end, upper });
    }
    let steps = ((end / h) - 1e-9).ceil().max(1.0) as usize;
    let h = end / steps as f64;
    let n = reduced.order;

    let y0: Vec<f64> = reduced.init.iter().flatten().copied().collect();
    let mut m = Marcher {
        reduced,
        n,
        h,
        states: vec![y0.clone()],
        derivs: Vec::new(),
        ahead: Cell::new(0),
    };
    // lookups at q·0 = 0 only touch the initial node
    m.derivs.push(vec![0.0; y0.len()]);
    m.derivs[0] = m.rhs(0.0, &y0, None)?;

    for i in 0..steps {
        let t = i as f64 * h;
        let y = m.states[i].clone();
        let f0 = m.derivs[i].clone();
        let mut provisional: Option<(Vec<f64>, Vec<f64>)> = None;
        for _ in 0..MAX_PASSES {
            let before = m.ahead.get();
            let y1 = m.rk4(t, &y, &f0, provisional.as_ref())?;
            let t1 = if i + 1 == steps {
                end
            } else {
                (i + 1) as f64 * h
            };
            let f1 = m.rhs(t1, &y1, provisional.as_ref())?;
            let ahead = m.ahead.get() > before;
            provisional = Some((y1, f1));
            if !ahead {
                break;
            }
        }
        let (y1, f1) = provisional.expect("at least one pass");
        m.states.push(y1);
        m.derivs.push(f1);
    }

    Ok(DenseTrajectory {
        h,
        end,
        order: n,
        dimension: reduced.dimension(),
        states: m.states,
        derivs: m.derivs,
        ahead_lookups: m.ahead.get(),
    })
}

/// Maximum of `|Taylor − reference|` per variable over `samples`
/// equidistant points of `[a, b]`.
pub fn compare(
    solution: &TaylorSolution,
    traj: &DenseTrajectory,
    interval: (f64, f64),
    samples: usize,
) -> Result<Vec<f64>, OracleError> {
    let (a, b) = interval;
    if !(0.0 <= a && a <= b && b <= traj.end) {
        return Err(OracleError::BadInterval {
            a,
            b,
            end: traj.end,
        });
    }
    let samples = samples.max(2);
    let mut worst = vec![0.0f64; traj.dimension];
    for i in 0..samples {
        let t = if i + 1 == samples {
            b
        } else {
            a + (b - a) * i as f64 / (samples - 1) as f64
        };
        let taylor = evaluate_solution(solution, t, false).expect("non-strict evaluation");
        let reference = traj.sample(t, 0)?;
        for (w, (x, y)) in worst.iter_mut().zip(taylor.iter().zip(&reference)) {
            *w = w.max((x - y).abs());
        }
    }
    Ok(worst)
}
