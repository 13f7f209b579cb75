use thiserror::Error;

use super::{Expr, StateRef};
use crate::problem::{DelayKind, DelaySpec};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AnalyzeError {
    #[error("expected {expected} equations, found {found}")]
    EquationCount { expected: usize, found: usize },
    #[error("equation {equation}: variable index {var} is out of range")]
    VarOutOfRange { equation: usize, var: usize },
    #[error("equation {equation}: delay index {delay} is out of range")]
    DelayOutOfRange { equation: usize, delay: usize },
    #[error("equation {equation}: derivative order {deriv} exceeds the equation order {order}")]
    DerivTooHigh {
        equation: usize,
        deriv: usize,
        order: usize,
    },
    #[error(
        "equation {equation}: undelayed derivative of order {order} of variable {var} on the right-hand side"
    )]
    UndelayedTopDerivative {
        equation: usize,
        var: usize,
        order: usize,
    },
}

/// How one delay is used across the system.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DelayUsage {
    pub delay: usize,
    /// Highest derivative order taken at this delayed argument (`m_i`).
    pub max_deriv: usize,
    pub uses: usize,
}

/// Structural facts about a system: per-delay derivative orders, `m`, `ω`,
/// the neutral flag and the neutral proportional references per equation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StructureReport {
    pub order: usize,
    pub per_delay: Vec<DelayUsage>,
    /// `max m_i`, 0 when there are no delays.
    pub m: usize,
    /// `Σ m_i`
    pub omega: usize,
    pub neutral: bool,
    /// Per equation, references `u^{(n)}` at a proportional delay.
    pub neutral_proportional: Vec<Vec<StateRef>>,
    /// Per equation, every state reference in order of appearance.
    pub refs: Vec<Vec<StateRef>>,
}

impl StructureReport {
    pub fn total_refs(&self) -> usize {
        self.refs.iter().map(Vec::len).sum()
    }
}

/// Classifies the delayed terms of `equations` (the right-hand sides `f_j`).
pub fn analyze(
    equations: &[Expr],
    order: usize,
    vars: usize,
    delays: &[DelaySpec],
) -> Result<StructureReport, AnalyzeError> {
    if equations.len() != vars {
        return Err(AnalyzeError::EquationCount {
            expected: vars,
            found: equations.len(),
        });
    }
    let mut per_delay: Vec<DelayUsage> = (0..delays.len())
        .map(|delay| DelayUsage {
            delay,
            max_deriv: 0,
            uses: 0,
        })
        .collect();
    let mut neutral_proportional = vec![Vec::new(); equations.len()];
    let mut refs = Vec::with_capacity(equations.len());

    for (j, eq) in equations.iter().enumerate() {
        let eq_refs = eq.state_refs();
        for r in &eq_refs {
            if r.var >= vars {
                return Err(AnalyzeError::VarOutOfRange {
                    equation: j,
                    var: r.var,
                });
            }
            if r.deriv > order {
                return Err(AnalyzeError::DerivTooHigh {
                    equation: j,
                    deriv: r.deriv,
                    order,
                });
            }
            match r.delay {
                None if r.deriv == order => {
                    return Err(AnalyzeError::UndelayedTopDerivative {
                        equation: j,
                        var: r.var,
                        order,
                    })
                }
                None => {}
                Some(d) => {
                    let usage = per_delay.get_mut(d).ok_or(AnalyzeError::DelayOutOfRange {
                        equation: j,
                        delay: d,
                    })?;
                    usage.max_deriv = usage.max_deriv.max(r.deriv);
                    usage.uses += 1;
                    if r.deriv == order && matches!(delays[d].kind, DelayKind::Proportional(_)) {
                        neutral_proportional[j].push(*r);
                    }
                }
            }
        }
        refs.push(eq_refs);
    }

    let m = per_delay.iter().map(|u| u.max_deriv).max().unwrap_or(0);
    let omega = per_delay.iter().map(|u| u.max_deriv).sum();
    Ok(StructureReport {
        order,
        neutral: !delays.is_empty() && order > 0 && m == order,
        per_delay,
        m,
        omega,
        neutral_proportional,
        refs,
    })
}
