use serde::Serialize;

use dtmsteps::{ErrorEstimate, TaylorSolution, ValidityInterval};

/// Shortest text that parses back to the same `f64`.
pub fn real(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.into()
    } else if x == 0.0 || (1e-5..1e16).contains(&x.abs()) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

pub fn csv_table(vars: &[String], rows: &[Vec<f64>]) -> String {
    let width = rows.iter().map(Vec::len).max().unwrap_or(0);
    let mut s = String::from("var");
    for k in 0..width {
        s.push_str(&format!(",k{k}"));
    }
    s.push('\n');
    for (name, row) in vars.iter().zip(rows) {
        s.push_str(name);
        for x in row {
            s.push(',');
            s.push_str(&real(*x));
        }
        s.push('\n');
    }
    s
}

fn validity_line(v: &ValidityInterval) -> String {
    format!(
        "# validity,t_star={},t_alpha={},upper={}\n",
        real(v.t_star),
        real(v.t_alpha),
        real(v.upper)
    )
}

fn estimate_line(e: &ErrorEstimate) -> String {
    format!(
        "# error_estimate,N={},delta={},bound={}\n",
        e.order,
        real(e.delta),
        real(e.bound())
    )
}

pub fn solution_csv(sol: &TaylorSolution) -> String {
    let rows: Vec<Vec<f64>> = sol.series.iter().map(|s| s.coeffs().to_vec()).collect();
    let mut s = csv_table(&sol.vars, &rows);
    s.push_str(&validity_line(&sol.validity));
    if let Some(e) = &sol.error_estimate {
        s.push_str(&estimate_line(e));
    }
    s
}

#[derive(Serialize)]
struct JsonVariable<'a> {
    name: &'a str,
    coefficients: &'a [f64],
}

#[derive(Serialize)]
struct JsonValidity {
    t_star: f64,
    t_alpha: Option<f64>,
    upper: f64,
}

#[derive(Serialize)]
struct JsonEstimate {
    #[serde(rename = "N")]
    order: usize,
    delta: f64,
    bound: Option<f64>,
    bounds: Vec<Option<f64>>,
}

#[derive(Serialize)]
struct JsonPivot<'a> {
    equation: &'a str,
    k: usize,
    pivot: f64,
}

#[derive(Serialize)]
pub struct JsonFailure {
    pub message: String,
    pub k: Option<usize>,
}

#[derive(Serialize)]
struct JsonSolution<'a> {
    variables: Vec<JsonVariable<'a>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    validity: Option<JsonValidity>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error_estimate: Option<JsonEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pivot_log: Option<Vec<JsonPivot<'a>>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<JsonFailure>,
}

fn to_json(value: &JsonSolution) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data serializes");
    s.push('\n');
    s
}

pub fn solution_json(sol: &TaylorSolution) -> String {
    to_json(&JsonSolution {
        variables: sol
            .vars
            .iter()
            .zip(&sol.series)
            .map(|(name, s)| JsonVariable {
                name,
                coefficients: s.coeffs(),
            })
            .collect(),
        validity: Some(JsonValidity {
            t_star: sol.validity.t_star,
            t_alpha: finite(sol.validity.t_alpha),
            upper: sol.validity.upper,
        }),
        error_estimate: sol.error_estimate.as_ref().map(|e| JsonEstimate {
            order: e.order,
            delta: e.delta,
            bound: finite(e.bound()),
            bounds: e.per_variable.iter().map(|b| finite(b.bound)).collect(),
        }),
        pivot_log: Some(
            sol.pivot_log
                .iter()
                .map(|p| JsonPivot {
                    equation: &sol.vars[p.equation],
                    k: p.k,
                    pivot: p.pivot,
                })
                .collect(),
        ),
        error: None,
    })
}

pub fn partial_json(vars: &[String], rows: &[Vec<f64>], failure: JsonFailure) -> String {
    to_json(&JsonSolution {
        variables: vars
            .iter()
            .zip(rows)
            .map(|(name, row)| JsonVariable {
                name,
                coefficients: row,
            })
            .collect(),
        validity: None,
        error_estimate: None,
        pivot_log: None,
        error: Some(failure),
    })
}
