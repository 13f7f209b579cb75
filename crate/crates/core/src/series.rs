//! Truncated power series about `t = 0`.
//!
//! A [`Series`] of truncation order `N` stores the Taylor coefficients
//! `U(0), ..., U(N)` of a function, so that `u(t) ≈ Σ U(k) tᵏ`. Every
//! operation here is a transform rule on those coefficient lists: products
//! are Cauchy convolutions, `u(qt)` scales coefficient `k` by `qᵏ`, and
//! elementary functions of a series are expanded with the usual first-order
//! recurrences so that coefficient `k` of the result only reads `u[0..=k]`.

use std::fmt;

use thiserror::Error;

/// Failure of a series operation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum SeriesError {
    #[error("truncation orders differ ({left} vs {right})")]
    OrderMismatch { left: usize, right: usize },
    #[error("argument scale q = {0} is outside (0, 1]")]
    ScaleOutOfRange(f64),
    #[error("cannot differentiate {m} times a series of truncation order {order}")]
    DerivativeTooHigh { m: usize, order: usize },
    #[error("cannot truncate a series of order {order} to order {requested}")]
    TruncateTooHigh { requested: usize, order: usize },
    #[error("{func} is undefined at constant term {constant}")]
    Domain { func: String, constant: f64 },
    #[error("composition needs an inner series with zero constant term, found {0}")]
    InnerConstant(f64),
    #[error("non-finite coefficient at index {0}")]
    NonFinite(usize),
    #[error("a series needs at least one coefficient")]
    Empty,
}

pub type Result<T> = std::result::Result<T, SeriesError>;

/// Elementary functions that can be composed with a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Elementary {
    Exp,
    Ln,
    Sin,
    Cos,
    /// Fixed real power `u^ρ`.
    Pow(f64),
    Reciprocal,
}

impl fmt::Display for Elementary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Elementary::Exp => f.write_str("exp"),
            Elementary::Ln => f.write_str("ln"),
            Elementary::Sin => f.write_str("sin"),
            Elementary::Cos => f.write_str("cos"),
            Elementary::Pow(rho) => write!(f, "pow({rho})"),
            Elementary::Reciprocal => f.write_str("reciprocal"),
        }
    }
}

/// Truncated Taylor series about 0. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    coeffs: Vec<f64>,
}

fn checked(coeffs: Vec<f64>) -> Result<Series> {
    if coeffs.is_empty() {
        return Err(SeriesError::Empty);
    }
    if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
        return Err(SeriesError::NonFinite(i));
    }
    Ok(Series { coeffs })
}

impl Series {
    /// Builds a series from its coefficients; the truncation order is `len - 1`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        checked(coeffs)
    }

    pub fn zero(order: usize) -> Self {
        Series {
            coeffs: vec![0.0; order + 1],
        }
    }

    pub fn constant(value: f64, order: usize) -> Self {
        let mut s = Self::zero(order);
        s.coeffs[0] = value;
        s
    }

    /// `tⁿ` truncated at `order`; all zeros when `n > order`.
    pub fn monomial(n: usize, order: usize) -> Self {
        let mut s = Self::zero(order);
        if n <= order {
            s.coeffs[n] = 1.0;
        }
        s
    }

    /// `e^{λt}`: coefficient `k` is `λᵏ/k!`.
    pub fn exp_linear(lambda: f64, order: usize) -> Self {
        let mut coeffs = Vec::with_capacity(order + 1);
        let mut c = 1.0;
        coeffs.push(c);
        for k in 1..=order {
            c *= lambda / k as f64;
            coeffs.push(c);
        }
        Series { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Coefficient `k`, or 0 past the truncation order.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn same_order(&self, other: &Series) -> Result<()> {
        if self.order() != other.order() {
            return Err(SeriesError::OrderMismatch {
                left: self.order(),
                right: other.order(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Series) -> Result<Series> {
        self.same_order(other)?;
        checked(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a + b)
                .collect(),
        )
    }

    pub fn sub(&self, other: &Series) -> Result<Series> {
        self.same_order(other)?;
        checked(
            self.coeffs
                .iter()
                .zip(&other.coeffs)
                .map(|(a, b)| a - b)
                .collect(),
        )
    }

    pub fn neg(&self) -> Series {
        Series {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }

    pub fn scalar_mul(&self, factor: f64) -> Result<Series> {
        checked(self.coeffs.iter().map(|c| factor * c).collect())
    }

    /// Cauchy product, truncated to the common order.
    pub fn mul(&self, other: &Series) -> Result<Series> {
        self.same_order(other)?;
        let n = self.coeffs.len();
        let mut out = vec![0.0; n];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for l in 0..=k {
                acc += self.coeffs[l] * other.coeffs[k - l];
            }
            *slot = acc;
        }
        checked(out)
    }

    /// Quotient `self / other`; the divisor must have a nonzero constant term.
    pub fn div(&self, other: &Series) -> Result<Series> {
        self.same_order(other)?;
        let b0 = other.coeffs[0];
        if b0 == 0.0 {
            return Err(SeriesError::Domain {
                func: "division".into(),
                constant: b0,
            });
        }
        let n = self.coeffs.len();
        let mut q = vec![0.0; n];
        for k in 0..n {
            let mut acc = self.coeffs[k];
            for j in 1..=k {
                acc -= other.coeffs[j] * q[k - j];
            }
            q[k] = acc / b0;
        }
        checked(q)
    }

    /// Series of `w(t) = u(qt)`: coefficient `k` becomes `qᵏ U(k)`.
    pub fn scale_arg(&self, q: f64) -> Result<Series> {
        if !(q > 0.0 && q <= 1.0) {
            return Err(SeriesError::ScaleOutOfRange(q));
        }
        let mut scale = 1.0;
        let out = self
            .coeffs
            .iter()
            .map(|c| {
                let v = c * scale;
                scale *= q;
                v
            })
            .collect();
        checked(out)
    }

    /// `m`-th derivative. The result has truncation order `N - m`: the
    /// coefficients past that are unknown, so they are dropped rather than
    /// padded with zeros.
    pub fn differentiate(&self, m: usize) -> Result<Series> {
        let order = self.order();
        if m > order {
            return Err(SeriesError::DerivativeTooHigh { m, order });
        }
        let out = (0..=order - m)
            .map(|k| falling_ratio(k, m) * self.coeffs[k + m])
            .collect();
        checked(out)
    }

    /// Drops coefficients above `order`.
    pub fn truncate(&self, order: usize) -> Result<Series> {
        if order > self.order() {
            return Err(SeriesError::TruncateTooHigh {
                requested: order,
                order: self.order(),
            });
        }
        Ok(Series {
            coeffs: self.coeffs[..=order].to_vec(),
        })
    }

    /// Polynomial composition `self(inner(t))`. `inner` must have a zero
    /// constant term so the result is exact up to the common order.
    ///
    /// Coefficient `k` of the result only reads `self[0..=k]` and
    /// `inner[0..=k]`, independent of the truncation order.
    pub fn compose(&self, inner: &Series) -> Result<Series> {
        self.same_order(inner)?;
        if inner.coeffs[0] != 0.0 {
            return Err(SeriesError::InnerConstant(inner.coeffs[0]));
        }
        let order = self.order();
        let mut out = vec![0.0; order + 1];
        let mut power = Series::constant(1.0, order);
        for (i, &c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                power = power.mul(inner)?;
            }
            // inner^i starts at t^i
            for (o, p) in out.iter_mut().zip(&power.coeffs).skip(i) {
                *o += c * p;
            }
        }
        checked(out)
    }

    /// Horner evaluation of the truncated polynomial.
    pub fn evaluate(&self, t: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * t + c)
    }

    /// Coefficients of `f(u(t))`.
    pub fn compose_elementary(&self, f: Elementary) -> Result<Series> {
        match f {
            Elementary::Exp => Ok(self.exp_series()?),
            Elementary::Ln => self.ln_series(),
            Elementary::Sin => Ok(self.sin_cos()?.0),
            Elementary::Cos => Ok(self.sin_cos()?.1),
            Elementary::Pow(rho) => self.pow(rho),
            Elementary::Reciprocal => {
                Series::constant(1.0, self.order())
                    .div(self)
                    .map_err(|e| match e {
                        SeriesError::Domain { constant, .. } => SeriesError::Domain {
                            func: "reciprocal".into(),
                            constant,
                        },
                        other => other,
                    })
            }
        }
    }

    // w' = u' w
    fn exp_series(&self) -> Result<Series> {
        let u = &self.coeffs;
        let mut w = vec![0.0; u.len()];
        w[0] = u[0].exp();
        for k in 1..u.len() {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += j as f64 * u[j] * w[k - j];
            }
            w[k] = acc / k as f64;
        }
        checked(w)
    }

    // u w' = u'
    fn ln_series(&self) -> Result<Series> {
        let u = &self.coeffs;
        if u[0] <= 0.0 {
            return Err(SeriesError::Domain {
                func: "ln".into(),
                constant: u[0],
            });
        }
        let mut w = vec![0.0; u.len()];
        w[0] = u[0].ln();
        for k in 1..u.len() {
            let mut acc = 0.0;
            for j in 1..k {
                acc += j as f64 * w[j] * u[k - j];
            }
            w[k] = (u[k] - acc / k as f64) / u[0];
        }
        checked(w)
    }

    // s' = u' c, c' = -u' s
    fn sin_cos(&self) -> Result<(Series, Series)> {
        let u = &self.coeffs;
        let n = u.len();
        let mut s = vec![0.0; n];
        let mut c = vec![0.0; n];
        s[0] = u[0].sin();
        c[0] = u[0].cos();
        for k in 1..n {
            let (mut as_, mut ac) = (0.0, 0.0);
            for j in 1..=k {
                let ju = j as f64 * u[j];
                as_ += ju * c[k - j];
                ac += ju * s[k - j];
            }
            s[k] = as_ / k as f64;
            c[k] = -ac / k as f64;
        }
        Ok((checked(s)?, checked(c)?))
    }

    fn pow(&self, rho: f64) -> Result<Series> {
        if rho.fract() == 0.0 && rho.abs() <= i32::MAX as f64 {
            let e = rho as i64;
            let positive = self.powi(e.unsigned_abs())?;
            return if e >= 0 {
                Ok(positive)
            } else {
                positive
                    .compose_elementary(Elementary::Reciprocal)
                    .map_err(|_| SeriesError::Domain {
                        func: format!("pow({rho})"),
                        constant: self.coeffs[0],
                    })
            };
        }
        let u = &self.coeffs;
        if u[0] <= 0.0 {
            return Err(SeriesError::Domain {
                func: format!("pow({rho})"),
                constant: u[0],
            });
        }
        // u w' = ρ u' w
        let mut w = vec![0.0; u.len()];
        w[0] = u[0].powf(rho);
        for k in 1..u.len() {
            let mut acc = 0.0;
            for j in 1..=k {
                acc += ((rho + 1.0) * j as f64 - k as f64) * u[j] * w[k - j];
            }
            w[k] = acc / (k as f64 * u[0]);
        }
        checked(w)
    }

    fn powi(&self, mut e: u64) -> Result<Series> {
        let mut result = Series::constant(1.0, self.order());
        let mut base = self.clone();
        while e > 0 {
            if e & 1 == 1 {
                result = result.mul(&base)?;
            }
            e >>= 1;
            if e > 0 {
                base = base.mul(&base)?;
            }
        }
        Ok(result)
    }
}

/// `(k+m)!/k!`
pub(crate) fn falling_ratio(k: usize, m: usize) -> f64 {
    ((k + 1)..=(k + m)).fold(1.0, |acc, i| acc * i as f64)
}

impl fmt::Display for Series {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("[")?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{c}")?;
        }
        f.write_str("]")
    }
}
