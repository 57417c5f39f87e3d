//! Truncated Taylor expansions that turn parameter dependence which is not
//! an inner product into one, plus the Lagrange remainder bounds that go with
//! them.
//!
//! The sintering mobilities carry Arrhenius factors `D0 exp(-Q / (kB T))`.
//! Expanding `exp(-x)` in `x = Q / (kB T)` gives
//!
//! ```text
//! D0 exp(-x) V_m / (kB T) ~ sum_i  [D0 Q^i] * [(-1)^i / (i! (kB T)^i) * V_m / (kB T)]
//! ```
//!
//! where the first bracket depends only on the parameters and the second
//! only on the temperature field.

use thiserror::Error;

use crate::field::ScalarField;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TaylorError {
    #[error("remainder bound for exp(-x) needs x >= 0, got {0}")]
    NegativeArgument(f64),
    #[error("invalid Arrhenius constants: {0}")]
    BadConstants(String),
    #[error("expected {expected} derivative values, got {got}")]
    DerivativeCount { expected: usize, got: usize },
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

/// Partial sums of `exp(-x) = sum_i (-x)^i / i!`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ExpSeries {
    pub order: usize,
}

pub fn expand_exp_ratio(order: usize) -> ExpSeries {
    ExpSeries { order }
}

impl ExpSeries {
    /// `(-1)^i / i!` for `i = 0..=order`.
    pub fn coefficients(&self) -> Vec<f64> {
        (0..=self.order)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 } / factorial(i))
            .collect()
    }

    pub fn eval(&self, x: f64) -> f64 {
        let mut term = 1.0;
        let mut sum = 1.0;
        for i in 1..=self.order {
            term *= -x / i as f64;
            sum += term;
        }
        sum
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderBound {
    pub order: usize,
    pub bound_value: f64,
}

/// Lagrange bound `x^(n+1) / (n+1)!` on `|exp(-x) - S_n(x)|` for `x >= 0`.
///
/// Every derivative of `exp(-x)` has magnitude at most one on `[0, x]`.
pub fn remainder_bound_exp(x: f64, order: usize) -> Result<RemainderBound, TaylorError> {
    if x.is_nan() || x < 0.0 {
        return Err(TaylorError::NegativeArgument(x));
    }
    Ok(RemainderBound {
        order,
        bound_value: x.powi(order as i32 + 1) / factorial(order + 1),
    })
}

/// Symbolic description of one parameter-side term `(theta - a)^i / i!`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermDescriptor {
    pub power: usize,
    pub inv_factorial: f64,
}

/// Generic expansion of a scalar `F(theta)` about `theta = a`, written as an
/// inner product of parameter terms and derivative values.
#[derive(Debug, Clone, PartialEq)]
pub struct TaylorDecomposition {
    pub center: f64,
    pub order: usize,
    pub param_terms: Vec<TermDescriptor>,
    pub feature_scalers: Vec<f64>,
}

impl TaylorDecomposition {
    /// `derivatives[i]` is `d^i F / d theta^i` at the center.
    pub fn new(center: f64, derivatives: Vec<f64>) -> Result<Self, TaylorError> {
        if derivatives.is_empty() {
            return Err(TaylorError::DerivativeCount {
                expected: 1,
                got: 0,
            });
        }
        let order = derivatives.len() - 1;
        let param_terms = (0..=order)
            .map(|i| TermDescriptor {
                power: i,
                inv_factorial: 1.0 / factorial(i),
            })
            .collect();
        Ok(Self {
            center,
            order,
            param_terms,
            feature_scalers: derivatives,
        })
    }

    pub fn param_vector(&self, theta: f64) -> Vec<f64> {
        let h = theta - self.center;
        self.param_terms
            .iter()
            .map(|t| h.powi(t.power as i32) * t.inv_factorial)
            .collect()
    }

    pub fn evaluate(&self, theta: f64) -> f64 {
        self.param_vector(theta)
            .iter()
            .zip(&self.feature_scalers)
            .map(|(p, f)| p * f)
            .sum()
    }
}

/// Taylor split of `D0 exp(-Q / (kB T)) V_m / (kB T)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrheniusTerm {
    pub d0: f64,
    pub q: f64,
    pub order: usize,
    pub kb: f64,
    pub vm: f64,
}

pub fn decompose_arrhenius_term(
    d0: f64,
    q: f64,
    order: usize,
    kb: f64,
) -> Result<ArrheniusTerm, TaylorError> {
    ArrheniusTerm::new(d0, q, order, kb, 1.0)
}

impl ArrheniusTerm {
    pub fn new(d0: f64, q: f64, order: usize, kb: f64, vm: f64) -> Result<Self, TaylorError> {
        let ok = d0 > 0.0 && d0.is_finite() && q >= 0.0 && q.is_finite() && kb > 0.0 && kb.is_finite()
            && vm > 0.0
            && vm.is_finite();
        if !ok {
            return Err(TaylorError::BadConstants(format!(
                "D0={d0}, Q={q}, kB={kb}, Vm={vm} (need D0, kB, Vm > 0 and Q >= 0)"
            )));
        }
        Ok(Self {
            d0,
            q,
            order,
            kb,
            vm,
        })
    }

    /// `[D0, D0 Q, ..., D0 Q^order]`.
    pub fn param_vector(&self) -> Vec<f64> {
        arrhenius_params(self.d0, self.q, self.order)
    }

    /// Temperature-side factor of term `i`: `(-1)^i V_m / (i! (kB T)^(i+1))`.
    pub fn feature_scale(&self, temperature: f64, i: usize) -> f64 {
        arrhenius_feature_scale(self.kb, self.vm, temperature, i)
    }

    /// Feature field `i` for a model-supplied carrier field.
    pub fn feature(&self, temperature: &ScalarField, base: &ScalarField, i: usize) -> ScalarField {
        temperature
            .zip_map(base, |t, b| self.feature_scale(t, i) * b)
            .expect("temperature and carrier share a grid")
    }

    /// Truncated value of the full term at one temperature, carrier = 1.
    pub fn truncated(&self, temperature: f64) -> f64 {
        self.param_vector()
            .iter()
            .enumerate()
            .map(|(i, p)| p * self.feature_scale(temperature, i))
            .sum()
    }

    /// Pointwise bound on `|truncated - exact|` at temperature `T`.
    pub fn truncation_bound(&self, temperature: f64) -> f64 {
        let kt = self.kb * temperature;
        let x = self.q / kt;
        let r = remainder_bound_exp(x, self.order)
            .map(|r| r.bound_value)
            .unwrap_or(f64::INFINITY);
        self.d0 * r * self.vm / kt
    }
}

pub fn arrhenius_params(d0: f64, q: f64, order: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(order + 1);
    let mut p = d0;
    for _ in 0..=order {
        out.push(p);
        p *= q;
    }
    out
}

/// `d/dD0` and `d/dQ` of `D0 Q^i`.
pub fn arrhenius_param_derivs(d0: f64, q: f64, i: usize) -> (f64, f64) {
    let dd0 = q.powi(i as i32);
    let dq = if i == 0 {
        0.0
    } else {
        i as f64 * d0 * q.powi(i as i32 - 1)
    };
    (dd0, dq)
}

pub fn arrhenius_feature_scale(kb: f64, vm: f64, temperature: f64, i: usize) -> f64 {
    let kt = kb * temperature;
    let sign = if i.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * vm / (factorial(i) * kt.powi(i as i32 + 1))
}
