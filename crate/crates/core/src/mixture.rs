//! Equilibrium for a mixture of exponential discounts `h(t) = Σ ω_i e^{−δ_i t}`.
//!
//! The auxiliary function separates as `c(s, t, x) = Σ ω_i e^{−δ_i (t−s)} V_i(x)`
//! where each `V_i` solves a constant-coefficient ODE on `[0, b)` and `[b, ∞)`:
//!
//! ```text
//! V_i(x) = C_i (e^{θ_i1 x} − e^{−θ_i2 x})       0 ≤ x < b
//! V_i(x) = M/δ_i − d_i e^{−θ_i3 x}              x ≥ b
//! ```
//!
//! Value and slope continuity of every `V_i` fix `C_i`, `d_i` as functions of
//! `b`; the marginal condition `Σ ω_i V_i'(b) = 1` becomes `F(b) = 0`, and `F`
//! is strictly decreasing, so the barrier is its unique root.

use serde::{Deserialize, Serialize};

use crate::discount::{DiscountSpec, ExpMixtureDiscount};
use crate::error::{Error, Result};
use crate::model::{ModelParams, ThetaTriple};
use crate::roots::{find_root_bracketed, DEFAULT_TOL};
use crate::solution::{check_nonneg, ComponentGap, EquilibriumSolution, Partials, SolutionCase};

/// Criterion values within this distance of 1 are treated as the always-pay boundary.
pub const CRITICAL_TOL: f64 = 1e-12;
/// Bracket expansion cap, in units of `σ²/μ`.
const BRACKET_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub rate: f64,
    pub theta: ThetaTriple,
    #[serde(rename = "C")]
    pub c: f64,
    pub d: f64,
}

impl MixtureComponent {
    /// `(V_i, V_i', V_i'')` using the branch selected by `below`.
    fn eval_branch(&self, max_rate: f64, x: f64, below: bool) -> (f64, f64, f64) {
        let ThetaTriple {
            theta1: t1,
            theta2: t2,
            theta3: t3,
        } = self.theta;
        if below {
            let (ep, em) = ((t1 * x).exp(), (-t2 * x).exp());
            (
                self.c * (ep - em),
                self.c * (t1 * ep + t2 * em),
                self.c * (t1 * t1 * ep - t2 * t2 * em),
            )
        } else {
            let e = (-t3 * x).exp();
            (
                max_rate / self.rate - self.d * e,
                self.d * t3 * e,
                -self.d * t3 * t3 * e,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSolution {
    pub params: ModelParams,
    pub discount: ExpMixtureDiscount,
    pub case: SolutionCase,
    pub b: f64,
    pub components: Vec<MixtureComponent>,
}

fn thetas(params: &ModelParams, disc: &ExpMixtureDiscount) -> Result<Vec<ThetaTriple>> {
    disc.rates.iter().map(|&r| params.thetas(r)).collect()
}

/// `Σ ω_i M θ_i3 / δ_i`; above 1 the equilibrium has an interior barrier.
pub fn barrier_criterion(params: &ModelParams, disc: &ExpMixtureDiscount) -> Result<f64> {
    params.validate()?;
    disc.validate()?;
    let th = thetas(params, disc)?;
    Ok(disc
        .components()
        .zip(&th)
        .map(|((w, r), t)| w * params.max_rate * t.theta3 / r)
        .sum())
}

/// `(θ₁ + θ₂ e^{−(θ₁+θ₂)b}) / ((θ₁+θ₃) + (θ₂−θ₃) e^{−(θ₁+θ₂)b})`, the
/// smooth-fit ratio with `e^{θ₁b}` factored out of both sides.
pub(crate) fn fit_ratio(t: &ThetaTriple, b: f64) -> f64 {
    let e = (-(t.theta1 + t.theta2) * b).exp();
    (t.theta1 + t.theta2 * e) / ((t.theta1 + t.theta3) + (t.theta2 - t.theta3) * e)
}

/// `(θ₁+θ₃) e^{θ₁b} + (θ₂−θ₃) e^{−θ₂b}` divided by `e^{θ₁b}`.
pub(crate) fn scaled_denominator(t: &ThetaTriple, b: f64) -> f64 {
    (t.theta1 + t.theta3) + (t.theta2 - t.theta3) * (-(t.theta1 + t.theta2) * b).exp()
}

/// Marginal-condition residual `F(b)`; its root is the equilibrium barrier.
pub fn f_eval(b: f64, params: &ModelParams, disc: &ExpMixtureDiscount) -> Result<f64> {
    check_nonneg("b", b)?;
    let th = thetas(params, disc)?;
    Ok(f_with_thetas(b, params, disc, &th))
}

fn f_with_thetas(b: f64, params: &ModelParams, disc: &ExpMixtureDiscount, th: &[ThetaTriple]) -> f64 {
    disc.components()
        .zip(th)
        .map(|((w, r), t)| w * params.max_rate * t.theta3 / r * fit_ratio(t, b))
        .sum::<f64>()
        - 1.0
}

/// Smooth-fit coefficients `(C_i, d_i)` for barrier `b`.
pub fn coefficients_from_barrier(
    b: f64,
    params: &ModelParams,
    disc: &ExpMixtureDiscount,
) -> Result<Vec<(f64, f64)>> {
    check_nonneg("b", b)?;
    let th = thetas(params, disc)?;
    Ok(disc
        .rates
        .iter()
        .zip(&th)
        .map(|(&r, t)| coefficients(params.max_rate, r, t, b))
        .collect())
}

pub(crate) fn coefficients(max_rate: f64, rate: f64, t: &ThetaTriple, b: f64) -> (f64, f64) {
    let den = scaled_denominator(t, b);
    let c = max_rate * t.theta3 / rate * (-t.theta1 * b).exp() / den;
    let d = max_rate / rate * (t.theta3 * b).exp() * fit_ratio(t, b);
    (c, d)
}

impl MixtureSolution {
    /// Solution of the smooth-fit system with the barrier fixed at `b`.
    ///
    /// Only the root of `F` satisfies the marginal condition; other barriers
    /// are useful for sensitivity checks.
    pub fn from_barrier(params: ModelParams, discount: ExpMixtureDiscount, b: f64) -> Result<Self> {
        params.validate()?;
        discount.validate()?;
        check_nonneg("b", b)?;
        let th = thetas(&params, &discount)?;
        let components = discount
            .components()
            .zip(th)
            .map(|((weight, rate), theta)| {
                let (c, d) = coefficients(params.max_rate, rate, &theta, b);
                MixtureComponent {
                    weight,
                    rate,
                    theta,
                    c,
                    d,
                }
            })
            .collect();
        Ok(MixtureSolution {
            params,
            discount,
            case: if b > 0.0 {
                SolutionCase::Barrier
            } else {
                SolutionCase::AlwaysPay
            },
            b,
            components,
        })
    }

    fn always_pay(params: ModelParams, discount: ExpMixtureDiscount) -> Result<Self> {
        let th = thetas(&params, &discount)?;
        let components = discount
            .components()
            .zip(th)
            .map(|((weight, rate), theta)| MixtureComponent {
                weight,
                rate,
                theta,
                c: 0.0,
                d: params.max_rate / rate,
            })
            .collect();
        Ok(MixtureSolution {
            params,
            discount,
            case: SolutionCase::AlwaysPay,
            b: 0.0,
            components,
        })
    }

    /// `(V_i(x), V_i'(x), V_i''(x))` for every component.
    pub fn component_values(&self, x: f64) -> Result<Vec<(f64, f64, f64)>> {
        check_nonneg("x", x)?;
        let below = x < self.b;
        Ok(self
            .components
            .iter()
            .map(|k| k.eval_branch(self.params.max_rate, x, below))
            .collect())
    }
}

/// Equilibrium for the mixture discount.
pub fn solve_mixture(params: &ModelParams, disc: &ExpMixtureDiscount) -> Result<MixtureSolution> {
    let criterion = barrier_criterion(params, disc)?;
    if criterion <= 1.0 + CRITICAL_TOL {
        return MixtureSolution::always_pay(*params, disc.clone());
    }
    let th = thetas(params, disc)?;
    let f = |b: f64| f_with_thetas(b, params, disc, &th);
    let cap = BRACKET_CAP * params.length_scale();
    let mut hi = 1.0;
    while f(hi) > 0.0 {
        if hi >= cap {
            return Err(Error::Numerical(format!(
                "F(b) has no sign change on [0, {cap}] although the barrier criterion is {criterion}"
            )));
        }
        hi = (2.0 * hi).min(cap);
    }
    let b = find_root_bracketed(f, 0.0, hi, DEFAULT_TOL)?;
    MixtureSolution::from_barrier(*params, disc.clone(), b)
}

impl EquilibriumSolution for MixtureSolution {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn discount_spec(&self) -> DiscountSpec {
        DiscountSpec::ExpMixture(self.discount.clone())
    }

    fn case(&self) -> SolutionCase {
        self.case
    }

    fn barrier(&self) -> f64 {
        self.b
    }

    fn partials(&self, u: f64, x: f64) -> Result<Partials> {
        check_nonneg("u", u)?;
        check_nonneg("x", x)?;
        let below = x < self.b;
        let mut p = Partials {
            c: 0.0,
            c_t: 0.0,
            c_x: 0.0,
            c_xx: 0.0,
        };
        for k in &self.components {
            let (v, vx, vxx) = k.eval_branch(self.params.max_rate, x, below);
            let w = if u == 0.0 { k.weight } else { k.weight * (-k.rate * u).exp() };
            p.c += w * v;
            p.c_t -= w * k.rate * v;
            p.c_x += w * vx;
            p.c_xx += w * vxx;
        }
        Ok(p)
    }

    fn component_gaps(&self) -> Vec<ComponentGap> {
        let m = self.params.max_rate;
        self.components
            .iter()
            .map(|k| {
                let (vl, dl, _) = k.eval_branch(m, self.b, true);
                let (vu, du, _) = k.eval_branch(m, self.b, false);
                ComponentGap {
                    value: (vu - vl).abs(),
                    derivative: (du - dl).abs(),
                }
            })
            .collect()
    }

    fn ode_residual(&self, x: f64) -> Result<f64> {
        let p = &self.params;
        let (drift, pay) = if x < self.b {
            (p.mu, 0.0)
        } else {
            (p.mu - p.max_rate, p.max_rate)
        };
        Ok(self
            .component_values(x)?
            .iter()
            .zip(&self.components)
            .map(|(&(v, vx, vxx), k)| (0.5 * p.sigma2() * vxx + drift * vx - k.rate * v + pay).abs())
            .fold(0.0, f64::max))
    }

    fn min_theta3(&self) -> f64 {
        self.components
            .iter()
            .map(|k| k.theta.theta3)
            .fold(f64::INFINITY, f64::min)
    }

    fn min_delta(&self) -> f64 {
        self.discount.min_rate()
    }
}
