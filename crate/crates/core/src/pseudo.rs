//! Equilibrium for the pseudo-exponential discount `h(t) = (1 + λt) e^{−δt}`.
//!
//! The auxiliary function is `c(s, t, x) = e^{−δu} (λu V₃(x) + V₄(x))` with
//! `u = t − s`. `V₃` is the exponentially discounted value of the barrier
//! strategy; `V₄` solves the same ODE with the source `λV₃`:
//!
//! ```text
//! V₄(x) = (Ĉ − B₁x) e^{θ₁x} − (Ĉ + B₁x) e^{−θ₂x}        0 ≤ x < b
//! V₄(x) = (1 + λ/δ) M/δ + (D₃ + B₃x) e^{−θ₃x}           x ≥ b
//! ```
//!
//! The barrier is a root of `G(b)`, obtained by eliminating `Ĉ` and `D₃`
//! from the smooth-fit system of `V₄`. `G` may have several positive roots;
//! the first one whose solution passes the threshold/concavity check wins.

use serde::{Deserialize, Serialize};

use crate::discount::{DiscountSpec, PseudoExpDiscount};
use crate::error::{Error, Result};
use crate::mixture::{coefficients, fit_ratio, scaled_denominator, CRITICAL_TOL};
use crate::model::{ModelParams, ThetaTriple};
use crate::roots::{find_root_bracketed, DEFAULT_TOL};
use crate::solution::{check_nonneg, ComponentGap, EquilibriumSolution, Partials, SolutionCase};
use crate::verify::{default_x_grid, threshold_and_concavity};

/// Relative agreement required between the two closed forms of `Ĉ` and `D₃`.
pub const CROSS_CHECK_TOL: f64 = 1e-9;
/// Scan step for sign changes of `G`, in units of `σ²/μ`.
const SCAN_STEP: f64 = 0.01;
/// Past `SATURATION / (θ₁ + θ₂)` every b-dependent term of the scaled `G`
/// is below double precision, so no further sign change is possible.
const SATURATION: f64 = 60.0;
const VERIFY_POINTS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PseudoCase {
    AlwaysPay,
    Barrier,
    /// Neither closed-form regime applies.
    Unsupported,
}

/// λ-thresholds for a given `δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LambdaBounds {
    /// Below (or at) this value with `δ/M > θ₃` the always-pay regime holds.
    pub lower_existence: f64,
    /// Above this value `G` need not turn negative.
    pub upper_existence: f64,
    /// Up to this value concavity of `V₄` below the barrier is guaranteed.
    pub upper_b1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoSolution {
    pub params: ModelParams,
    pub discount: PseudoExpDiscount,
    pub case: SolutionCase,
    pub b: f64,
    pub theta: ThetaTriple,
    #[serde(rename = "C")]
    pub c: f64,
    pub d: f64,
    #[serde(rename = "Chat")]
    pub chat: f64,
    #[serde(rename = "B1")]
    pub b1: f64,
    #[serde(rename = "B3")]
    pub b3: f64,
    #[serde(rename = "D3")]
    pub d3: f64,
    /// Whether λ is within the bound that guarantees concavity a priori.
    pub concavity_certified: bool,
}

/// `(θ₁/δ − 1/(μ+σ²θ₁), 1/(μ−M−σ²θ₃) + θ₃/δ)`, both positive.
pub fn lemma_a1_quantities(params: &ModelParams, delta: f64) -> Result<(f64, f64)> {
    let t = params.thetas(delta)?;
    Ok(a1(params, delta, &t))
}

fn a1(params: &ModelParams, delta: f64, t: &ThetaTriple) -> (f64, f64) {
    let s2 = params.sigma2();
    let q1 = t.theta1 / delta - 1.0 / (params.mu + s2 * t.theta1);
    let q2 = 1.0 / (params.mu - params.max_rate - s2 * t.theta3) + t.theta3 / delta;
    (q1, q2)
}

pub fn lambda_bounds(params: &ModelParams, delta: f64) -> Result<LambdaBounds> {
    params.validate()?;
    let t = params.thetas(delta)?;
    Ok(bounds(params, delta, &t))
}

fn bounds(params: &ModelParams, delta: f64, t: &ThetaTriple) -> LambdaBounds {
    let (q1, q2) = a1(params, delta, t);
    let m = params.max_rate;
    let (t1, t2, t3) = (t.theta1, t.theta2, t.theta3);
    let lower = (delta / m - t3) / q2;
    let upper = (t1 + t3) * (delta / m * (t1 + t3) - t1 * t3) / (t1 * t1 * q2 + t3 * t3 * q1);
    let scale = delta * delta / (m * t3);
    let b1a = (t1 + t2) / (t1 + 3.0 * t2);
    let b1b = (t1 + t3) * (t1 + t2) / (2.0 * t1 * (t1 + 2.0 * t2));
    LambdaBounds {
        lower_existence: lower,
        upper_existence: upper,
        upper_b1: b1a.min(b1b) * scale,
    }
}

/// Which closed-form regime applies.
///
/// `λ = 0` follows the single-exponential rule (always pay iff `Mθ₃/δ ≤ 1`).
/// The a-priori concavity bound is not part of the classification; it is
/// reported on the solution and the barrier solution is checked numerically.
pub fn case_classifier(params: &ModelParams, disc: &PseudoExpDiscount) -> Result<PseudoCase> {
    params.validate()?;
    if disc.lambda >= disc.delta {
        return Err(Error::Domain {
            what: "lambda (must be < delta)",
            value: disc.lambda,
        });
    }
    disc.validate()?;
    let t = params.thetas(disc.delta)?;
    Ok(classify(params, disc, &t))
}

fn classify(params: &ModelParams, disc: &PseudoExpDiscount, t: &ThetaTriple) -> PseudoCase {
    let lb = bounds(params, disc.delta, t);
    let lam = disc.lambda;
    if lam == 0.0 {
        return if params.max_rate * t.theta3 / disc.delta <= 1.0 + CRITICAL_TOL {
            PseudoCase::AlwaysPay
        } else {
            PseudoCase::Barrier
        };
    }
    if disc.delta / params.max_rate > t.theta3 && lam <= lb.lower_existence {
        PseudoCase::AlwaysPay
    } else if lb.lower_existence < lam && lam < lb.upper_existence {
        PseudoCase::Barrier
    } else {
        PseudoCase::Unsupported
    }
}

/// `(C, d, B₁, B₃)` of the smooth-fit system for barrier `b`.
fn v3_coefficients(params: &ModelParams, disc: &PseudoExpDiscount, t: &ThetaTriple, b: f64) -> (f64, f64, f64, f64) {
    let (c, d) = coefficients(params.max_rate, disc.delta, t, b);
    let s2 = params.sigma2();
    let b1 = disc.lambda * c / (params.mu + s2 * t.theta1);
    let b3 = disc.lambda * d / (params.mu - params.max_rate - s2 * t.theta3);
    (c, d, b1, b3)
}

/// `G(b) e^{−θ₁b}`: same sign and roots as `G`, bounded in `b`.
fn g_scaled(b: f64, params: &ModelParams, disc: &PseudoExpDiscount, t: &ThetaTriple) -> f64 {
    let (t1, t2, t3) = (t.theta1, t.theta2, t.theta3);
    let (m, delta, lam) = (params.max_rate, disc.delta, disc.lambda);
    let s2 = params.sigma2();
    let den = scaled_denominator(t, b);
    let ratio = fit_ratio(t, b);
    // B₁ = k1·e^{−θ₁b}, B₃ = k3·e^{θ₃b}
    let k1 = lam * (m * t3 / delta) / ((params.mu + s2 * t1) * den);
    let k3 = lam * (m / delta) * ratio / (params.mu - m - s2 * t3);
    let a = (1.0 + lam / delta) * m / delta;
    let e = (-(t1 + t2) * b).exp();
    -t3 * k1
        + t3 * k1 * e * e
        + t1 * k3
        + t2 * k3 * e
        + 2.0 * (t1 + t2) * t3 * k1 * b * e
        + (t1 * t3 * a - (t1 + t3))
        + (t2 * t3 * a - (t2 - t3)) * e
}

/// The barrier equation `G(b)`, whose positive roots are candidate barriers.
pub fn g_eval(b: f64, params: &ModelParams, disc: &PseudoExpDiscount) -> Result<f64> {
    check_nonneg("b", b)?;
    params.validate()?;
    disc.validate()?;
    let t = params.thetas(disc.delta)?;
    Ok(g_scaled(b, params, disc, &t) * (t.theta1 * b).exp())
}

impl PseudoSolution {
    fn always_pay(params: ModelParams, discount: PseudoExpDiscount, theta: ThetaTriple, certified: bool) -> Self {
        let (m, delta, lam) = (params.max_rate, discount.delta, discount.lambda);
        let d = m / delta;
        PseudoSolution {
            params,
            discount,
            case: SolutionCase::AlwaysPay,
            b: 0.0,
            theta,
            c: 0.0,
            d,
            chat: 0.0,
            b1: 0.0,
            b3: lam * d / (params.mu - m - params.sigma2() * theta.theta3),
            d3: -(1.0 + lam / delta) * d,
            concavity_certified: certified,
        }
    }

    /// Smooth-fit solution with the barrier fixed at `b > 0`, using the
    /// marginal-condition forms of `Ĉ` and `D₃`.
    pub fn from_barrier(params: ModelParams, discount: PseudoExpDiscount, b: f64) -> Result<Self> {
        params.validate()?;
        discount.validate()?;
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Domain { what: "b", value: b });
        }
        let theta = params.thetas(discount.delta)?;
        let (c, d, b1, b3) = v3_coefficients(&params, &discount, &theta, b);
        let (t1, t2, t3) = (theta.theta1, theta.theta2, theta.theta3);
        let (ep, em) = ((t1 * b).exp(), (-t2 * b).exp());
        let chat = (1.0 + (t1 * b + 1.0) * b1 * ep - (t2 * b - 1.0) * b1 * em) / (t1 * ep + t2 * em);
        let d3 = (b3 - (t3 * b).exp()) / t3 - b3 * b;
        let lb = bounds(&params, discount.delta, &theta);
        Ok(PseudoSolution {
            params,
            discount,
            case: SolutionCase::Barrier,
            b,
            theta,
            c,
            d,
            chat,
            b1,
            b3,
            d3,
            concavity_certified: discount.lambda <= lb.upper_b1,
        })
    }

    /// `Ĉ` and `D₃` from value and slope continuity of `V₄` alone.
    pub fn smooth_fit_coefficients(&self) -> (f64, f64) {
        let ThetaTriple {
            theta1: t1,
            theta2: t2,
            theta3: t3,
        } = self.theta;
        let b = self.b;
        let a = self.tail_level();
        let (ep, em, e3) = ((t1 * b).exp(), (-t2 * b).exp(), (-t3 * b).exp());
        let den = (t1 + t3) * ep + (t2 - t3) * em;
        let chat = (((t1 + t3) * b + 1.0) * self.b1 * ep - ((t2 - t3) * b - 1.0) * self.b1 * em
            + self.b3 * e3
            + t3 * a)
            / den;
        let d3 = (t3 * b).exp() * ((chat - self.b1 * b) * ep - (chat + self.b1 * b) * em - a) - self.b3 * b;
        (chat, d3)
    }

    /// Largest relative disagreement between the two forms of `Ĉ` and `D₃`.
    pub fn cross_check_error(&self) -> f64 {
        let (chat, d3) = self.smooth_fit_coefficients();
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);
        rel(chat, self.chat).max(rel(d3, self.d3))
    }

    /// `(1 + λ/δ) M/δ`, the limit of `V₄` at infinity.
    pub fn tail_level(&self) -> f64 {
        (1.0 + self.discount.lambda / self.discount.delta) * self.params.max_rate / self.discount.delta
    }

    fn v3_branch(&self, x: f64, below: bool) -> (f64, f64, f64) {
        let t = self.theta;
        if below {
            let (ep, em) = ((t.theta1 * x).exp(), (-t.theta2 * x).exp());
            (
                self.c * (ep - em),
                self.c * (t.theta1 * ep + t.theta2 * em),
                self.c * (t.theta1 * t.theta1 * ep - t.theta2 * t.theta2 * em),
            )
        } else {
            let e = (-t.theta3 * x).exp();
            (
                self.params.max_rate / self.discount.delta - self.d * e,
                self.d * t.theta3 * e,
                -self.d * t.theta3 * t.theta3 * e,
            )
        }
    }

    fn v4_branch(&self, x: f64, below: bool) -> (f64, f64, f64) {
        let ThetaTriple {
            theta1: t1,
            theta2: t2,
            theta3: t3,
        } = self.theta;
        if below {
            let (ep, em) = ((t1 * x).exp(), (-t2 * x).exp());
            let (p, q) = (self.chat - self.b1 * x, self.chat + self.b1 * x);
            (
                p * ep - q * em,
                (t1 * p - self.b1) * ep + (t2 * q - self.b1) * em,
                (t1 * t1 * p - 2.0 * t1 * self.b1) * ep - (t2 * t2 * q - 2.0 * t2 * self.b1) * em,
            )
        } else {
            let e = (-t3 * x).exp();
            let r = self.d3 + self.b3 * x;
            (
                self.tail_level() + r * e,
                (self.b3 - t3 * r) * e,
                (t3 * t3 * r - 2.0 * t3 * self.b3) * e,
            )
        }
    }

    /// `(V₃, V₃', V₃'')` at `x`.
    pub fn v3(&self, x: f64) -> Result<(f64, f64, f64)> {
        check_nonneg("x", x)?;
        Ok(self.v3_branch(x, x < self.b))
    }

    /// `(V₄, V₄', V₄'')` at `x`.
    pub fn v4(&self, x: f64) -> Result<(f64, f64, f64)> {
        check_nonneg("x", x)?;
        Ok(self.v4_branch(x, x < self.b))
    }

    pub fn v3_eval(&self, x: f64) -> Result<f64> {
        Ok(self.v3(x)?.0)
    }

    pub fn v4_eval(&self, x: f64) -> Result<f64> {
        Ok(self.v4(x)?.0)
    }
}

/// `θ₁Ĉ − 3B₁ − θ₁B₁b`; its positivity makes `V₄'''` positive below the barrier.
pub fn lemma_b1_quantity(sol: &PseudoSolution) -> Result<f64> {
    if sol.case != SolutionCase::Barrier {
        return Err(Error::NotBarrierCase);
    }
    let t1 = sol.theta.theta1;
    Ok(t1 * sol.chat - 3.0 * sol.b1 - t1 * sol.b1 * sol.b)
}

/// Equilibrium for the pseudo-exponential discount.
pub fn solve_pseudo(params: &ModelParams, disc: &PseudoExpDiscount) -> Result<PseudoSolution> {
    let case = case_classifier(params, disc)?;
    let theta = params.thetas(disc.delta)?;
    let certified = disc.lambda <= bounds(params, disc.delta, &theta).upper_b1;
    match case {
        PseudoCase::Unsupported => Err(Error::Unsupported(format!(
            "lambda = {} satisfies neither the always-pay nor the barrier condition",
            disc.lambda
        ))),
        PseudoCase::AlwaysPay => Ok(PseudoSolution::always_pay(*params, *disc, theta, certified)),
        PseudoCase::Barrier => solve_barrier(params, disc, &theta),
    }
}

fn solve_barrier(params: &ModelParams, disc: &PseudoExpDiscount, theta: &ThetaTriple) -> Result<PseudoSolution> {
    let g = |b: f64| g_scaled(b, params, disc, theta);
    let step = SCAN_STEP * params.length_scale();
    let cap = SATURATION / (theta.theta1 + theta.theta2) + step;
    let mut lo = 0.0;
    let mut g_lo = g(lo);
    let mut rejected = Vec::new();
    while lo < cap {
        let hi = lo + step;
        let g_hi = g(hi);
        if g_lo > 0.0 && g_hi <= 0.0 {
            let b = find_root_bracketed(g, lo, hi, DEFAULT_TOL)?;
            let sol = PseudoSolution::from_barrier(*params, *disc, b)?;
            let err = sol.cross_check_error();
            if err > CROSS_CHECK_TOL {
                return Err(Error::Numerical(format!(
                    "smooth-fit coefficient forms disagree at b = {b} (relative error {err:e})"
                )));
            }
            let grid = default_x_grid(&sol, VERIFY_POINTS);
            let (threshold, concavity) = threshold_and_concavity(&sol, &grid)?;
            if threshold == 0 && concavity == 0 {
                return Ok(sol);
            }
            rejected.push(b);
        }
        lo = hi;
        g_lo = g_hi;
    }
    if rejected.is_empty() {
        Err(Error::Numerical(format!("G(b) has no sign change on (0, {cap}]")))
    } else {
        Err(Error::Numerical(format!(
            "no root of G passes the threshold/concavity check (rejected {rejected:?})"
        )))
    }
}

impl EquilibriumSolution for PseudoSolution {
    fn params(&self) -> &ModelParams {
        &self.params
    }

    fn discount_spec(&self) -> DiscountSpec {
        DiscountSpec::PseudoExp(self.discount)
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
        let (v3, v3x, v3xx) = self.v3_branch(x, below);
        let (v4, v4x, v4xx) = self.v4_branch(x, below);
        let (lam, delta) = (self.discount.lambda, self.discount.delta);
        let e = if u == 0.0 { 1.0 } else { (-delta * u).exp() };
        let c = e * (lam * u * v3 + v4);
        Ok(Partials {
            c,
            c_t: e * lam * v3 - delta * c,
            c_x: e * (lam * u * v3x + v4x),
            c_xx: e * (lam * u * v3xx + v4xx),
        })
    }

    fn component_gaps(&self) -> Vec<ComponentGap> {
        let gap = |lo: (f64, f64, f64), hi: (f64, f64, f64)| ComponentGap {
            value: (hi.0 - lo.0).abs(),
            derivative: (hi.1 - lo.1).abs(),
        };
        vec![
            gap(self.v3_branch(self.b, true), self.v3_branch(self.b, false)),
            gap(self.v4_branch(self.b, true), self.v4_branch(self.b, false)),
        ]
    }

    fn ode_residual(&self, x: f64) -> Result<f64> {
        let p = &self.params;
        let (v3, v3x, v3xx) = self.v3(x)?;
        let (v4, v4x, v4xx) = self.v4(x)?;
        let (drift, pay) = if x < self.b {
            (p.mu, 0.0)
        } else {
            (p.mu - p.max_rate, p.max_rate)
        };
        let delta = self.discount.delta;
        let r3 = 0.5 * p.sigma2() * v3xx + drift * v3x - delta * v3 + pay;
        let r4 = 0.5 * p.sigma2() * v4xx + drift * v4x - delta * v4 + self.discount.lambda * v3 + pay;
        Ok(r3.abs().max(r4.abs()))
    }

    fn min_theta3(&self) -> f64 {
        self.theta.theta3
    }

    fn min_delta(&self) -> f64 {
        self.discount.delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discount::ExpMixtureDiscount;
    use crate::mixture::solve_mixture;

    fn unit() -> ModelParams {
        ModelParams::new(1.0, 1.0, 1.0).unwrap()
    }

    fn solve(lambda: f64) -> PseudoSolution {
        solve_pseudo(&unit(), &PseudoExpDiscount::new(lambda, 0.8).unwrap()).unwrap()
    }

    /// G(b) exactly as the seven-term expression, with B₁, B₃ through C(b), d(b).
    fn g_direct(b: f64, p: &ModelParams, disc: &PseudoExpDiscount) -> f64 {
        let t = p.thetas(disc.delta).unwrap();
        let (t1, t2, t3) = (t.theta1, t.theta2, t.theta3);
        let (_, _, b1, b3) = v3_coefficients(p, disc, &t, b);
        let a = (1.0 + disc.lambda / disc.delta) * p.max_rate / disc.delta;
        -t3 * b1 * (2.0 * t1 * b).exp() + t3 * b1 * (-2.0 * t2 * b).exp()
            + t1 * b3 * ((t1 - t3) * b).exp()
            + t2 * b3 * (-(t2 + t3) * b).exp()
            + 2.0 * (t1 + t2) * t3 * b1 * b * ((t1 - t2) * b).exp()
            + (t1 * t3 * a - (t1 + t3)) * (t1 * b).exp()
            + (t2 * t3 * a - (t2 - t3)) * (-t2 * b).exp()
    }

    #[test]
    fn a1_quantities() {
        let (q1, q2) = lemma_a1_quantities(&unit(), 0.8).unwrap();
        let t1 = -1.0 + 2.6f64.sqrt();
        assert!((q1 - (t1 / 0.8 - 1.0 / (1.0 + t1))).abs() < 1e-15);
        assert!((q1 - 0.145_391).abs() < 1e-6);
        assert!((q2 - 0.790_569).abs() < 1e-6);
        // squared forms from the positivity argument
        let p = ModelParams::new(1.3, 0.7, 0.4).unwrap();
        let delta = 0.35;
        let (q1, q2) = lemma_a1_quantities(&p, delta).unwrap();
        let (mu, s2, dm) = (p.mu, p.sigma2(), p.mu - p.max_rate);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let r1 = (mu * mu + 2.0 * s2 * delta).sqrt();
        let r3 = (dm * dm + 2.0 * s2 * delta).sqrt();
        let sq1 = (h * mu - (0.5 * mu * mu + s2 * delta).sqrt()).powi(2) / (s2 * delta * r1);
        let sq2 = (h * dm + (0.5 * dm * dm + s2 * delta).sqrt()).powi(2) / (s2 * delta * r3);
        assert!(((q1 - sq1) / sq1).abs() < 1e-10);
        assert!(((q2 - sq2) / sq2).abs() < 1e-10);
    }

    #[test]
    fn bounds_example() {
        let lb = lambda_bounds(&unit(), 0.8).unwrap();
        let t3 = 1.6f64.sqrt();
        assert!((unit().thetas(0.8).unwrap().theta3 - t3).abs() < 1e-15);
        assert!((t3 - 1.264_911).abs() < 1e-6);
        assert!(lb.lower_existence < 0.0);
        assert!(lb.upper_existence > 0.2);
        assert!(lb.upper_b1 > 0.0);
    }

    #[test]
    fn classifier_examples() {
        let p = ModelParams::new(1.0, 1.0, 0.3).unwrap();
        let disc = PseudoExpDiscount::new(0.2, 0.8).unwrap();
        let t3 = 0.7 + (0.49f64 + 1.6).sqrt();
        assert!((t3 - 2.145_683).abs() < 1e-6);
        let bound = (0.8 / 0.3 - t3) / (1.0 / (0.7 - t3) + t3 / 0.8);
        assert!((bound - 0.2617).abs() < 1e-4);
        assert_eq!(case_classifier(&p, &disc).unwrap(), PseudoCase::AlwaysPay);

        let disc = PseudoExpDiscount::new(0.1, 0.8).unwrap();
        assert_eq!(case_classifier(&unit(), &disc).unwrap(), PseudoCase::Barrier);
        let disc = PseudoExpDiscount::new(0.0, 0.8).unwrap();
        assert_eq!(case_classifier(&unit(), &disc).unwrap(), PseudoCase::Barrier);
    }

    #[test]
    fn classifier_rejects_lambda_at_delta() {
        let disc = PseudoExpDiscount {
            lambda: 0.8,
            delta: 0.8,
        };
        assert!(matches!(case_classifier(&unit(), &disc), Err(Error::Domain { .. })));
    }

    #[test]
    fn unsupported_region_lies_past_the_existence_bound() {
        // in a parameter sweep the existence bound never dropped below δ, so
        // the region is reached only by the raw classifier with λ ≥ δ
        let lb = lambda_bounds(&unit(), 0.8).unwrap();
        assert!(lb.upper_existence > 0.8);
        let t = unit().thetas(0.8).unwrap();
        let past = PseudoExpDiscount {
            lambda: lb.upper_existence * 1.01,
            delta: 0.8,
        };
        assert_eq!(classify(&unit(), &past, &t), PseudoCase::Unsupported);
        let inside = PseudoExpDiscount {
            lambda: lb.upper_existence * 0.99,
            delta: 0.8,
        };
        assert_eq!(classify(&unit(), &inside, &t), PseudoCase::Barrier);
        assert!(solve_pseudo(&unit(), &past).is_err());
    }

    #[test]
    fn g_at_zero() {
        for lam in [0.0, 0.1, 0.2] {
            let p = unit();
            let disc = PseudoExpDiscount::new(lam, 0.8).unwrap();
            let t = p.thetas(0.8).unwrap();
            let expected = (t.theta1 + t.theta2)
                * ((lam / (p.mu - p.max_rate - t.theta3) + t.theta3 * (1.0 + lam / 0.8)) / 0.8 - 1.0);
            let g0 = g_eval(0.0, &p, &disc).unwrap();
            assert!((g0 - expected).abs() < 1e-12, "{g0} vs {expected}");
        }
    }

    #[test]
    fn scaled_g_matches_direct_expression() {
        let p = unit();
        for lam in [0.0, 0.1, 0.2] {
            let disc = PseudoExpDiscount::new(lam, 0.8).unwrap();
            for i in 0..50 {
                let b = i as f64 * 0.1;
                let direct = g_direct(b, &p, &disc);
                let g = g_eval(b, &p, &disc).unwrap();
                assert!((g - direct).abs() <= 1e-11 * direct.abs().max(1.0), "b={b}: {g} vs {direct}");
            }
        }
        let disc = PseudoExpDiscount::new(0.1, 0.8).unwrap();
        assert!(g_scaled(1e5, &p, &disc, &p.thetas(0.8).unwrap()).is_finite());
    }

    #[test]
    fn lambda_zero_reduces_to_single_exponential() {
        let p = unit();
        let sol = solve(0.0);
        let mix = solve_mixture(&p, &ExpMixtureDiscount::exponential(0.8).unwrap()).unwrap();
        assert!((sol.b - 0.3470).abs() < 5e-4);
        assert!((sol.b - mix.b).abs() < 1e-8);
        for i in 0..100 {
            let x = i as f64 * 0.03;
            for u in [0.0, 0.5, 3.0] {
                let a = sol.value_st(u, x).unwrap();
                let b = mix.value_st(u, x).unwrap();
                assert!((a - b).abs() < 1e-8, "u={u} x={x}: {a} vs {b}");
            }
        }
        assert_eq!(sol.b1, 0.0);
        assert_eq!(sol.b3, 0.0);
    }

    /// Barrier of the pseudo-exponential problem through an independent
    /// route: for a fixed barrier the λ-part of the value is `−∂V/∂δ` of the
    /// exponentially discounted value, so the marginal condition reads
    /// `V_δ'(b) − λ ∂_δ V_δ'(b) = 1`.
    fn barrier_by_rate_derivative(lambda: f64) -> f64 {
        let p = unit();
        let slope = |b: f64, delta: f64| {
            let t = p.thetas(delta).unwrap();
            let (c, _) = coefficients(p.max_rate, delta, &t, b);
            c * (t.theta1 * (t.theta1 * b).exp() + t.theta2 * (-t.theta2 * b).exp())
        };
        let h = 1e-5;
        let f = |b: f64| slope(b, 0.8) - lambda * (slope(b, 0.8 + h) - slope(b, 0.8 - h)) / (2.0 * h) - 1.0;
        find_root_bracketed(f, 1e-6, 5.0, 1e-13).unwrap()
    }

    #[test]
    fn barrier_matches_rate_derivative_oracle() {
        for lam in [0.0, 0.1, 0.2] {
            let oracle = barrier_by_rate_derivative(lam);
            let sol = solve(lam);
            assert!((sol.b - oracle).abs() < 1e-8, "λ={lam}: {} vs {oracle}", sol.b);
        }
        // frozen values of the oracle
        assert!((barrier_by_rate_derivative(0.1) - 0.411_269_01).abs() < 1e-7);
        assert!((barrier_by_rate_derivative(0.2) - 0.474_294_22).abs() < 1e-7);
    }

    #[test]
    fn coefficient_forms_agree() {
        for lam in [0.0, 0.1, 0.2] {
            let sol = solve(lam);
            assert!(sol.cross_check_error() < CROSS_CHECK_TOL);
            if lam > 0.0 {
                assert!(sol.b1 > 0.0 && sol.b3 < 0.0);
            }
        }
    }

    #[test]
    fn v3_v4_boundaries() {
        let sol = solve(0.1);
        assert_eq!(sol.v3_eval(0.0).unwrap(), 0.0);
        assert!(sol.v4_eval(0.0).unwrap().abs() < 1e-15);
        assert!((sol.v3_eval(100.0).unwrap() - 1.25).abs() < 1e-12);
        assert!((sol.v4_eval(100.0).unwrap() - 1.40625).abs() < 1e-12);
        let gaps = sol.component_gaps();
        assert!(gaps.iter().all(|g| g.value < 1e-9 && g.derivative < 1e-9), "{gaps:?}");
        assert!((sol.v4(sol.b).unwrap().1 - 1.0).abs() < 1e-9);
        assert!(sol.v3_eval(-0.1).is_err());
    }

    #[test]
    fn always_pay_closed_form() {
        let p = ModelParams::new(1.0, 1.0, 0.3).unwrap();
        let disc = PseudoExpDiscount::new(0.2, 0.8).unwrap();
        let sol = solve_pseudo(&p, &disc).unwrap();
        assert_eq!(sol.case, SolutionCase::AlwaysPay);
        let t3 = sol.theta.theta3;
        let q = 1.0 / (p.mu - p.max_rate - t3);
        let md = p.max_rate / 0.8;
        for x in [0.0, 0.2, 1.0, 5.0] {
            let expected = (1.0 + 0.25) * md + md * (0.2 * q * x - 1.25) * (-t3 * x).exp();
            assert!((sol.v4_eval(x).unwrap() - expected).abs() < 1e-14);
            assert!((sol.v3_eval(x).unwrap() - md * (1.0 - (-t3 * x).exp())).abs() < 1e-15);
        }
        let v4p0 = (0.2 * q + t3 * 1.25) * md;
        assert!(v4p0 > 0.0 && v4p0 <= 1.0);
        assert!((sol.v4(0.0).unwrap().1 - v4p0).abs() < 1e-14);
        assert!(matches!(lemma_b1_quantity(&sol), Err(Error::NotBarrierCase)));
    }

    #[test]
    fn derivatives_against_finite_differences() {
        let sol = solve(0.1);
        let h = 1e-5;
        for i in 1..80 {
            let x = i as f64 * 0.025;
            if (x - sol.b).abs() < 2.0 * h {
                continue;
            }
            let (_, d1, d2) = sol.v4(x).unwrap();
            let f = |y: f64| sol.v4_eval(y).unwrap();
            let fd1 = (f(x + h) - f(x - h)) / (2.0 * h);
            let fd2 = (sol.v4(x + h).unwrap().1 - sol.v4(x - h).unwrap().1) / (2.0 * h);
            assert!((d1 - fd1).abs() < 1e-6, "x={x}");
            assert!((d2 - fd2).abs() < 1e-6, "x={x}");
        }
    }

    #[test]
    fn ode_residuals() {
        for lam in [0.0, 0.1, 0.2] {
            let sol = solve(lam);
            let p = sol.params;
            let (delta, m) = (0.8, p.max_rate);
            for i in 1..=1000 {
                let x = i as f64 * 0.004;
                let (v3, v3x, v3xx) = sol.v3(x).unwrap();
                let (v4, v4x, v4xx) = sol.v4(x).unwrap();
                let (drift, pay) = if x < sol.b { (p.mu, 0.0) } else { (p.mu - m, m) };
                let r3 = 0.5 * p.sigma2() * v3xx + drift * v3x - delta * v3 + pay;
                let r4 = 0.5 * p.sigma2() * v4xx + drift * v4x - delta * v4 + lam * v3 + pay;
                assert!(r3.abs() < 1e-8 && r4.abs() < 1e-8, "λ={lam} x={x}: {r3} {r4}");
            }
        }
    }

    #[test]
    fn concavity_and_threshold() {
        for lam in [0.0, 0.1, 0.2] {
            let sol = solve(lam);
            let b = sol.b;
            let t3 = sol.theta.theta3;
            let (_, _, lo) = sol.v4_branch(b, true);
            let (_, _, hi) = sol.v4_branch(b, false);
            assert!((lo - hi).abs() < 1e-8);
            for i in 1..=1000 {
                let x = 3.0 * b * i as f64 / 1000.0;
                assert!(sol.v4(x).unwrap().2 < 0.0);
                let y = b + 5.0 / t3 * i as f64 / 1000.0;
                assert!(sol.v4(y).unwrap().2 < 0.0);
                let (_, d1, _) = sol.v4(x).unwrap();
                if x < b - 1e-8 {
                    assert!(d1 >= 1.0);
                } else if x > b + 1e-8 {
                    assert!(d1 < 1.0);
                }
            }
        }
    }

    #[test]
    fn b1_quantity() {
        let sol = solve(0.0);
        let v = lemma_b1_quantity(&sol).unwrap();
        assert!((v - sol.theta.theta1 * sol.chat).abs() < 1e-15 && v > 0.0);

        let sol = solve(0.1);
        assert!(sol.concavity_certified);
        let v = lemma_b1_quantity(&sol).unwrap();
        assert!(v > 0.0);
        let ThetaTriple {
            theta1: t1,
            theta2: t2,
            theta3: t3,
        } = sol.theta;
        let p = sol.params;
        let b = sol.b;
        let k = 0.1 / (p.mu + p.sigma2() * t1) * p.max_rate * t3 / 0.8;
        let q = t1 * (t1 + t3 - 2.0 * k) * ((t1 + t2) * b).exp()
            + (t1 * (t2 - t3) + k * (-2.0 * t1 * t2 * b + t1 - 3.0 * t2));
        let den = (t2 * b).exp()
            * (t1 * (t1 * b).exp() + t2 * (-t2 * b).exp())
            * ((t1 + t3) * (t1 * b).exp() + (t2 - t3) * (-t2 * b).exp());
        assert!(((v - q / den) / v).abs() < 1e-9, "{v} vs {}", q / den);
    }

    #[test]
    fn continuity_in_lambda() {
        let b0 = solve(0.0).b;
        let mut prev = f64::INFINITY;
        for lam in [1e-2, 1e-4, 1e-6] {
            let gap = (solve(lam).b - b0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-6);
    }

    #[test]
    fn value_st_limits() {
        let sol = solve(0.1);
        for x in [0.1, sol.b, 1.5] {
            assert_eq!(sol.value_st(0.0, x).unwrap(), sol.v4_eval(x).unwrap());
            assert!(sol.value_st(200.0, x).unwrap().abs() < 1e-60);
        }
    }
}
