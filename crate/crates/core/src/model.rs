//! Surplus model parameters, characteristic roots and barrier strategies.
//!
//! The uncontrolled surplus is a Brownian motion with drift `mu` and
//! volatility `sigma`; dividends are paid at a rate in `[0, max_rate]`.
//! Between payouts every value function in this crate is a combination of
//! exponentials whose exponents are roots of `½σ²y² + ηy − c = 0`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub mu: f64,
    pub sigma: f64,
    /// Maximal dividend rate.
    #[serde(rename = "M")]
    pub max_rate: f64,
}

impl ModelParams {
    pub fn new(mu: f64, sigma: f64, max_rate: f64) -> Result<Self> {
        let p = ModelParams {
            mu,
            sigma,
            max_rate,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [("mu", self.mu), ("sigma", self.sigma), ("M", self.max_rate)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(field, format!("must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma * self.sigma
    }

    /// Natural length scale `σ²/μ` of the surplus.
    pub fn length_scale(&self) -> f64 {
        self.sigma2() / self.mu
    }

    /// Roots for discount rate `delta`: below-barrier pair and above-barrier decay rate.
    pub fn thetas(&self, delta: f64) -> Result<ThetaTriple> {
        let (theta1, theta2) = characteristic_roots(self.mu, delta, self.sigma)?;
        let (_, theta3) = characteristic_roots(self.mu - self.max_rate, delta, self.sigma)?;
        Ok(ThetaTriple {
            theta1,
            theta2,
            theta3,
        })
    }
}

/// Returns `(θ₁, θ₂)` such that `θ₁` and `−θ₂` solve `½σ²y² + ηy − c = 0`.
///
/// The smaller-magnitude root is computed from the product of roots
/// (`θ₁θ₂ = 2c/σ²`) to avoid cancellation when `|η| ≫ σ√c`.
pub fn characteristic_roots(eta: f64, c: f64, sigma: f64) -> Result<(f64, f64)> {
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::Domain { what: "rate", value: c });
    }
    if !(sigma.is_finite() && sigma > 0.0) {
        return Err(Error::Domain {
            what: "sigma",
            value: sigma,
        });
    }
    if !eta.is_finite() {
        return Err(Error::Domain { what: "eta", value: eta });
    }
    let s2 = sigma * sigma;
    let disc = (eta * eta + 2.0 * s2 * c).sqrt();
    let product = 2.0 * c / s2;
    if eta >= 0.0 {
        let theta2 = (eta + disc) / s2;
        Ok((product / theta2, theta2))
    } else {
        let theta1 = (-eta + disc) / s2;
        Ok((theta1, product / theta1))
    }
}

/// Characteristic roots attached to one discount rate.
///
/// `theta1`, `theta2` belong to drift `μ` (no payout); `theta3` is the decay
/// rate for drift `μ − M` (paying at the maximal rate).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaTriple {
    pub theta1: f64,
    pub theta2: f64,
    pub theta3: f64,
}

/// Pay nothing below `b`, pay `rate` at or above it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierStrategy {
    pub b: f64,
    pub rate: f64,
}

impl BarrierStrategy {
    pub fn new(b: f64, rate: f64, params: &ModelParams) -> Result<Self> {
        if !(b.is_finite() && b >= 0.0) {
            return Err(Error::invalid("b", format!("barrier must be finite and >= 0, got {b}")));
        }
        if !(rate > 0.0 && rate <= params.max_rate) {
            return Err(Error::invalid(
                "rate",
                format!("payout rate must lie in (0, M={}], got {rate}", params.max_rate),
            ));
        }
        Ok(BarrierStrategy { b, rate })
    }

    /// Payout rate at surplus `x`; nothing is paid at (or below) zero.
    #[inline]
    pub fn rate_at(&self, x: f64) -> f64 {
        if x <= 0.0 || x < self.b {
            0.0
        } else {
            self.rate
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(eta: f64, c: f64, sigma: f64, y: f64) -> f64 {
        0.5 * sigma * sigma * y * y + eta * y - c
    }

    #[test]
    fn roots_of_symmetric_quadratic() {
        let (p, n) = characteristic_roots(0.0, 0.5, 1.0).unwrap();
        assert!((p - 1.0).abs() < 1e-15);
        assert!((n - 1.0).abs() < 1e-15);
    }

    #[test]
    fn roots_match_quadratic_formula() {
        // reference values from the textbook formula, evaluated independently
        let (_, n) = characteristic_roots(0.2, 0.2, 1.0).unwrap();
        let reference = 0.2 + (0.04f64 + 0.4).sqrt();
        assert!((n - reference).abs() < 1e-14);
        assert!((n - 0.863_324_958_071_08).abs() < 1e-12);
        assert!(residual(0.2, 0.2, 1.0, -n).abs() < 1e-14);

        let (p, n) = characteristic_roots(1.0, 0.8, 1.0).unwrap();
        assert!((p - 0.612_451_549_659_71).abs() < 1e-12);
        assert!((n - 2.612_451_549_659_71).abs() < 1e-12);
        assert!((2.6f64.sqrt() - 1.612_451_549_659_71).abs() < 1e-12);
    }

    #[test]
    fn roots_reject_bad_domain() {
        assert!(matches!(characteristic_roots(0.0, 0.0, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(characteristic_roots(0.0, -1.0, 1.0), Err(Error::Domain { .. })));
        assert!(matches!(characteristic_roots(0.0, 1.0, 0.0), Err(Error::Domain { .. })));
    }

    #[test]
    fn strategy_rate() {
        let p = ModelParams::new(1.0, 1.0, 0.8).unwrap();
        let s = BarrierStrategy::new(1.0, 0.8, &p).unwrap();
        assert_eq!(s.rate_at(0.5), 0.0);
        assert_eq!(s.rate_at(1.0), 0.8);
        let s0 = BarrierStrategy::new(0.0, 0.8, &p).unwrap();
        assert_eq!(s0.rate_at(0.0), 0.0);
        assert_eq!(s0.rate_at(1e-9), 0.8);
        assert!(BarrierStrategy::new(1.0, 0.9, &p).is_err());
        assert!(BarrierStrategy::new(-1.0, 0.8, &p).is_err());
    }

    #[test]
    fn params_validation_names_field() {
        match ModelParams::new(1.0, -1.0, 1.0) {
            Err(Error::InvalidParameter { field, .. }) => assert_eq!(field, "sigma"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
