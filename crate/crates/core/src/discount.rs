//! Discount functions `h(t)` with `h(0) = 1`, nonincreasing and integrable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `Σ ω_i = 1`. Weights are rejected, never renormalised.
pub const WEIGHT_SUM_TOL: f64 = 1e-12;

/// `h(t) = Σ ω_i e^{−δ_i t}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpMixtureDiscount {
    pub weights: Vec<f64>,
    pub rates: Vec<f64>,
}

impl ExpMixtureDiscount {
    pub fn new(weights: Vec<f64>, rates: Vec<f64>) -> Result<Self> {
        let d = ExpMixtureDiscount { weights, rates };
        d.validate()?;
        Ok(d)
    }

    /// Single exponential `e^{−δt}`.
    pub fn exponential(rate: f64) -> Result<Self> {
        Self::new(vec![1.0], vec![rate])
    }

    pub fn validate(&self) -> Result<()> {
        if self.weights.is_empty() {
            return Err(Error::invalid("discount.weights", "at least one component is required"));
        }
        if self.weights.len() != self.rates.len() {
            return Err(Error::invalid(
                "discount.rates",
                format!(
                    "length {} does not match weights length {}",
                    self.rates.len(),
                    self.weights.len()
                ),
            ));
        }
        for (i, (&w, &r)) in self.weights.iter().zip(&self.rates).enumerate() {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::invalid(format!("discount.weights[{i}]"), format!("must be > 0, got {w}")));
            }
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid(format!("discount.rates[{i}]"), format!("must be > 0, got {r}")));
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::invalid("discount.weights", format!("must sum to 1, got {sum}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn components(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.weights.iter().copied().zip(self.rates.iter().copied())
    }

    pub fn min_rate(&self) -> f64 {
        self.rates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.components().map(|(w, r)| w * (-r * t).exp()).sum()
    }

    pub fn tail_integral(&self, t: f64) -> f64 {
        self.components().map(|(w, r)| w * (-r * t).exp() / r).sum()
    }
}

/// `h(t) = (1 + λt) e^{−δt}` with `0 ≤ λ < δ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PseudoExpDiscount {
    pub lambda: f64,
    pub delta: f64,
}

impl PseudoExpDiscount {
    pub fn new(lambda: f64, delta: f64) -> Result<Self> {
        let d = PseudoExpDiscount { lambda, delta };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta.is_finite() && self.delta > 0.0) {
            return Err(Error::invalid("discount.delta", format!("must be > 0, got {}", self.delta)));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0 && self.lambda < self.delta) {
            return Err(Error::invalid(
                "discount.lambda",
                format!("must satisfy 0 <= lambda < delta = {}, got {}", self.delta, self.lambda),
            ));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        (1.0 + self.lambda * t) * (-self.delta * t).exp()
    }

    pub fn tail_integral(&self, t: f64) -> f64 {
        let (l, d) = (self.lambda, self.delta);
        (-d * t).exp() * ((1.0 + l * t) / d + l / (d * d))
    }
}

/// Piecewise-linear discount on a sample grid.
///
/// Beyond the last knot the function decays as `h_last · e^{−r(t − t_last)}`
/// when `tail_rate = Some(r)`; without a tail rate it is held flat and no
/// tail integral is available, so it cannot drive a truncated simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedDiscount {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub tail_rate: Option<f64>,
}

impl TabulatedDiscount {
    pub fn new(times: Vec<f64>, values: Vec<f64>, tail_rate: Option<f64>) -> Result<Self> {
        let d = TabulatedDiscount {
            times,
            values,
            tail_rate,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if self.times.is_empty() || self.times.len() != self.values.len() {
            return Err(Error::invalid(
                "discount.times",
                "times and values must be non-empty and of equal length",
            ));
        }
        if self.times[0] != 0.0 || self.values[0] != 1.0 {
            return Err(Error::invalid("discount.values", "grid must start at (0, 1)"));
        }
        for i in 1..self.times.len() {
            if !(self.times[i] > self.times[i - 1]) || !self.times[i].is_finite() {
                return Err(Error::invalid(format!("discount.times[{i}]"), "times must be strictly increasing"));
            }
            let v = self.values[i];
            if !(v >= 0.0 && v <= self.values[i - 1]) {
                return Err(Error::invalid(
                    format!("discount.values[{i}]"),
                    "values must be nonnegative and nonincreasing",
                ));
            }
        }
        if let Some(r) = self.tail_rate {
            if !(r.is_finite() && r > 0.0) {
                return Err(Error::invalid("discount.tail_rate", format!("must be > 0, got {r}")));
            }
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        let last = n - 1;
        if t >= self.times[last] {
            let h = self.values[last];
            return match self.tail_rate {
                Some(r) => h * (-r * (t - self.times[last])).exp(),
                None => h,
            };
        }
        let j = self.times.partition_point(|&s| s <= t);
        let (t0, t1) = (self.times[j - 1], self.times[j]);
        let (h0, h1) = (self.values[j - 1], self.values[j]);
        h0 + (h1 - h0) * (t - t0) / (t1 - t0)
    }

    pub fn tail_integral(&self, t: f64) -> Result<f64> {
        let r = self
            .tail_rate
            .ok_or(Error::NoAnalyticTail("tabulated discount without tail_rate"))?;
        let last = self.times.len() - 1;
        let t_last = self.times[last];
        let h_last = self.values[last];
        if t >= t_last {
            return Ok(h_last * (-r * (t - t_last)).exp() / r);
        }
        let mut acc = h_last / r;
        for j in 1..=last {
            let (a, b) = (self.times[j - 1], self.times[j]);
            if b <= t {
                continue;
            }
            let lo = a.max(t);
            acc += 0.5 * (self.eval(lo) + self.values[j]) * (b - lo);
        }
        Ok(acc)
    }

    fn min_rate(&self) -> Option<f64> {
        self.tail_rate
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DiscountSpec {
    ExpMixture(ExpMixtureDiscount),
    PseudoExp(PseudoExpDiscount),
    Tabulated(TabulatedDiscount),
}

impl DiscountSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DiscountSpec::ExpMixture(d) => d.validate(),
            DiscountSpec::PseudoExp(d) => d.validate(),
            DiscountSpec::Tabulated(d) => d.validate(),
        }
    }

    /// `h(t)`; errors on negative time.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain { what: "t", value: t });
        }
        Ok(match self {
            DiscountSpec::ExpMixture(d) => d.eval(t),
            DiscountSpec::PseudoExp(d) => d.eval(t),
            DiscountSpec::Tabulated(d) => d.eval(t),
        })
    }

    /// `∫_T^∞ h(u) du`.
    pub fn tail_integral(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain { what: "T", value: t });
        }
        match self {
            DiscountSpec::ExpMixture(d) => Ok(d.tail_integral(t)),
            DiscountSpec::PseudoExp(d) => Ok(d.tail_integral(t)),
            DiscountSpec::Tabulated(d) => d.tail_integral(t),
        }
    }

    /// Slowest exponential decay rate of the tail.
    pub fn min_rate(&self) -> Result<f64> {
        match self {
            DiscountSpec::ExpMixture(d) => Ok(d.min_rate()),
            DiscountSpec::PseudoExp(d) => Ok(d.delta),
            DiscountSpec::Tabulated(d) => d
                .min_rate()
                .ok_or(Error::NoAnalyticTail("tabulated discount without tail_rate")),
        }
    }
}

impl From<ExpMixtureDiscount> for DiscountSpec {
    fn from(d: ExpMixtureDiscount) -> Self {
        DiscountSpec::ExpMixture(d)
    }
}

impl From<PseudoExpDiscount> for DiscountSpec {
    fn from(d: PseudoExpDiscount) -> Self {
        DiscountSpec::PseudoExp(d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mix() -> DiscountSpec {
        ExpMixtureDiscount::new(vec![0.4, 0.6], vec![0.2, 0.4]).unwrap().into()
    }

    fn pseudo() -> DiscountSpec {
        PseudoExpDiscount::new(0.1, 0.8).unwrap().into()
    }

    /// Composite Simpson rule on [a, b].
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn eval_at_zero_is_one() {
        for d in [mix(), pseudo()] {
            assert_eq!(d.eval(0.0).unwrap(), 1.0);
        }
        let tab = DiscountSpec::Tabulated(TabulatedDiscount::new(vec![0.0, 1.0], vec![1.0, 0.5], None).unwrap());
        assert_eq!(tab.eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_examples() {
        let expected = 0.4 * (-0.2f64).exp() + 0.6 * (-0.4f64).exp();
        assert!((mix().eval(1.0).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.7296).abs() < 1e-4);
        assert!((pseudo().eval(1.0).unwrap() - 0.494_261_860_5).abs() < 1e-9);
        assert!(mix().eval(-1.0).is_err());
    }

    #[test]
    fn tail_examples() {
        assert!((mix().tail_integral(0.0).unwrap() - 3.5).abs() < 1e-15);
        assert!((pseudo().tail_integral(0.0).unwrap() - 1.40625).abs() < 1e-15);
        let p = PseudoExpDiscount::new(0.1, 0.8).unwrap();
        // quadrature oracle on [5, 60]; the remainder beyond 60 is below 1e-19
        let quad = simpson(|u| p.eval(u), 5.0, 60.0, 20_000);
        let closed = pseudo().tail_integral(5.0).unwrap();
        assert!((closed - quad).abs() < 1e-8, "{closed} vs {quad}");
        assert!((closed - 0.037_203_641_5).abs() < 1e-9);
    }

    #[test]
    fn tabulated_tail_requires_rate() {
        let t = TabulatedDiscount::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.6, 0.4], None).unwrap();
        assert!(matches!(
            DiscountSpec::Tabulated(t).tail_integral(0.0),
            Err(Error::NoAnalyticTail(_))
        ));
    }

    #[test]
    fn tabulated_interpolates_and_integrates() {
        let t = TabulatedDiscount::new(vec![0.0, 1.0, 2.0], vec![1.0, 0.6, 0.4], Some(0.5)).unwrap();
        assert!((t.eval(0.5) - 0.8).abs() < 1e-15);
        assert!((t.eval(3.0) - 0.4 * (-0.5f64).exp()).abs() < 1e-15);
        // trapezoids 0.8 + 0.5 plus exponential tail 0.4 / 0.5
        assert!((t.tail_integral(0.0).unwrap() - 2.1).abs() < 1e-14);
        assert!((t.tail_integral(1.5).unwrap() - (0.25 * (0.5 + 0.4) + 0.8)).abs() < 1e-14);
    }

    #[test]
    fn rejects_bad_mixtures() {
        assert!(ExpMixtureDiscount::new(vec![0.5, 0.4], vec![0.2, 0.4]).is_err());
        assert!(ExpMixtureDiscount::new(vec![0.0, 1.0], vec![0.2, 0.4]).is_err());
        assert!(ExpMixtureDiscount::new(vec![1.0], vec![0.2, 0.4]).is_err());
        assert!(ExpMixtureDiscount::new(vec![0.5, 0.5], vec![0.2, 0.2]).is_ok());
        assert!(PseudoExpDiscount::new(0.8, 0.8).is_err());
        assert!(PseudoExpDiscount::new(0.0, 0.8).is_ok());
    }

    #[test]
    fn monotone_and_vanishing_tails() {
        for d in [mix(), pseudo()] {
            let mut prev_h = f64::INFINITY;
            let mut prev_tail = f64::INFINITY;
            for i in 0..1000 {
                let t = i as f64 * 0.05;
                let h = d.eval(t).unwrap();
                let tail = d.tail_integral(t).unwrap();
                assert!(h <= prev_h && h > 0.0);
                assert!(tail < prev_tail);
                prev_h = h;
                prev_tail = tail;
            }
            assert!(prev_tail < 1e-3);
        }
    }

    #[test]
    fn serde_tags() {
        let json = r#"{"type":"pseudo_exp","lambda":0.1,"delta":0.8}"#;
        let d: DiscountSpec = serde_json::from_str(json).unwrap();
        assert_eq!(d, pseudo());
        let json = r#"{"type":"exp_mixture","weights":[0.4,0.6],"rates":[0.2,0.4]}"#;
        let d: DiscountSpec = serde_json::from_str(json).unwrap();
        assert_eq!(d, mix());
    }
}
