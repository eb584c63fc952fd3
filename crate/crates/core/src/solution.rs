use serde::{Deserialize, Serialize};

use crate::discount::DiscountSpec;
use crate::error::Result;
use crate::model::{BarrierStrategy, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SolutionCase {
    /// `b = 0`: pay the maximal rate at every positive surplus.
    AlwaysPay,
    /// `b > 0`: pay nothing below the barrier.
    Barrier,
}

impl std::fmt::Display for SolutionCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolutionCase::AlwaysPay => f.write_str("AlwaysPay"),
            SolutionCase::Barrier => f.write_str("Barrier"),
        }
    }
}

/// `c(s, t, x)` and its partial derivatives at elapsed time `u = t − s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Partials {
    pub c: f64,
    pub c_t: f64,
    pub c_x: f64,
    pub c_xx: f64,
}

/// Value and derivative jumps of one ODE component across the barrier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentGap {
    pub value: f64,
    pub derivative: f64,
}

/// Common view of a closed-form equilibrium: the auxiliary function
/// `c(s, t, x)`, the diagonal value `V(x) = c(t, t, x)` and the barrier.
pub trait EquilibriumSolution: Sync {
    fn params(&self) -> &ModelParams;
    fn discount_spec(&self) -> DiscountSpec;
    fn case(&self) -> SolutionCase;
    fn barrier(&self) -> f64;

    /// `c(s, s + u, x)` with its partials; `x` on the `x < b` branch uses
    /// the no-payout formulas.
    fn partials(&self, u: f64, x: f64) -> Result<Partials>;

    /// Jumps of each ODE component between the two branch formulas at `b`.
    fn component_gaps(&self) -> Vec<ComponentGap>;

    /// Largest absolute residual of the component ODEs at `x`.
    fn ode_residual(&self, x: f64) -> Result<f64>;

    /// Smallest decay rate `θ₃` over the components, sets the grid extent above `b`.
    fn min_theta3(&self) -> f64;

    /// Smallest discount rate, sets the time grid extent.
    fn min_delta(&self) -> f64;

    fn strategy(&self) -> BarrierStrategy {
        BarrierStrategy {
            b: self.barrier(),
            rate: self.params().max_rate,
        }
    }

    fn value(&self, x: f64) -> Result<f64> {
        Ok(self.partials(0.0, x)?.c)
    }

    fn value_st(&self, u: f64, x: f64) -> Result<f64> {
        Ok(self.partials(u, x)?.c)
    }

    /// `(V'(x), V''(x))` on the diagonal.
    fn value_derivatives(&self, x: f64) -> Result<(f64, f64)> {
        let p = self.partials(0.0, x)?;
        Ok((p.c_x, p.c_xx))
    }
}

pub(crate) fn check_nonneg(what: &'static str, value: f64) -> Result<()> {
    if value >= 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(crate::error::Error::Domain { what, value })
    }
}
