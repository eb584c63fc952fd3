//! Equilibrium dividend strategies for a Brownian surplus with a capped
//! payout rate under non-exponential discounting.
//!
//! Two discount families admit closed-form equilibria: mixtures of
//! exponentials ([`mixture`]) and pseudo-exponentials ([`pseudo`]). Both
//! yield barrier strategies. [`verify`] checks candidate solutions against
//! the equilibrium HJB system and [`mc`] estimates return functions by
//! simulating the controlled surplus.

pub mod cli;
pub mod config;
pub mod discount;
pub mod error;
pub mod mc;
pub mod mixture;
pub mod model;
pub mod pseudo;
pub mod roots;
pub mod solution;
pub mod verify;

pub use config::{solve, RunConfig, SolutionDocument, Solved};
pub use discount::{DiscountSpec, ExpMixtureDiscount, PseudoExpDiscount, TabulatedDiscount};
pub use error::{Error, Result};
pub use mc::{estimate_value, spike_deviation_estimate, Horizon, SimConfig, SpikeEstimate, ValueEstimate};
pub use mixture::{solve_mixture, MixtureSolution};
pub use model::{characteristic_roots, BarrierStrategy, ModelParams, ThetaTriple};
pub use pseudo::{solve_pseudo, PseudoSolution};
pub use solution::{EquilibriumSolution, SolutionCase};
pub use verify::{verify, VerificationReport};
