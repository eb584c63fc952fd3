//! Independent checks of a closed-form equilibrium.
//!
//! The equilibrium HJB system reduces, for a barrier strategy, to a linear
//! PDE in `(t, x)` on each side of `b`. A candidate `c(s, t, x)` is checked by
//! evaluating that PDE with its closed-form partials, by the smooth-fit gaps
//! at `b`, and by the threshold property `c_x ≥ 1` below / `< 1` above the
//! barrier together with concavity, which make the bang-bang policy the
//! maximiser of the Hamiltonian.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::solution::{EquilibriumSolution, SolutionCase};

pub const HJB_TOL: f64 = 1e-8;
pub const SMOOTH_FIT_TOL: f64 = 1e-9;
/// Half-width of the band around `b` excluded from pointwise checks.
pub const BARRIER_EXCLUSION: f64 = 1e-8;
pub const DEFAULT_X_POINTS: usize = 10_000;
pub const DEFAULT_U_POINTS: usize = 50;

/// `½σ²P + (μ − l)p + h·l`.
pub fn hamiltonian(l: f64, p: f64, pp: f64, h_val: f64, params: &ModelParams) -> Result<f64> {
    if !(0.0..=params.max_rate).contains(&l) {
        return Err(Error::Domain {
            what: "dividend rate l",
            value: l,
        });
    }
    Ok(0.5 * params.sigma2() * pp + (params.mu - l) * p + h_val * l)
}

/// Maximiser of the Hamiltonian over `[0, M]`; the tie `p = h` pays nothing.
pub fn argmax_policy(p: f64, h_val: f64, max_rate: f64) -> f64 {
    if p >= h_val {
        0.0
    } else {
        max_rate
    }
}

fn near_barrier<S: EquilibriumSolution + ?Sized>(sol: &S, x: f64) -> bool {
    sol.case() == SolutionCase::Barrier && (x - sol.barrier()).abs() <= BARRIER_EXCLUSION
}

/// Largest absolute PDE residual over `(u, x)` points; `x ≤ 0` and points
/// within [`BARRIER_EXCLUSION`] of `b` are skipped.
pub fn hjb_residual<S: EquilibriumSolution + ?Sized>(sol: &S, grid: &[(f64, f64)]) -> Result<f64> {
    let params = *sol.params();
    let disc = sol.discount_spec();
    let b = sol.barrier();
    let mut worst: f64 = 0.0;
    for &(u, x) in grid {
        if x <= 0.0 || near_barrier(sol, x) {
            continue;
        }
        let p = sol.partials(u, x)?;
        let diffusion = p.c_t + 0.5 * params.sigma2() * p.c_xx;
        let r = if x < b {
            diffusion + params.mu * p.c_x
        } else {
            diffusion + (params.mu - params.max_rate) * p.c_x + disc.eval(u)? * params.max_rate
        };
        if !r.is_finite() {
            return Err(Error::Numerical(format!("non-finite HJB residual at u={u}, x={x}")));
        }
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothFitGaps {
    /// Largest value jump of an ODE component across `b`.
    pub value: f64,
    /// Largest slope jump of an ODE component across `b`.
    pub derivative: f64,
    /// `|c_x(t, t, b) − 1|`.
    pub marginal: f64,
}

impl SmoothFitGaps {
    pub fn max(&self) -> f64 {
        self.value.max(self.derivative).max(self.marginal)
    }
}

pub fn smooth_fit_report<S: EquilibriumSolution + ?Sized>(sol: &S) -> Result<SmoothFitGaps> {
    if sol.case() != SolutionCase::Barrier {
        return Err(Error::NotBarrierCase);
    }
    let gaps = sol.component_gaps();
    let (vx, _) = sol.value_derivatives(sol.barrier())?;
    Ok(SmoothFitGaps {
        value: gaps.iter().map(|g| g.value).fold(0.0, f64::max),
        derivative: gaps.iter().map(|g| g.derivative).fold(0.0, f64::max),
        marginal: (vx - 1.0).abs(),
    })
}

/// Counts of grid points violating the threshold property and strict concavity.
pub fn threshold_and_concavity<S: EquilibriumSolution + ?Sized>(sol: &S, xs: &[f64]) -> Result<(usize, usize)> {
    let b = sol.barrier();
    let mut threshold = 0;
    let mut concavity = 0;
    for &x in xs {
        if x <= 0.0 || near_barrier(sol, x) {
            continue;
        }
        let (vx, vxx) = sol.value_derivatives(x)?;
        let ok = if x < b { vx >= 1.0 } else { vx < 1.0 };
        if !ok {
            threshold += 1;
        }
        if !(vxx < 0.0) {
            concavity += 1;
        }
    }
    Ok((threshold, concavity))
}

/// Largest `|c(s, s+u, x)|` along the far edges of the domain: `u = u_max`
/// for `x ∈ (0, x_max]`, and `x = x_max` for `u ∈ [0, u_max]` when `M < μ`
/// (surplus can escape to infinity).
pub fn transversality_probe<S: EquilibriumSolution + ?Sized>(sol: &S, u_max: f64, x_max: f64) -> Result<f64> {
    const N: usize = 200;
    let mut worst: f64 = 0.0;
    for i in 1..=N {
        let x = x_max * i as f64 / N as f64;
        worst = worst.max(sol.value_st(u_max, x)?.abs());
    }
    let p = sol.params();
    if p.max_rate < p.mu {
        for i in 0..=N {
            let u = u_max * i as f64 / N as f64;
            if u < u_max {
                continue;
            }
            worst = worst.max(sol.value_st(u, x_max)?.abs());
        }
    }
    Ok(worst)
}

/// Surplus extent `b + 10/θ₃` covering both regimes and the decay scale.
pub fn default_x_max<S: EquilibriumSolution + ?Sized>(sol: &S) -> f64 {
    sol.barrier() + 10.0 / sol.min_theta3()
}

/// `n` equally spaced points on `(0, b + 10/θ₃]`.
pub fn default_x_grid<S: EquilibriumSolution + ?Sized>(sol: &S, n: usize) -> Vec<f64> {
    let x_max = default_x_max(sol);
    (1..=n).map(|i| x_max * i as f64 / n as f64).collect()
}

/// `n` equally spaced elapsed times on `[0, 20/δ_min]`.
pub fn default_u_grid<S: EquilibriumSolution + ?Sized>(sol: &S, n: usize) -> Vec<f64> {
    let u_max = 20.0 / sol.min_delta();
    match n {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..n).map(|i| u_max * i as f64 / (n - 1) as f64).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridDescription {
    pub x_max: f64,
    pub x_points: usize,
    pub u_max: f64,
    pub u_points: usize,
    pub barrier_exclusion: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub case: SolutionCase,
    pub b: f64,
    pub max_hjb_residual: f64,
    pub max_ode_residual: f64,
    /// Absent when there is no interior barrier.
    pub smooth_fit_residuals: Option<SmoothFitGaps>,
    pub threshold_violations: usize,
    pub concavity_violations: usize,
    pub grid: GridDescription,
}

impl VerificationReport {
    pub fn passed(&self) -> bool {
        self.max_hjb_residual <= HJB_TOL
            && self.max_ode_residual <= HJB_TOL
            && self.smooth_fit_residuals.is_none_or(|g| g.max() <= SMOOTH_FIT_TOL)
            && self.threshold_violations == 0
            && self.concavity_violations == 0
    }
}

/// Full report on the default grids with `x_points × u_points` PDE evaluations.
pub fn verify<S: EquilibriumSolution + ?Sized>(sol: &S, x_points: usize, u_points: usize) -> Result<VerificationReport> {
    let xs = default_x_grid(sol, x_points);
    let us = default_u_grid(sol, u_points);
    let grid: Vec<(f64, f64)> = us.iter().flat_map(|&u| xs.iter().map(move |&x| (u, x))).collect();
    let max_hjb_residual = hjb_residual(sol, &grid)?;
    let mut max_ode_residual: f64 = 0.0;
    for &x in &xs {
        if near_barrier(sol, x) {
            continue;
        }
        max_ode_residual = max_ode_residual.max(sol.ode_residual(x)?);
    }
    let smooth_fit_residuals = match sol.case() {
        SolutionCase::Barrier => Some(smooth_fit_report(sol)?),
        SolutionCase::AlwaysPay => None,
    };
    let (threshold_violations, concavity_violations) = threshold_and_concavity(sol, &xs)?;
    Ok(VerificationReport {
        case: sol.case(),
        b: sol.barrier(),
        max_hjb_residual,
        max_ode_residual,
        smooth_fit_residuals,
        threshold_violations,
        concavity_violations,
        grid: GridDescription {
            x_max: default_x_max(sol),
            x_points: xs.len(),
            u_max: us.last().copied().unwrap_or(0.0),
            u_points: us.len(),
            barrier_exclusion: BARRIER_EXCLUSION,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discount::{ExpMixtureDiscount, PseudoExpDiscount};
    use crate::mixture::{solve_mixture, MixtureSolution};
    use crate::pseudo::solve_pseudo;

    fn mix(w: f64) -> MixtureSolution {
        let p = ModelParams::new(1.0, 1.0, 0.8).unwrap();
        solve_mixture(&p, &ExpMixtureDiscount::new(vec![w, 1.0 - w], vec![0.2, 0.4]).unwrap()).unwrap()
    }

    #[test]
    fn hamiltonian_examples() {
        let p = ModelParams::new(1.0, 1.0, 0.8).unwrap();
        assert_eq!(hamiltonian(0.0, 0.5, -1.0, 0.7, &p).unwrap(), -0.5 + 0.5);
        let h = 0.9;
        let a = hamiltonian(0.3, h, -1.0, h, &p).unwrap();
        let b = hamiltonian(0.8, h, -1.0, h, &p).unwrap();
        assert!((a - b).abs() < 1e-15);
        let v = hamiltonian(0.8, 0.5, -1.0, 0.7, &p).unwrap();
        assert!((v - (-0.5 + 0.2 * 0.5 + 0.8 * 0.7)).abs() < 1e-15);
        assert!(hamiltonian(0.9, 0.5, -1.0, 0.7, &p).is_err());
        assert!(hamiltonian(-0.1, 0.5, -1.0, 0.7, &p).is_err());
    }

    #[test]
    fn argmax_examples() {
        assert_eq!(argmax_policy(1.2, 1.0, 0.8), 0.0);
        assert_eq!(argmax_policy(0.8, 1.0, 0.8), 0.8);
        assert_eq!(argmax_policy(1.0, 1.0, 0.8), 0.0);
    }

    #[test]
    fn hjb_residual_small_and_detects_corruption() {
        let sol = mix(0.4);
        let xs = default_x_grid(&sol, 50);
        let us = default_u_grid(&sol, 50);
        let grid: Vec<_> = us.iter().flat_map(|&u| xs.iter().map(move |&x| (u, x))).collect();
        assert!(hjb_residual(&sol, &grid).unwrap() <= HJB_TOL);

        // any coefficients solve the branch ODEs; a wrong drift does not
        let mut bad = sol.clone();
        bad.params.mu *= 1.01;
        assert!(hjb_residual(&bad, &grid).unwrap() > 1e-4);

        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let ps = solve_pseudo(&p, &PseudoExpDiscount::new(0.1, 0.8).unwrap()).unwrap();
        let xs = default_x_grid(&ps, 50);
        let us = default_u_grid(&ps, 50);
        let grid: Vec<_> = us.iter().flat_map(|&u| xs.iter().map(move |&x| (u, x))).collect();
        assert!(hjb_residual(&ps, &grid).unwrap() <= HJB_TOL);
    }

    #[test]
    fn smooth_fit_gaps() {
        let sol = mix(0.7);
        assert!(smooth_fit_report(&sol).unwrap().max() <= SMOOTH_FIT_TOL);
        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let ps = solve_pseudo(&p, &PseudoExpDiscount::new(0.2, 0.8).unwrap()).unwrap();
        assert!(smooth_fit_report(&ps).unwrap().max() <= SMOOTH_FIT_TOL);

        let moved = MixtureSolution::from_barrier(sol.params, sol.discount.clone(), sol.b + 1e-3).unwrap();
        let g = smooth_fit_report(&moved).unwrap();
        assert!(g.marginal > 1e-5);
        assert!(g.value < SMOOTH_FIT_TOL && g.derivative < SMOOTH_FIT_TOL);

        let always = solve_mixture(
            &ModelParams::new(1.0, 1.0, 0.05).unwrap(),
            &ExpMixtureDiscount::exponential(0.5).unwrap(),
        )
        .unwrap();
        assert!(matches!(smooth_fit_report(&always), Err(Error::NotBarrierCase)));
    }

    #[test]
    fn threshold_checks() {
        let sol = mix(0.4);
        let xs = default_x_grid(&sol, 10_000);
        assert_eq!(threshold_and_concavity(&sol, &xs).unwrap(), (0, 0));

        let always = solve_mixture(
            &ModelParams::new(1.0, 1.0, 0.05).unwrap(),
            &ExpMixtureDiscount::exponential(0.5).unwrap(),
        )
        .unwrap();
        let xs = default_x_grid(&always, 10_000);
        assert_eq!(threshold_and_concavity(&always, &xs).unwrap(), (0, 0));

        let mut bad = sol.clone();
        for k in &mut bad.components {
            k.c *= 0.5;
            k.d = -k.d;
        }
        let xs = default_x_grid(&bad, 1000);
        let (t, c) = threshold_and_concavity(&bad, &xs).unwrap();
        assert!(t > 0 && c > 0);
    }

    #[test]
    fn transversality() {
        let sol = mix(0.4);
        let envelope = |u: f64| sol.discount.components().map(|(w, r)| w * (-r * u).exp() * 0.8 / r).sum::<f64>();
        // e^{-0.2u}·Σω M/δ ≤ 1e-6
        let u_max = (2.8f64 / 1e-6).ln() / 0.2;
        let probe = transversality_probe(&sol, u_max, 50.0).unwrap();
        assert!(probe <= envelope(u_max) && probe <= 1e-6);
        let at_zero = transversality_probe(&sol, 0.0, 5.0).unwrap();
        assert!((at_zero - sol.value(5.0).unwrap()).abs() < 1e-15);

        let p = ModelParams::new(1.0, 1.0, 1.0).unwrap();
        let ps = solve_pseudo(&p, &PseudoExpDiscount::new(0.1, 0.8).unwrap()).unwrap();
        let u = 40.0;
        let env = (-0.8 * u as f64).exp() * (1.0 + 0.1 * u) * 1.25 * (1.0 + 0.125);
        assert!(transversality_probe(&ps, u, 20.0).unwrap() <= env);
    }

    #[test]
    fn full_report_passes() {
        for w in [0.4, 0.7] {
            let r = verify(&mix(w), 2000, 20).unwrap();
            assert!(r.passed(), "{r:?}");
        }
    }
}
