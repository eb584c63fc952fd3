//! Monte Carlo simulation of the controlled surplus
//! `dX = (μ − π(X)) dt + σ dW`, absorbed at zero.
//!
//! Paths use Euler–Maruyama on a uniform grid with the discount applied at
//! the left endpoint of every step. Each path owns two ChaCha8 streams keyed
//! by `(seed, path index)`: one for the Gaussian increments, one for the
//! optional Brownian-bridge ruin test. Per-path payoffs are collected in path
//! order and reduced sequentially, so results do not depend on how many
//! worker threads ran the paths.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::discount::DiscountSpec;
use crate::error::{Error, Result};
use crate::model::{BarrierStrategy, ModelParams};
use crate::solution::EquilibriumSolution;

/// Relative tolerance of [`Horizon::default`]: `1e-6 · M ∫₀^∞ h`.
pub const DEFAULT_RELATIVE_TOL: f64 = 1e-6;

/// How far paths are simulated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "value", rename_all = "snake_case")]
pub enum Horizon {
    Fixed(f64),
    /// Smallest scan point `T` with `M ∫_T^∞ h ≤ tol`.
    Auto(f64),
    /// As `Auto` with `tol · M ∫₀^∞ h`.
    AutoRelative(f64),
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::AutoRelative(DEFAULT_RELATIVE_TOL)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub n_paths: usize,
    #[serde(default)]
    pub horizon: Horizon,
    pub seed: u64,
    /// Also count ruin when the Brownian bridge between two positive grid
    /// points would have touched zero.
    #[serde(default)]
    pub bridge_correction: bool,
    /// Worker threads; `None` uses the global rayon pool. Never changes results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl SimConfig {
    pub fn new(dt: f64, n_paths: usize, horizon: Horizon, seed: u64) -> Result<Self> {
        let cfg = SimConfig {
            dt,
            n_paths,
            horizon,
            seed,
            bridge_correction: false,
            threads: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_bridge(mut self, on: bool) -> Self {
        self.bridge_correction = on;
        self
    }

    pub fn with_threads(mut self, threads: Option<usize>) -> Self {
        self.threads = threads;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::invalid("dt", format!("must be > 0, got {}", self.dt)));
        }
        if self.n_paths == 0 {
            return Err(Error::invalid("n_paths", "must be >= 1"));
        }
        match self.horizon {
            Horizon::Fixed(t) if !(t > 0.0 && t.is_finite()) => {
                Err(Error::invalid("horizon", format!("fixed horizon must be > 0, got {t}")))
            }
            Horizon::Auto(tol) | Horizon::AutoRelative(tol) if !(tol > 0.0 && tol.is_finite()) => {
                Err(Error::invalid("horizon", format!("tolerance must be > 0, got {tol}")))
            }
            _ if self.threads == Some(0) => Err(Error::invalid("threads", "must be >= 1")),
            _ => Ok(()),
        }
    }

    /// Horizon `T` in time units.
    pub fn resolve_horizon(&self, disc: &DiscountSpec, max_rate: f64) -> Result<f64> {
        match self.horizon {
            Horizon::Fixed(t) => Ok(t),
            Horizon::Auto(tol) => horizon_for_tolerance(disc, max_rate, tol),
            Horizon::AutoRelative(rel) => {
                horizon_for_tolerance(disc, max_rate, rel * max_rate * disc.tail_integral(0.0)?)
            }
        }
    }

    fn steps(&self, horizon: f64) -> usize {
        (horizon / self.dt).ceil() as usize
    }
}

/// Smallest `T = j / δ_min` (`j = 0, 1, …`) with `M ∫_T^∞ h ≤ tol`.
pub fn horizon_for_tolerance(disc: &DiscountSpec, max_rate: f64, tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::invalid("tol", format!("must be > 0, got {tol}")));
    }
    disc.validate()?;
    let step = 1.0 / disc.min_rate()?;
    for j in 0..100_000u32 {
        let t = j as f64 * step;
        if max_rate * disc.tail_integral(t)? <= tol {
            return Ok(t);
        }
    }
    Err(Error::Numerical(format!("no horizon reaches tail tolerance {tol}")))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub x0: f64,
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    pub horizon: f64,
    /// `M ∫_T^∞ h`, the most the truncated tail could add.
    pub truncation_bound: f64,
}

/// Random source of one path.
#[derive(Debug, Clone)]
pub struct PathRng {
    normals: ChaCha8Rng,
    bridge: ChaCha8Rng,
}

impl PathRng {
    pub fn new(seed: u64, path: u64) -> Self {
        let mut normals = ChaCha8Rng::seed_from_u64(seed);
        normals.set_stream(2 * path);
        let mut bridge = ChaCha8Rng::seed_from_u64(seed);
        bridge.set_stream(2 * path + 1);
        PathRng { normals, bridge }
    }

    #[inline]
    fn normal(&mut self) -> f64 {
        self.normals.sample(StandardNormal)
    }

    /// Uniform on `(0, 1]` tied to step `k`, so coupled arms see the same value.
    fn bridge_uniform(&mut self, k: usize) -> f64 {
        self.bridge.set_word_pos(2 * k as u128);
        ((self.bridge.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}


/// Per-step constants of the Euler scheme.
#[derive(Debug, Clone, Copy)]
struct Stepper {
    mu: f64,
    sigma_sqrt_dt: f64,
    dt: f64,
    /// `2 / (σ² dt)`; zero disables the bridge test.
    bridge_scale: f64,
}

/// Bridge crossing probabilities below `2^-53` can never beat a `(0, 1]` uniform.
const BRIDGE_CUTOFF: f64 = 53.0 * std::f64::consts::LN_2;

impl Stepper {
    fn new(params: &ModelParams, dt: f64, bridge: bool) -> Self {
        Stepper {
            mu: params.mu,
            sigma_sqrt_dt: params.sigma * dt.sqrt(),
            dt,
            bridge_scale: if bridge { 2.0 / (params.sigma2() * dt) } else { 0.0 },
        }
    }

    /// Advance one step paying `rate`; `None` means ruin during the step.
    #[inline]
    fn step(&self, x: f64, rate: f64, z: f64, k: usize, rng: &mut PathRng) -> Option<f64> {
        let next = x + (self.mu - rate) * self.dt + self.sigma_sqrt_dt * z;
        if next <= 0.0 {
            return None;
        }
        if self.bridge_scale > 0.0 {
            let a = self.bridge_scale * x * next;
            if a < BRIDGE_CUTOFF && rng.bridge_uniform(k) <= (-a).exp() {
                return None;
            }
        }
        Some(next)
    }
}

/// One simulated path: undiscounted dividend increments `π(X_k) dt` and the
/// ruin time if it occurred before the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRecord {
    pub dividends: Vec<f64>,
    pub ruin_time: Option<f64>,
    pub final_x: f64,
}

fn check_x0(x0: f64) -> Result<()> {
    if x0 > 0.0 && x0.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain { what: "x0", value: x0 })
    }
}

/// Euler–Maruyama path of the barrier-controlled surplus; frozen at zero after ruin.
pub fn simulate_path(
    params: &ModelParams,
    strategy: &BarrierStrategy,
    x0: f64,
    dt: f64,
    horizon: f64,
    bridge_correction: bool,
    rng: &mut PathRng,
) -> Result<PathRecord> {
    params.validate()?;
    check_x0(x0)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Domain { what: "dt", value: dt });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain { what: "T", value: horizon });
    }
    let stepper = Stepper::new(params, dt, bridge_correction);
    let n = (horizon / dt).ceil() as usize;
    let mut dividends = vec![0.0; n];
    let mut x = x0;
    for (k, slot) in dividends.iter_mut().enumerate() {
        let rate = strategy.rate_at(x);
        *slot = rate * dt;
        let z = rng.normal();
        match stepper.step(x, rate, z, k, rng) {
            Some(next) => x = next,
            None => {
                return Ok(PathRecord {
                    dividends,
                    ruin_time: Some((k + 1) as f64 * dt),
                    final_x: 0.0,
                })
            }
        }
    }
    Ok(PathRecord {
        dividends,
        ruin_time: None,
        final_x: x,
    })
}

/// `h(k dt) dt` for `k < n`.
fn step_weights(disc: &DiscountSpec, dt: f64, n: usize) -> Result<Vec<f64>> {
    (0..n).map(|k| Ok(disc.eval(k as f64 * dt)? * dt)).collect()
}

fn discounted_payoff(stepper: &Stepper, strategy: &BarrierStrategy, weights: &[f64], x0: f64, rng: &mut PathRng) -> f64 {
    let mut x = x0;
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        let rate = strategy.rate_at(x);
        acc += w * rate;
        match stepper.step(x, rate, rng.normal(), k, rng) {
            Some(next) => x = next,
            None => break,
        }
    }
    acc
}

fn run_paths<F>(cfg: &SimConfig, f: F) -> Result<Vec<f64>>
where
    F: Fn(u64) -> f64 + Sync + Send,
{
    let n = cfg.n_paths as u64;
    let work = || (0..n).into_par_iter().map(&f).collect::<Vec<f64>>();
    match cfg.threads {
        None => Ok(work()),
        Some(t) => rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))
            .map(|pool| pool.install(work)),
    }
}

/// Neumaier-compensated sum in slice order.
fn compensated_sum(xs: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// `(mean, standard error)`.
fn mean_and_stderr(samples: &[f64]) -> (f64, f64) {
    let n = samples.len() as f64;
    let mean = compensated_sum(samples.iter().copied()) / n;
    if samples.len() < 2 {
        return (mean, 0.0);
    }
    let ss = compensated_sum(samples.iter().map(|s| (s - mean) * (s - mean)));
    (mean, (ss / (n - 1.0)).sqrt() / n.sqrt())
}

/// Monte Carlo estimate of `E ∫_0^{τ∧T} h(u) π(X_u) du` from `x0`.
pub fn estimate_value(
    params: &ModelParams,
    disc: &DiscountSpec,
    strategy: &BarrierStrategy,
    x0: f64,
    cfg: &SimConfig,
) -> Result<ValueEstimate> {
    params.validate()?;
    disc.validate()?;
    cfg.validate()?;
    check_x0(x0)?;
    let horizon = cfg.resolve_horizon(disc, params.max_rate)?;
    let truncation_bound = params.max_rate * disc.tail_integral(horizon)?;
    let weights = step_weights(disc, cfg.dt, cfg.steps(horizon))?;
    let stepper = Stepper::new(params, cfg.dt, cfg.bridge_correction);
    let payoffs = run_paths(cfg, |path| {
        let mut rng = PathRng::new(cfg.seed, path);
        discounted_payoff(&stepper, strategy, &weights, x0, &mut rng)
    })?;
    let (mean, stderr) = mean_and_stderr(&payoffs);
    Ok(ValueEstimate {
        x0,
        mean,
        stderr,
        n_paths: cfg.n_paths,
        horizon,
        truncation_bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeEstimate {
    pub x0: f64,
    pub l: f64,
    pub epsilon: f64,
    /// `(V^π̂ − V^{π^ε}) / ε`; the equilibrium property predicts `≥ 0` in the limit.
    pub gain_per_epsilon: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Number of grid steps on which the deviating rate is played.
    pub window_steps: usize,
    pub horizon: f64,
}

/// Payoff difference of the equilibrium and the deviating arm on one path.
///
/// Both arms consume the same Gaussian increment per step. After the
/// deviation window the arms follow the same feedback law, so once their
/// surplus difference changes sign (continuous coupled paths would meet
/// there) or both are ruined, their future payouts coincide and the loop ends.
#[allow(clippy::too_many_arguments)]
fn spike_difference(
    stepper: &Stepper,
    strategy: &BarrierStrategy,
    weights: &[f64],
    x0: f64,
    l: f64,
    window: usize,
    rng: &mut PathRng,
) -> f64 {
    let mut hat = Some(x0);
    let mut dev = Some(x0);
    let mut diff = 0.0;
    let mut dev_rng = rng.clone();
    for (k, &w) in weights.iter().enumerate() {
        if k >= window {
            match (hat, dev) {
                (None, None) => break,
                (Some(a), Some(b)) if a == b => break,
                _ => {}
            }
        }
        let z = rng.normal();
        let r_hat = hat.map_or(0.0, |x| strategy.rate_at(x));
        let r_dev = dev.map_or(0.0, |x| if k < window { l } else { strategy.rate_at(x) });
        diff += w * (r_hat - r_dev);
        let before = hat.zip(dev).map(|(a, b)| a - b);
        hat = hat.and_then(|x| stepper.step(x, r_hat, z, k, rng));
        dev = dev.and_then(|x| stepper.step(x, r_dev, z, k, &mut dev_rng));
        if k + 1 >= window {
            if let (Some(d0), Some(a), Some(b)) = (before, hat, dev) {
                if (a - b) * d0 <= 0.0 {
                    dev = Some(a);
                }
            }
        }
    }
    diff
}

/// Spike-deviation gain of the equilibrium barrier strategy at `x0`: the
/// deviator pays the constant rate `l` for `round(ε/dt)` steps and then
/// follows the equilibrium law.
pub fn spike_deviation_estimate<S: EquilibriumSolution + ?Sized>(
    sol: &S,
    x0: f64,
    l: f64,
    epsilon: f64,
    cfg: &SimConfig,
) -> Result<SpikeEstimate> {
    let params = *sol.params();
    let disc = sol.discount_spec();
    cfg.validate()?;
    check_x0(x0)?;
    if !(0.0..=params.max_rate).contains(&l) {
        return Err(Error::Domain { what: "l", value: l });
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Domain {
            what: "epsilon",
            value: epsilon,
        });
    }
    let window = (epsilon / cfg.dt).round() as usize;
    if window == 0 {
        return Err(Error::Domain {
            what: "epsilon (shorter than half a time step)",
            value: epsilon,
        });
    }
    let horizon = cfg.resolve_horizon(&disc, params.max_rate)?.max(window as f64 * cfg.dt);
    let weights = step_weights(&disc, cfg.dt, cfg.steps(horizon))?;
    let stepper = Stepper::new(&params, cfg.dt, cfg.bridge_correction);
    let strategy = sol.strategy();
    let eps = window as f64 * cfg.dt;
    let diffs = run_paths(cfg, |path| {
        let mut rng = PathRng::new(cfg.seed, path);
        spike_difference(&stepper, &strategy, &weights, x0, l, window, &mut rng) / eps
    })?;
    let (gain, stderr) = mean_and_stderr(&diffs);
    Ok(SpikeEstimate {
        x0,
        l,
        epsilon,
        gain_per_epsilon: gain,
        stderr,
        n_paths: cfg.n_paths,
        window_steps: window,
        horizon,
    })
}
