//! JSON run configuration and dispatch to the matching solver.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discount::DiscountSpec;
use crate::error::{Error, Result};
use crate::mc::{Horizon, SimConfig};
use crate::mixture::{solve_mixture, MixtureSolution};
use crate::model::{ModelParams, ThetaTriple};
use crate::pseudo::{solve_pseudo, PseudoSolution};
use crate::solution::{ComponentGap, EquilibriumSolution, Partials, SolutionCase};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label used for output file names.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub model: ModelParams,
    pub discount: DiscountSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub figure: Option<FigureOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mc: Option<McOptions>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spike: Option<SpikeOptions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FigureOptions {
    pub x_max: f64,
    pub points: usize,
}

impl Default for FigureOptions {
    fn default() -> Self {
        FigureOptions {
            x_max: 5.0,
            points: 501,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<Horizon>,
    #[serde(default)]
    pub bridge_correction: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpikeOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<Vec<f64>>,
}

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_PATHS: usize = 100_000;

fn prefixed(prefix: &str, e: Error) -> Error {
    match e {
        Error::InvalidParameter { field, reason } if !field.starts_with(prefix) => Error::InvalidParameter {
            field: format!("{prefix}{field}"),
            reason,
        },
        other => other,
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(field, format!("must be finite and > 0, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::invalid(json_field(&e), e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate().map_err(|e| prefixed("model.", e))?;
        self.discount.validate().map_err(|e| prefixed("discount.", e))?;
        if let Some(f) = &self.figure {
            positive("figure.x_max", f.x_max)?;
            if f.points < 2 {
                return Err(Error::invalid("figure.points", "must be >= 2"));
            }
        }
        if let Some(mc) = &self.mc {
            self.sim_config(mc).map_err(|e| prefixed("mc.", e))?;
            for (i, &x) in mc.x0.iter().flatten().enumerate() {
                positive(&format!("mc.x0[{i}]"), x)?;
            }
        }
        if let Some(s) = &self.spike {
            for (i, &x) in s.x0.iter().flatten().enumerate() {
                positive(&format!("spike.x0[{i}]"), x)?;
            }
            for (i, &e) in s.epsilon.iter().flatten().enumerate() {
                positive(&format!("spike.epsilon[{i}]"), e)?;
            }
            for (i, &l) in s.l.iter().flatten().enumerate() {
                if !(0.0..=self.model.max_rate).contains(&l) {
                    return Err(Error::invalid(format!("spike.l[{i}]"), format!("must lie in [0, M], got {l}")));
                }
            }
        }
        Ok(())
    }

    /// Simulation settings from the `mc` section with defaults filled in.
    pub fn sim_config(&self, mc: &McOptions) -> Result<SimConfig> {
        Ok(SimConfig::new(
            mc.dt.unwrap_or(DEFAULT_DT),
            mc.n_paths.unwrap_or(DEFAULT_PATHS),
            mc.horizon.unwrap_or_default(),
            mc.seed.unwrap_or(0),
        )?
        .with_bridge(mc.bridge_correction))
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn sha256(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

pub fn load(path: &Path) -> std::result::Result<RunConfig, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|e| LoadError::Io(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text).map_err(LoadError::Config)
}

#[derive(Debug)]
pub enum LoadError {
    Io(String),
    Config(Error),
}

/// Best-effort name of the JSON field a serde error refers to.
fn json_field(err: &serde_json::Error) -> String {
    let msg = err.to_string();
    for marker in ["unknown field `", "missing field `"] {
        if let Some(rest) = msg.split(marker).nth(1) {
            if let Some(name) = rest.split('`').next() {
                return name.to_string();
            }
        }
    }
    "<json>".to_string()
}

/// A solved equilibrium of either closed-form family.
#[derive(Debug, Clone, PartialEq)]
pub enum Solved {
    Mixture(MixtureSolution),
    Pseudo(PseudoSolution),
}

pub fn solve(params: &ModelParams, disc: &DiscountSpec) -> Result<Solved> {
    match disc {
        DiscountSpec::ExpMixture(d) => solve_mixture(params, d).map(Solved::Mixture),
        DiscountSpec::PseudoExp(d) => solve_pseudo(params, d).map(Solved::Pseudo),
        DiscountSpec::Tabulated(_) => Err(Error::Unsupported(
            "no closed-form equilibrium for a tabulated discount".into(),
        )),
    }
}

impl Solved {
    fn inner(&self) -> &dyn EquilibriumSolution {
        match self {
            Solved::Mixture(s) => s,
            Solved::Pseudo(s) => s,
        }
    }

    pub fn document(&self) -> SolutionDocument {
        let coefficients = match self {
            Solved::Mixture(s) => Coefficients::Mixture(
                s.components
                    .iter()
                    .map(|k| MixtureCoefficients {
                        weight: k.weight,
                        rate: k.rate,
                        c: k.c,
                        d: k.d,
                    })
                    .collect(),
            ),
            Solved::Pseudo(s) => Coefficients::Pseudo(PseudoCoefficients {
                c: s.c,
                d: s.d,
                chat: s.chat,
                b1: s.b1,
                b3: s.b3,
                d3: s.d3,
                concavity_certified: s.concavity_certified,
            }),
        };
        let thetas = match self {
            Solved::Mixture(s) => s.components.iter().map(|k| k.theta).collect(),
            Solved::Pseudo(s) => vec![s.theta],
        };
        SolutionDocument {
            model: *self.params(),
            discount: self.discount_spec(),
            case: self.case(),
            b: self.barrier(),
            coefficients,
            thetas,
        }
    }

    /// Rebuilds a solution from its document; the barrier is taken as stored.
    pub fn from_document(doc: &SolutionDocument) -> Result<Self> {
        match (&doc.discount, doc.case) {
            (DiscountSpec::ExpMixture(d), SolutionCase::Barrier) => {
                MixtureSolution::from_barrier(doc.model, d.clone(), doc.b).map(Solved::Mixture)
            }
            (DiscountSpec::PseudoExp(d), SolutionCase::Barrier) => {
                PseudoSolution::from_barrier(doc.model, *d, doc.b).map(Solved::Pseudo)
            }
            (disc, SolutionCase::AlwaysPay) => solve(&doc.model, disc),
            (DiscountSpec::Tabulated(_), _) => Err(Error::Unsupported(
                "no closed-form equilibrium for a tabulated discount".into(),
            )),
        }
    }
}

impl EquilibriumSolution for Solved {
    fn params(&self) -> &ModelParams {
        self.inner().params()
    }
    fn discount_spec(&self) -> DiscountSpec {
        self.inner().discount_spec()
    }
    fn case(&self) -> SolutionCase {
        self.inner().case()
    }
    fn barrier(&self) -> f64 {
        self.inner().barrier()
    }
    fn partials(&self, u: f64, x: f64) -> Result<Partials> {
        self.inner().partials(u, x)
    }
    fn component_gaps(&self) -> Vec<ComponentGap> {
        self.inner().component_gaps()
    }
    fn ode_residual(&self, x: f64) -> Result<f64> {
        self.inner().ode_residual(x)
    }
    fn min_theta3(&self) -> f64 {
        self.inner().min_theta3()
    }
    fn min_delta(&self) -> f64 {
        self.inner().min_delta()
    }
}

impl From<MixtureSolution> for Solved {
    fn from(s: MixtureSolution) -> Self {
        Solved::Mixture(s)
    }
}

impl From<PseudoSolution> for Solved {
    fn from(s: PseudoSolution) -> Self {
        Solved::Pseudo(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureCoefficients {
    pub weight: f64,
    pub rate: f64,
    #[serde(rename = "C")]
    pub c: f64,
    pub d: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoCoefficients {
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
    pub concavity_certified: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Coefficients {
    Mixture(Vec<MixtureCoefficients>),
    Pseudo(PseudoCoefficients),
}

/// Serialized form written by `solve`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolutionDocument {
    pub model: ModelParams,
    pub discount: DiscountSpec,
    pub case: SolutionCase,
    pub b: f64,
    pub coefficients: Coefficients,
    pub thetas: Vec<ThetaTriple>,
}

/// The seven parameter sets of the two worked examples, by file stem.
pub const BUNDLED: [(&str, &str); 7] = [
    ("mixture_w0", include_str!("../examples/mixture_w0.json")),
    ("mixture_w04", include_str!("../examples/mixture_w04.json")),
    ("mixture_w07", include_str!("../examples/mixture_w07.json")),
    ("mixture_w1", include_str!("../examples/mixture_w1.json")),
    ("pseudo_l0", include_str!("../examples/pseudo_l0.json")),
    ("pseudo_l01", include_str!("../examples/pseudo_l01.json")),
    ("pseudo_l02", include_str!("../examples/pseudo_l02.json")),
];

/// Bundled configs of one example family (`"mixture"` or `"pseudo"`).
pub fn bundled(family: &str) -> Result<Vec<(String, RunConfig)>> {
    let prefix = format!("{family}_");
    let out: Vec<_> = BUNDLED
        .iter()
        .filter(|(name, _)| name.starts_with(&prefix))
        .map(|(name, text)| Ok((name.to_string(), RunConfig::from_json(text)?)))
        .collect::<Result<_>>()?;
    if out.is_empty() {
        return Err(Error::invalid("example", format!("unknown example `{family}` (mixture|pseudo)")));
    }
    Ok(out)
}
