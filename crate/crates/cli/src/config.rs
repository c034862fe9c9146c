//! Experiment configuration: model, engine, scenario and output blocks.

use gibbslab::engines::MarkovChain;
use gibbslab::lattice::{Boundary, Dim, Interaction, LocalFunction, Region, Site, Tail, TailedConfiguration};
use gibbslab::quasilocality::TailFamily;
use gibbslab::thermo::MeasureRecipe;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelBlock,
    #[serde(default)]
    pub engine: EngineBlock,
    #[serde(default)]
    pub scenario: toml::Table,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub d: usize,
    pub beta: f64,
    #[serde(default = "one")]
    pub j: f64,
    #[serde(default)]
    pub h: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EngineKind {
    /// Enumeration and transfer matrices only.
    #[default]
    Exact,
    /// Exact where feasible, Monte Carlo otherwise.
    Mc,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineBlock {
    pub kind: EngineKind,
    pub seed: u64,
    pub chains: u32,
    pub sweeps: u64,
    pub burn_in: u64,
    /// Draws for sampled bad-set estimates.
    pub samples: usize,
    /// Largest acceptable Monte Carlo standard error.
    pub target_se: f64,
}

impl Default for EngineBlock {
    fn default() -> Self {
        Self { kind: EngineKind::Exact, seed: 0, chains: 4, sweeps: 4000, burn_in: 400, samples: 4000, target_se: 0.01 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub directory: Option<String>,
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, formats: vec![Format::Csv, Format::Json] }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, Failure> {
        let cfg: Self = toml::from_str(text).map_err(|e| Failure::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), Failure> {
        let m = &self.model;
        if m.d != 1 && m.d != 2 {
            return Err(Failure::Config("model.d must be 1 or 2".into()));
        }
        Interaction::new(m.j, m.h, m.beta).map_err(|e| Failure::Config(e.to_string()))?;
        if self.engine.chains == 0 || self.engine.sweeps <= self.engine.burn_in {
            return Err(Failure::Config("engine needs chains ≥ 1 and sweeps > burn_in".into()));
        }
        if self.output.formats.is_empty() {
            return Err(Failure::Config("output.formats is empty".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> Dim {
        if self.model.d == 1 {
            Dim::One
        } else {
            Dim::Two
        }
    }

    pub fn phi(&self) -> Interaction {
        Interaction::new(self.model.j, self.model.h, self.model.beta).expect("validated")
    }

    pub fn scenario<T: DeserializeOwned>(&self) -> Result<T, Failure> {
        toml::Value::Table(self.scenario.clone()).try_into().map_err(|e: toml::de::Error| Failure::Config(format!("scenario: {e}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundarySpec {
    Plus,
    Minus,
    Free,
    Periodic,
    Alternating,
}

impl BoundarySpec {
    pub fn build(self, dim: Dim) -> Boundary {
        match self {
            Self::Plus => Boundary::Fixed(TailedConfiguration::all_plus(dim)),
            Self::Minus => Boundary::Fixed(TailedConfiguration::all_minus(dim)),
            Self::Alternating => Boundary::Fixed(TailedConfiguration::uniform(dim, Tail::alternating(dim))),
            Self::Free => Boundary::Free,
            Self::Periodic => Boundary::Periodic,
        }
    }
}

/// A named configuration for `ω` or `θ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConfigSpec {
    Plus,
    Minus,
    Alternating,
}

impl ConfigSpec {
    pub fn build(self, dim: Dim) -> TailedConfiguration {
        match self {
            Self::Plus => TailedConfiguration::all_plus(dim),
            Self::Minus => TailedConfiguration::all_minus(dim),
            Self::Alternating => TailedConfiguration::uniform(dim, Tail::alternating(dim)),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasureSpec {
    /// The configured model: a stationary chain in `d = 1`, otherwise the
    /// Boltzmann law on `cube(radius)`.
    Model {
        radius: Option<u32>,
        boundary: Option<BoundarySpec>,
    },
    /// A 1-D Gibbs chain with its own parameters.
    Gibbs {
        beta: f64,
        #[serde(default = "one")]
        j: f64,
        #[serde(default)]
        h: f64,
    },
    Product {
        p_plus: f64,
    },
    Uniform {},
    /// A 1-D chain given by its flip probabilities.
    Chain {
        flip_minus: f64,
        flip_plus: f64,
    },
    Decimated {
        base: Box<MeasureSpec>,
        b: u32,
    },
    FiniteGibbs {
        beta: f64,
        #[serde(default = "one")]
        j: f64,
        #[serde(default)]
        h: f64,
        radius: u32,
        #[serde(default = "plus")]
        boundary: BoundarySpec,
    },
}

fn plus() -> BoundarySpec {
    BoundarySpec::Plus
}

fn cfg_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

impl MeasureSpec {
    pub fn build(&self, cfg: &ExperimentConfig) -> Result<MeasureRecipe, Failure> {
        let dim = cfg.dim();
        Ok(match self {
            Self::Model { radius, boundary } => match (dim, radius) {
                (Dim::One, None) => MeasureRecipe::gibbs_1d(&cfg.phi()),
                (_, Some(r)) => MeasureRecipe::FiniteGibbs {
                    phi: cfg.phi(),
                    window: Region::cube(*r, dim),
                    boundary: boundary.unwrap_or(BoundarySpec::Plus).build(dim),
                },
                (Dim::Two, None) => return Err(Failure::Config("a 2-D model measure needs a radius".into())),
            },
            Self::Gibbs { beta, j, h } => {
                if dim != Dim::One {
                    return Err(Failure::Config("gibbs chains are one-dimensional".into()));
                }
                MeasureRecipe::gibbs_1d(&Interaction::new(*j, *h, *beta).map_err(cfg_err)?)
            }
            Self::Product { p_plus } => {
                if !(0.0..=1.0).contains(p_plus) {
                    return Err(Failure::Config("p_plus must lie in [0, 1]".into()));
                }
                MeasureRecipe::Product { p_plus: *p_plus, dim }
            }
            Self::Uniform {} => MeasureRecipe::uniform(dim),
            Self::Chain { flip_minus, flip_plus } => {
                MeasureRecipe::Markov(MarkovChain::from_flip_probs(*flip_minus, *flip_plus).map_err(cfg_err)?)
            }
            Self::Decimated { base, b } => {
                if *b == 0 {
                    return Err(Failure::Config("decimation spacing must be positive".into()));
                }
                MeasureRecipe::Decimated { base: Box::new(base.build(cfg)?), b: *b }
            }
            Self::FiniteGibbs { beta, j, h, radius, boundary } => MeasureRecipe::FiniteGibbs {
                phi: Interaction::new(*j, *h, *beta).map_err(cfg_err)?,
                window: Region::cube(*radius, dim),
                boundary: boundary.build(dim),
            },
        })
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FunctionSpec {
    Zero {},
    /// `scale · σ_site`.
    Spin {
        #[serde(default = "one")]
        scale: f64,
        #[serde(default)]
        site: [i64; 2],
    },
    /// `scale · σ_0 σ_{e_1}`.
    Pair {
        #[serde(default = "one")]
        scale: f64,
    },
    Product {
        sites: Vec<[i64; 2]>,
        #[serde(default = "one")]
        scale: f64,
    },
    PlusIndicator {
        sites: Vec<[i64; 2]>,
    },
}

impl FunctionSpec {
    pub fn build(&self, dim: Dim) -> Result<LocalFunction, Failure> {
        let site = |c: [i64; 2]| -> Result<Site, Failure> {
            if dim == Dim::One && c[1] != 0 {
                return Err(Failure::Config("1-D sites need a zero second coordinate".into()));
            }
            Ok(Site { layer: 0, coords: c })
        };
        let sites = |v: &[[i64; 2]]| v.iter().map(|&c| site(c)).collect::<Result<Vec<_>, _>>();
        Ok(match self {
            Self::Zero {} => LocalFunction::constant(dim, 0.0),
            Self::Spin { scale, site: s } => LocalFunction::spin_at(site(*s)?, dim).scaled(*scale),
            Self::Pair { scale } => {
                LocalFunction::spin_product(dim, [Site::ORIGIN, site([1, 0])?]).map_err(cfg_err)?.scaled(*scale)
            }
            Self::Product { sites: s, scale } => LocalFunction::spin_product(dim, sites(s)?).map_err(cfg_err)?.scaled(*scale),
            Self::PlusIndicator { sites: s } => LocalFunction::all_plus_indicator(dim, sites(s)?).map_err(cfg_err)?,
        })
    }
}

/// Exterior directions for the counterexample.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    AllMinus,
    Alternating,
    AllPlus,
    Chi1,
    Chi10,
}

impl Direction {
    pub const PRESETS: [Direction; 5] =
        [Direction::AllMinus, Direction::Alternating, Direction::AllPlus, Direction::Chi1, Direction::Chi10];

    pub fn name(self) -> &'static str {
        match self {
            Self::AllMinus => "all_minus",
            Self::Alternating => "alternating",
            Self::AllPlus => "all_plus",
            Self::Chi1 => "chi_1",
            Self::Chi10 => "chi_10",
        }
    }

    pub fn build(self, family: &TailFamily) -> Result<TailedConfiguration, Failure> {
        Ok(match self {
            Self::AllMinus => TailedConfiguration::all_minus(Dim::One),
            Self::Alternating => TailedConfiguration::uniform(Dim::One, Tail::alternating(Dim::One)),
            Self::AllPlus => TailedConfiguration::all_plus(Dim::One),
            Self::Chi1 => family.chi(1).map_err(cfg_err)?,
            Self::Chi10 => family.chi(10).map_err(cfg_err)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("[model]\nd = 1\nbeta = 1.0\nspin = 3\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nd = 1\nbeta = 1.0\n[extra]\n").is_err());
        let cfg = ExperimentConfig::parse("[model]\nd = 1\nbeta = 1.0\n[scenario.nu]\nkind = \"uniform\"\nx = 1\n").unwrap();
        #[derive(Deserialize)]
        #[allow(dead_code)]
        struct S {
            nu: MeasureSpec,
        }
        assert!(cfg.scenario::<S>().is_err());
        let cfg = ExperimentConfig::parse("[model]\nd = 1\nbeta = 1.0\n[scenario.f]\nkind = \"zero\"\nscale = 2\n").unwrap();
        #[derive(Deserialize)]
        #[allow(dead_code)]
        struct F {
            f: FunctionSpec,
        }
        assert!(cfg.scenario::<F>().is_err());
    }

    #[test]
    fn model_defaults() {
        let cfg = ExperimentConfig::parse("[model]\nd = 2\nbeta = 0.5\n").unwrap();
        assert_eq!(cfg.model.j, 1.0);
        assert_eq!(cfg.engine.kind, EngineKind::Exact);
        assert!(ExperimentConfig::parse("[model]\nd = 3\nbeta = 0.5\n").is_err());
    }
}
