//! Run configuration, read from TOML.
//!
//! ```toml
//! schema_version = 1
//! seed = 7
//!
//! [scenario]
//! builtin = "s-sub"
//!
//! [engine]
//! horizon = 20
//! particles = [100, 1000]
//! ```
//!
//! A scenario is either a built-in (`builtin = "s-one"`), an explicit
//! homogeneous finite model (`states`, `potential`, `transition`,
//! `immigration`, optionally `initial` and `regime`), or a linear-Gaussian
//! tracking model (`[scenario.gaussian]`).

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use branching_flow::harness::{CheckParams, Scenario};
use branching_flow::particles::SelectionScheme;
use branching_flow::sim::LinearGaussianScenario;
use branching_flow::{
    scenarios, BranchingModel, DiscreteMeasure, MarkovKernel, Potential, Regime, StateSpace,
};
use serde::{Deserialize, Serialize};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub scenario: ScenarioConfig,
    #[serde(default)]
    pub engine: EngineConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub verify: VerifyConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub states: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub potential: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transition: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub immigration: Option<Vec<f64>>,
    /// `gamma_0`; defaults to the immigration intensity.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regime: Option<Regime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gaussian: Option<GaussianConfig>,
}

/// Constant-velocity targets in the plane.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianConfig {
    pub dt: f64,
    /// Acceleration noise intensity; 0 gives deterministic motion.
    pub q: f64,
    pub survival: f64,
    /// Probability of a single offspring (otherwise two).
    pub alpha: f64,
    pub mu_rate: f64,
    pub region: [[f64; 2]; 2],
    pub velocity_sd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EngineConfig {
    pub horizon: usize,
    /// Particle counts; one batch of runs per entry.
    pub particles: Vec<usize>,
    /// Birth samples `N'` for the approximated immigration flow.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub births: Option<usize>,
    pub replicates: usize,
    pub scheme: SelectionScheme,
    /// `one` or `ind-<state>`.
    pub functions: Vec<String>,
    pub max_population: usize,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            horizon: 10,
            particles: vec![200],
            births: None,
            replicates: 100,
            scheme: SelectionScheme::FullResample,
            functions: vec!["one".into()],
            max_population: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { dir: "out".into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VerifyConfig {
    /// Check ids; all checks when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub checks: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corruption: Option<f64>,
    pub params: CheckParams,
}

pub enum Model {
    Finite(Scenario),
    Gaussian(LinearGaussianScenario),
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text)?;
        ensure!(
            cfg.schema_version == SCHEMA_VERSION,
            "unsupported schema_version {} (expected {SCHEMA_VERSION})",
            cfg.schema_version
        );
        Ok(cfg)
    }

    #[cfg(test)]
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.context("seed required")
    }

    pub fn model(&self) -> Result<Model> {
        self.scenario.build()
    }
}

impl ScenarioConfig {
    fn explicit_fields(&self) -> bool {
        self.states.is_some()
            || self.potential.is_some()
            || self.transition.is_some()
            || self.immigration.is_some()
            || self.initial.is_some()
    }

    pub fn build(&self) -> Result<Model> {
        let kinds = [self.builtin.is_some(), self.explicit_fields(), self.gaussian.is_some()];
        ensure!(
            kinds.iter().filter(|k| **k).count() == 1,
            "scenario needs exactly one of `builtin`, explicit model fields, or `[scenario.gaussian]`"
        );
        if let Some(g) = &self.gaussian {
            ensure!(
                matches!(self.regime, None | Some(Regime::Gaussian)),
                "gaussian scenarios take the `gaussian` regime tag"
            );
            let (a, sigma) = LinearGaussianScenario::constant_velocity(g.dt, g.q);
            let model = LinearGaussianScenario::new(
                a,
                sigma,
                g.survival,
                g.alpha,
                g.mu_rate,
                g.region,
                g.velocity_sd,
            )?;
            return Ok(Model::Gaussian(model));
        }
        let (name, model) = if let Some(b) = &self.builtin {
            let model = scenarios::by_name(b).with_context(|| {
                format!("unknown built-in scenario {b:?} (known: {})", scenarios::NAMES.join(", "))
            })?;
            (self.name.clone().unwrap_or_else(|| b.clone()), model)
        } else {
            (self.name.clone().unwrap_or_else(|| "custom".into()), self.explicit()?)
        };
        if self.regime == Some(Regime::Gaussian) {
            bail!("the `gaussian` regime tag needs a `[scenario.gaussian]` model");
        }
        Ok(Model::Finite(Scenario {
            name,
            model,
            regime: self.regime,
        }))
    }

    fn explicit(&self) -> Result<BranchingModel> {
        let states = self.states.as_ref().context("scenario.states missing")?;
        let space = StateSpace::new(states.iter().cloned())?;
        let potential = Potential::new(
            &space,
            self.potential.clone().context("scenario.potential missing")?,
        )?;
        let kernel = MarkovKernel::square(
            &space,
            self.transition.clone().context("scenario.transition missing")?,
        )?;
        let immigration = DiscreteMeasure::new(
            &space,
            self.immigration.clone().context("scenario.immigration missing")?,
        )?;
        let model = match &self.initial {
            Some(w) => BranchingModel::homogeneous_with_initial(
                potential,
                kernel,
                immigration,
                DiscreteMeasure::new(&space, w.clone())?,
            )?,
            None => BranchingModel::homogeneous(potential, kernel, immigration)?,
        };
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXPLICIT: &str = r#"
schema_version = 1
seed = 11

[scenario]
name = "three"
states = ["a", "b", "c"]
potential = [0.5, 1.0, 1.5]
transition = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]]
immigration = [0.1, 0.2, 0.3]

[engine]
horizon = 4
particles = [10, 100]
scheme = { kind = "accept-reject" }
functions = ["one", "ind-b"]

[verify]
checks = ["flow-consistency"]

[verify.params.flow_consistency]
scenarios = ["three"]
horizon = 7
"#;

    #[test]
    fn round_trip() {
        let cfg = RunConfig::parse(EXPLICIT).unwrap();
        let again = RunConfig::parse(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(cfg, again);
        assert_eq!(cfg.verify.params.flow_consistency.horizon, 7);
        assert_eq!(cfg.verify.params.clt.runs, 5000);
    }

    #[test]
    fn explicit_model_builds() {
        let cfg = RunConfig::parse(EXPLICIT).unwrap();
        let Model::Finite(s) = cfg.model().unwrap() else {
            panic!("finite scenario expected")
        };
        assert_eq!(s.name, "three");
        assert_eq!(s.model.space(0).unwrap().size(), 3);
    }

    #[test]
    fn rejects_bad_models() {
        let bad_row = EXPLICIT.replace("[0.5, 0.5, 0.0]", "[0.5, 0.6, 0.0]");
        assert!(RunConfig::parse(&bad_row).unwrap().model().is_err());
        let bad_g = EXPLICIT.replace("[0.5, 1.0, 1.5]", "[0.0, 1.0, 1.5]");
        assert!(RunConfig::parse(&bad_g).unwrap().model().is_err());
        let both = EXPLICIT.replace("name = \"three\"", "builtin = \"s-one\"");
        assert!(RunConfig::parse(&both).unwrap().model().is_err());
        let version = EXPLICIT.replace("schema_version = 1", "schema_version = 2");
        assert!(RunConfig::parse(&version).is_err());
        let unknown = EXPLICIT.replace("horizon = 4", "horizon = 4\nbogus = 1");
        assert!(RunConfig::parse(&unknown).is_err());
    }

    #[test]
    fn missing_seed() {
        let cfg = RunConfig::parse(&EXPLICIT.replace("seed = 11", "")).unwrap();
        assert_eq!(cfg.seed().unwrap_err().to_string(), "seed required");
    }
}
