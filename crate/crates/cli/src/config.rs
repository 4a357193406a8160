//! JSON analysis configuration.

use std::path::Path;

use passquant::abstraction::DeltaIssBound;
use passquant::detectability::LoopVariant;
use passquant::models::{named_model, MODEL_NAMES};
use passquant::passivity::LambdaChoices;
use passquant::sim::Reference;
use passquant::systems::{LtiModel, SystemModel};
use passquant::Matrix;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default)]
    pub plant: Option<SubsystemConfig>,
    #[serde(default)]
    pub controller: Option<SubsystemConfig>,
    pub sampling: SamplingConfig,
    #[serde(default)]
    pub quantization: Option<QuantizationConfig>,
    #[serde(default)]
    pub symbolic: Option<SymbolicConfig>,
    #[serde(default)]
    pub lambdas: LambdaConfig,
    #[serde(default)]
    pub references: ReferenceConfig,
    #[serde(default)]
    pub simulation: Option<SimulationConfig>,
    /// Loop storage on `(x1, x2)`; defaults to the block diagonal of the
    /// subsystems' sampled storages.
    #[serde(default)]
    pub storage: Option<StorageConfig>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    pub model: ModelConfig,
    #[serde(default)]
    pub passivity: Option<PassivityConfig>,
    #[serde(default)]
    pub detectability: Option<DetectabilityConfig>,
    /// Lipschitz constant of the output map in `|·|∞ → |·|₂`; computed for
    /// LTI models when absent.
    #[serde(default)]
    pub lipschitz: Option<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Lti(LtiModel),
    Named(String),
}

impl ModelConfig {
    pub fn build(&self) -> CliResult<SystemModel> {
        match self {
            ModelConfig::Lti(m) => Ok(m.clone().into()),
            ModelConfig::Named(name) => named_model(name)
                .ok_or_else(|| CliError::Config(format!("unknown model '{name}'; available: {}", MODEL_NAMES.join(", ")))),
        }
    }
}

/// Which time domain the stated indices and storage refer to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Continuous-time indices with storage `xᵀPx`; the sampled system
    /// uses `xᵀPx/τ`.
    Continuous,
    /// Indices of the exact discretization with storage `xᵀPx`.
    Discrete,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PassivityConfig {
    pub nu: f64,
    pub rho: f64,
    pub route: Route,
    /// Storage matrix `P`.
    #[serde(default)]
    pub storage: Option<Matrix>,
    /// Output-derivative gain, required on the continuous route.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// `Mβ` of the initial bias `β(x) = xᵀMβx`.
    #[serde(default)]
    pub beta: Option<Matrix>,
    /// Decimal places `[ν, ρ]` to which the indices were rounded.
    #[serde(default)]
    pub decimals: Option<[u32; 2]>,
    /// Additional LMI claim on the exact discretization.
    #[serde(default)]
    pub sampled_check: Option<IndexClaim>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexClaim {
    pub nu: f64,
    pub rho: f64,
    pub storage: Matrix,
    #[serde(default)]
    pub decimals: Option<[u32; 2]>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectabilityConfig {
    pub window: usize,
    #[serde(default)]
    pub theta: Option<f64>,
    /// `Mp` of `p(x) = xᵀMp x`; synthesized for LTI models when absent.
    #[serde(default)]
    pub p: Option<Matrix>,
    /// Random trials for the falsifier.
    #[serde(default = "default_trials")]
    pub trials: usize,
}

fn default_trials() -> usize {
    10_000
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantizationConfig {
    pub mu1: f64,
    pub mu2: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SymbolicConfig {
    /// One or more grid pitches; simulations sweep all of them.
    pub eta: Vec<f64>,
    pub epsilon: f64,
    /// Incremental stability bound; computed for LTI controllers when
    /// absent.
    #[serde(default)]
    pub delta_iss: Option<DeltaIssBound>,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaConfig {
    #[serde(default = "l1_default")]
    pub l1: f64,
    #[serde(default = "l_default")]
    pub l2: f64,
    #[serde(default = "l_default")]
    pub l3: f64,
    #[serde(default = "l_default")]
    pub l4: f64,
    #[serde(default = "l_default")]
    pub l5: f64,
    #[serde(default)]
    pub nu_hat: Option<f64>,
    #[serde(default)]
    pub lambda: Option<f64>,
    #[serde(default)]
    pub d3: Option<f64>,
    #[serde(default)]
    pub c5: Option<f64>,
}

fn l1_default() -> f64 {
    LambdaChoices::default().l1
}

fn l_default() -> f64 {
    LambdaChoices::default().l2
}

impl Default for LambdaConfig {
    fn default() -> Self {
        let l = LambdaChoices::default();
        LambdaConfig { l1: l.l1, l2: l.l2, l3: l.l3, l4: l.l4, l5: l.l5, nu_hat: None, lambda: None, d3: None, c5: None }
    }
}

impl LambdaConfig {
    pub fn choices(&self) -> LambdaChoices {
        LambdaChoices { l1: self.l1, l2: self.l2, l3: self.l3, l4: self.l4, l5: self.l5 }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    #[serde(default)]
    pub r1: Reference,
    #[serde(default)]
    pub r2: Reference,
    /// Bound variant; zero references select the zero-reference bound.
    #[serde(default)]
    pub variant: Option<LoopVariant>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum SimulationMode {
    SampledQuantized,
    Symbolic,
    /// Sampled controller with `w = Q2(y2ˢ) − Q2(y2)` from a symbolic
    /// shadow at the first configured grid pitch.
    ShadowDisturbance,
    /// Sampled controller with seeded random disturbances.
    RandomDisturbance,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub horizon: usize,
    pub x1_0: Vec<f64>,
    pub x2_0: Vec<f64>,
    #[serde(default)]
    pub x2s_0: Option<Vec<f64>>,
    pub mode: SimulationMode,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StorageConfig {
    pub p: Matrix,
}

impl AnalysisConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("at '{path}': {}", e.into_inner()))
        })
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn plant(&self) -> CliResult<&SubsystemConfig> {
        self.plant.as_ref().ok_or_else(|| CliError::Config("this command needs a 'plant' section".into()))
    }

    pub fn controller(&self) -> CliResult<&SubsystemConfig> {
        self.controller.as_ref().ok_or_else(|| CliError::Config("this command needs a 'controller' section".into()))
    }

    pub fn quantization(&self) -> CliResult<QuantizationConfig> {
        self.quantization.ok_or_else(|| CliError::Config("this command needs a 'quantization' section".into()))
    }

    pub fn simulation(&self) -> CliResult<&SimulationConfig> {
        self.simulation.as_ref().ok_or_else(|| CliError::Config("this command needs a 'simulation' section".into()))
    }

    pub fn symbolic(&self) -> CliResult<&SymbolicConfig> {
        self.symbolic.as_ref().ok_or_else(|| CliError::Config("this command needs a 'symbolic' section".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"sampling": {"tau": 0.3}}"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let c = AnalysisConfig::from_json(MINIMAL).unwrap();
        assert_eq!(c.lambdas.choices(), LambdaChoices::default());
        assert_eq!(c.references.r1, Reference::Zero);
        assert!(c.plant.is_none());
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = r#"{"sampling": {"tau": 0.3, "period": 1}}"#;
        let err = AnalysisConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("sampling") && err.contains("period"), "{err}");
    }

    #[test]
    fn matrix_dimension_mismatch_is_rejected() {
        let text = r#"{"sampling": {"tau": 0.3}, "storage": {"p": {"rows": 2, "cols": 2, "data": [1, 0, 0]}}}"#;
        let err = AnalysisConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("storage.p"), "{err}");
    }

    #[test]
    fn named_models_resolve() {
        let m = ModelConfig::Named("example5_plant".into()).build().unwrap();
        assert_eq!(m.n(), 2);
        assert!(ModelConfig::Named("nope".into()).build().is_err());
    }
}
