//! Versioned TOML scenario configuration.

use std::path::PathBuf;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use sphereflow_core::observables::Reference;
use sphereflow_core::{CircleSolverConfig, IntegratorConfig, KernelSpec, PhiPrime, ScenarioInit};

use crate::error::CliError;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelConfig {
    SimpleAttention { beta: f64 },
    ScaledIdentityExp { beta: f64 },
    Kuramoto,
    Custom {
        matrix: Vec<Vec<f64>>,
        phi_prime: String,
        #[serde(default = "one")]
        rate: f64,
    },
}

fn one() -> f64 {
    1.0
}

impl KernelConfig {
    pub fn build(&self, d: usize) -> Result<KernelSpec, CliError> {
        Ok(match self {
            KernelConfig::SimpleAttention { beta } => KernelSpec::simple_attention(d, *beta),
            KernelConfig::ScaledIdentityExp { beta } => KernelSpec::scaled_identity_exp(d, *beta)?,
            KernelConfig::Kuramoto => KernelSpec::kuramoto(d),
            KernelConfig::Custom { matrix, phi_prime, rate } => {
                if matrix.len() != d || matrix.iter().any(|r| r.len() != d) {
                    return Err(CliError::Config(format!("kernel.matrix must be {d}x{d}")));
                }
                let a = DMatrix::from_row_slice(d, d, &matrix.concat());
                let phi = PhiPrime::named(phi_prime, *rate).map_err(|e| CliError::Config(format!("kernel.phi_prime: {e}")))?;
                KernelSpec::custom(a, phi)?
            }
        })
    }

    /// The attention temperature when the kernel is the attention weight.
    pub fn attention_beta(&self) -> Option<f64> {
        match self {
            KernelConfig::SimpleAttention { beta } | KernelConfig::ScaledIdentityExp { beta } => Some(*beta),
            _ => None,
        }
    }
}

/// Reference measure for the W2 column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceConfig {
    /// Dirac mass at the mean direction of the final state.
    Limit,
    Dirac { point: Vec<f64> },
    CircleAtoms { angles: Vec<f64>, weights: Vec<f64> },
}

impl ReferenceConfig {
    pub fn explicit(&self) -> Option<Reference> {
        match self {
            ReferenceConfig::Limit => None,
            ReferenceConfig::Dirac { point } => Some(Reference::Dirac { point: point.clone() }),
            ReferenceConfig::CircleAtoms { angles, weights } => Some(Reference::CircleAtoms {
                angles: angles.clone(),
                weights: weights.clone(),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Monitor {
    EntropyProduction,
    OrderGrowth,
    DissipationFloor,
    PerturbationBound,
    MeanDirection,
    PerturbationPairing,
    Pl,
    L2Gronwall,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObserveConfig {
    pub interval: f64,
    pub cap_angle: f64,
    pub xi_angles: [f64; 2],
    pub reference: Option<ReferenceConfig>,
    pub monitors: Vec<Monitor>,
    /// Cap angle used by the entropy production and PL monitors.
    pub monitor_cap_angle: f64,
    /// Rate fits use ticks with `t ≥ fit_t_start` and values above `fit_floor`.
    pub fit_t_start: f64,
    pub fit_floor: f64,
}

impl Default for ObserveConfig {
    fn default() -> Self {
        Self {
            interval: 0.1,
            cap_angle: std::f64::consts::FRAC_PI_4,
            xi_angles: [std::f64::consts::PI / 8.0, std::f64::consts::FRAC_PI_4],
            reference: None,
            monitors: Vec::new(),
            monitor_cap_angle: std::f64::consts::PI / 25.0,
            fit_t_start: 0.0,
            fit_floor: 1e-11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub prefix: Option<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            prefix: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    #[serde(default)]
    pub seed: Option<u64>,
    pub kernel: KernelConfig,
    pub init: ScenarioInit,
    #[serde(default)]
    pub integrator: IntegratorConfig,
    #[serde(default)]
    pub circle: CircleSolverConfig,
    #[serde(default)]
    pub observe: ObserveConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ScenarioConfig {
    /// Parses and validates; errors carry line and column.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Config(m) => CliError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(CliError::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.init.is_randomized() && self.seed.is_none() {
            return Err(CliError::Config(format!(
                "missing field `seed`: init kind of scenario `{}` is randomized",
                self.name
            )));
        }
        if !(self.observe.interval > 0.0) {
            return Err(CliError::Config("observe.interval must be positive".into()));
        }
        self.integrator
            .validate()
            .map_err(|e| CliError::Config(format!("integrator: {e}")))?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, so formatting does not matter.
    pub fn hash(&self) -> String {
        crate::output::hash_json(self)
    }

    pub fn prefix(&self) -> String {
        self.output.prefix.clone().unwrap_or_else(|| self.name.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
schema_version = 1
name = "t"
[kernel]
kind = "simple_attention"
beta = 1.0
[init]
kind = "example24"
xi = 0.005
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ScenarioConfig::parse(BASE).unwrap();
        assert_eq!(cfg.kernel, KernelConfig::SimpleAttention { beta: 1.0 });
        assert_eq!(cfg.integrator, IntegratorConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected_with_location() {
        let text = format!("{BASE}\n[integrator]\nstep = 0.1\n");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("line"), "{err}");
    }

    #[test]
    fn randomized_init_needs_seed() {
        let text = BASE.replace("kind = \"example24\"\nxi = 0.005", "kind = \"uniform\"\nd = 3\nn = 10");
        let err = ScenarioConfig::parse(&text).unwrap_err();
        assert!(err.to_string().contains("seed"));
    }

    #[test]
    fn hash_ignores_formatting() {
        let a = ScenarioConfig::parse(BASE).unwrap();
        let b = ScenarioConfig::parse(&BASE.replace("beta = 1.0", "beta    =   1.0")).unwrap();
        assert_eq!(a.hash(), b.hash());
    }
}
