//! Run configuration: the log schema plus the learning knobs, one TOML
//! document. Command-line flags override individual fields.

use serde::Deserialize;
use slarkit_core::log::{LogError, ObservationSchema, VariableKind};
use slarkit_core::slar::SlarConfig;
use thiserror::Error;

pub const CONFIG_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("unsupported config format version {0}")]
    Version(u32),
    #[error("unknown variable kind `{0}` (use `numeric` or `discrete`)")]
    Kind(String),
    #[error(transparent)]
    Schema(#[from] LogError),
}

#[derive(Debug, Clone, Deserialize)]
pub struct VariableConfig {
    pub name: String,
    #[serde(default = "default_kind")]
    pub kind: String,
}

fn default_kind() -> String {
    "numeric".into()
}

#[derive(Debug, Clone, Deserialize)]
pub struct SchemaSection {
    pub variables: Vec<VariableConfig>,
    #[serde(default)]
    pub timestamp_column: Option<String>,
    #[serde(default = "default_period")]
    pub sample_period_seconds: f64,
}

fn default_period() -> f64 {
    1.0
}

/// Learning knobs; every field defaults to the library default so a config
/// may carry only the schema.
#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default)]
pub struct LearningSection {
    pub epsilon: Option<f64>,
    pub frequency_epsilon: Option<f64>,
    pub max_depth: Option<usize>,
    pub downsample_stride: Option<usize>,
    pub classifier_budget: Option<u32>,
    pub max_rounds: Option<usize>,
    pub stationary_tolerance: Option<f64>,
    pub stationary_max_iterations: Option<u64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct RunConfig {
    pub format_version: u32,
    pub schema: SchemaSection,
    #[serde(default)]
    pub learning: LearningSection,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let config: RunConfig = toml::from_str(text)?;
        if config.format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError::Version(config.format_version));
        }
        Ok(config)
    }

    pub fn observation_schema(&self) -> Result<ObservationSchema, ConfigError> {
        let mut variables = Vec::with_capacity(self.schema.variables.len());
        for v in &self.schema.variables {
            let kind = match v.kind.as_str() {
                "numeric" => VariableKind::Numeric,
                "discrete" => VariableKind::Discrete,
                other => return Err(ConfigError::Kind(other.into())),
            };
            variables.push((v.name.clone(), kind));
        }
        Ok(ObservationSchema::new(
            variables,
            self.schema.timestamp_column.clone(),
            self.schema.sample_period_seconds,
        )?)
    }

    pub fn slar_config(&self) -> SlarConfig {
        let defaults = SlarConfig::default();
        let l = &self.learning;
        SlarConfig {
            epsilon: l.epsilon.unwrap_or(defaults.epsilon),
            frequency_epsilon: l.frequency_epsilon,
            max_depth: l.max_depth.unwrap_or(defaults.max_depth),
            downsample_stride: l.downsample_stride.unwrap_or(defaults.downsample_stride),
            classifier_budget: l.classifier_budget.unwrap_or(defaults.classifier_budget),
            max_rounds: l.max_rounds.unwrap_or(defaults.max_rounds),
            stationary_tolerance: l
                .stationary_tolerance
                .unwrap_or(defaults.stationary_tolerance),
            stationary_max_iterations: l
                .stationary_max_iterations
                .unwrap_or(defaults.stationary_max_iterations),
            seed: l.seed.unwrap_or(defaults.seed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
format_version = 1

[schema]
sample_period_seconds = 1.0
variables = [
  { name = "FIT101" },
  { name = "MV101", kind = "discrete" },
]

[learning]
epsilon = 0.02
downsample_stride = 60
"#;

    #[test]
    fn parses_schema_and_overrides() {
        let config = RunConfig::parse(SAMPLE).unwrap();
        let schema = config.observation_schema().unwrap();
        assert_eq!(schema.arity(), 2);
        assert_eq!(schema.variables()[1].1, VariableKind::Discrete);
        let slar = config.slar_config();
        assert_eq!(slar.epsilon, 0.02);
        assert_eq!(slar.downsample_stride, 60);
        // Unset knobs fall back to defaults.
        assert_eq!(slar.max_depth, SlarConfig::default().max_depth);
    }

    #[test]
    fn rejects_wrong_version() {
        let text = SAMPLE.replace("format_version = 1", "format_version = 9");
        assert!(matches!(
            RunConfig::parse(&text).unwrap_err(),
            ConfigError::Version(9)
        ));
    }

    #[test]
    fn rejects_unknown_kind() {
        let text = SAMPLE.replace("discrete", "fuzzy");
        let config = RunConfig::parse(&text).unwrap();
        assert!(matches!(
            config.observation_schema().unwrap_err(),
            ConfigError::Kind(_)
        ));
    }
}
