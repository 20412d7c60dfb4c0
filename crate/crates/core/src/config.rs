//! JSON run configuration: the model sections plus an optional `experiment`
//! section.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiments::ExperimentSettings;
use crate::model::{DriftsSection, InitialData, ModelSpec, NoiseSection, OperatorsSection, SpaceSection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub space: SpaceSection,
    pub operators: OperatorsSection,
    pub noise: NoiseSection,
    pub drifts: DriftsSection,
    pub initial_data: InitialData,
    #[serde(default)]
    pub experiment: ExperimentSettings,
}

impl Config {
    pub fn from_parts(model: ModelSpec, experiment: ExperimentSettings) -> Self {
        Self {
            space: model.space,
            operators: model.operators,
            noise: model.noise,
            drifts: model.drifts,
            initial_data: model.initial_data,
            experiment,
        }
    }

    /// Parses JSON; errors carry the line and column, and the offending line.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| {
            let line = text.lines().nth(e.line().saturating_sub(1)).unwrap_or("").trim();
            Error::Parse {
                what: origin.to_string(),
                message: format!("line {}, column {}: {e} (near `{line}`)", e.line(), e.column()),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn model_spec(&self) -> ModelSpec {
        ModelSpec {
            space: self.space.clone(),
            operators: self.operators.clone(),
            noise: self.noise.clone(),
            drifts: self.drifts.clone(),
            initial_data: self.initial_data.clone(),
        }
    }

    pub fn split(self) -> (ModelSpec, ExperimentSettings) {
        let experiment = self.experiment.clone();
        (self.model_spec(), experiment)
    }
}
