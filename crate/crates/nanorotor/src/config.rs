//! Run configuration: a JSON file in which every field is optional and
//! falls back to a documented default. Unknown keys are rejected (typo
//! guard) and error messages carry the field path. The fully resolved
//! configuration is echoed into every output file header so any output can
//! be reproduced from its own header.

use serde::{Deserialize, Serialize};

use crate::dynamics::IntegratorSettings;
use crate::error::{Error, Result};
use crate::limit_cycle::ClassifySettings;
use crate::params::{
    DriveConfig, GasEnvironment, GeometricFactors, LaserField, Nanorod, SystemParams,
};
use crate::signal::{DetectorModel, NoiseSpec};

/// Complete configuration of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub rod: Nanorod,
    pub gas: GasEnvironment,
    pub laser: LaserField,
    pub drive: DriveConfig,
    pub geometry: GeometricFactors,
    pub integrator: IntegratorSettings,
    pub classify: ClassifySettings,
    pub detector: DetectorModel,
    pub noise: NoiseSpec,
    pub seed: u64,
    pub out_dir: Option<String>,
}

impl RunConfig {
    /// Assemble the physical parameter set.
    pub fn system(&self) -> SystemParams {
        SystemParams {
            rod: self.rod,
            gas: self.gas,
            laser: self.laser,
            drive: self.drive,
            geometry: self.geometry,
        }
    }
}

impl RunConfig {
    /// Parse and validate a configuration from JSON text. Deserialization
    /// errors include the path of the offending field.
    pub fn from_json(text: &str) -> Result<RunConfig> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let config: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Config {
                path: if path == "." { "<root>".into() } else { path },
                message: e.inner().to_string(),
            }
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn from_json_bytes(bytes: &[u8]) -> Result<RunConfig> {
        let text = std::str::from_utf8(bytes)
            .map_err(|e| Error::parse("config", format!("not valid UTF-8: {e}")))?;
        Self::from_json(text)
    }

    pub fn validate(&self) -> Result<()> {
        self.system().validate()?;
        self.integrator.validate()?;
        if !(self.noise.power_rel_rms.is_finite() && self.noise.power_rel_rms >= 0.0) {
            return Err(Error::invalid("noise.power_rel_rms", "must be >= 0"));
        }
        if !(self.noise.additive_rms.is_finite() && self.noise.additive_rms >= 0.0) {
            return Err(Error::invalid("noise.additive_rms", "must be >= 0"));
        }
        Ok(())
    }

    /// Canonical single-line JSON echo of the fully resolved configuration.
    pub fn to_canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serialization is infallible")
    }

    /// Override the seed (CLI flag wins over the file).
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.noise.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_resolves_to_defaults() {
        let config = RunConfig::from_json("{}").unwrap();
        assert_eq!(config, RunConfig::default());
        assert!(config.drive.frequency_hz > 0.0);
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let err = RunConfig::from_json(r#"{"drive": {"frequencyhz": 2e6}}"#).unwrap_err();
        let message = err.to_string();
        assert!(message.contains("drive"), "{message}");
        assert!(message.contains("frequencyhz"), "{message}");
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = RunConfig::from_json(r#"{"drive": {"frequency_hz": -1.0}}"#).unwrap_err();
        assert!(err.to_string().contains("frequency_hz"));
        let err = RunConfig::from_json(r#"{"drive": {"frequency_hz": "fast"}}"#).unwrap_err();
        assert!(err.to_string().contains("drive.frequency_hz"));
    }

    #[test]
    fn canonical_echo_round_trips() {
        let config = RunConfig::from_json(
            r#"{"gas": {"pressure_mbar": 40.0}, "drive": {"frequency_hz": 1.5e7}, "seed": 9}"#,
        )
        .unwrap();
        let echo = config.to_canonical_json();
        let back = RunConfig::from_json(&echo).unwrap();
        assert_eq!(config, back);
        assert!(echo.contains("\"pressure_pa\":4000.0"));
    }
}
