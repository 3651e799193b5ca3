use serde::{Deserialize, Serialize};

use foodrescue::geo::{LatLon, DEFAULT_CIRCUITY, DEFAULT_WAREHOUSE_ID};
use foodrescue::sim::{SimConfig, CONFIG_SCHEMA_VERSION};

use crate::error::CliError;

/// Top-level run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub simulation: SimConfig,
    #[serde(default)]
    pub network: NetworkConfig,
    #[serde(default)]
    pub sweep: SweepGrids,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "default_warehouse_id")]
    pub warehouse_id: String,
    /// Needed only when haversine fallback has to reach the warehouse.
    #[serde(default)]
    pub warehouse_location: Option<LatLon>,
    #[serde(default = "default_circuity")]
    pub circuity: f64,
    /// Fill pairs missing from the distance file with haversine × circuity.
    #[serde(default)]
    pub distance_fallback: bool,
}

fn default_warehouse_id() -> String {
    DEFAULT_WAREHOUSE_ID.to_string()
}

fn default_circuity() -> f64 {
    DEFAULT_CIRCUITY
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            warehouse_id: default_warehouse_id(),
            warehouse_location: None,
            circuity: DEFAULT_CIRCUITY,
            distance_fallback: false,
        }
    }
}

/// Grids used by `sweep` when none are given on the command line.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrids {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub demand: Vec<f64>,
    #[serde(default)]
    pub fractions: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            simulation: SimConfig::default(),
            network: NetworkConfig::default(),
            sweep: SweepGrids::default(),
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str, path: &str) -> Result<Self, CliError> {
        let cfg: RunConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Validation(format!("{path}: line {}: {e}", e.line())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Validation(format!(
                "schema_version {} unsupported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.simulation.validate().map_err(foodrescue::Error::from)?;
        if let Some(p) = self.network.warehouse_location {
            LatLon::new(p.lat, p.lon).map_err(foodrescue::Error::from)?;
        }
        if !(self.network.circuity.is_finite() && self.network.circuity >= 1.0) {
            return Err(CliError::Validation(format!(
                "circuity {} must be >= 1",
                self.network.circuity
            )));
        }
        if self.network.warehouse_id.is_empty() {
            return Err(CliError::Validation("warehouse_id must not be empty".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = RunConfig::from_json(r#"{"schema_version": 1}"#, "c.json").unwrap();
        assert_eq!(cfg, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_json(r#"{"schema_version": 1, "simulaton": {}}"#, "c.json").unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
        let err = RunConfig::from_json(r#"{"schema_version": 1, "simulation": {"epsilon": 0.5, "eps": 1}}"#, "c.json")
            .unwrap_err();
        assert!(err.to_string().contains("unknown field"), "{err}");
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(RunConfig::from_json(r#"{"schema_version": 2}"#, "c.json").is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "simulation": {"epsilon": 1.5}}"#, "c.json").is_err());
        assert!(RunConfig::from_json(r#"{"schema_version": 1, "network": {"circuity": 0.5}}"#, "c.json").is_err());
    }
}
