//! Scenario configuration files.
//!
//! A configuration names a model source (an explicit network or a radio
//! scenario to calibrate) and an experiment block. Files are TOML; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::game::GameParams;
use crate::model::{BaseStationSet, CapacityModel, SliceSpec, SojournDistribution, TrafficModel};
use crate::radio::RadioScenario;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    /// Required by the stochastic commands unless given on the command line.
    pub seed: Option<u64>,
    pub network: Option<NetworkConfig>,
    pub radio: Option<RadioScenario>,
    #[serde(default)]
    pub experiment: ExperimentConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub stations: usize,
    pub slices: Vec<SliceConfig>,
}

/// One slice of an explicit network. Routing defaults to no handoffs and
/// capacities to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SliceConfig {
    pub share: f64,
    pub gamma: Vec<f64>,
    pub mu: Vec<f64>,
    pub routing: Option<Vec<Vec<f64>>>,
    pub delta: Option<Vec<f64>>,
    pub target: Option<f64>,
    #[serde(default)]
    pub capacity: CapacityModel,
    #[serde(default)]
    pub sojourn: SojournDistribution,
}

/// Heavy-load geometry of one slice: norms of its relative load and of the
/// aggregate, and the angle between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryRow {
    pub relative_norm: f64,
    pub aggregate_norm: f64,
    pub angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    /// Sweep points. Per-slice total load for `analyze` and `simulate`,
    /// arrival-rate multiplier for `game`, users per slice for `radio`.
    pub grid: Vec<f64>,
    pub reps: usize,
    /// Standard errors allowed between simulation and theory.
    pub tol: f64,
    /// BTD targets: absolute for `dimension`, normalized for `game`.
    pub targets: Option<Vec<f64>>,
    /// Per-sector arrival rate of a calibrated radio model.
    pub arrival_rate: f64,
    pub game: GameParams,
    /// Explicit coupling matrix for `dimension`, bypassing the model.
    pub coupling: Option<Vec<Vec<f64>>>,
    /// Extra heavy-load gain rows for `analyze`.
    pub geometry: Vec<GeometryRow>,
    /// Whether `radio` writes the mobility trace.
    pub trace: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            grid: Vec::new(),
            reps: 10_000,
            tol: 3.0,
            targets: None,
            arrival_rate: 1.0,
            game: GameParams::default(),
            coupling: None,
            geometry: Vec::new(),
            trace: false,
        }
    }
}

impl SliceConfig {
    pub fn to_spec(&self) -> SliceSpec {
        let b = self.gamma.len();
        let mut spec = SliceSpec::without_routing(self.share, self.gamma.clone(), self.mu.clone())
            .with_routing(self.routing.clone().unwrap_or_else(|| vec![vec![0.0; b]; b]))
            .with_delta(self.delta.clone().unwrap_or_else(|| vec![1.0; b]))
            .with_capacity(self.capacity)
            .with_sojourn(self.sojourn);
        spec.target = self.target;
        spec
    }

    pub fn from_spec(spec: &SliceSpec) -> Self {
        Self {
            share: spec.share,
            gamma: spec.gamma.clone(),
            mu: spec.mu.clone(),
            routing: Some(spec.routing.clone()),
            delta: Some(spec.delta.clone()),
            target: spec.target,
            capacity: spec.capacity,
            sojourn: spec.sojourn,
        }
    }
}

impl NetworkConfig {
    pub fn to_model(&self) -> Result<TrafficModel> {
        TrafficModel::new(BaseStationSet::new(self.stations)?, self.slices.iter().map(SliceConfig::to_spec).collect())
    }

    pub fn from_model(model: &TrafficModel) -> Self {
        Self { stations: model.num_stations(), slices: model.slices().iter().map(SliceConfig::from_spec).collect() }
    }
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.network.is_some() && self.radio.is_some() {
            return Err(Error::Config("give either [network] or [radio], not both".into()));
        }
        if let Some(net) = &self.network {
            net.to_model()?;
        }
        if let Some(radio) = &self.radio {
            radio.validate()?;
        }
        let e = &self.experiment;
        if e.reps == 0 || !(e.tol > 0.0) || !(e.arrival_rate > 0.0) {
            return Err(Error::Config("experiment needs reps >= 1, tol > 0 and arrival_rate > 0".into()));
        }
        if e.grid.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("grid values must be finite and nonnegative".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 prefix of the canonical JSON form. Any change to the
    /// effective configuration changes it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("configs serialize");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| Error::Config(format!("scenario {} needs a seed (set `seed` or pass --seed)", self.name)))
    }
}
