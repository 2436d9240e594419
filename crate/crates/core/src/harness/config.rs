//! JSON experiment configuration. The schema is documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flux;
use crate::rates::{builtin, BuiltinModel, ModelParams, RateSpec};
use crate::simulator::{Dynamics, Guard, DEFAULT_GUARD_FACTOR};

/// Ring size: a fixed number of sites or the smallest size the guard allows.
/// Serialized as `"auto"` or an integer.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum RingSize {
    #[default]
    Auto,
    Fixed(usize),
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum RingSizeRepr {
    Fixed(usize),
    Word(String),
}

impl Serialize for RingSize {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RingSize::Auto => RingSizeRepr::Word("auto".into()).serialize(s),
            RingSize::Fixed(l) => RingSizeRepr::Fixed(*l).serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for RingSize {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match RingSizeRepr::deserialize(d)? {
            RingSizeRepr::Fixed(l) => Ok(RingSize::Fixed(l)),
            RingSizeRepr::Word(w) if w == "auto" => Ok(RingSize::Auto),
            RingSizeRepr::Word(w) => Err(serde::de::Error::custom(format!(
                "L must be \"auto\" or an integer, got \"{w}\""
            ))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputPaths {
    #[serde(default)]
    pub csv: Option<PathBuf>,
    #[serde(default)]
    pub summary: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub id: String,
    pub model: String,
    #[serde(default)]
    pub params: ModelParams,
    /// Bound on `|ω_i|` for infinite state spaces (required for unbounded rates).
    #[serde(default)]
    pub occupancy_cap: Option<i64>,
    pub rho: f64,
    /// Observation speed for off-characteristic height statistics.
    #[serde(default, rename = "V_override", alias = "v_override")]
    pub v_override: Option<f64>,
    /// Lower density of the two-density coupling (microconcavity runs).
    #[serde(default)]
    pub lambda: Option<f64>,
    pub t_list: Vec<f64>,
    #[serde(default, rename = "L", alias = "l")]
    pub ring: RingSize,
    pub replicates: usize,
    pub master_seed: u64,
    #[serde(default = "default_guard")]
    pub guard_factor: f64,
    #[serde(default = "default_moments")]
    pub moments: Vec<u32>,
    /// Per-test significance level.
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default)]
    pub output: OutputPaths,
}

fn default_id() -> String {
    "experiment".into()
}

fn default_guard() -> f64 {
    DEFAULT_GUARD_FACTOR
}

fn default_moments() -> Vec<u32> {
    vec![1, 2]
}

fn default_alpha() -> f64 {
    0.001
}

impl ExperimentConfig {
    /// A configuration with defaults for everything but the essentials.
    pub fn new(model: &str, rho: f64, t_list: Vec<f64>, replicates: usize, master_seed: u64) -> Self {
        Self {
            id: default_id(),
            model: model.into(),
            params: ModelParams::default(),
            occupancy_cap: None,
            rho,
            v_override: None,
            lambda: None,
            t_list,
            ring: RingSize::Auto,
            replicates,
            master_seed,
            guard_factor: DEFAULT_GUARD_FACTOR,
            moments: default_moments(),
            alpha: default_alpha(),
            output: OutputPaths::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(format!("malformed config: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Structural checks that do not need the rate model.
    pub fn check(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config(format!("replicates must be at least 2, got {}", self.replicates)));
        }
        if self.t_list.is_empty() {
            return Err(Error::Config("t_list is empty".into()));
        }
        if self.t_list.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Config("t_list entries must be finite and nonnegative".into()));
        }
        if self.t_list.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("t_list must be strictly increasing".into()));
        }
        if !(self.guard_factor > 0.0) {
            return Err(Error::Config("guard_factor must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config("alpha must lie in (0, 1)".into()));
        }
        if self.moments.is_empty() || self.moments.contains(&0) {
            return Err(Error::Config("moments must be a nonempty list of positive orders".into()));
        }
        if let RingSize::Fixed(l) = self.ring {
            if l < 3 {
                return Err(Error::Config(format!("L must be at least 3, got {l}")));
            }
        }
        self.model.parse::<BuiltinModel>().map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn spec(&self) -> Result<RateSpec> {
        builtin(self.model.parse()?, &self.params)
    }

    pub fn t_max(&self) -> f64 {
        self.t_list.last().copied().unwrap_or(0.0)
    }

    /// Largest `|⌊V t⌋|` over the time grid for observation speed `v`.
    pub fn max_index(&self, v: f64) -> i64 {
        self.t_list.iter().map(|t| (v * t).floor().abs() as i64).max().unwrap_or(0)
    }

    /// Rates tabulated for the simulator with this config's guard.
    pub fn dynamics(&self, spec: &RateSpec, max_index: i64) -> Result<Dynamics> {
        Ok(Dynamics::new(spec, self.occupancy_cap)?.with_guard(Some(Guard {
            factor: self.guard_factor,
            max_index,
        })))
    }

    /// The ring size to simulate on; `auto` is the smallest size the guard accepts.
    pub fn ring_size(&self, dynamics: &Dynamics) -> Result<usize> {
        let guard = dynamics.guard.unwrap_or_default();
        let required = guard.required(dynamics.table.bound(), self.t_max()).max(8);
        match self.ring {
            RingSize::Auto => Ok(required),
            RingSize::Fixed(l) => {
                guard.check(l, dynamics.table.bound(), self.t_max())?;
                Ok(l)
            }
        }
    }

    /// `V^ρ` of the configured model.
    pub fn characteristic_speed(&self, spec: &RateSpec) -> Result<f64> {
        flux::speed(spec, self.rho)
    }
}
