//! JSON run configuration mirroring the default parameter table.
//!
//! ```json
//! {
//!   "model":    { "L": 1, "U": 9, "C": 3, "x0": 0.055 },
//!   "market":   { "P0": 100, "r0": 0.01 },
//!   "dynamics": { "mu": 0, "sigma": 0.02 },
//!   "contract": { "K": 100, "T": 0.25, "r_f": 0.0209 },
//!   "mc":       { "n": 70000, "seed": 7, "bump": 0.0001 }
//! }
//! ```
//!
//! Any subset may be given; missing keys keep their defaults, unknown keys are
//! rejected. The curvature has no default.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mc::{McConfig, DEFAULT_BUMP, DEFAULT_PATHS, DEFAULT_SEED};
use crate::model::{DurationParams, MarketState, ModelSpec, OptionContract, RateDynamics};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    #[serde(rename = "L")]
    pub lower: f64,
    #[serde(rename = "U")]
    pub upper: f64,
    #[serde(rename = "C")]
    pub curvature: Option<f64>,
    pub x0: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            lower: 1.0,
            upper: 9.0,
            curvature: None,
            x0: 0.055,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketSection {
    #[serde(rename = "P0")]
    pub spot_price: f64,
    pub r0: f64,
}

impl Default for MarketSection {
    fn default() -> Self {
        Self {
            spot_price: 100.0,
            r0: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DynamicsSection {
    pub mu: f64,
    pub sigma: f64,
}

impl Default for DynamicsSection {
    fn default() -> Self {
        Self {
            mu: 0.0,
            sigma: 0.02,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractSection {
    #[serde(rename = "K")]
    pub strike: f64,
    #[serde(rename = "T")]
    pub expiry: f64,
    pub r_f: f64,
}

impl Default for ContractSection {
    fn default() -> Self {
        Self {
            strike: 100.0,
            expiry: 90.0 / 360.0,
            r_f: 0.0209,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct McSection {
    pub n: usize,
    pub seed: Option<u64>,
    pub bump: f64,
}

impl Default for McSection {
    fn default() -> Self {
        Self {
            n: DEFAULT_PATHS,
            seed: None,
            bump: DEFAULT_BUMP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub market: MarketSection,
    pub dynamics: DynamicsSection,
    pub contract: ContractSection,
    pub mc: McSection,
}

/// Keys accepted by [`RunConfig::set`].
pub const OVERRIDE_KEYS: [&str; 14] = [
    "L", "U", "C", "x0", "P0", "r0", "mu", "sigma", "K", "T", "r_f", "n", "seed", "bump",
];

impl RunConfig {
    /// Parses a config; a top-level `schema_version` (as emitted by
    /// `defaults`) is accepted and ignored.
    pub fn from_json(text: &str) -> Result<Self> {
        let mut value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        if let Some(obj) = value.as_object_mut() {
            obj.remove("schema_version");
        }
        serde_json::from_value(value).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    /// Applies a `key=value` override.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), value.trim())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let num = || -> Result<f64> {
            value
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("`{key}` expects a number, got `{value}`")))
        };
        let int = || -> Result<u64> {
            value.parse::<u64>().map_err(|_| {
                Error::Config(format!(
                    "`{key}` expects an unsigned integer, got `{value}`"
                ))
            })
        };
        match key {
            "L" => self.model.lower = num()?,
            "U" => self.model.upper = num()?,
            "C" => self.model.curvature = Some(num()?),
            "x0" => self.model.x0 = num()?,
            "P0" => self.market.spot_price = num()?,
            "r0" => self.market.r0 = num()?,
            "mu" => self.dynamics.mu = num()?,
            "sigma" => self.dynamics.sigma = num()?,
            "K" => self.contract.strike = num()?,
            "T" => self.contract.expiry = num()?,
            "r_f" => self.contract.r_f = num()?,
            "n" => self.mc.n = int()? as usize,
            "seed" => self.mc.seed = Some(int()?),
            "bump" => self.mc.bump = num()?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown parameter `{key}` (expected one of {})",
                    OVERRIDE_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Checks every invariant that does not need the curvature.
    pub fn validate(&self) -> Result<()> {
        if let Some(c) = self.model.curvature {
            DurationParams::new(self.model.lower, self.model.upper, c, self.model.x0)?;
        } else {
            DurationParams::new(self.model.lower, self.model.upper, 1.0, self.model.x0)?;
        }
        self.market()?;
        self.dynamics()?;
        self.contract()?;
        self.mc_config(DEFAULT_SEED).validate()
    }

    pub fn curvature(&self) -> Result<f64> {
        self.model.curvature.ok_or_else(|| {
            Error::invalid(
                "C",
                "curvature is not set; give it in the config or with --set C=<value>",
            )
        })
    }

    pub fn market(&self) -> Result<MarketState<f64>> {
        MarketState::new(self.market.spot_price, self.market.r0)
    }

    pub fn model_spec(&self) -> Result<ModelSpec<f64>> {
        let d = DurationParams::new(
            self.model.lower,
            self.model.upper,
            self.curvature()?,
            self.model.x0,
        )?;
        ModelSpec::new(d, self.market()?)
    }

    pub fn dynamics(&self) -> Result<RateDynamics<f64>> {
        RateDynamics::new(self.dynamics.mu, self.dynamics.sigma)
    }

    pub fn contract(&self) -> Result<OptionContract<f64>> {
        OptionContract::new(
            self.contract.strike,
            self.contract.expiry,
            self.contract.r_f,
        )
    }

    /// Monte Carlo settings with `seed` used when the config carries none.
    pub fn mc_config(&self, fallback_seed: u64) -> McConfig {
        McConfig {
            n: self.mc.n,
            seed: self.mc.seed.unwrap_or(fallback_seed),
            bump: self.mc.bump,
            workers: None,
        }
    }
}

/// Seed precedence: explicit flag, then config (including `--set seed=`),
/// then the `MTGOPT_SEED` value, then [`DEFAULT_SEED`].
pub fn resolve_seed(flag: Option<u64>, config: &RunConfig, env: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config.mc.seed) {
        return Ok(s);
    }
    match env {
        Some(v) => v.trim().parse::<u64>().map_err(|_| {
            Error::Config(format!(
                "MTGOPT_SEED must be an unsigned integer, got `{v}`"
            ))
        }),
        None => Ok(DEFAULT_SEED),
    }
}
