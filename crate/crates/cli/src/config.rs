//! Optional TOML configuration. Every field has a default; flags override.

use std::path::Path;

use anyhow::{bail, Context};
use hapto_core::audio::{DEFAULT_DECAY_TAU, DEFAULT_G0};
use hapto_core::lod::DEFAULT_SIGMA_PRE;
use hapto_core::{EngineConfig, FilterParams, Material};
use hapto_session::Framing;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub material: Material,
    pub engine: EngineConfig,
    pub filter: FilterConfig,
    pub pyramid: PyramidConfig,
    pub audio: AudioConfig,
    pub workspace: WorkspaceConfig,
    pub serve: ServeConfig,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    /// Unset values fall back to 3 lattice units and a tenth of the data range.
    pub sigma_s: Option<f64>,
    pub sigma_r: Option<f64>,
    pub window_radius: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PyramidConfig {
    pub levels: usize,
    pub sigma: f64,
}

impl Default for PyramidConfig {
    fn default() -> Self {
        Self {
            levels: 4,
            sigma: DEFAULT_SIGMA_PRE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub g0: f64,
    pub decay_tau: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        Self {
            g0: DEFAULT_G0,
            decay_tau: DEFAULT_DECAY_TAU,
        }
    }
}

/// Presentation scaling of the unit workspace cube to device space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkspaceConfig {
    pub side_inches: f64,
}

impl Default for WorkspaceConfig {
    fn default() -> Self {
        Self { side_inches: 4.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub framing: Framing,
    pub tick_rate: f64,
    pub publish_rate: f64,
    pub hip_lead: f64,
    pub max_tile_side: usize,
}

impl Default for ServeConfig {
    fn default() -> Self {
        let s = hapto_session::SessionConfig::default();
        Self {
            host: "127.0.0.1".into(),
            port: 7878,
            framing: Framing::default(),
            tick_rate: s.tick_rate,
            publish_rate: s.publish_rate,
            hip_lead: s.hip_lead,
            max_tile_side: s.max_tile_side,
        }
    }
}

impl Config {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: Config = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.material.validate()?;
        if self.pyramid.levels == 0 {
            bail!("pyramid.levels must be >= 1");
        }
        if !(self.pyramid.sigma.is_finite() && self.pyramid.sigma >= 0.0) {
            bail!("pyramid.sigma must be >= 0");
        }
        if !(self.audio.g0.is_finite() && self.audio.g0 > 0.0) {
            bail!("audio.g0 must be > 0");
        }
        if self.audio.decay_tau.is_nan() || self.audio.decay_tau <= 0.0 {
            bail!("audio.decay_tau must be > 0");
        }
        if !(self.workspace.side_inches.is_finite() && self.workspace.side_inches > 0.0) {
            bail!("workspace.side_inches must be > 0");
        }
        Ok(())
    }

    /// Explicit filter parameters, if any were configured.
    pub fn filter_params(&self) -> anyhow::Result<Option<FilterParams>> {
        let f = &self.filter;
        Ok(match (f.sigma_s, f.sigma_r) {
            (None, None) if f.window_radius.is_none() => None,
            (s, r) => {
                let s = s.unwrap_or(3.0);
                let r = r.context("filter.sigma_r is required when other filter fields are set")?;
                Some(match f.window_radius {
                    Some(w) => FilterParams::with_radius(s, r, w)?,
                    None => FilterParams::new(s, r)?,
                })
            }
        })
    }
}
