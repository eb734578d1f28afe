//! Experiment configuration files.
//!
//! Configs are sectioned key/value TOML documents; every key is optional and
//! falls back to the defaults below.
//!
//! ```toml
//! [radar]
//! fc_hz = 77e9
//! n_chirps = 128
//! chirp_T_s = 4.4e-6
//! r_max_m = 120.0
//!
//! [catalog]
//! bandwidths_hz = [30e6, 1.5e9]
//! n_codes = 8
//! code_seed = 1
//! include_all_ones = true
//!
//! [policy]
//! kind = "sts"
//! d = 0.3
//! aspiration = "absolute"
//! prior_mean = 0.5
//!
//! [experiment]
//! horizon = 5000
//! runs = 20
//! seed = 2023
//! policies = ["random", "ts", "sts:0.1", "sts:0.3"]
//! ```
//!
//! Other sections: `[scene]`, `[sim]`, `[cfar]`, `[dbscan]`, `[perception]`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{Aspiration, PolicyConfig, PolicyKind};
use crate::cfar::CfarConfig;
use crate::perception::{DbscanSettings, Eps, ScoringConfig};
use crate::rd::{RdConfig, Window};
use crate::scene::SceneConfig;
use crate::waveform::{build_catalog, default_bandwidths, ChirpParams, WaveformCatalog};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadarSection {
    pub fc_hz: f64,
    pub n_chirps: usize,
    #[serde(rename = "chirp_T_s")]
    pub chirp_t_s: f64,
    pub r_max_m: f64,
}

impl Default for RadarSection {
    fn default() -> Self {
        let c = ChirpParams::default();
        Self {
            fc_hz: c.fc_hz,
            n_chirps: c.n_chirps,
            chirp_t_s: c.chirp_s,
            r_max_m: 120.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CatalogSection {
    pub bandwidths_hz: Vec<f64>,
    pub n_codes: usize,
    pub code_seed: u64,
    pub include_all_ones: bool,
}

impl Default for CatalogSection {
    fn default() -> Self {
        Self {
            bandwidths_hz: default_bandwidths(),
            n_codes: 8,
            code_seed: 1,
            include_all_ones: true,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub horizon: usize,
    pub runs: usize,
    pub seed: u64,
    /// Policy specs: `random`, `ts`, `sts:<d>` or `sts:<d>:<absolute|relative>`.
    /// Empty means the single `[policy]` section.
    pub policies: Vec<String>,
    /// Trailing moving-average window of the summary (frames).
    pub window: usize,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        Self {
            horizon: 5000,
            runs: 20,
            seed: 2023,
            policies: vec![
                "random".into(),
                "ts".into(),
                "sts:0.1".into(),
                "sts:0.3".into(),
            ],
            window: 500,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub radar: RadarSection,
    pub catalog: CatalogSection,
    pub scene: SceneConfig,
    pub sim: SimSection,
    pub cfar: CfarConfig,
    pub dbscan: DbscanSettings,
    pub perception: ScoringConfig,
    pub policy: PolicyConfig,
    pub experiment: ExperimentSection,
}

/// Parse a policy spec such as `sts:0.3:relative`, inheriting the prior
/// and aspiration from `base`.
pub fn parse_policy_spec(spec: &str, base: &PolicyConfig) -> Result<PolicyConfig> {
    let bad = |why: &str| Error::config("experiment.policies", format!("{spec:?}: {why}"));
    let mut parts = spec.trim().split(':');
    let kind = parts.next().unwrap_or_default();
    let mut cfg = *base;
    match kind {
        "random" => {
            cfg.kind = PolicyKind::Random;
            cfg.d = 0.0;
        }
        "ts" => {
            cfg.kind = PolicyKind::Ts;
            cfg.d = 0.0;
        }
        "sts" => {
            cfg.kind = PolicyKind::Sts;
            if let Some(d) = parts.next() {
                cfg.d = d.parse().map_err(|_| bad("distortion is not a number"))?;
            }
            if let Some(a) = parts.next() {
                cfg.aspiration = match a {
                    "absolute" => Aspiration::Absolute,
                    "relative" => Aspiration::Relative,
                    _ => return Err(bad("aspiration must be absolute or relative")),
                };
            }
        }
        _ => return Err(bad("unknown policy kind")),
    }
    if parts.next().is_some() {
        return Err(bad("too many fields"));
    }
    cfg.validate().map_err(|e| bad(&e.to_string()))?;
    Ok(cfg)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Parse a config after overriding one dotted key, e.g. `policy.d`.
    pub fn from_toml_with_override(text: &str, key: &str, value: toml::Value) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let (section, field) = key
            .split_once('.')
            .ok_or_else(|| Error::config(key, "expected <section>.<key>"))?;
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        match entry {
            toml::Value::Table(t) => {
                t.insert(field.to_string(), value);
            }
            _ => return Err(Error::config(section, "is not a section")),
        }
        let cfg: Self = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config is always serializable")
    }

    pub fn chirp(&self) -> Result<ChirpParams> {
        ChirpParams::new(self.radar.fc_hz, self.radar.chirp_t_s, self.radar.n_chirps)
            .map_err(|e| Error::config("radar", e.to_string()))
    }

    pub fn catalog(&self) -> Result<WaveformCatalog> {
        build_catalog(
            self.chirp()?,
            &self.catalog.bandwidths_hz,
            self.catalog.n_codes,
            self.catalog.code_seed,
            self.catalog.include_all_ones,
        )
        .map_err(|e| Error::config("catalog", e.to_string()))
    }

    pub fn rd(&self) -> RdConfig {
        RdConfig {
            r_max_m: self.radar.r_max_m,
            window: self.sim.window,
        }
    }

    pub fn policies(&self) -> Result<Vec<PolicyConfig>> {
        if self.experiment.policies.is_empty() {
            self.policy
                .validate()
                .map_err(|e| Error::config("policy", e.to_string()))?;
            return Ok(vec![self.policy]);
        }
        self.experiment
            .policies
            .iter()
            .map(|s| parse_policy_spec(s, &self.policy))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        self.chirp()?;
        if !(self.radar.r_max_m.is_finite() && self.radar.r_max_m > 0.0) {
            return Err(Error::config("radar.r_max_m", "must be > 0"));
        }
        self.catalog()?;
        self.scene
            .validate()
            .map_err(|e| Error::config("scene", e.to_string()))?;
        self.cfar
            .validate()
            .map_err(|e| Error::config("cfar", e.to_string()))?;
        for (key, eps) in [
            ("dbscan.eps_range_m", self.dbscan.eps_range_m),
            ("dbscan.eps_vel_mps", self.dbscan.eps_vel_mps),
        ] {
            if let Eps::Fixed(v) = eps {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::config(key, "must be > 0 or \"auto\""));
                }
            }
        }
        if self.dbscan.min_pts == 0 {
            return Err(Error::config("dbscan.min_pts", "must be >= 1"));
        }
        let p = &self.perception;
        for (key, v) in [
            ("perception.gate_range_m", p.gate_range_m),
            ("perception.gate_vel_mps", p.gate_vel_mps),
            ("perception.sigma_extent_m", p.sigma_extent_m),
            ("perception.sigma_vel_mps", p.sigma_vel_mps),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::config(key, "must be > 0"));
            }
        }
        if self.experiment.horizon == 0 {
            return Err(Error::config("experiment.horizon", "must be >= 1"));
        }
        if self.experiment.runs == 0 {
            return Err(Error::config("experiment.runs", "must be >= 1"));
        }
        if self.experiment.window == 0 {
            return Err(Error::config("experiment.window", "must be >= 1"));
        }
        self.policies()?;
        Ok(())
    }
}
