//! Ground-truth radar scenes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::waveform::{generate_code, CodeKind, SlowTimeCode};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetClass {
    pub name: String,
    /// Nominal along-range length (m).
    pub extent_m: f64,
    /// Nominal intra-target radial velocity spread (m/s).
    pub vel_spread_mps: f64,
}

impl TargetClass {
    pub fn new(name: impl Into<String>, extent_m: f64, vel_spread_mps: f64) -> Result<Self> {
        if !(extent_m.is_finite() && extent_m > 0.0) {
            return Err(Error::invalid(format!("class extent must be > 0, got {extent_m}")));
        }
        if !(vel_spread_mps.is_finite() && vel_spread_mps >= 0.0) {
            return Err(Error::invalid(format!(
                "class velocity spread must be >= 0, got {vel_spread_mps}"
            )));
        }
        Ok(Self {
            name: name.into(),
            extent_m,
            vel_spread_mps,
        })
    }
}

/// Pedestrian, car and truck templates.
pub fn default_classes() -> Vec<TargetClass> {
    vec![
        TargetClass {
            name: "pedestrian".into(),
            extent_m: 0.8,
            vel_spread_mps: 1.0,
        },
        TargetClass {
            name: "car".into(),
            extent_m: 4.0,
            vel_spread_mps: 0.5,
        },
        TargetClass {
            name: "truck".into(),
            extent_m: 10.0,
            vel_spread_mps: 0.5,
        },
    ]
}

/// A point reflector attached to a target, relative to the target center.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scatterer {
    pub range_offset_m: f64,
    pub vel_offset_mps: f64,
    pub rel_amp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub range_m: f64,
    pub vel_mps: f64,
    pub amp: f64,
    pub class: TargetClass,
    pub scatterers: Vec<Scatterer>,
}

impl Target {
    /// A single-reflector target at its own center.
    pub fn point(range_m: f64, vel_mps: f64, amp: f64, class: TargetClass) -> Self {
        Self {
            range_m,
            vel_mps,
            amp,
            class,
            scatterers: vec![Scatterer {
                range_offset_m: 0.0,
                vel_offset_mps: 0.0,
                rel_amp: 1.0,
            }],
        }
    }
}

/// Another radar's signal as seen by the ego receiver, at its apparent
/// delay-Doppler position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interferer {
    pub range_m: f64,
    pub vel_mps: f64,
    pub amp: f64,
    pub code: SlowTimeCode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub targets: Vec<Target>,
    pub interferers: Vec<Interferer>,
    /// Receiver noise power spectral density N0 (linear, per Hz).
    pub noise_psd: f64,
}

impl Scene {
    pub fn empty(noise_psd: f64) -> Self {
        Self {
            targets: Vec::new(),
            interferers: Vec::new(),
            noise_psd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InterfererCode {
    AllOnes,
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_targets: usize,
    pub n_interferers: usize,
    pub r_bounds_m: [f64; 2],
    pub v_bounds_mps: [f64; 2],
    pub target_amp: f64,
    pub interferer_amp: f64,
    pub classes: Vec<TargetClass>,
    pub noise_psd: f64,
    pub scatterers_per_target: usize,
    pub interferer_code: InterfererCode,
    pub redraw_every_frame: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_targets: 3,
            n_interferers: 1,
            r_bounds_m: [10.0, 110.0],
            v_bounds_mps: [-25.0, 25.0],
            target_amp: 1.0,
            interferer_amp: 10.0,
            classes: default_classes(),
            noise_psd: DEFAULT_NOISE_PSD,
            scatterers_per_target: 5,
            interferer_code: InterfererCode::AllOnes,
            redraw_every_frame: false,
        }
    }
}

/// Default receiver noise PSD. With 128 chirps of 4.4 us, a unit-amplitude
/// scatterer sits 30 dB above the per-cell noise after the 2D DFT.
pub const DEFAULT_NOISE_PSD: f64 = 128.0 * 4.4e-6 / 1000.0;

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let [r_lo, r_hi] = self.r_bounds_m;
        if !(r_lo.is_finite() && r_hi.is_finite() && r_lo > 0.0 && r_lo <= r_hi) {
            return Err(Error::invalid(format!(
                "range bounds [{r_lo}, {r_hi}] must satisfy 0 < lo <= hi"
            )));
        }
        let [v_lo, v_hi] = self.v_bounds_mps;
        if !(v_lo.is_finite() && v_hi.is_finite() && v_lo <= v_hi) {
            return Err(Error::invalid(format!(
                "velocity bounds [{v_lo}, {v_hi}] must satisfy lo <= hi"
            )));
        }
        if !(self.target_amp.is_finite() && self.target_amp > 0.0) {
            return Err(Error::invalid("target amplitude must be > 0"));
        }
        if self.n_interferers > 0 && !(self.interferer_amp > self.target_amp) {
            return Err(Error::invalid(format!(
                "interferer amplitude {} must exceed target amplitude {}",
                self.interferer_amp, self.target_amp
            )));
        }
        if !(self.noise_psd.is_finite() && self.noise_psd > 0.0) {
            return Err(Error::invalid("noise PSD must be > 0"));
        }
        if self.n_targets > 0 && self.classes.is_empty() {
            return Err(Error::invalid("scene needs at least one target class"));
        }
        for c in &self.classes {
            TargetClass::new(c.name.clone(), c.extent_m, c.vel_spread_mps)?;
        }
        if self.scatterers_per_target == 0 {
            return Err(Error::invalid("scatterers per target must be >= 1"));
        }
        Ok(())
    }
}

/// `k` reflectors evenly spread over the class extent and velocity spread.
pub fn class_scatterers(class: &TargetClass, k: usize) -> Vec<Scatterer> {
    (0..k)
        .map(|i| {
            let u = if k == 1 {
                0.0
            } else {
                i as f64 / (k - 1) as f64 - 0.5
            };
            Scatterer {
                range_offset_m: u * class.extent_m,
                vel_offset_mps: u * class.vel_spread_mps,
                rel_amp: 1.0,
            }
        })
        .collect()
}

/// Draw a scene. Deterministic in `seed`.
pub fn sample_scene(cfg: &SceneConfig, chirp_len: usize, seed: u64) -> Result<Scene> {
    cfg.validate()?;
    let mut rng = seed::stream(seed, "scene-draw", &[]);
    let [r_lo, r_hi] = cfg.r_bounds_m;
    let [v_lo, v_hi] = cfg.v_bounds_mps;
    let uniform = |lo: f64, hi: f64, rng: &mut crate::SimRng| {
        if lo == hi {
            lo
        } else {
            rng.random_range(lo..hi)
        }
    };

    let targets = (0..cfg.n_targets)
        .map(|_| {
            let range_m = uniform(r_lo, r_hi, &mut rng);
            let vel_mps = uniform(v_lo, v_hi, &mut rng);
            let class = cfg.classes[rng.random_range(0..cfg.classes.len())].clone();
            Target {
                range_m,
                vel_mps,
                amp: cfg.target_amp,
                scatterers: class_scatterers(&class, cfg.scatterers_per_target),
                class,
            }
        })
        .collect();

    let interferers = (0..cfg.n_interferers)
        .map(|_| {
            let range_m = uniform(r_lo, r_hi, &mut rng);
            let vel_mps = uniform(v_lo, v_hi, &mut rng);
            let code = match cfg.interferer_code {
                InterfererCode::AllOnes => generate_code(chirp_len, CodeKind::AllOnes, 0)?,
                InterfererCode::Random => {
                    generate_code(chirp_len, CodeKind::SeededRandom, rng.random())?
                }
            };
            Ok(Interferer {
                range_m,
                vel_mps,
                amp: cfg.interferer_amp,
                code,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(Scene {
        targets,
        interferers,
        noise_psd: cfg.noise_psd,
    })
}
