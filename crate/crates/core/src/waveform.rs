//! Chirp parameters, slow-time codes and the waveform catalog.
//!
//! Each arm of the bandit is a `(sweep bandwidth, slow-time code)` pair. The
//! catalog is bandwidth-major, code-minor: entry `i` has bandwidth
//! `bandwidths[i / n_codes]` and code `codes[i % n_codes]`. Satisficing
//! selection scans arms in index order, so this ordering is part of the
//! contract.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{seed, Error, Result, SPEED_OF_LIGHT};

/// Largest sweep bandwidth the catalog accepts (the 76-81 GHz band).
pub const MAX_BANDWIDTH_HZ: f64 = 5.0e9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChirpParams {
    pub fc_hz: f64,
    pub chirp_s: f64,
    pub n_chirps: usize,
}

impl ChirpParams {
    pub fn new(fc_hz: f64, chirp_s: f64, n_chirps: usize) -> Result<Self> {
        if !(fc_hz.is_finite() && fc_hz > 0.0) {
            return Err(Error::invalid(format!("carrier frequency must be > 0, got {fc_hz}")));
        }
        if !(chirp_s.is_finite() && chirp_s > 0.0) {
            return Err(Error::invalid(format!("chirp duration must be > 0, got {chirp_s}")));
        }
        if n_chirps == 0 {
            return Err(Error::invalid("chirps per frame must be >= 1"));
        }
        Ok(Self {
            fc_hz,
            chirp_s,
            n_chirps,
        })
    }

    /// Transmit power, normalized.
    pub fn tx_power(&self) -> f64 {
        1.0
    }

    /// Doppler shift of a scatterer moving at `vel_mps`.
    pub fn doppler_hz(&self, vel_mps: f64) -> f64 {
        2.0 * vel_mps * self.fc_hz / SPEED_OF_LIGHT
    }

    /// Velocity spanned by one Doppler bin of an unpadded `n_chirps`-point DFT.
    pub fn velocity_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.fc_hz * self.n_chirps as f64 * self.chirp_s)
    }
}

impl Default for ChirpParams {
    /// 77 GHz carrier, 4.4 us chirps, 128 chirps per frame.
    fn default() -> Self {
        Self {
            fc_hz: 77.0e9,
            chirp_s: 4.4e-6,
            n_chirps: 128,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeKind {
    AllOnes,
    SeededRandom,
}

/// A length-N binary slow-time code, one `±1` amplitude per chirp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlowTimeCode {
    id: usize,
    symbols: Vec<i8>,
}

impl SlowTimeCode {
    pub fn from_symbols(id: usize, symbols: Vec<i8>) -> Result<Self> {
        if symbols.is_empty() {
            return Err(Error::invalid("slow-time code must have at least one symbol"));
        }
        if let Some(bad) = symbols.iter().find(|&&s| s != 1 && s != -1) {
            return Err(Error::invalid(format!("slow-time code symbol {bad} is not ±1")));
        }
        Ok(Self { id, symbols })
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn with_id(mut self, id: usize) -> Self {
        self.id = id;
        self
    }

    pub fn symbols(&self) -> &[i8] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn is_all_ones(&self) -> bool {
        self.symbols.iter().all(|&s| s == 1)
    }

    pub fn symbol(&self, k: usize) -> f64 {
        f64::from(self.symbols[k])
    }
}

/// Generate a length-`n` code. `seed` is ignored for [`CodeKind::AllOnes`].
pub fn generate_code(n: usize, kind: CodeKind, seed: u64) -> Result<SlowTimeCode> {
    if n == 0 {
        return Err(Error::invalid("code length must be >= 1"));
    }
    let symbols = match kind {
        CodeKind::AllOnes => vec![1; n],
        CodeKind::SeededRandom => {
            let mut rng = seed::stream(seed, "code-symbols", &[]);
            (0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect()
        }
    };
    Ok(SlowTimeCode { id: 0, symbols })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waveform {
    pub index: usize,
    pub bandwidth_hz: f64,
    pub code: SlowTimeCode,
}

impl Waveform {
    /// Range spanned by one range bin, `c / 2B`.
    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveformCatalog {
    chirp: ChirpParams,
    bandwidths: Vec<f64>,
    codes: Vec<SlowTimeCode>,
    entries: Vec<Waveform>,
}

impl WaveformCatalog {
    pub fn chirp(&self) -> &ChirpParams {
        &self.chirp
    }

    pub fn bandwidths(&self) -> &[f64] {
        &self.bandwidths
    }

    pub fn codes(&self) -> &[SlowTimeCode] {
        &self.codes
    }

    pub fn entries(&self) -> &[Waveform] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Waveform> {
        self.entries.get(index)
    }
}

/// `count` logarithmically spaced bandwidths from `lo_hz` to `hi_hz` inclusive.
pub fn log_spaced_bandwidths(lo_hz: f64, hi_hz: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![lo_hz],
        _ => {
            let ratio = (hi_hz / lo_hz).ln();
            (0..count)
                .map(|i| {
                    if i == count - 1 {
                        hi_hz
                    } else {
                        lo_hz * (ratio * i as f64 / (count - 1) as f64).exp()
                    }
                })
                .collect()
        }
    }
}

/// Eight log-spaced bandwidths between 30 MHz and 1.5 GHz.
pub fn default_bandwidths() -> Vec<f64> {
    log_spaced_bandwidths(30.0e6, 1.5e9, 8)
}

/// Build the ordered `bandwidths × codes` catalog.
///
/// Bandwidths are sorted ascending; duplicates are rejected. With
/// `include_all_ones`, code 0 is the all-ones code and codes `1..n_codes`
/// are random codes seeded from `code_seed` and the code id.
pub fn build_catalog(
    chirp: ChirpParams,
    bandwidths: &[f64],
    n_codes: usize,
    code_seed: u64,
    include_all_ones: bool,
) -> Result<WaveformCatalog> {
    if bandwidths.is_empty() {
        return Err(Error::invalid("bandwidth list is empty"));
    }
    if n_codes == 0 {
        return Err(Error::invalid("catalog needs at least one code"));
    }
    for &b in bandwidths {
        if !(b.is_finite() && b > 0.0 && b <= MAX_BANDWIDTH_HZ) {
            return Err(Error::invalid(format!(
                "bandwidth {b} Hz outside (0, {MAX_BANDWIDTH_HZ}]"
            )));
        }
    }
    let mut sorted = bandwidths.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("duplicate bandwidth in catalog"));
    }

    let codes = (0..n_codes)
        .map(|id| {
            let code = if id == 0 && include_all_ones {
                generate_code(chirp.n_chirps, CodeKind::AllOnes, 0)?
            } else {
                let s = seed::derive_seed(code_seed, "code", &[id as u64]);
                generate_code(chirp.n_chirps, CodeKind::SeededRandom, s)?
            };
            Ok(code.with_id(id))
        })
        .collect::<Result<Vec<_>>>()?;

    let entries = sorted
        .iter()
        .flat_map(|&b| codes.iter().map(move |c| (b, c)))
        .enumerate()
        .map(|(index, (bandwidth_hz, code))| Waveform {
            index,
            bandwidth_hz,
            code: code.clone(),
        })
        .collect();

    Ok(WaveformCatalog {
        chirp,
        bandwidths: sorted,
        codes,
        entries,
    })
}
