//! Beat-signal synthesis and range-Doppler processing.
//!
//! After dechirping and slow-time decoding, a scatterer at range `R` with
//! radial velocity `v` contributes to fast-time sample `n` of chirp `k`
//!
//! ```text
//! α · m_k · exp(j2π[f_b·n/f_s + f_d·k·T] + jφ)
//! f_b = 2RB/(cT),  f_d = 2v·f_c/c,  φ = −4π·f_c·R/c,  f_s = N_r/T
//! ```
//!
//! where `m_k = A_k·A_k = 1` for the ego radar's own echoes and
//! `m_k = A_k·A'_k` for an interferer transmitting code `A'`. Because the
//! fast-time sampling rate is tied to the bandwidth, `f_b·n/f_s` reduces to
//! `(2RB/c)·n/N_r`: the beat tone lands on range bin `2RB/c`. Scatterers
//! beyond the unambiguous range alias circularly.
//!
//! The map is the unnormalized 2D DFT (fast time → range, chirp index →
//! Doppler) with the Doppler axis shifted so that column `N/2` is zero
//! velocity.

use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::scene::Scene;
use crate::waveform::{ChirpParams, Waveform};
use crate::{Complex, Error, Result, SPEED_OF_LIGHT};

const MIN_FAST_TIME_SAMPLES: usize = 32;

/// Fast-time samples per chirp: the next power of two covering `r_max`.
pub fn fast_time_samples(bandwidth_hz: f64, r_max_m: f64) -> usize {
    let needed = (2.0 * r_max_m * bandwidth_hz / SPEED_OF_LIGHT - 1e-9).ceil();
    let needed = if needed.is_finite() && needed > 0.0 {
        needed as usize
    } else {
        0
    };
    needed.max(MIN_FAST_TIME_SAMPLES).next_power_of_two()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    None,
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::None => vec![1.0; n],
            Window::Hann => (0..n)
                .map(|i| {
                    0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RdConfig {
    pub r_max_m: f64,
    pub window: Window,
}

impl Default for RdConfig {
    fn default() -> Self {
        Self {
            r_max_m: 120.0,
            window: Window::None,
        }
    }
}

/// Decoded, dechirped samples of one frame, chirp-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatFrame {
    pub n_fast: usize,
    pub n_chirps: usize,
    pub fs_hz: f64,
    pub samples: Vec<Complex>,
}

impl BeatFrame {
    pub fn at(&self, chirp: usize, n: usize) -> Complex {
        self.samples[chirp * self.n_fast + n]
    }

    pub fn energy(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MapMeta {
    pub n_range: usize,
    pub n_doppler: usize,
    pub range_bin_m: f64,
    pub vel_bin_mps: f64,
    pub waveform_index: usize,
    pub bandwidth_hz: f64,
}

impl MapMeta {
    pub fn for_waveform(waveform: &Waveform, chirp: &ChirpParams, r_max_m: f64) -> Self {
        Self {
            n_range: fast_time_samples(waveform.bandwidth_hz, r_max_m),
            n_doppler: chirp.n_chirps,
            range_bin_m: waveform.range_resolution(),
            vel_bin_mps: chirp.velocity_resolution(),
            waveform_index: waveform.index,
            bandwidth_hz: waveform.bandwidth_hz,
        }
    }

    /// Signed Doppler bin offset of column `col` (zero velocity at `n_doppler / 2`).
    pub fn doppler_offset(&self, col: usize) -> i64 {
        col as i64 - (self.n_doppler / 2) as i64
    }

    pub fn column_of_offset(&self, offset: i64) -> usize {
        (offset + (self.n_doppler / 2) as i64).rem_euclid(self.n_doppler as i64) as usize
    }

    pub fn range_of_bin(&self, row: usize) -> f64 {
        row as f64 * self.range_bin_m
    }

    pub fn velocity_of_column(&self, col: usize) -> f64 {
        self.doppler_offset(col) as f64 * self.vel_bin_mps
    }
}

/// Complex range-Doppler map, range-major (`data[row * n_doppler + col]`).
#[derive(Debug, Clone, PartialEq)]
pub struct RDMap {
    pub data: Vec<Complex>,
    pub meta: MapMeta,
}

impl RDMap {
    pub fn zeros(meta: MapMeta) -> Self {
        Self {
            data: vec![Complex::new(0.0, 0.0); meta.n_range * meta.n_doppler],
            meta,
        }
    }

    pub fn n_range(&self) -> usize {
        self.meta.n_range
    }

    pub fn n_doppler(&self) -> usize {
        self.meta.n_doppler
    }

    pub fn at(&self, row: usize, col: usize) -> Complex {
        self.data[row * self.meta.n_doppler + col]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Row and column of the largest-magnitude cell.
    pub fn peak(&self) -> (usize, usize, f64) {
        let (i, z) = self
            .data
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .expect("map is never empty");
        (i / self.meta.n_doppler, i % self.meta.n_doppler, z.norm())
    }

    pub fn scale(&mut self, factor: f64) {
        for z in &mut self.data {
            *z *= factor;
        }
    }
}

struct Tone {
    amp: Complex,
    /// Range-bin position `2RB/c` (cycles per frame of N_r samples).
    range_bins: f64,
    /// Doppler cycles per chirp, `f_d·T`.
    doppler_cycles: f64,
    slow_factor: Option<Vec<f64>>,
}

fn scene_tones(scene: &Scene, waveform: &Waveform, chirp: &ChirpParams) -> Result<Vec<Tone>> {
    let fc = chirp.fc_hz;
    let mut tones = Vec::new();
    let mut push = |range_m: f64, vel_mps: f64, amp: f64, slow: Option<Vec<f64>>| -> Result<()> {
        if !amp.is_finite() || !range_m.is_finite() || !vel_mps.is_finite() {
            return Err(Error::invalid(format!(
                "non-finite scatterer (range {range_m}, velocity {vel_mps}, amplitude {amp})"
            )));
        }
        let phase = -4.0 * std::f64::consts::PI * fc * range_m / SPEED_OF_LIGHT;
        tones.push(Tone {
            amp: Complex::from_polar(amp * chirp.tx_power().sqrt(), phase.rem_euclid(2.0 * std::f64::consts::PI)),
            range_bins: 2.0 * range_m * waveform.bandwidth_hz / SPEED_OF_LIGHT,
            doppler_cycles: chirp.doppler_hz(vel_mps) * chirp.chirp_s,
            slow_factor: slow,
        });
        Ok(())
    };
    for t in &scene.targets {
        for s in &t.scatterers {
            push(
                t.range_m + s.range_offset_m,
                t.vel_mps + s.vel_offset_mps,
                t.amp * s.rel_amp,
                None,
            )?;
        }
    }
    for i in &scene.interferers {
        if i.code.len() != chirp.n_chirps {
            return Err(Error::invalid(format!(
                "interferer code length {} != {} chirps",
                i.code.len(),
                chirp.n_chirps
            )));
        }
        let residual = (0..chirp.n_chirps)
            .map(|k| waveform.code.symbol(k) * i.code.symbol(k))
            .collect();
        push(i.range_m, i.vel_mps, i.amp, Some(residual))?;
    }
    Ok(tones)
}

/// exp(j2π·cycles·i) for i in 0..n, with the phase reduced modulo one cycle.
fn phasor_ramp(cycles_per_sample: f64, n: usize) -> Vec<Complex> {
    (0..n)
        .map(|i| {
            let turns = (cycles_per_sample * i as f64).rem_euclid(1.0);
            Complex::from_polar(1.0, 2.0 * std::f64::consts::PI * turns)
        })
        .collect()
}

/// Noise-free decoded beat samples of one frame.
pub fn clean_beat(
    scene: &Scene,
    waveform: &Waveform,
    chirp: &ChirpParams,
    r_max_m: f64,
) -> Result<BeatFrame> {
    if waveform.code.len() != chirp.n_chirps {
        return Err(Error::invalid(format!(
            "waveform code length {} != {} chirps",
            waveform.code.len(),
            chirp.n_chirps
        )));
    }
    let n_fast = fast_time_samples(waveform.bandwidth_hz, r_max_m);
    let n_chirps = chirp.n_chirps;
    let mut samples = vec![Complex::new(0.0, 0.0); n_fast * n_chirps];

    for tone in scene_tones(scene, waveform, chirp)? {
        let fast = phasor_ramp(tone.range_bins / n_fast as f64, n_fast);
        let mut slow = phasor_ramp(tone.doppler_cycles, n_chirps);
        if let Some(m) = &tone.slow_factor {
            for (z, &f) in slow.iter_mut().zip(m) {
                *z *= f;
            }
        }
        for (row, &s) in samples.chunks_exact_mut(n_fast).zip(&slow) {
            let a = tone.amp * s;
            for (x, &f) in row.iter_mut().zip(&fast) {
                *x += a * f;
            }
        }
    }

    Ok(BeatFrame {
        n_fast,
        n_chirps,
        fs_hz: n_fast as f64 / chirp.chirp_s,
        samples,
    })
}

fn complex_normal<R: Rng + ?Sized>(rng: &mut R, std_per_component: f64) -> Complex {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re * std_per_component, im * std_per_component)
}

/// Add circular complex white Gaussian noise with `E|n|² = N0·f_s` per sample.
pub fn add_noise<R: Rng + ?Sized>(beat: &mut BeatFrame, noise_psd: f64, rng: &mut R) {
    let std = (noise_psd * beat.fs_hz / 2.0).sqrt();
    for z in &mut beat.samples {
        *z += complex_normal(rng, std);
    }
}

struct Transform {
    range_fft: Arc<dyn Fft<f64>>,
    doppler_fft: Arc<dyn Fft<f64>>,
    range_window: Vec<f64>,
    doppler_window: Vec<f64>,
}

impl Transform {
    fn new(n_fast: usize, n_chirps: usize, window: Window) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            range_fft: planner.plan_fft_forward(n_fast),
            doppler_fft: planner.plan_fft_forward(n_chirps),
            range_window: window.coefficients(n_fast),
            doppler_window: window.coefficients(n_chirps),
        }
    }

    fn apply(&self, beat: &BeatFrame) -> Vec<Complex> {
        let (nf, nc) = (beat.n_fast, beat.n_chirps);
        let mut rows = beat.samples.clone();
        for (k, row) in rows.chunks_exact_mut(nf).enumerate() {
            let wd = self.doppler_window[k];
            for (x, &wr) in row.iter_mut().zip(&self.range_window) {
                *x *= wr * wd;
            }
        }
        self.range_fft.process(&mut rows);

        // Transpose to range-major, then transform along slow time.
        let mut out = vec![Complex::new(0.0, 0.0); nf * nc];
        for k in 0..nc {
            for r in 0..nf {
                out[r * nc + k] = rows[k * nf + r];
            }
        }
        self.doppler_fft.process(&mut out);
        let half = nc / 2;
        for row in out.chunks_exact_mut(nc) {
            row.rotate_right(half);
        }
        out
    }
}

/// Unnormalized 2D DFT of a beat frame.
pub fn range_doppler(beat: &BeatFrame, window: Window, meta: MapMeta) -> Result<RDMap> {
    if meta.n_range != beat.n_fast || meta.n_doppler != beat.n_chirps {
        return Err(Error::invalid(format!(
            "map meta {}x{} does not match beat frame {}x{}",
            meta.n_range, meta.n_doppler, beat.n_fast, beat.n_chirps
        )));
    }
    let data = Transform::new(beat.n_fast, beat.n_chirps, window).apply(beat);
    Ok(RDMap { data, meta })
}

/// Render one noisy frame of `scene` observed with `waveform`.
pub fn simulate_frame<R: Rng + ?Sized>(
    scene: &Scene,
    waveform: &Waveform,
    chirp: &ChirpParams,
    cfg: &RdConfig,
    rng: &mut R,
) -> Result<RDMap> {
    let mut beat = clean_beat(scene, waveform, chirp, cfg.r_max_m)?;
    add_noise(&mut beat, scene.noise_psd, rng);
    range_doppler(&beat, cfg.window, MapMeta::for_waveform(waveform, chirp, cfg.r_max_m))
}

/// Repeated-frame renderer for a fixed `(scene, waveform)` pair.
///
/// Holds the noise-free map and adds receiver noise directly in the
/// range-Doppler domain. The 2D DFT is linear and maps iid circular
/// Gaussian samples of variance `σ²` to iid circular Gaussian cells of
/// variance `σ²·Σw_r²·Σw_d²` (`N_r·N·σ²` unwindowed), so the rendered frames
/// have exactly the distribution of [`simulate_frame`] at a fraction of its
/// cost.
#[derive(Debug, Clone)]
pub struct FrameRenderer {
    clean: RDMap,
    cell_noise_std: f64,
}

impl FrameRenderer {
    pub fn new(scene: &Scene, waveform: &Waveform, chirp: &ChirpParams, cfg: &RdConfig) -> Result<Self> {
        let beat = clean_beat(scene, waveform, chirp, cfg.r_max_m)?;
        let meta = MapMeta::for_waveform(waveform, chirp, cfg.r_max_m);
        let clean = range_doppler(&beat, cfg.window, meta)?;
        let gain = |n: usize| cfg.window.coefficients(n).iter().map(|w| w * w).sum::<f64>();
        let var = scene.noise_psd * beat.fs_hz * gain(beat.n_fast) * gain(beat.n_chirps);
        Ok(Self {
            clean,
            cell_noise_std: var.sqrt(),
        })
    }

    pub fn clean(&self) -> &RDMap {
        &self.clean
    }

    /// Per-cell complex noise variance of rendered maps.
    pub fn cell_noise_variance(&self) -> f64 {
        self.cell_noise_std * self.cell_noise_std
    }

    pub fn render<R: Rng + ?Sized>(&self, rng: &mut R) -> RDMap {
        let mut map = self.clean.clone();
        self.render_into(rng, &mut map);
        map
    }

    /// Overwrite `out` with a fresh noisy realization.
    pub fn render_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut RDMap) {
        out.meta = self.clean.meta;
        out.data.clear();
        let std = self.cell_noise_std / std::f64::consts::SQRT_2;
        out.data
            .extend(self.clean.data.iter().map(|&z| z + complex_normal(rng, std)));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{default_classes, Interferer, Target};
    use crate::waveform::{generate_code, CodeKind, SlowTimeCode};
    use rand::SeedableRng;

    fn waveform(bw: f64, code: SlowTimeCode) -> Waveform {
        Waveform {
            index: 0,
            bandwidth_hz: bw,
            code,
        }
    }

    fn ones() -> SlowTimeCode {
        generate_code(128, CodeKind::AllOnes, 0).unwrap()
    }

    fn point_scene(range_m: f64, vel_mps: f64, amp: f64) -> Scene {
        let mut s = Scene::empty(1e-9);
        s.targets.push(Target::point(range_m, vel_mps, amp, default_classes()[0].clone()));
        s
    }

    /// Reference 2D DFT by direct summation; independent of rustfft.
    fn direct_dft(beat: &BeatFrame, row: usize, offset: i64) -> Complex {
        let (nf, nc) = (beat.n_fast as f64, beat.n_chirps as f64);
        let mut acc = Complex::new(0.0, 0.0);
        for k in 0..beat.n_chirps {
            for n in 0..beat.n_fast {
                let turns = row as f64 * n as f64 / nf + offset as f64 * k as f64 / nc;
                acc += beat.at(k, n) * Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * turns);
            }
        }
        acc
    }

    #[test]
    fn fast_time_sample_counts() {
        assert_eq!(fast_time_samples(150e6, 120.0), 128);
        assert_eq!(fast_time_samples(30e6, 120.0), 32);
        assert_eq!(fast_time_samples(1.5e9, 120.0), 2048);
    }

    #[test]
    fn on_grid_point_target_coherent_gain() {
        let chirp = ChirpParams::default();
        let wf = waveform(150e6, ones());
        let beat = clean_beat(&point_scene(60.0, 0.0, 1.0), &wf, &chirp, 120.0).unwrap();
        let meta = MapMeta::for_waveform(&wf, &chirp, 120.0);
        let map = range_doppler(&beat, Window::None, meta).unwrap();
        let (row, col, mag) = map.peak();
        assert_eq!(row, 60);
        assert_eq!(meta.doppler_offset(col), 0);
        assert!((mag - 16384.0).abs() / 16384.0 < 1e-6);
        let reference = direct_dft(&beat, 60, 0);
        assert!((map.at(60, col) - reference).norm() / reference.norm() < 1e-9);
    }

    #[test]
    fn fft_matches_direct_dft_off_grid() {
        let chirp = ChirpParams::new(77e9, 4.4e-6, 16).unwrap();
        let code = generate_code(16, CodeKind::SeededRandom, 3).unwrap();
        let mut scene = point_scene(33.3, 7.7, 1.3);
        scene.interferers.push(Interferer {
            range_m: 52.1,
            vel_mps: -4.0,
            amp: 3.0,
            code: ones_n(16),
        });
        let wf = waveform(30e6, code);
        let beat = clean_beat(&scene, &wf, &chirp, 120.0).unwrap();
        let meta = MapMeta::for_waveform(&wf, &chirp, 120.0);
        let map = range_doppler(&beat, Window::None, meta).unwrap();
        for row in [0, 7, 13, 31] {
            for col in 0..16 {
                let want = direct_dft(&beat, row, meta.doppler_offset(col));
                assert!((map.at(row, col) - want).norm() < 1e-9 * want.norm().max(1.0));
            }
        }
    }

    fn ones_n(n: usize) -> SlowTimeCode {
        generate_code(n, CodeKind::AllOnes, 0).unwrap()
    }

    #[test]
    fn ego_code_cancels_on_own_echoes() {
        let chirp = ChirpParams::default();
        let scene = point_scene(47.3, 3.1, 1.0);
        let coded = waveform(150e6, generate_code(128, CodeKind::SeededRandom, 9).unwrap());
        let a = clean_beat(&scene, &waveform(150e6, ones()), &chirp, 120.0).unwrap();
        let b = clean_beat(&scene, &coded, &chirp, 120.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn interferer_ghost_bins() {
        let chirp = ChirpParams::default();
        let mut scene = Scene::empty(1e-9);
        scene.interferers.push(Interferer {
            range_m: 76.0,
            vel_mps: 12.0,
            amp: 10.0,
            code: ones(),
        });
        let wf = waveform(150e6, ones());
        let beat = clean_beat(&scene, &wf, &chirp, 120.0).unwrap();
        let meta = MapMeta::for_waveform(&wf, &chirp, 120.0);
        let map = range_doppler(&beat, Window::None, meta).unwrap();
        let (row, col, _) = map.peak();
        assert_eq!(row, 76);
        assert_eq!(meta.doppler_offset(col), 3);
    }

    #[test]
    fn nan_amplitude_rejected() {
        let chirp = ChirpParams::default();
        let scene = point_scene(40.0, 0.0, f64::NAN);
        let r = clean_beat(&scene, &waveform(150e6, ones()), &chirp, 120.0);
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn parseval_holds_with_noise() {
        let chirp = ChirpParams::default();
        let wf = waveform(96e6, ones());
        let mut beat = clean_beat(&point_scene(40.2, 5.5, 1.0), &wf, &chirp, 120.0).unwrap();
        let mut rng = crate::SimRng::seed_from_u64(1);
        add_noise(&mut beat, 1e-6, &mut rng);
        let meta = MapMeta::for_waveform(&wf, &chirp, 120.0);
        let map = range_doppler(&beat, Window::None, meta).unwrap();
        let scale = (beat.n_fast * beat.n_chirps) as f64;
        let rel = (map.energy() - scale * beat.energy()).abs() / map.energy();
        assert!(rel < 1e-6, "relative error {rel}");
    }

    #[test]
    fn time_domain_noise_has_expected_cell_variance() {
        let chirp = ChirpParams::new(77e9, 4.4e-6, 32).unwrap();
        let wf = waveform(30e6, ones_n(32));
        let scene = Scene::empty(1e-3);
        let cfg = RdConfig::default();
        let renderer = FrameRenderer::new(&scene, &wf, &chirp, &cfg).unwrap();
        let mut rng = crate::SimRng::seed_from_u64(5);
        let (mut slow, mut fast) = (0.0, 0.0);
        let frames = 40;
        for _ in 0..frames {
            slow += simulate_frame(&scene, &wf, &chirp, &cfg, &mut rng).unwrap().energy();
            fast += renderer.render(&mut rng).energy();
        }
        let cells = (frames * 32 * 32) as f64;
        let want = renderer.cell_noise_variance();
        assert!(((slow / cells) / want - 1.0).abs() < 0.05);
        assert!(((fast / cells) / want - 1.0).abs() < 0.05);
        assert!((want - 1e-3 * (32.0 / 4.4e-6) * 32.0 * 32.0).abs() / want < 1e-12);
    }

    #[test]
    fn renderer_clean_map_matches_simulation() {
        let chirp = ChirpParams::default();
        let wf = waveform(300e6, ones());
        let scene = point_scene(20.5, -3.0, 2.0);
        let r = FrameRenderer::new(&scene, &wf, &chirp, &RdConfig::default()).unwrap();
        let beat = clean_beat(&scene, &wf, &chirp, 120.0).unwrap();
        let direct = range_doppler(&beat, Window::None, r.clean().meta).unwrap();
        assert_eq!(&direct, r.clean());
    }

    #[test]
    fn hann_window_lowers_sidelobes() {
        let chirp = ChirpParams::default();
        let wf = waveform(150e6, ones());
        let beat = clean_beat(&point_scene(60.5, 0.0, 1.0), &wf, &chirp, 120.0).unwrap();
        let meta = MapMeta::for_waveform(&wf, &chirp, 120.0);
        let col = meta.column_of_offset(0);
        let rect = range_doppler(&beat, Window::None, meta).unwrap();
        let hann = range_doppler(&beat, Window::Hann, meta).unwrap();
        let rel = |m: &RDMap| m.at(70, col).norm() / m.at(60, col).norm();
        assert!(rel(&hann) < rel(&rect) / 10.0);
    }
}
