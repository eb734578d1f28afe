//! Cell-averaging CFAR on range-Doppler maps.
//!
//! Square-law detection: each cell's power `|x|²` is compared against
//! `α · mean(training powers)`, where the training cells sit outside a
//! guard band on both sides of the cell under test. Windows wrap
//! circularly since DFT output is periodic.

use serde::{Deserialize, Serialize};

use crate::rd::{MapMeta, RDMap};
use crate::{Error, Result};

/// CA-CFAR scaling for exponentially distributed noise power:
/// `n · (pfa^(-1/n) − 1)`.
pub fn threshold_factor(pfa: f64, n_train: usize) -> f64 {
    let n = n_train as f64;
    n * (pfa.powf(-1.0 / n) - 1.0)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CfarMode {
    /// Training along range only, independently per Doppler column.
    #[serde(rename = "range_1d")]
    Range1d,
    /// Training along range and along Doppler through the cell under test.
    /// Doppler training sees the ridge a decoded interferer leaves across
    /// all columns, so spread interference is not re-detected.
    #[default]
    #[serde(rename = "cross_2d")]
    Cross2d,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CfarConfig {
    pub pfa: f64,
    /// Guard cells per side.
    pub guard: usize,
    /// Training cells per side.
    pub training: usize,
    pub mode: CfarMode,
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            pfa: 1e-5,
            guard: 5,
            training: 10,
            mode: CfarMode::Cross2d,
        }
    }
}

impl CfarConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(Error::invalid(format!("pfa must lie in (0, 1), got {}", self.pfa)));
        }
        if self.training == 0 {
            return Err(Error::invalid("CFAR needs at least one training cell per side"));
        }
        Ok(())
    }

    pub fn n_train(&self) -> usize {
        match self.mode {
            CfarMode::Range1d => 2 * self.training,
            CfarMode::Cross2d => 4 * self.training,
        }
    }

    /// Smallest axis length the sliding window fits in.
    pub fn min_axis_len(&self) -> usize {
        2 * (self.guard + self.training) + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub range_m: f64,
    pub vel_mps: f64,
    pub power_db: f64,
    pub range_bin: usize,
    pub doppler_bin: usize,
}

impl Detection {
    pub fn power_linear(&self) -> f64 {
        10f64.powf(self.power_db / 10.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<Detection>,
    pub meta: MapMeta,
}

/// `i` reduced modulo `n`, for `i` in `[-n, 2n)`.
fn wrap(i: isize, n: usize) -> usize {
    let n = n as isize;
    (if i < 0 {
        i + n
    } else if i >= n {
        i - n
    } else {
        i
    }) as usize
}

/// Per-cell sum of the `2·training` range cells outside the guard band,
/// for a range-major `nr × nd` power grid. Sliding sums over whole rows.
fn range_training_sums(power: &[f64], nr: usize, nd: usize, guard: usize, training: usize) -> Vec<f64> {
    let row = |r: isize| {
        let r = wrap(r, nr);
        &power[r * nd..(r + 1) * nd]
    };
    let (g, t) = (guard as isize, training as isize);
    let mut acc = vec![0.0; nd];
    for o in g + 1..=g + t {
        for (a, (x, y)) in acc.iter_mut().zip(row(o).iter().zip(row(-o))) {
            *a += x + y;
        }
    }
    let mut out = Vec::with_capacity(nr * nd);
    out.extend_from_slice(&acc);
    for r in 1..nr as isize {
        let (add_hi, drop_hi) = (row(r + g + t), row(r + g));
        let (add_lo, drop_lo) = (row(r - g - 1), row(r - g - t - 1));
        for c in 0..nd {
            acc[c] += (add_hi[c] - drop_hi[c]) + (add_lo[c] - drop_lo[c]);
        }
        out.extend_from_slice(&acc);
    }
    out
}

/// Adds the Doppler-axis training sums of every row into `sums`.
fn add_doppler_training_sums(power: &[f64], sums: &mut [f64], nd: usize, guard: usize, training: usize) {
    let (g, t) = (guard as isize, training as isize);
    for (row, out) in power.chunks_exact(nd).zip(sums.chunks_exact_mut(nd)) {
        let at = |c: isize| row[wrap(c, nd)];
        let mut acc: f64 = (g + 1..=g + t).map(|o| at(o) + at(-o)).sum();
        out[0] += acc;
        for c in 1..nd as isize {
            acc += (at(c + g + t) - at(c + g)) + (at(c - g - 1) - at(c - g - t - 1));
            out[c as usize] += acc;
        }
    }
}

/// Run CA-CFAR over a map. Detections are returned in range-major order.
pub fn cfar_detect(map: &RDMap, cfg: &CfarConfig) -> Result<PointCloud> {
    cfg.validate()?;
    let (nr, nd) = (map.n_range(), map.n_doppler());
    let need = cfg.min_axis_len();
    if nr < need {
        return Err(Error::invalid(format!(
            "map has {nr} range bins; CFAR window needs at least {need}"
        )));
    }
    if cfg.mode == CfarMode::Cross2d && nd < need {
        return Err(Error::invalid(format!(
            "map has {nd} Doppler bins; cross CFAR window needs at least {need}"
        )));
    }

    let power: Vec<f64> = map.data.iter().map(|z| z.norm_sqr()).collect();
    let mut noise = range_training_sums(&power, nr, nd, cfg.guard, cfg.training);
    if cfg.mode == CfarMode::Cross2d {
        add_doppler_training_sums(&power, &mut noise, nd, cfg.guard, cfg.training);
    }
    let scale = threshold_factor(cfg.pfa, cfg.n_train()) / cfg.n_train() as f64;

    let mut points = Vec::new();
    for (i, (&p, &n)) in power.iter().zip(&noise).enumerate() {
        if p > scale * n {
            let (r, c) = (i / nd, i % nd);
            points.push(Detection {
                range_m: map.meta.range_of_bin(r),
                vel_mps: map.meta.velocity_of_column(c),
                power_db: 10.0 * p.log10(),
                range_bin: r,
                doppler_bin: c,
            });
        }
    }
    Ok(PointCloud {
        points,
        meta: map.meta,
    })
}
