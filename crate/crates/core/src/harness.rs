//! Seeded Monte Carlo learning experiments.
//!
//! A run fixes one scene (drawn from the `scene` stream of its run id) and
//! plays every configured policy against it for `horizon` frames. Frame `t`
//! of run `r` always uses noise stream `noise[r, t]`, whichever policy is
//! playing and whichever waveform it picked, so policies are compared on
//! common random numbers. Policy randomness comes from `policy[r]`, also
//! shared, which makes e.g. `ts` and `sts-rel(d=0)` replay identical action
//! sequences.
//!
//! Runs are independent; with the `parallel` feature they are spread over
//! the rayon pool, otherwise processed in order. Both paths produce
//! identical records.

use std::io::Write;
use std::path::Path;
use std::sync::OnceLock;

use serde::Serialize;

use crate::bandit::{Learner, PolicyConfig};
use crate::cfar::{cfar_detect, PointCloud};
use crate::config::ExperimentConfig;
use crate::perception::{dbscan, score_frame, Clustering, FrameScore};
use crate::rd::{simulate_frame, FrameRenderer, RDMap};
use crate::scene::{sample_scene, Scene};
use crate::waveform::{Waveform, WaveformCatalog};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum Execution {
    Sequential,
    /// Runs spread over the rayon pool; sequential when built without `parallel`.
    #[default]
    Parallel,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrameRecord {
    pub frame: u64,
    pub waveform_index: usize,
    pub bandwidth_hz: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunRecord {
    pub policy: String,
    pub run: usize,
    pub frames: Vec<FrameRecord>,
    /// Cumulative mean loss up to and including each frame.
    pub running_mean: Vec<f64>,
    /// Seed of the scene stream this run used.
    pub scene_seed: u64,
    /// Seed of each frame's noise stream.
    pub noise_seeds: Vec<u64>,
}

/// Everything downstream of the simulator for one frame.
#[derive(Debug, Clone)]
pub struct FrameOutcome {
    pub cloud: PointCloud,
    pub clustering: Clustering,
    pub score: FrameScore,
}

/// Detection, clustering and scoring of rendered maps.
pub fn evaluate_map(map: &RDMap, scene: &Scene, cfg: &ExperimentConfig) -> Result<FrameOutcome> {
    let cloud = cfar_detect(map, &cfg.cfar)?;
    let clustering = dbscan(&cloud, &cfg.dbscan.resolve(&map.meta));
    let score = score_frame(&clustering.clusters, scene, &cfg.scene.classes, &cfg.perception);
    Ok(FrameOutcome {
        cloud,
        clustering,
        score,
    })
}

/// Scene and lazily built per-arm renderers of one run.
struct RunContext<'a> {
    cfg: &'a ExperimentConfig,
    catalog: &'a WaveformCatalog,
    run: usize,
    scene: Option<Scene>,
    renderers: Vec<OnceLock<FrameRenderer>>,
}

impl<'a> RunContext<'a> {
    fn new(cfg: &'a ExperimentConfig, catalog: &'a WaveformCatalog, run: usize) -> Result<Self> {
        let scene = if cfg.scene.redraw_every_frame {
            None
        } else {
            Some(sample_scene(
                &cfg.scene,
                cfg.radar.n_chirps,
                scene_seed(cfg.experiment.seed, run, None),
            )?)
        };
        Ok(Self {
            cfg,
            catalog,
            run,
            scene,
            renderers: (0..catalog.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    fn renderer(&self, scene: &Scene, wf: &Waveform) -> Result<&FrameRenderer> {
        if let Some(r) = self.renderers[wf.index].get() {
            return Ok(r);
        }
        let r = FrameRenderer::new(scene, wf, self.catalog.chirp(), &self.cfg.rd())?;
        Ok(self.renderers[wf.index].get_or_init(|| r))
    }

    /// Loss of transmitting `wf` at `frame`.
    fn frame_loss(&self, frame: u64, wf: &Waveform, scratch: &mut Option<RDMap>) -> Result<f64> {
        let master = self.cfg.experiment.seed;
        let mut noise = seed::stream(master, "noise", &[self.run as u64, frame]);
        match &self.scene {
            Some(scene) => {
                let renderer = self.renderer(scene, wf)?;
                let map = scratch.get_or_insert_with(|| renderer.clean().clone());
                renderer.render_into(&mut noise, map);
                Ok(evaluate_map(map, scene, self.cfg)?.score.loss)
            }
            None => {
                let scene = sample_scene(
                    &self.cfg.scene,
                    self.cfg.radar.n_chirps,
                    scene_seed(master, self.run, Some(frame)),
                )?;
                let map = FrameRenderer::new(&scene, wf, self.catalog.chirp(), &self.cfg.rd())?.render(&mut noise);
                Ok(evaluate_map(&map, &scene, self.cfg)?.score.loss)
            }
        }
    }

    /// Play all policies in lockstep. Frame outcomes depend only on
    /// `(run, frame, arm)`, so an arm picked by several policies in the same
    /// frame is evaluated once.
    fn play_all(&self, policies: &[PolicyConfig]) -> Result<Vec<RunRecord>> {
        let cfg = self.cfg;
        let master = cfg.experiment.seed;
        let horizon = cfg.experiment.horizon;
        let mut learners = policies
            .iter()
            .map(|p| Learner::new(*p, self.catalog.len()))
            .collect::<Result<Vec<_>>>()?;
        let mut rngs: Vec<_> = policies
            .iter()
            .map(|_| seed::stream(master, "policy", &[self.run as u64]))
            .collect();
        let mut records: Vec<RunRecord> = policies
            .iter()
            .map(|p| RunRecord {
                policy: p.label(),
                run: self.run,
                frames: Vec::with_capacity(horizon),
                running_mean: Vec::with_capacity(horizon),
                scene_seed: scene_seed(master, self.run, None),
                noise_seeds: Vec::with_capacity(horizon),
            })
            .collect();
        let mut totals = vec![0.0; policies.len()];
        let mut scratch = None;
        let mut memo: Vec<(usize, f64)> = Vec::with_capacity(policies.len());
        for frame in 1..=horizon as u64 {
            memo.clear();
            let noise_seed = seed::derive_seed(master, "noise", &[self.run as u64, frame]);
            for (i, learner) in learners.iter_mut().enumerate() {
                let arm = learner.select(&mut rngs[i])?;
                let wf = &self.catalog.entries()[arm];
                let loss = match memo.iter().find(|(a, _)| *a == arm) {
                    Some(&(_, l)) => l,
                    None => {
                        let l = self.frame_loss(frame, wf, &mut scratch)?;
                        memo.push((arm, l));
                        l
                    }
                };
                learner.observe(frame, arm, loss)?;
                totals[i] += loss;
                let rec = &mut records[i];
                rec.frames.push(FrameRecord {
                    frame,
                    waveform_index: arm,
                    bandwidth_hz: wf.bandwidth_hz,
                    loss,
                });
                rec.running_mean.push(totals[i] / frame as f64);
                rec.noise_seeds.push(noise_seed);
            }
        }
        Ok(records)
    }
}

/// Seed of the scene for `run` (and `frame` when scenes are redrawn).
pub fn scene_seed(master: u64, run: usize, frame: Option<u64>) -> u64 {
    match frame {
        None => seed::derive_seed(master, "scene", &[run as u64]),
        Some(f) => seed::derive_seed(master, "scene", &[run as u64, f]),
    }
}

fn run_all_policies(
    cfg: &ExperimentConfig,
    catalog: &WaveformCatalog,
    policies: &[PolicyConfig],
    run: usize,
) -> Result<Vec<RunRecord>> {
    RunContext::new(cfg, catalog, run)?.play_all(policies)
}

#[cfg(feature = "parallel")]
fn map_runs<T: Send>(runs: usize, exec: Execution, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    match exec {
        Execution::Parallel => (0..runs).into_par_iter().map(f).collect(),
        Execution::Sequential => (0..runs).map(f).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_runs<T: Send>(runs: usize, _exec: Execution, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    (0..runs).map(f).collect()
}

/// Run the experiment with the configured policy list.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RunRecord>> {
    run_experiment_with(cfg, &cfg.policies()?, Execution::default())
}

/// Run `policies` on `cfg`'s scenes. Records are ordered policy-major, then by run.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    policies: &[PolicyConfig],
    exec: Execution,
) -> Result<Vec<RunRecord>> {
    cfg.validate()?;
    if policies.is_empty() {
        return Err(Error::config("experiment.policies", "no policies to run"));
    }
    let catalog = cfg.catalog()?;
    let per_run = map_runs(cfg.experiment.runs, exec, |run| {
        run_all_policies(cfg, &catalog, policies, run)
    });
    let per_run = per_run.into_iter().collect::<Result<Vec<_>>>()?;

    let mut records = Vec::with_capacity(policies.len() * cfg.experiment.runs);
    for p in 0..policies.len() {
        records.extend(per_run.iter().map(|recs| recs[p].clone()));
    }
    Ok(records)
}

/// Mean loss of every arm over `frames` frames of one run, in catalog order.
pub fn arm_losses(cfg: &ExperimentConfig, run: usize, frames: u64) -> Result<Vec<f64>> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let ctx = RunContext::new(cfg, &catalog, run)?;
    catalog
        .entries()
        .iter()
        .map(|wf| {
            let mut scratch = None;
            let mut total = 0.0;
            for frame in 1..=frames {
                total += ctx.frame_loss(frame, wf, &mut scratch)?;
            }
            Ok(total / frames as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub policy: String,
    pub runs: usize,
    /// Mean loss at each frame across runs.
    pub mean: Vec<f64>,
    /// Population standard deviation across runs at each frame.
    pub std: Vec<f64>,
    /// Trailing moving average of `mean` over `window` frames.
    pub moving_avg: Vec<f64>,
}

impl PolicySummary {
    /// Mean of the per-frame mean curve over frames `first..=last` (1-based).
    pub fn mean_over(&self, first: usize, last: usize) -> f64 {
        let slice = &self.mean[first - 1..last];
        slice.iter().sum::<f64>() / slice.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub window: usize,
    pub policies: Vec<PolicySummary>,
}

impl Summary {
    pub fn policy(&self, label: &str) -> Option<&PolicySummary> {
        self.policies.iter().find(|p| p.policy == label)
    }
}

/// Trailing moving average with a window clipped at the series start.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let window = window.max(1);
    let mut acc = 0.0;
    series
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            acc += x;
            if i >= window {
                acc -= series[i - window];
            }
            acc / (i + 1).min(window) as f64
        })
        .collect()
}

/// Per-policy mean, spread and moving average of the loss curves.
/// Policies appear in order of first occurrence.
pub fn aggregate(records: &[RunRecord], window: usize) -> Result<Summary> {
    if records.is_empty() {
        return Err(Error::invalid("no records to aggregate"));
    }
    let mut order: Vec<&str> = Vec::new();
    for r in records {
        if !order.contains(&r.policy.as_str()) {
            order.push(&r.policy);
        }
    }
    let policies = order
        .into_iter()
        .map(|label| {
            let runs: Vec<&RunRecord> = records.iter().filter(|r| r.policy == label).collect();
            let horizon = runs[0].frames.len();
            if runs.iter().any(|r| r.frames.len() != horizon) {
                return Err(Error::invalid(format!("runs of {label} have different lengths")));
            }
            let n = runs.len() as f64;
            let mut mean = vec![0.0; horizon];
            let mut std = vec![0.0; horizon];
            for k in 0..horizon {
                let m = runs.iter().map(|r| r.frames[k].loss).sum::<f64>() / n;
                let v = runs.iter().map(|r| (r.frames[k].loss - m).powi(2)).sum::<f64>() / n;
                mean[k] = m;
                std[k] = v.sqrt();
            }
            Ok(PolicySummary {
                policy: label.to_string(),
                runs: runs.len(),
                moving_avg: moving_average(&mean, window),
                mean,
                std,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Summary { window, policies })
}

/// Long-format curves: `policy,run,frame,waveform_idx,bandwidth_hz,loss`.
pub fn write_curves_csv(records: &[RunRecord], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
    w.write_record(["policy", "run", "frame", "waveform_idx", "bandwidth_hz", "loss"])?;
    for r in records {
        for f in &r.frames {
            w.write_record([
                r.policy.clone(),
                r.run.to_string(),
                f.frame.to_string(),
                f.waveform_index.to_string(),
                f.bandwidth_hz.to_string(),
                f.loss.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Serialize)]
struct SummaryFile<'a> {
    horizon: usize,
    runs: usize,
    seed: u64,
    window: usize,
    catalog_size: usize,
    policies: &'a [PolicySummary],
}

pub fn write_summary_json(summary: &Summary, cfg: &ExperimentConfig, path: &Path) -> Result<()> {
    let file = SummaryFile {
        horizon: cfg.experiment.horizon,
        runs: cfg.experiment.runs,
        seed: cfg.experiment.seed,
        window: summary.window,
        catalog_size: cfg.catalog.bandwidths_hz.len() * cfg.catalog.n_codes,
        policies: &summary.policies,
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Run an experiment and write `curves.csv`, `summary.json` and the
/// effective `config.toml` into `out_dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, policies: &[PolicyConfig], out_dir: &Path) -> Result<Summary> {
    let records = run_experiment_with(cfg, policies, Execution::default())?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_curves_csv(&records, &out_dir.join("curves.csv"))?;
    let summary = aggregate(&records, cfg.experiment.window)?;
    write_summary_json(&summary, cfg, &out_dir.join("summary.json"))?;
    let cfg_path = out_dir.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml_string()).map_err(|e| Error::io(&cfg_path, e))?;
    Ok(summary)
}

#[derive(Serialize)]
struct RdDumpMeta<'a> {
    waveform_index: usize,
    bandwidth_hz: f64,
    code_id: usize,
    seed: u64,
    n_range: usize,
    n_doppler: usize,
    range_bin_m: f64,
    vel_bin_mps: f64,
    /// Range of each CSV row (m).
    range_m: Vec<f64>,
    /// Velocity of each CSV column (m/s).
    vel_mps: Vec<f64>,
    scene: &'a Scene,
}

/// Render frame 1 of run 0 for `seed` with catalog entry `waveform` and
/// write it as magnitude-dB CSV (one row per range bin, Doppler columns from
/// most negative to most positive velocity) plus `<out>.meta.json`.
pub fn rd_dump(cfg: &ExperimentConfig, waveform: usize, seed_value: u64, out: &Path) -> Result<RDMap> {
    cfg.validate()?;
    let catalog = cfg.catalog()?;
    let wf = catalog.get(waveform).ok_or_else(|| {
        Error::invalid(format!("waveform {waveform} not in catalog of {}", catalog.len()))
    })?;
    let scene = sample_scene(&cfg.scene, cfg.radar.n_chirps, scene_seed(seed_value, 0, None))?;
    let mut noise = seed::stream(seed_value, "noise", &[0, 1]);
    let map = simulate_frame(&scene, wf, catalog.chirp(), &cfg.rd(), &mut noise)?;

    let file = std::fs::File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = std::io::BufWriter::new(file);
    for row in 0..map.n_range() {
        let line: Vec<String> = (0..map.n_doppler())
            .map(|col| format!("{:.4}", 20.0 * map.at(row, col).norm().max(f64::MIN_POSITIVE).log10()))
            .collect();
        writeln!(w, "{}", line.join(",")).map_err(|e| Error::io(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))?;

    let meta = RdDumpMeta {
        waveform_index: wf.index,
        bandwidth_hz: wf.bandwidth_hz,
        code_id: wf.code.id(),
        seed: seed_value,
        n_range: map.meta.n_range,
        n_doppler: map.meta.n_doppler,
        range_bin_m: map.meta.range_bin_m,
        vel_bin_mps: map.meta.vel_bin_mps,
        range_m: (0..map.n_range()).map(|r| map.meta.range_of_bin(r)).collect(),
        vel_mps: (0..map.n_doppler()).map(|c| map.meta.velocity_of_column(c)).collect(),
        scene: &scene,
    };
    let mut meta_path = out.as_os_str().to_owned();
    meta_path.push(".meta.json");
    let meta_path = std::path::PathBuf::from(meta_path);
    std::fs::write(&meta_path, serde_json::to_string_pretty(&meta)?).map_err(|e| Error::io(&meta_path, e))?;
    Ok(map)
}
