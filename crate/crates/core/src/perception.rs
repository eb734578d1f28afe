//! Clustering, classification and the per-frame loss.

use std::cmp::Ordering;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::cfar::{Detection, PointCloud};
use crate::rd::MapMeta;
use crate::scene::{Scene, TargetClass};

/// A neighborhood radius that is either fixed or derived from the map's cell size.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub enum Eps {
    #[default]
    Auto,
    Fixed(f64),
}

impl Serialize for Eps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Eps::Auto => s.serialize_str("auto"),
            Eps::Fixed(v) => s.serialize_f64(*v),
        }
    }
}

impl<'de> Deserialize<'de> for Eps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Eps::Fixed(v)),
            Raw::Int(v) => Ok(Eps::Fixed(v as f64)),
            Raw::Str(s) if s == "auto" => Ok(Eps::Auto),
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"auto\", got {s:?}"
            ))),
        }
    }
}

/// Clustering settings as configured; [`DbscanSettings::resolve`] turns
/// `auto` radii into numbers for a given map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DbscanSettings {
    pub eps_range_m: Eps,
    pub eps_vel_mps: Eps,
    pub min_pts: usize,
}

impl Default for DbscanSettings {
    fn default() -> Self {
        Self {
            eps_range_m: Eps::Auto,
            eps_vel_mps: Eps::Auto,
            min_pts: 3,
        }
    }
}

impl DbscanSettings {
    /// `auto` range radius is `max(2ΔR, 1.5 m)`; `auto` velocity radius is `2Δv`.
    pub fn resolve(&self, meta: &MapMeta) -> DbscanConfig {
        DbscanConfig {
            eps_range_m: match self.eps_range_m {
                Eps::Auto => (2.0 * meta.range_bin_m).max(1.5),
                Eps::Fixed(v) => v,
            },
            eps_vel_mps: match self.eps_vel_mps {
                Eps::Auto => 2.0 * meta.vel_bin_mps,
                Eps::Fixed(v) => v,
            },
            min_pts: self.min_pts,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DbscanConfig {
    pub eps_range_m: f64,
    pub eps_vel_mps: f64,
    pub min_pts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Cluster {
    pub members: Vec<Detection>,
    pub centroid: (f64, f64),
    pub extent_m: f64,
    pub vel_spread_mps: f64,
    pub total_power: f64,
}

impl Cluster {
    pub fn from_members(members: Vec<Detection>) -> Self {
        assert!(!members.is_empty(), "cluster without members");
        let n = members.len() as f64;
        let (mut r_lo, mut r_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut v_lo, mut v_hi) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut r_sum, mut v_sum, mut power) = (0.0, 0.0, 0.0);
        for d in &members {
            r_lo = r_lo.min(d.range_m);
            r_hi = r_hi.max(d.range_m);
            v_lo = v_lo.min(d.vel_mps);
            v_hi = v_hi.max(d.vel_mps);
            r_sum += d.range_m;
            v_sum += d.vel_mps;
            power += d.power_linear();
        }
        Self {
            centroid: (r_sum / n, v_sum / n),
            extent_m: r_hi - r_lo,
            vel_spread_mps: v_hi - v_lo,
            total_power: power,
            members,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct Clustering {
    pub clusters: Vec<Cluster>,
    pub noise: Vec<Detection>,
}

fn canonical_cmp(a: &Detection, b: &Detection) -> Ordering {
    a.range_m
        .total_cmp(&b.range_m)
        .then(a.vel_mps.total_cmp(&b.vel_mps))
        .then(a.range_bin.cmp(&b.range_bin))
        .then(a.doppler_bin.cmp(&b.doppler_bin))
        .then(a.power_db.total_cmp(&b.power_db))
}

/// DBSCAN labels for points already in canonical (range, velocity) order.
///
/// Distances are Euclidean in `(range / eps_range, vel / eps_vel)`; a point
/// is core when at least `min_pts` points, itself included, lie within unit
/// distance. Clusters are numbered in order of their first core point; a
/// border point joins the first cluster that reaches it.
fn label_sorted(points: &[(f64, f64)], cfg: &DbscanConfig) -> Vec<Option<usize>> {
    let scaled: Vec<(f64, f64)> = points
        .iter()
        .map(|&(r, v)| (r / cfg.eps_range_m, v / cfg.eps_vel_mps))
        .collect();
    // Sorted by range, so every neighbor lies in a contiguous index band.
    let neighbors = |i: usize| -> Vec<usize> {
        let (x, y) = scaled[i];
        let lo = scaled.partition_point(|p| p.0 < x - 1.0);
        let hi = scaled.partition_point(|p| p.0 <= x + 1.0);
        (lo..hi)
            .filter(|&j| {
                let (dx, dy) = (scaled[j].0 - x, scaled[j].1 - y);
                dx * dx + dy * dy <= 1.0
            })
            .collect()
    };

    let mut labels: Vec<Option<usize>> = vec![None; points.len()];
    let mut visited = vec![false; points.len()];
    let mut next_cluster = 0;
    for i in 0..points.len() {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < cfg.min_pts {
            continue;
        }
        let cluster = next_cluster;
        next_cluster += 1;
        labels[i] = Some(cluster);
        let mut queue = seeds;
        while let Some(j) = queue.pop() {
            if labels[j].is_none() {
                labels[j] = Some(cluster);
            }
            if visited[j] {
                continue;
            }
            visited[j] = true;
            let reach = neighbors(j);
            if reach.len() >= cfg.min_pts {
                queue.extend(reach.into_iter().filter(|&k| !visited[k] || labels[k].is_none()));
            }
        }
    }
    labels
}

/// Cluster a point cloud. The result does not depend on input order.
pub fn dbscan(cloud: &PointCloud, cfg: &DbscanConfig) -> Clustering {
    let mut points = cloud.points.clone();
    points.sort_by(canonical_cmp);
    let coords: Vec<(f64, f64)> = points.iter().map(|d| (d.range_m, d.vel_mps)).collect();
    let labels = label_sorted(&coords, cfg);

    let n_clusters = labels.iter().flatten().max().map_or(0, |&m| m + 1);
    let mut groups: Vec<Vec<Detection>> = vec![Vec::new(); n_clusters];
    let mut noise = Vec::new();
    for (d, label) in points.into_iter().zip(labels) {
        match label {
            Some(c) => groups[c].push(d),
            None => noise.push(d),
        }
    }
    Clustering {
        clusters: groups.into_iter().map(Cluster::from_members).collect(),
        noise,
    }
}

/// Gaussian kernel widths of the template classifier.
///
/// The velocity width is wider than the class spreads themselves: measured
/// spreads are quantized to Doppler columns (3.46 m/s at 77 GHz, 128 × 4.4 us)
/// and a point reflector straddling two columns must not lose its class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelWidths {
    pub sigma_extent_m: f64,
    pub sigma_vel_mps: f64,
}

impl Default for KernelWidths {
    fn default() -> Self {
        Self {
            sigma_extent_m: 2.0,
            sigma_vel_mps: 8.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Classification {
    pub class_index: usize,
    pub confidence: f64,
}

/// Template score of a cluster against one class, in `[0, 1]`.
pub fn class_score(cluster: &Cluster, class: &TargetClass, k: &KernelWidths) -> f64 {
    let de = cluster.extent_m - class.extent_m;
    let dv = cluster.vel_spread_mps - class.vel_spread_mps;
    (-(de * de / (2.0 * k.sigma_extent_m * k.sigma_extent_m)
        + dv * dv / (2.0 * k.sigma_vel_mps * k.sigma_vel_mps)))
        .exp()
}

/// Best-matching class and its score. Ties go to the lower class index.
///
/// Panics if `classes` is empty.
pub fn classify_cluster(cluster: &Cluster, classes: &[TargetClass], k: &KernelWidths) -> Classification {
    assert!(!classes.is_empty(), "classifier needs at least one class");
    let mut best = Classification {
        class_index: 0,
        confidence: class_score(cluster, &classes[0], k),
    };
    for (i, c) in classes.iter().enumerate().skip(1) {
        let q = class_score(cluster, c, k);
        if q > best.confidence {
            best = Classification {
                class_index: i,
                confidence: q,
            };
        }
    }
    best
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossMode {
    /// `1 − mean(g)` over identified clusters.
    #[default]
    Paper,
    /// `1 − Σg / max(N_c, N_targets)`, which also charges missed targets.
    MissAware,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScoringConfig {
    pub loss_mode: LossMode,
    pub gate_range_m: f64,
    pub gate_vel_mps: f64,
    pub sigma_extent_m: f64,
    pub sigma_vel_mps: f64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        let k = KernelWidths::default();
        Self {
            loss_mode: LossMode::Paper,
            gate_range_m: 5.0,
            gate_vel_mps: 2.0,
            sigma_extent_m: k.sigma_extent_m,
            sigma_vel_mps: k.sigma_vel_mps,
        }
    }
}

impl ScoringConfig {
    pub fn kernel(&self) -> KernelWidths {
        KernelWidths {
            sigma_extent_m: self.sigma_extent_m,
            sigma_vel_mps: self.sigma_vel_mps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrameScore {
    pub g: Vec<f64>,
    pub n_clusters: usize,
    pub loss: f64,
}

/// Loss from per-cluster confidences.
pub fn loss_from_confidences(g: &[f64], n_targets: usize, mode: LossMode) -> f64 {
    let total: f64 = g.iter().sum();
    let denom = match mode {
        LossMode::Paper => g.len(),
        LossMode::MissAware => g.len().max(n_targets),
    };
    if denom == 0 {
        return 1.0;
    }
    (1.0 - total / denom as f64).clamp(0.0, 1.0)
}

/// Greedy one-to-one association of cluster centroids with true targets
/// inside the gate, closest (gate-normalized) pair first.
pub fn match_clusters(clusters: &[Cluster], scene: &Scene, cfg: &ScoringConfig) -> Vec<Option<usize>> {
    let mut pairs = Vec::new();
    for (ci, c) in clusters.iter().enumerate() {
        for (ti, t) in scene.targets.iter().enumerate() {
            let dr = (c.centroid.0 - t.range_m).abs();
            let dv = (c.centroid.1 - t.vel_mps).abs();
            if dr <= cfg.gate_range_m && dv <= cfg.gate_vel_mps {
                let dist = (dr / cfg.gate_range_m).powi(2) + (dv / cfg.gate_vel_mps).powi(2);
                pairs.push((dist, ci, ti));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut assigned = vec![None; clusters.len()];
    let mut taken = vec![false; scene.targets.len()];
    for (_, ci, ti) in pairs {
        if assigned[ci].is_none() && !taken[ti] {
            assigned[ci] = Some(ti);
            taken[ti] = true;
        }
    }
    assigned
}

/// Score the clusters of one frame against ground truth.
pub fn score_frame(
    clusters: &[Cluster],
    scene: &Scene,
    classes: &[TargetClass],
    cfg: &ScoringConfig,
) -> FrameScore {
    let kernel = cfg.kernel();
    let assignment = match_clusters(clusters, scene, cfg);
    let g: Vec<f64> = clusters
        .iter()
        .zip(&assignment)
        .map(|(c, m)| match m {
            Some(ti) if !classes.is_empty() => {
                let cls = classify_cluster(c, classes, &kernel);
                if classes[cls.class_index].name == scene.targets[*ti].class.name {
                    cls.confidence
                } else {
                    0.0
                }
            }
            _ => 0.0,
        })
        .collect();
    FrameScore {
        loss: loss_from_confidences(&g, scene.targets.len(), cfg.loss_mode),
        n_clusters: g.len(),
        g,
    }
}
