//! Waveform-selection policies.
//!
//! Each arm keeps a Gaussian posterior over its mean loss with the prior
//! counted as one pseudo-observation: mean `(μ0 + Σℓ)/(n + 1)`, variance
//! `1/(n + 1)`.
//!
//! Satisficing selection draws `θ_i` for every arm and transmits the first
//! arm (lowest catalog index) whose draw is within the aspiration level:
//!
//! - absolute aspiration: `θ_i ≤ d` (the best achievable loss is 0);
//! - relative aspiration: `θ_i ≤ min_j θ_j + d`.
//!
//! If no arm qualifies, the lowest-index untested arm is transmitted; once
//! every arm has been tried, the arm with the lowest posterior mean.
//! Relative aspiration always has a qualifying arm, and with `d = 0` it picks
//! the first `θ`-minimizer, i.e. plain Thompson sampling.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub n: u64,
    pub sum_loss: f64,
    pub prior_mean: f64,
}

impl Posterior {
    pub fn new(prior_mean: f64) -> Self {
        Self {
            n: 0,
            sum_loss: 0.0,
            prior_mean,
        }
    }

    pub fn mean(&self) -> f64 {
        (self.prior_mean + self.sum_loss) / (self.n as f64 + 1.0)
    }

    pub fn variance(&self) -> f64 {
        1.0 / (self.n as f64 + 1.0)
    }

    pub fn is_tested(&self) -> bool {
        self.n > 0
    }

    pub fn update(&mut self, loss: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&loss) {
            return Err(Error::invalid(format!("loss {loss} outside [0, 1]")));
        }
        self.n += 1;
        self.sum_loss += loss;
        Ok(())
    }
}

/// Draw `θ ~ Normal(mean, variance)` from the posterior.
pub fn sample_theta<R: Rng + ?Sized>(post: &Posterior, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    post.mean() + post.variance().sqrt() * z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Random,
    Ts,
    Sts,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aspiration {
    #[default]
    Absolute,
    Relative,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolicyConfig {
    pub kind: PolicyKind,
    pub d: f64,
    pub aspiration: Aspiration,
    pub prior_mean: f64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            kind: PolicyKind::Sts,
            d: 0.3,
            aspiration: Aspiration::Absolute,
            prior_mean: 0.5,
        }
    }
}

impl PolicyConfig {
    pub fn random() -> Self {
        Self {
            kind: PolicyKind::Random,
            d: 0.0,
            ..Self::default()
        }
    }

    pub fn ts() -> Self {
        Self {
            kind: PolicyKind::Ts,
            d: 0.0,
            ..Self::default()
        }
    }

    pub fn sts(d: f64, aspiration: Aspiration) -> Self {
        Self {
            kind: PolicyKind::Sts,
            d,
            aspiration,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.d) {
            return Err(Error::invalid(format!("distortion d = {} outside [0, 1)", self.d)));
        }
        if !self.prior_mean.is_finite() {
            return Err(Error::invalid("prior mean must be finite"));
        }
        Ok(())
    }

    /// Short label used in output files, e.g. `sts(d=0.3)`.
    pub fn label(&self) -> String {
        match (self.kind, self.aspiration) {
            (PolicyKind::Random, _) => "random".to_string(),
            (PolicyKind::Ts, _) => "ts".to_string(),
            (PolicyKind::Sts, Aspiration::Absolute) => format!("sts(d={})", self.d),
            (PolicyKind::Sts, Aspiration::Relative) => format!("sts-rel(d={})", self.d),
        }
    }
}

fn argmin_by(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Pick an arm given the current posteriors.
pub fn select<R: Rng + ?Sized>(posteriors: &[Posterior], cfg: &PolicyConfig, rng: &mut R) -> Result<usize> {
    if posteriors.is_empty() {
        return Err(Error::invalid("cannot select from an empty posterior list"));
    }
    match cfg.kind {
        PolicyKind::Random => Ok(rng.random_range(0..posteriors.len())),
        PolicyKind::Ts => {
            let theta: Vec<f64> = posteriors.iter().map(|p| sample_theta(p, rng)).collect();
            Ok(argmin_by(theta.into_iter()))
        }
        PolicyKind::Sts => {
            let theta: Vec<f64> = posteriors.iter().map(|p| sample_theta(p, rng)).collect();
            let level = match cfg.aspiration {
                Aspiration::Absolute => cfg.d,
                Aspiration::Relative => theta.iter().copied().fold(f64::INFINITY, f64::min) + cfg.d,
            };
            if let Some(i) = theta.iter().position(|&t| t <= level) {
                return Ok(i);
            }
            if let Some(i) = posteriors.iter().position(|p| !p.is_tested()) {
                return Ok(i);
            }
            Ok(argmin_by(posteriors.iter().map(Posterior::mean)))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistoryRecord {
    pub frame: u64,
    pub arm: usize,
    pub loss: f64,
}

/// Transcript of transmitted waveforms and observed losses.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    records: Vec<HistoryRecord>,
}

impl History {
    pub fn push(&mut self, frame: u64, arm: usize, loss: f64) -> Result<()> {
        if let Some(last) = self.records.last() {
            if frame <= last.frame {
                return Err(Error::invalid(format!(
                    "frame {frame} does not follow frame {}",
                    last.frame
                )));
            }
        }
        self.records.push(HistoryRecord { frame, arm, loss });
        Ok(())
    }

    pub fn records(&self) -> &[HistoryRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// One learning run's policy state.
#[derive(Debug, Clone)]
pub struct Learner {
    cfg: PolicyConfig,
    posteriors: Vec<Posterior>,
    history: History,
}

impl Learner {
    pub fn new(cfg: PolicyConfig, n_arms: usize) -> Result<Self> {
        cfg.validate()?;
        if n_arms == 0 {
            return Err(Error::invalid("learner needs at least one arm"));
        }
        Ok(Self {
            cfg,
            posteriors: vec![Posterior::new(cfg.prior_mean); n_arms],
            history: History::default(),
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.cfg
    }

    pub fn posteriors(&self) -> &[Posterior] {
        &self.posteriors
    }

    pub fn history(&self) -> &History {
        &self.history
    }

    pub fn select<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        select(&self.posteriors, &self.cfg, rng)
    }

    pub fn observe(&mut self, frame: u64, arm: usize, loss: f64) -> Result<()> {
        let post = self
            .posteriors
            .get_mut(arm)
            .ok_or_else(|| Error::invalid(format!("arm {arm} out of range")))?;
        post.update(loss)?;
        self.history.push(frame, arm, loss)
    }
}
