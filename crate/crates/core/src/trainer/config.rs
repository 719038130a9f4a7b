use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::losses::LossConfig;
use crate::videoset::SamplerParams;
use crate::{Error, Result};

/// Which unsupervised objective to minimize.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Siamese,
    #[default]
    Quadruplet,
    Sfa,
}

impl Mode {
    /// Default embedding width for this mode's network.
    pub fn default_embedding_dim(self) -> usize {
        match self {
            Mode::Quadruplet => 64,
            Mode::Siamese | Mode::Sfa => 128,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Siamese => "siamese",
            Mode::Quadruplet => "quadruplet",
            Mode::Sfa => "sfa",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "siamese" => Ok(Mode::Siamese),
            "quadruplet" => Ok(Mode::Quadruplet),
            "sfa" => Ok(Mode::Sfa),
            _ => Err(Error::InvalidArgument(format!(
                "unknown mode {s:?}; expected siamese, quadruplet or sfa"
            ))),
        }
    }
}

/// Step decay: the learning rate is multiplied by `gamma` every `step` epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LrSchedule {
    pub gamma: f64,
    /// `None` means a third of the configured epoch count.
    pub step: Option<usize>,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            step: None,
        }
    }
}

/// A fully resolved step-decay schedule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDecay {
    pub lr0: f64,
    pub gamma: f64,
    pub step: usize,
}

/// `lr0 · gamma^floor(epoch / step)`.
pub fn lr_at(schedule: &StepDecay, epoch: usize) -> f64 {
    let drops = (epoch / schedule.step.max(1)) as i32;
    schedule.lr0 * schedule.gamma.powi(drops)
}

/// Hyperparameters of [`train_unsupervised`](super::train_unsupervised).
///
/// Every field has a default, so a JSON config only needs the fields it
/// changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    /// Weight-decay coefficient. Biases are not decayed.
    pub lambda: f64,
    pub lr0: f64,
    pub lr_schedule: LrSchedule,
    /// Pairs per mini-batch for the Siamese and SFA modes.
    pub batch_pairs: usize,
    /// Quadruplets per mini-batch.
    pub batch_quads: usize,
    pub epochs: usize,
    /// Tuples sampled (with replacement) per epoch.
    pub tuples_per_epoch: usize,
    /// Neighbor window.
    pub w: usize,
    /// Non-neighbor offset.
    pub n: usize,
    pub delta: f64,
    pub alpha: f64,
    /// Share of positive pairs in the pair modes.
    pub positive_fraction: f64,
    /// Minimum anchor/negative gap in a concatenated long video; `None` is `2 n`.
    pub mu_gap: Option<usize>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Quadruplet,
            lambda: 5e-4,
            lr0: 0.001,
            lr_schedule: LrSchedule::default(),
            batch_pairs: 60,
            batch_quads: 20,
            epochs: 30,
            tuples_per_epoch: 10_000,
            w: 1,
            n: 20,
            delta: 1.0,
            alpha: 0.5,
            positive_fraction: 0.5,
            mu_gap: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let cfg: TrainConfig =
            serde_json::from_slice(bytes).map_err(|e| Error::malformed("training config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be ≥ 0, got {}", self.lambda));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return bad(format!("lr0 must be > 0, got {}", self.lr0));
        }
        if !(self.lr_schedule.gamma > 0.0 && self.lr_schedule.gamma <= 1.0) {
            return bad(format!("lr_schedule.gamma must be in (0, 1], got {}", self.lr_schedule.gamma));
        }
        if self.lr_schedule.step == Some(0) {
            return bad("lr_schedule.step must be ≥ 1".into());
        }
        if self.batch_pairs == 0 || self.batch_quads == 0 {
            return bad("batch sizes must be ≥ 1".into());
        }
        if self.w == 0 {
            return bad("w must be ≥ 1".into());
        }
        if self.mode == Mode::Quadruplet && self.n <= self.w {
            return bad(format!("quadruplet mode needs n > w (n = {}, w = {})", self.n, self.w));
        }
        if !(self.positive_fraction > 0.0 && self.positive_fraction < 1.0) {
            return bad(format!(
                "positive_fraction must be in (0, 1), got {}",
                self.positive_fraction
            ));
        }
        LossConfig::new(self.delta, self.alpha)?;
        Ok(())
    }

    pub fn loss_config(&self) -> LossConfig {
        LossConfig {
            delta: self.delta,
            alpha: self.alpha,
        }
    }

    pub fn sampler_params(&self) -> SamplerParams {
        let mut p = SamplerParams::new(self.w, self.n);
        if let Some(gap) = self.mu_gap {
            p.mu_min_gap = gap;
        }
        p
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            lr0: self.lr0,
            gamma: self.lr_schedule.gamma,
            step: self.lr_schedule.step.unwrap_or((self.epochs / 3).max(1)),
        }
    }

    pub fn batch_size(&self) -> usize {
        match self.mode {
            Mode::Quadruplet => self.batch_quads,
            Mode::Siamese | Mode::Sfa => self.batch_pairs,
        }
    }
}
