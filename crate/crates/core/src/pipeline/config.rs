use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::bayes::{NetworkSpec, PriorSpec, TrainConfig};
use crate::error::{Error, Result};
use crate::signals::{FaultKind, SpectrogramConfig};
use crate::uq::{Measure, DEFAULT_MC_SAMPLES};

/// Environment variable that overrides the configured seed.
pub const SEED_ENV: &str = "BAYESDIAG_SEED";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
    pub uq: UqConfig,
    pub calibration: CalibrationConfig,
    pub evaluation: EvaluationConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DataSource {
    Synthetic {
        n_classes: usize,
        signals_per_class: usize,
        duration_s: f64,
    },
    /// Raw `.f32` or `.csv` signals, each with a JSON sidecar.
    Files { paths: Vec<PathBuf> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    pub spectrogram: SpectrogramConfig,
    /// Original class label withheld entirely as the unknown-fault set.
    pub held_out_class: Option<usize>,
    /// Original label of the healthy condition.
    pub healthy_class: usize,
    /// Keep at most this many segments per class (first in signal order).
    pub max_segments_per_class: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    /// Fraction of in-distribution segments used for training+validation.
    pub train_ratio: f64,
    /// Fraction of that portion used for training; the rest validates.
    pub train_val_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Defaults to the standard architecture sized to the known classes.
    pub network: Option<NetworkSpec>,
    pub prior: PriorSpec,
    pub train: TrainConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UqConfig {
    pub mc_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub measures: Vec<Measure>,
    pub risk_levels: Vec<f64>,
    /// Cap on validation examples passed through Monte-Carlo prediction.
    pub max_examples: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultSetting {
    pub kind: FaultKind,
    pub tau: f64,
    #[serde(default = "default_snr")]
    pub snr_db: f64,
}

fn default_snr() -> f64 {
    5.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub uniform: bool,
    pub held_out: bool,
    pub faults: Vec<FaultSetting>,
    /// Risk level whose thresholds drive the headline gate.
    pub operating_risk: f64,
    pub max_id_examples: Option<usize>,
    pub max_ood_examples: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 2024,
            data: DataConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
            uq: UqConfig::default(),
            calibration: CalibrationConfig::default(),
            evaluation: EvaluationConfig::default(),
        }
    }
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            // 40 signals × 51,200 samples = 2,000 segments per class.
            source: DataSource::Synthetic {
                n_classes: 5,
                signals_per_class: 40,
                duration_s: 0.256,
            },
            spectrogram: SpectrogramConfig::default(),
            held_out_class: Some(3),
            healthy_class: 0,
            max_segments_per_class: None,
        }
    }
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_ratio: 0.7,
            train_val_ratio: 0.7,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            network: None,
            prior: PriorSpec::default(),
            train: TrainConfig::default(),
        }
    }
}

impl Default for UqConfig {
    fn default() -> Self {
        UqConfig {
            mc_samples: DEFAULT_MC_SAMPLES,
        }
    }
}

/// 0.005, 0.010, ..., 0.035.
pub fn default_risk_levels() -> Vec<f64> {
    (1..=7).map(|i| i as f64 * 0.005).collect()
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            measures: Measure::ALL.to_vec(),
            risk_levels: default_risk_levels(),
            max_examples: None,
        }
    }
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        EvaluationConfig {
            uniform: true,
            held_out: true,
            faults: vec![
                FaultSetting { kind: FaultKind::Bias, tau: 0.5, snr_db: 5.0 },
                FaultSetting { kind: FaultKind::Drift, tau: 8.0, snr_db: 5.0 },
                FaultSetting { kind: FaultKind::Scaling, tau: 3.0, snr_db: 5.0 },
                FaultSetting { kind: FaultKind::Precision, tau: 1.0, snr_db: 5.0 },
            ],
            operating_risk: 0.03,
            max_id_examples: None,
            max_ood_examples: None,
        }
    }
}

fn invalid(field: &str, reason: impl Into<String>) -> Error {
    Error::validation(field, reason)
}

fn unit_open(field: &str, v: f64) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(invalid(field, format!("must lie in (0, 1), got {v}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid("config", e.to_string()))
    }

    /// Applies `--seed`, then the environment override, in that order of
    /// precedence.
    pub fn with_seed_override(mut self, cli_seed: Option<u64>) -> Result<Self> {
        if let Some(s) = cli_seed {
            self.seed = s;
        } else if let Ok(v) = std::env::var(SEED_ENV) {
            self.seed = v
                .trim()
                .parse()
                .map_err(|_| invalid("seed", format!("{SEED_ENV}=`{v}` is not a u64")))?;
        }
        Ok(self)
    }

    /// Labels in signal order that survive the held-out split.
    pub fn n_original_classes(&self) -> Option<usize> {
        match &self.data.source {
            DataSource::Synthetic { n_classes, .. } => Some(*n_classes),
            DataSource::Files { .. } => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.data.source {
            DataSource::Synthetic {
                n_classes,
                signals_per_class,
                duration_s,
            } => {
                if *n_classes < 2 {
                    return Err(invalid("data.source.n_classes", "need at least 2 classes"));
                }
                if *signals_per_class == 0 {
                    return Err(invalid("data.source.signals_per_class", "must be positive"));
                }
                if !(*duration_s > 0.0) || !duration_s.is_finite() {
                    return Err(invalid("data.source.duration_s", "must be positive"));
                }
            }
            DataSource::Files { paths } => {
                if paths.is_empty() {
                    return Err(invalid("data.source.paths", "no signal files listed"));
                }
            }
        }
        self.data.spectrogram.validate()?;
        if let Some(n) = self.n_original_classes() {
            if self.data.healthy_class >= n {
                return Err(invalid("data.healthy_class", "out of range"));
            }
            if self.data.held_out_class.is_some_and(|h| h >= n) {
                return Err(invalid("data.held_out_class", "out of range"));
            }
            let known = n - usize::from(self.data.held_out_class.is_some());
            if known < 2 {
                return Err(invalid("data.held_out_class", "fewer than 2 known classes remain"));
            }
        }
        if self.data.held_out_class == Some(self.data.healthy_class) {
            return Err(invalid("data.held_out_class", "cannot hold out the healthy class"));
        }
        if self.data.max_segments_per_class == Some(0) {
            return Err(invalid("data.max_segments_per_class", "must be positive"));
        }
        unit_open("split.train_ratio", self.split.train_ratio)?;
        unit_open("split.train_val_ratio", self.split.train_val_ratio)?;

        let t = &self.model.train;
        if t.epochs == 0 {
            return Err(invalid("model.train.epochs", "must be at least 1"));
        }
        if t.batch_size == 0 {
            return Err(invalid("model.train.batch_size", "must be positive"));
        }
        if !(t.learning_rate > 0.0) || !t.learning_rate.is_finite() {
            return Err(invalid("model.train.learning_rate", "must be positive"));
        }
        if t.kl_scale.is_some_and(|s| !(s > 0.0) || !s.is_finite()) {
            return Err(invalid("model.train.kl_scale", "must be positive"));
        }
        if !(self.model.prior.std > 0.0) || !self.model.prior.std.is_finite() || !self.model.prior.mean.is_finite() {
            return Err(invalid("model.prior.std", "prior needs finite mean and std > 0"));
        }
        if let Some(net) = &self.model.network {
            net.trainable_layers()
                .map_err(|e| invalid("model.network", e.to_string()))?;
            if net.input != self.data.spectrogram.image_extents() {
                return Err(invalid("model.network.input", "does not match the spectrogram extents"));
            }
        }
        if self.uq.mc_samples < 2 {
            return Err(invalid("uq.mc_samples", "need at least 2 samples"));
        }

        let c = &self.calibration;
        if c.measures.is_empty() {
            return Err(invalid("calibration.measures", "at least one measure"));
        }
        if c.risk_levels.is_empty() {
            return Err(invalid("calibration.risk_levels", "at least one risk level"));
        }
        if c.risk_levels.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(invalid("calibration.risk_levels", "levels must lie in [0, 1]"));
        }
        if c.risk_levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("calibration.risk_levels", "must be strictly increasing"));
        }
        if c.max_examples == Some(0) {
            return Err(invalid("calibration.max_examples", "must be positive"));
        }

        let e = &self.evaluation;
        if !c.risk_levels.iter().any(|r| (r - e.operating_risk).abs() < 1e-12) {
            return Err(invalid("evaluation.operating_risk", "must be one of the calibration risk levels"));
        }
        if e.held_out && self.data.held_out_class.is_none() {
            return Err(invalid("evaluation.held_out", "no held-out class configured"));
        }
        for (i, f) in e.faults.iter().enumerate() {
            if !f.tau.is_finite() {
                return Err(invalid(&format!("evaluation.faults[{i}].tau"), "must be finite"));
            }
            if f.snr_db.is_nan() || f.snr_db == f64::NEG_INFINITY {
                return Err(invalid(&format!("evaluation.faults[{i}].snr_db"), "must be finite or +inf"));
            }
        }
        for (i, f) in e.faults.iter().enumerate() {
            if e.faults[..i].iter().any(|g| g.kind == f.kind) {
                return Err(invalid("evaluation.faults", format!("duplicate fault kind `{}`", f.kind)));
            }
        }
        if e.max_id_examples == Some(0) || e.max_ood_examples == Some(0) {
            return Err(invalid("evaluation.max_*_examples", "caps must be positive"));
        }
        Ok(())
    }
}
