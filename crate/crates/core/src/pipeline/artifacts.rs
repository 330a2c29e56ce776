use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uq::Measure;

/// File locations under one output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Layout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn signals_dir(&self) -> PathBuf {
        self.root.join("signals")
    }

    pub fn dataset(&self, name: &str) -> PathBuf {
        self.root.join("data").join(format!("{name}.sds"))
    }

    pub fn preprocess_info(&self) -> PathBuf {
        self.root.join("data").join("preprocess.json")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.root.join("model").join("checkpoint.bin")
    }

    pub fn history(&self) -> PathBuf {
        self.root.join("model").join("history.csv")
    }

    pub fn val_uncertainty(&self) -> PathBuf {
        self.root.join("calibration").join("uncertainty_val.csv")
    }

    pub fn risk_coverage(&self, m: Measure) -> PathBuf {
        self.root.join("calibration").join(format!("risk_coverage_{}.csv", m.id()))
    }

    pub fn thresholds(&self) -> PathBuf {
        self.root.join("calibration").join("thresholds.csv")
    }

    pub fn eval_uncertainty(&self, set: &str) -> PathBuf {
        self.root.join("eval").join(format!("uncertainty_{set}.csv"))
    }

    pub fn roc(&self, set: &str, m: Measure) -> PathBuf {
        self.root.join("eval").join(format!("roc_{set}_{}.csv", m.id()))
    }

    pub fn summary(&self, source: OodSource) -> PathBuf {
        self.root.join("eval").join(format!("summary_{}.json", source.id()))
    }

    pub fn in_distribution(&self) -> PathBuf {
        self.root.join("eval").join("in_distribution.json")
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.json")
    }

    pub fn report(&self) -> PathBuf {
        self.root.join("report.txt")
    }
}

/// The three OOD experiment families.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodSource {
    Uniform,
    HeldOutClass,
    FaultInjected,
}

impl OodSource {
    pub const ALL: [OodSource; 3] = [OodSource::Uniform, OodSource::HeldOutClass, OodSource::FaultInjected];

    pub fn id(self) -> &'static str {
        match self {
            OodSource::Uniform => "uniform",
            OodSource::HeldOutClass => "held_out_class",
            OodSource::FaultInjected => "fault_injected",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            OodSource::Uniform => "uniform-noise OOD",
            OodSource::HeldOutClass => "held-out fault class",
            OodSource::FaultInjected => "sensor-fault-injected OOD",
        }
    }
}

pub(crate) fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    Ok(())
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    ensure_parent(path)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

pub(crate) fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMapEntry {
    pub original: usize,
    /// Index in the classifier head; `None` for the held-out class.
    pub dense: Option<usize>,
    pub condition: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub held_out: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessInfo {
    pub class_map: Vec<ClassMapEntry>,
    pub n_known_classes: usize,
    pub healthy_dense: usize,
    /// Peak-to-peak over every in-distribution segment.
    pub p2p: f64,
    pub sample_rate: f64,
    pub counts: SplitCounts,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureValue {
    pub measure: Measure,
    pub value: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateMetrics {
    pub measure: Measure,
    pub threshold: f64,
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    pub tpr: f64,
    pub fpr: f64,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskLevelMetrics {
    pub risk_level: f64,
    pub measures: Vec<GateMetrics>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub name: String,
    pub n_in_distribution: usize,
    pub n_ood: usize,
    pub auroc: Vec<MeasureValue>,
    pub risk_levels: Vec<RiskLevelMetrics>,
}

impl SetSummary {
    pub fn auroc(&self, m: Measure) -> Option<f64> {
        self.auroc.iter().find(|v| v.measure == m).map(|v| v.value)
    }

    pub fn at(&self, risk: f64, m: Measure) -> Option<&GateMetrics> {
        self.risk_levels
            .iter()
            .find(|r| (r.risk_level - risk).abs() < 1e-12)?
            .measures
            .iter()
            .find(|g| g.measure == m)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationSummary {
    pub source: OodSource,
    pub mc_samples: usize,
    pub operating_risk: f64,
    pub sets: Vec<SetSummary>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InDistributionSummary {
    pub n_examples: usize,
    /// Accuracy of the arg-max of the Monte-Carlo mean probability.
    pub accuracy: f64,
    pub mc_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub seed: u64,
    pub config_sha256: String,
    pub class_map: Vec<ClassMapEntry>,
    pub artifacts: Vec<ArtifactEntry>,
}

/// Paths of every machine-readable artifact a full run emits.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportBundle {
    pub root: PathBuf,
    pub uncertainty_csvs: Vec<PathBuf>,
    pub risk_coverage_csvs: Vec<PathBuf>,
    pub threshold_table: PathBuf,
    pub roc_csvs: Vec<PathBuf>,
    pub in_distribution: PathBuf,
    pub summaries: Vec<PathBuf>,
    pub manifest: PathBuf,
}

impl ReportBundle {
    pub fn all_paths(&self) -> Vec<&Path> {
        let mut v: Vec<&Path> = Vec::new();
        v.extend(self.uncertainty_csvs.iter().map(PathBuf::as_path));
        v.extend(self.risk_coverage_csvs.iter().map(PathBuf::as_path));
        v.push(&self.threshold_table);
        v.extend(self.roc_csvs.iter().map(PathBuf::as_path));
        v.push(&self.in_distribution);
        v.extend(self.summaries.iter().map(PathBuf::as_path));
        v.push(&self.manifest);
        v
    }
}
