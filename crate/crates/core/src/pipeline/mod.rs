//! End-to-end experiment: synthesise or ingest signals, build spectrogram
//! datasets, train, calibrate thresholds, build OOD sets, evaluate and
//! report. Every stage persists its outputs under one directory.

mod artifacts;
mod config;
mod report;
mod stages;

pub use artifacts::{
    ArtifactEntry, ClassMapEntry, EvaluationSummary, GateMetrics, InDistributionSummary, Layout, Manifest,
    MeasureValue, OodSource, PreprocessInfo, ReportBundle, RiskLevelMetrics, SetSummary, SplitCounts,
};
pub use config::{
    default_risk_levels, CalibrationConfig, DataConfig, DataSource, EvaluationConfig, ExperimentConfig,
    FaultSetting, ModelConfig, SplitConfig, UqConfig, SEED_ENV,
};
pub use report::emit_report;
pub use stages::{run_pipeline, Pipeline};
