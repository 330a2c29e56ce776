//! Uncertainty gating: risk-coverage threshold calibration, the
//! trusted/flagged decision, and OOD and diagnosis metrics.

mod calibrate;
mod decision;
mod roc;

pub use calibrate::{
    curve_csv, read_curve_csv, risk_coverage_curve, select_threshold, CurvePoint, RiskCoverageCurve,
    ThresholdSelection, ThresholdTable,
};
pub use decision::{
    gate_decision, micro_prf, ood_confusion, DiagnosisReport, FaultCounts, GateDecision, OodConfusion, Verdict,
};
pub use roc::{read_roc_csv, roc_auroc, roc_csv, RocCurve, RocPoint};
