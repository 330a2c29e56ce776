use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uq::{Measure, UncertaintySummary};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    /// Prediction accepted; carries the arg-max class of the mean probability.
    Trusted(usize),
    /// Deferred to expert review.
    Flagged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GateDecision {
    pub verdict: Verdict,
    pub value: f64,
    pub threshold: f64,
}

impl GateDecision {
    pub fn is_trusted(&self) -> bool {
        matches!(self.verdict, Verdict::Trusted(_))
    }
}

/// Trusted iff the measure is at or below the threshold.
pub fn gate_decision(summary: &UncertaintySummary, measure: Measure, threshold: f64) -> GateDecision {
    let value = summary.measure(measure);
    GateDecision {
        verdict: if value <= threshold {
            Verdict::Trusted(summary.predicted_class)
        } else {
            Verdict::Flagged
        },
        value,
        threshold,
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OodConfusion {
    pub tp: usize,
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
    pub tpr: f64,
    pub fpr: f64,
}

/// In-distribution examples are the positives: trusting one is a true
/// positive, trusting an OOD example is a false positive.
pub fn ood_confusion(decisions: &[GateDecision], is_in_distribution: &[bool]) -> Result<OodConfusion> {
    if decisions.len() != is_in_distribution.len() {
        return Err(Error::contract("decisions and ID flags differ in length"));
    }
    let (mut tp, mut fn_, mut fp, mut tn) = (0, 0, 0, 0);
    for (d, &id) in decisions.iter().zip(is_in_distribution) {
        match (id, d.is_trusted()) {
            (true, true) => tp += 1,
            (true, false) => fn_ += 1,
            (false, true) => fp += 1,
            (false, false) => tn += 1,
        }
    }
    Ok(OodConfusion {
        tp,
        fn_,
        fp,
        tn,
        tpr: ratio(tp, tp + fn_),
        fpr: ratio(fp, fp + tn),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FaultCounts {
    pub class: usize,
    pub tp: usize,
    pub fp_id: usize,
    pub fp_ood: usize,
    pub fn_: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub per_fault: Vec<FaultCounts>,
    pub precision: f64,
    pub recall: f64,
    pub f_measure: f64,
}

/// Micro-averaged precision, recall and F over fault classes, counting only
/// trusted decisions.
///
/// `FN_g` counts fault-g examples predicted healthy; a fault-g example
/// predicted as another fault appears in that fault's `FP^ID` only.
/// `true_labels` entries for OOD examples are ignored.
pub fn micro_prf(
    decisions: &[GateDecision],
    true_labels: &[Option<usize>],
    is_in_distribution: &[bool],
    healthy_class: usize,
    n_classes: usize,
) -> Result<DiagnosisReport> {
    if decisions.len() != true_labels.len() || decisions.len() != is_in_distribution.len() {
        return Err(Error::contract("micro_prf inputs differ in length"));
    }
    if healthy_class >= n_classes {
        return Err(Error::contract(format!("healthy class {healthy_class} out of range")));
    }
    let mut counts: Vec<FaultCounts> = (0..n_classes)
        .map(|class| FaultCounts { class, ..FaultCounts::default() })
        .collect();
    for ((d, label), &id) in decisions.iter().zip(true_labels).zip(is_in_distribution) {
        let truth = match (id, *label) {
            (true, Some(t)) if t < n_classes => Some(t),
            (true, _) => return Err(Error::contract("in-distribution example without a valid label")),
            (false, _) => None,
        };
        let Verdict::Trusted(pred) = d.verdict else { continue };
        if pred >= n_classes {
            return Err(Error::contract(format!("predicted class {pred} out of range")));
        }
        match truth {
            Some(t) if t == pred => counts[t].tp += 1,
            Some(t) => {
                counts[pred].fp_id += 1;
                if pred == healthy_class {
                    counts[t].fn_ += 1;
                }
            }
            None => counts[pred].fp_ood += 1,
        }
    }
    counts.remove(healthy_class);
    let tp: usize = counts.iter().map(|c| c.tp).sum();
    let fp: usize = counts.iter().map(|c| c.fp_id + c.fp_ood).sum();
    let fn_: usize = counts.iter().map(|c| c.fn_).sum();
    let precision = ratio(tp, tp + fp);
    let recall = ratio(tp, tp + fn_);
    let f_measure = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(DiagnosisReport {
        per_fault: counts,
        precision,
        recall,
        f_measure,
    })
}
