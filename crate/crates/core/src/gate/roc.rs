use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::calibrate::read_numeric_csv;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub tpr: f64,
    pub fpr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RocCurve {
    /// From the `-inf` sentinel (nothing accepted) to the largest score
    /// (everything accepted).
    pub points: Vec<RocPoint>,
    pub auroc: f64,
}

/// ROC of the rule "in-distribution iff uncertainty ≤ t", swept over every
/// distinct score. The trapezoidal area equals
/// `P(U_ood > U_id) + ½·P(U_ood = U_id)`.
pub fn roc_auroc(uncertainties: &[f64], is_in_distribution: &[bool]) -> Result<RocCurve> {
    if uncertainties.len() != is_in_distribution.len() {
        return Err(Error::contract("scores and ID flags differ in length"));
    }
    if uncertainties.iter().any(|u| u.is_nan()) {
        return Err(Error::numeric("NaN uncertainty"));
    }
    let n_id = is_in_distribution.iter().filter(|&&b| b).count();
    let n_ood = uncertainties.len() - n_id;
    if n_id == 0 || n_ood == 0 {
        return Err(Error::contract("ROC needs both in-distribution and OOD examples"));
    }
    let mut order: Vec<usize> = (0..uncertainties.len()).collect();
    order.sort_by(|&a, &b| uncertainties[a].total_cmp(&uncertainties[b]));

    let mut points = vec![RocPoint {
        threshold: f64::NEG_INFINITY,
        tpr: 0.0,
        fpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area2 = 0.0; // twice the area, in units of n_id·n_ood
    for (k, &i) in order.iter().enumerate() {
        if is_in_distribution[i] {
            tp += 1;
        } else {
            fp += 1;
        }
        if order.get(k + 1).is_none_or(|&j| uncertainties[j] != uncertainties[i]) {
            let prev = points.last().expect("sentinel");
            let (prev_tp, prev_fp) = (prev.tpr * n_id as f64, prev.fpr * n_ood as f64);
            area2 += (fp as f64 - prev_fp) * (tp as f64 + prev_tp);
            points.push(RocPoint {
                threshold: uncertainties[i],
                tpr: tp as f64 / n_id as f64,
                fpr: fp as f64 / n_ood as f64,
            });
        }
    }
    let auroc = area2 / (2.0 * n_id as f64 * n_ood as f64);
    Ok(RocCurve { points, auroc })
}

pub fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("threshold,tpr,fpr\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.threshold, p.tpr, p.fpr);
    }
    s
}

pub fn read_roc_csv(path: &Path) -> Result<Vec<RocPoint>> {
    Ok(read_numeric_csv(path, &["threshold", "tpr", "fpr"])?
        .into_iter()
        .map(|r| RocPoint {
            threshold: r[0],
            tpr: r[1],
            fpr: r[2],
        })
        .collect())
}
