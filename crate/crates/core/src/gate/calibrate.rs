//! Risk-coverage calibration.
//!
//! Examples are sorted by ascending uncertainty; every prefix gives a
//! coverage (fraction retained) and a risk (error rate inside the prefix).
//! Examples sharing an uncertainty value can only be kept or dropped
//! together by a threshold, so the curve has one point per distinct value.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uq::Measure;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub coverage: f64,
    pub risk: f64,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RiskCoverageCurve {
    pub measure: Measure,
    /// Strictly increasing coverage, ending at 1.
    pub points: Vec<CurvePoint>,
}

pub fn risk_coverage_curve(uncertainties: &[f64], correct: &[bool], measure: Measure) -> Result<RiskCoverageCurve> {
    if uncertainties.is_empty() {
        return Err(Error::contract("risk-coverage curve of an empty set"));
    }
    if uncertainties.len() != correct.len() {
        return Err(Error::contract("uncertainties and correctness differ in length"));
    }
    if uncertainties.iter().any(|u| u.is_nan()) {
        return Err(Error::numeric("NaN uncertainty"));
    }
    let n = uncertainties.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| uncertainties[a].total_cmp(&uncertainties[b]));

    let mut points = Vec::new();
    let mut wrong = 0usize;
    for (k, &i) in order.iter().enumerate() {
        wrong += usize::from(!correct[i]);
        let last_of_tie = order
            .get(k + 1)
            .is_none_or(|&j| uncertainties[j] != uncertainties[i]);
        if last_of_tie {
            let kept = k + 1;
            points.push(CurvePoint {
                coverage: kept as f64 / n as f64,
                risk: wrong as f64 / kept as f64,
                threshold: uncertainties[i],
            });
        }
    }
    Ok(RiskCoverageCurve { measure, points })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSelection {
    pub threshold: f64,
    /// Coverage of the chosen point; 0 when no point meets the target.
    pub coverage: f64,
}

/// Largest-coverage point whose risk does not exceed `target_risk`. Falls
/// back to the smallest uncertainty with zero reported coverage.
pub fn select_threshold(curve: &RiskCoverageCurve, target_risk: f64) -> ThresholdSelection {
    match curve.points.iter().rev().find(|p| p.risk <= target_risk) {
        Some(p) => ThresholdSelection {
            threshold: p.threshold,
            coverage: p.coverage,
        },
        None => ThresholdSelection {
            threshold: curve.points.first().map_or(f64::NEG_INFINITY, |p| p.threshold),
            coverage: 0.0,
        },
    }
}

pub fn curve_csv(curve: &RiskCoverageCurve) -> String {
    let mut s = String::from("coverage,risk,threshold\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{},{}", p.coverage, p.risk, p.threshold);
    }
    s
}

pub fn read_curve_csv(path: &Path, measure: Measure) -> Result<RiskCoverageCurve> {
    let rows = read_numeric_csv(path, &["coverage", "risk", "threshold"])?;
    Ok(RiskCoverageCurve {
        measure,
        points: rows
            .into_iter()
            .map(|r| CurvePoint {
                coverage: r[0],
                risk: r[1],
                threshold: r[2],
            })
            .collect(),
    })
}

pub(crate) fn read_numeric_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    if lines.next().map(|h| h.split(',').collect::<Vec<_>>()) != Some(header.to_vec()) {
        return Err(Error::format(path, "unexpected header"));
    }
    lines
        .enumerate()
        .map(|(i, l)| {
            let row = l
                .split(',')
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| Error::format(path, format!("line {}: bad number", i + 2)))?;
            if row.len() != header.len() {
                return Err(Error::format(path, format!("line {}: wrong field count", i + 2)));
            }
            Ok(row)
        })
        .collect()
}

/// Selected thresholds, one row per measure and one column per risk level.
#[derive(Clone, Debug, PartialEq)]
pub struct ThresholdTable {
    pub measures: Vec<Measure>,
    pub risk_levels: Vec<f64>,
    pub cells: Vec<Vec<ThresholdSelection>>,
}

impl ThresholdTable {
    pub fn build(curves: &[RiskCoverageCurve], risk_levels: &[f64]) -> Self {
        ThresholdTable {
            measures: curves.iter().map(|c| c.measure).collect(),
            risk_levels: risk_levels.to_vec(),
            cells: curves
                .iter()
                .map(|c| risk_levels.iter().map(|&r| select_threshold(c, r)).collect())
                .collect(),
        }
    }

    pub fn threshold(&self, measure: Measure, level: usize) -> Option<f64> {
        let row = self.measures.iter().position(|&m| m == measure)?;
        Some(self.cells[row].get(level)?.threshold)
    }

    pub fn level_index(&self, risk: f64) -> Option<usize> {
        self.risk_levels.iter().position(|&r| (r - risk).abs() < 1e-12)
    }

    /// `measure,<risk>,...` header, then one row of thresholds per measure.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("measure");
        for r in &self.risk_levels {
            let _ = write!(s, ",{r}");
        }
        s.push('\n');
        for (m, row) in self.measures.iter().zip(&self.cells) {
            s.push_str(m.id());
            for c in row {
                let _ = write!(s, ",{}", c.threshold);
            }
            s.push('\n');
        }
        s
    }

    /// Reads thresholds back; coverages are not stored and come back as NaN.
    pub fn from_csv(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let bad = |why: &str| Error::format(path, why.to_string());
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next().ok_or_else(|| bad("empty file"))?.split(',').collect();
        if header.first() != Some(&"measure") {
            return Err(bad("header must start with `measure`"));
        }
        let risk_levels = header[1..]
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| bad("bad risk level")))
            .collect::<Result<Vec<_>>>()?;
        let mut measures = Vec::new();
        let mut cells = Vec::new();
        for l in lines {
            let f: Vec<&str> = l.split(',').collect();
            if f.len() != header.len() {
                return Err(bad("wrong field count"));
            }
            measures.push(f[0].parse::<Measure>().map_err(|_| bad("unknown measure"))?);
            cells.push(
                f[1..]
                    .iter()
                    .map(|s| {
                        s.parse::<f64>().map(|threshold| ThresholdSelection {
                            threshold,
                            coverage: f64::NAN,
                        })
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| bad("bad threshold"))?,
            );
        }
        Ok(ThresholdTable {
            measures,
            risk_levels,
            cells,
        })
    }
}
