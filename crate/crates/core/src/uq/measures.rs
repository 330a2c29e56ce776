use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::bayes::argmax;
use crate::diffcore::{Array, PROB_FLOOR};
use crate::error::{Error, Result};

/// `M` Monte-Carlo class-probability vectors, one per row.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictiveSamples {
    probs: Array,
}

impl PredictiveSamples {
    /// Rows must be nonnegative and sum to 1 within 1e-9.
    pub fn new(probs: Array) -> Result<Self> {
        if probs.ndim() != 2 || probs.extents()[0] == 0 || probs.extents()[1] == 0 {
            return Err(Error::shape(format!(
                "predictive samples must be a nonempty [M,N] matrix, got {:?}",
                probs.extents()
            )));
        }
        for m in 0..probs.extents()[0] {
            let row = probs.row(m);
            if row.iter().any(|&p| !(p >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::contract(format!("sample row {m} is not a distribution")));
            }
        }
        Ok(PredictiveSamples { probs })
    }

    pub fn probs(&self) -> &Array {
        &self.probs
    }

    pub fn samples(&self) -> usize {
        self.probs.extents()[0]
    }

    pub fn n_classes(&self) -> usize {
        self.probs.extents()[1]
    }

    fn column(&self, i: usize) -> impl Iterator<Item = f64> + '_ {
        let n = self.n_classes();
        self.probs.data().iter().skip(i).step_by(n).copied()
    }

    fn require_two(&self) -> Result<()> {
        if self.samples() < 2 {
            return Err(Error::contract("sample variance needs at least 2 samples"));
        }
        Ok(())
    }

    /// Per-class sample variances with the `M - 1` denominator.
    fn class_variances(&self) -> Result<Vec<f64>> {
        self.require_two()?;
        let p_star = mean_probability(self);
        let denom = (self.samples() - 1) as f64;
        Ok(p_star
            .iter()
            .enumerate()
            .map(|(i, &mean)| self.column(i).map(|p| (p - mean) * (p - mean)).sum::<f64>() / denom)
            .collect())
    }
}

/// Column means, accumulated as offsets from the first sample so identical
/// rows reproduce that row exactly.
pub fn mean_probability(samples: &PredictiveSamples) -> Vec<f64> {
    let m = samples.samples() as f64;
    let first = samples.probs.row(0);
    (0..samples.n_classes())
        .map(|i| first[i] + samples.column(i).map(|p| p - first[i]).sum::<f64>() / m)
        .collect()
}

/// Shannon entropy in bits; zero entries contribute nothing.
pub fn predictive_entropy(p_star: &[f64]) -> f64 {
    let h: f64 = p_star
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.max(PROB_FLOOR).log2())
        .sum();
    h.max(0.0)
}

pub fn total_std(samples: &PredictiveSamples) -> Result<f64> {
    Ok(samples.class_variances()?.iter().sum::<f64>().sqrt())
}

pub fn classwise_std_max(samples: &PredictiveSamples) -> Result<f64> {
    Ok(samples
        .class_variances()?
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v))
        .sqrt())
}

pub fn classwise_range_max(samples: &PredictiveSamples) -> f64 {
    (0..samples.n_classes())
        .map(|i| {
            let (lo, hi) = samples
                .column(i)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p), hi.max(p)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

/// The four scalar uncertainty measures, in report order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Entropy,
    TotalStd,
    ClasswiseStdMax,
    ClasswiseRangeMax,
}

impl Measure {
    pub const ALL: [Measure; 4] = [
        Measure::Entropy,
        Measure::TotalStd,
        Measure::ClasswiseStdMax,
        Measure::ClasswiseRangeMax,
    ];

    /// Identifier used in file names and CSV headers.
    pub fn id(self) -> &'static str {
        match self {
            Measure::Entropy => "entropy",
            Measure::TotalStd => "total_std",
            Measure::ClasswiseStdMax => "classwise_std_max",
            Measure::ClasswiseRangeMax => "classwise_range_max",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Measure::Entropy => "entropy",
            Measure::TotalStd => "total std",
            Measure::ClasswiseStdMax => "class-wise std",
            Measure::ClasswiseRangeMax => "class-wise range",
        }
    }
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Measure::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::validation("measure", format!("unknown measure `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintySummary {
    pub mean_prob: Vec<f64>,
    /// Bits.
    pub entropy: f64,
    pub total_std: f64,
    pub classwise_std_max: f64,
    pub classwise_range_max: f64,
    pub predicted_class: usize,
}

impl UncertaintySummary {
    pub fn from_samples(samples: &PredictiveSamples) -> Result<Self> {
        let mean_prob = mean_probability(samples);
        Ok(UncertaintySummary {
            entropy: predictive_entropy(&mean_prob),
            total_std: total_std(samples)?,
            classwise_std_max: classwise_std_max(samples)?,
            classwise_range_max: classwise_range_max(samples),
            predicted_class: argmax(&mean_prob),
            mean_prob,
        })
    }

    pub fn measure(&self, m: Measure) -> f64 {
        match m {
            Measure::Entropy => self.entropy,
            Measure::TotalStd => self.total_std,
            Measure::ClasswiseStdMax => self.classwise_std_max,
            Measure::ClasswiseRangeMax => self.classwise_range_max,
        }
    }
}
