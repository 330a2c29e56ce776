use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::rng::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    Bias,
    Drift,
    Scaling,
    Precision,
}

impl FaultKind {
    pub const ALL: [FaultKind; 4] = [FaultKind::Bias, FaultKind::Drift, FaultKind::Scaling, FaultKind::Precision];

    pub fn id(self) -> &'static str {
        match self {
            FaultKind::Bias => "bias",
            FaultKind::Drift => "drift",
            FaultKind::Scaling => "scaling",
            FaultKind::Precision => "precision",
        }
    }
}

impl fmt::Display for FaultKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for FaultKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        FaultKind::ALL
            .into_iter()
            .find(|k| k.id() == s)
            .ok_or_else(|| Error::contract(format!("unknown fault kind `{s}`")))
    }
}

fn default_snr() -> f64 {
    5.0
}

/// One sensor fault. `tau` is the offset fraction of p2p (bias), the slope
/// in units per second (drift), the gain (scaling) or the noise std as a
/// fraction of p2p (precision).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaultSpec {
    pub kind: FaultKind,
    pub tau: f64,
    /// `+inf` disables parameter noise.
    #[serde(default = "default_snr")]
    pub snr_db: f64,
    #[serde(default)]
    pub p2p_reference: f64,
}

impl FaultSpec {
    pub fn new(kind: FaultKind, tau: f64, p2p_reference: f64) -> Self {
        FaultSpec {
            kind,
            tau,
            snr_db: default_snr(),
            p2p_reference,
        }
    }

    /// Bias 0.5, drift 8, scaling 3, precision 1.
    pub fn reference_set(p2p: f64) -> Vec<FaultSpec> {
        vec![
            FaultSpec::new(FaultKind::Bias, 0.5, p2p),
            FaultSpec::new(FaultKind::Drift, 8.0, p2p),
            FaultSpec::new(FaultKind::Scaling, 3.0, p2p),
            FaultSpec::new(FaultKind::Precision, 1.0, p2p),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return Err(Error::contract(format!("snr_db must be finite or +inf, got {}", self.snr_db)));
        }
        if !self.tau.is_finite() {
            return Err(Error::contract("tau must be finite"));
        }
        let needs_p2p = matches!(self.kind, FaultKind::Bias | FaultKind::Precision);
        if needs_p2p && !(self.p2p_reference > 0.0) {
            return Err(Error::contract(format!(
                "{} fault needs p2p_reference > 0, got {}",
                self.kind, self.p2p_reference
            )));
        }
        Ok(())
    }

    /// Standard deviation of the per-sample noise on the nominal parameter.
    pub fn parameter_noise_std(&self, nominal: f64) -> f64 {
        (nominal * nominal / 10f64.powf(self.snr_db / 10.0)).sqrt()
    }
}

/// Corrupts a segment with a sensor fault starting at its first sample.
pub fn inject_fault(segment: &Array, spec: &FaultSpec, sample_rate: f64, rng: &mut Rng) -> Result<Array> {
    spec.validate()?;
    if !(sample_rate > 0.0) {
        return Err(Error::contract("sample rate must be positive"));
    }
    let mut noise = |std: f64| -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        std * z
    };
    let x = segment.data();
    let y: Vec<f64> = match spec.kind {
        FaultKind::Bias => {
            let b = spec.tau * spec.p2p_reference;
            let s = spec.parameter_noise_std(b);
            x.iter().map(|&v| v + (b + noise(s))).collect()
        }
        FaultKind::Drift => {
            let d = spec.tau;
            let s = spec.parameter_noise_std(d);
            x.iter()
                .enumerate()
                .map(|(k, &v)| v + (d + noise(s)) * (k as f64 / sample_rate))
                .collect()
        }
        FaultKind::Scaling => {
            let s = spec.parameter_noise_std(spec.tau);
            x.iter().map(|&v| (spec.tau + noise(s)) * v).collect()
        }
        FaultKind::Precision => {
            let s = spec.tau * spec.p2p_reference;
            x.iter().map(|&v| v + noise(s)).collect()
        }
    };
    Array::new(segment.extents().to_vec(), y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn quiet(kind: FaultKind, tau: f64) -> FaultSpec {
        FaultSpec {
            kind,
            tau,
            snr_db: f64::INFINITY,
            p2p_reference: 0.0753,
        }
    }

    #[test]
    fn noise_free_examples() {
        let x = Array::from_vec((0..1024).map(|i| (i as f64 * 0.01).sin() * 0.02).collect());
        let mut r = seeded(0);
        let b = inject_fault(&x, &quiet(FaultKind::Bias, 0.5), 200_000.0, &mut r).unwrap();
        for (y, v) in b.data().iter().zip(x.data()) {
            assert!((y - v - 0.037_65).abs() < 1e-15);
        }
        let d = inject_fault(&x, &quiet(FaultKind::Drift, 8.0), 200_000.0, &mut r).unwrap();
        assert!((d.data()[1023] - x.data()[1023] - 0.040_92).abs() < 1e-15);
        let s = inject_fault(&x, &quiet(FaultKind::Scaling, 3.0), 200_000.0, &mut r).unwrap();
        assert!(s.data().iter().zip(x.data()).all(|(y, v)| *y == 3.0 * v));
    }

    #[test]
    fn same_seed_same_output() {
        let x = Array::from_vec(vec![0.1; 64]);
        let spec = FaultSpec::new(FaultKind::Precision, 1.0, 0.0753);
        let a = inject_fault(&x, &spec, 1000.0, &mut seeded(4)).unwrap();
        assert_eq!(a, inject_fault(&x, &spec, 1000.0, &mut seeded(4)).unwrap());
    }

    #[test]
    fn invalid_specs() {
        assert!(matches!("wobble".parse::<FaultKind>(), Err(Error::Contract(_))));
        let mut s = FaultSpec::new(FaultKind::Bias, 0.5, 0.0);
        assert!(s.validate().is_err());
        s.p2p_reference = 1.0;
        s.snr_db = f64::NAN;
        assert!(s.validate().is_err());
        assert!(FaultSpec::new(FaultKind::Drift, 8.0, 0.0).validate().is_ok());
    }
}
