use serde::{Deserialize, Serialize};

use crate::diffcore::{kl_sum, softplus, Array};
use crate::error::{Error, Result};

/// Mean-field Gaussian posterior over one weight tensor, with
/// `sigma = softplus(rho)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianVariational {
    pub mu: Array,
    pub rho: Array,
}

impl GaussianVariational {
    pub fn new(mu: Array, rho: Array) -> Result<Self> {
        if mu.extents() != rho.extents() {
            return Err(Error::shape(format!(
                "mu {:?} and rho {:?} must share extents",
                mu.extents(),
                rho.extents()
            )));
        }
        Ok(GaussianVariational { mu, rho })
    }

    pub fn sigma(&self) -> Array {
        softplus_sigma(&self.rho)
    }

    pub fn len(&self) -> usize {
        self.mu.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mu.is_empty()
    }
}

pub fn softplus_sigma(rho: &Array) -> Array {
    rho.map(softplus)
}

/// Inverse of softplus, for initialising `rho` from a target sigma.
pub fn rho_for_sigma(sigma: f64) -> f64 {
    sigma.exp_m1().ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    pub mean: f64,
    pub std: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec {
            mean: 0.0,
            std: 1.0,
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.std > 0.0) || !self.std.is_finite() || !self.mean.is_finite() {
            return Err(Error::validation(
                "prior.std",
                format!("prior needs finite mean and std > 0, got N({}, {}²)", self.mean, self.std),
            ));
        }
        Ok(())
    }
}

/// `Σ KL(N(mu, sigma²) ‖ prior)` over every weight of the posterior.
pub fn kl_mean_field(posterior: &GaussianVariational, prior: &PriorSpec) -> Result<f64> {
    prior.validate()?;
    let sigma = posterior.sigma();
    if let Some(bad) = sigma.data().iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::numeric(format!(
            "posterior sigma must be positive, got {bad}"
        )));
    }
    Ok(kl_sum(posterior.mu.data(), sigma.data(), prior.mean, prior.std))
}

/// Same as [`kl_mean_field`] but taking sigma directly; lets callers reach
/// sigma values that no finite rho produces (e.g. exactly 1).
pub fn kl_from_sigma(mu: &Array, sigma: &Array, prior: &PriorSpec) -> Result<f64> {
    prior.validate()?;
    if mu.extents() != sigma.extents() {
        return Err(Error::shape("mu and sigma extents differ"));
    }
    if let Some(bad) = sigma.data().iter().find(|&&s| !(s > 0.0)) {
        return Err(Error::numeric(format!(
            "posterior sigma must be positive, got {bad}"
        )));
    }
    Ok(kl_sum(mu.data(), sigma.data(), prior.mean, prior.std))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_sigma_examples() {
        let s = softplus_sigma(&Array::from_vec(vec![0.0, 50.0, -50.0]));
        assert!((s.data()[0] - 0.693_147_180_559_945_3).abs() < 1e-15);
        assert!(((s.data()[1] - 50.0) / 50.0).abs() < 1e-12);
        assert!(s.data()[2] > 0.0);
    }

    #[test]
    fn rho_round_trips_through_softplus() {
        for s in [0.01, 0.5, 1.0, 3.0] {
            assert!((softplus(rho_for_sigma(s)) - s).abs() < 1e-12);
        }
    }

    #[test]
    fn kl_examples() {
        let p = PriorSpec::default();
        let one = Array::from_vec(vec![1.0]);
        assert_eq!(kl_from_sigma(&Array::from_vec(vec![0.0; 3]), &Array::full(&[3], 1.0), &p).unwrap(), 0.0);
        assert!((kl_from_sigma(&one, &one, &p).unwrap() - 0.5).abs() < 1e-15);
        let half = kl_from_sigma(&Array::from_vec(vec![0.0]), &Array::from_vec(vec![0.5]), &p).unwrap();
        assert!((half - (0.25 - 1.0 - 2.0 * 0.5f64.ln()) / 2.0).abs() < 1e-15);
        assert!((half - 0.318_147).abs() < 1e-6);
    }

    #[test]
    fn kl_rejects_nonpositive_sigma() {
        let p = PriorSpec::default();
        let r = kl_from_sigma(&Array::from_vec(vec![0.0]), &Array::from_vec(vec![0.0]), &p);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }

    #[test]
    fn kl_via_rho_matches_sigma_form() {
        let post = GaussianVariational::new(
            Array::from_vec(vec![0.3, -0.7]),
            Array::from_vec(vec![-1.0, 0.4]),
        )
        .unwrap();
        let p = PriorSpec::default();
        let a = kl_mean_field(&post, &p).unwrap();
        let b = kl_from_sigma(&post.mu, &post.sigma(), &p).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
    }
}
