use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::loss::{elbo_gradients, KlMode};
use super::network::Pbcnn;
use crate::diffcore::{AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// KL weight per mini-batch; `None` means `batch_len / dataset_size`.
    pub kl_scale: Option<f64>,
    pub seed: u64,
    pub kl_mode: KlMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            learning_rate: 1e-3,
            batch_size: 128,
            kl_scale: None,
            seed: 0,
            kl_mode: KlMode::Analytic,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::contract("training needs at least one epoch"));
        }
        if self.batch_size == 0 {
            return Err(Error::contract("batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::contract(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if let Some(s) = self.kl_scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::contract(format!("kl_scale must be positive, got {s}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-batch ELBO loss.
    pub loss: f64,
    pub mean_kl: f64,
    pub mean_nll: f64,
    /// Posterior-mean accuracy on the validation set, if one was given.
    pub val_accuracy: Option<f64>,
}

/// Fraction of rows whose arg-max matches the one-hot label.
pub fn accuracy(model: &Pbcnn, data: &Dataset) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::contract("accuracy of an empty dataset"));
    }
    let probs = model.predict_mean(data.images())?;
    let hits = data
        .classes()
        .iter()
        .enumerate()
        .filter(|(i, &c)| argmax(probs.row(*i)) == c)
        .count();
    Ok(hits as f64 / data.len() as f64)
}

pub(crate) fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = j;
        }
    }
    best
}

/// Minimises the ELBO with Adam. Each epoch reshuffles the training set;
/// every mini-batch draws fresh flipout noise from a seed derived from
/// `config.seed` and the step index.
pub fn train(
    model: Pbcnn,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
) -> Result<(Pbcnn, Vec<EpochRecord>)> {
    train_with_progress(model, train_set, val_set, config, |_| {})
}

pub fn train_with_progress(
    mut model: Pbcnn,
    train_set: &Dataset,
    val_set: Option<&Dataset>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(Pbcnn, Vec<EpochRecord>)> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::contract("training set is empty"));
    }
    let adam = AdamConfig {
        learning_rate: config.learning_rate,
        ..AdamConfig::default()
    };
    let mut states: Vec<[AdamState; 4]> = model
        .layers()
        .iter()
        .map(|l| {
            [
                AdamState::new(l.weight.mu.extents(), adam),
                AdamState::new(l.weight.rho.extents(), adam),
                AdamState::new(l.bias.mu.extents(), adam),
                AdamState::new(l.bias.rho.extents(), adam),
            ]
        })
        .collect();

    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut step = 0u64;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut seeded(derive_seed(config.seed, "shuffle", epoch as u64)));
        let (mut loss_sum, mut kl_sum, mut nll_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch = train_set.subset(chunk);
            let mut rng = seeded(derive_seed(config.seed, "flipout", step));
            step += 1;
            let (terms, grads) =
                elbo_gradients(&model, &batch, config, n, &mut rng).map_err(|e| match e {
                    Error::Numeric(reason) => Error::Training { epoch, reason },
                    other => other,
                })?;
            let finite = terms.loss.is_finite()
                && grads.iter().all(|g| {
                    g.mu_w.is_finite() && g.rho_w.is_finite() && g.mu_b.is_finite() && g.rho_b.is_finite()
                });
            if !finite {
                return Err(Error::Training {
                    epoch,
                    reason: format!("non-finite loss or gradient at step {step} (loss {})", terms.loss),
                });
            }
            for ((layer, st), g) in model.layers_mut().iter_mut().zip(&mut states).zip(&grads) {
                st[0].update(&mut layer.weight.mu, &g.mu_w)?;
                st[1].update(&mut layer.weight.rho, &g.rho_w)?;
                st[2].update(&mut layer.bias.mu, &g.mu_b)?;
                st[3].update(&mut layer.bias.rho, &g.rho_b)?;
            }
            loss_sum += terms.loss;
            kl_sum += terms.kl;
            nll_sum += terms.nll;
            batches += 1;
        }
        let val_accuracy = match val_set {
            Some(v) if !v.is_empty() => Some(accuracy(&model, v)?),
            _ => None,
        };
        let rec = EpochRecord {
            epoch,
            loss: loss_sum / batches as f64,
            mean_kl: kl_sum / batches as f64,
            mean_nll: nll_sum / batches as f64,
            val_accuracy,
        };
        on_epoch(&rec);
        history.push(rec);
    }
    Ok((model.assume_trained(), history))
}
