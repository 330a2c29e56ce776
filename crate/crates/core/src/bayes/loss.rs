use serde::{Deserialize, Serialize};

use super::dataset::Dataset;
use super::flipout::{flipout_on_tape, FlipoutNoise, FlipoutTrace, LayerVars};
use super::network::{LayerSpec, Pbcnn};
use super::train::TrainConfig;
use crate::diffcore::{nll_one_hot_value, Array, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// Negative log-likelihood of one-hot labels, `-Σ y·ln p` (natural log,
/// probabilities floored at 1e-12).
pub fn nll_one_hot(probabilities: &Array, labels: &Array) -> Result<f64> {
    nll_one_hot_value(probabilities, labels)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// Closed-form Gaussian KL.
    #[default]
    Analytic,
    /// Single-sample `log q(w|θ) - log p(w)` at the weights used in the
    /// forward pass.
    MonteCarlo,
}

/// Components of the minimised cost `kl_scale·KL + NLL`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ElboTerms {
    pub kl: f64,
    pub kl_scale: f64,
    pub nll: f64,
    pub loss: f64,
}

/// Gradients for one layer's variational parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerGrads {
    pub mu_w: Array,
    pub rho_w: Array,
    pub mu_b: Array,
    pub rho_b: Array,
}

/// Everything a single loss evaluation drew or produced.
#[derive(Clone, Debug)]
pub struct ElboDetail {
    pub terms: ElboTerms,
    /// Class probabilities of the stochastic forward pass.
    pub probs: Array,
    /// Shared per-batch weight and bias draws `mu + sigma ∘ eps`, per layer.
    pub weight_samples: Vec<(Array, Array)>,
}

struct TapedElbo {
    tape: Tape,
    vars: Vec<LayerVars>,
    loss: Var,
    kl: Var,
    nll: Var,
    probs: Var,
    traces: Vec<FlipoutTrace>,
    kl_scale: f64,
}

fn kl_scale_for(config: &TrainConfig, batch_len: usize, dataset_size: usize) -> Result<f64> {
    let scale = match config.kl_scale {
        Some(s) => s,
        None => batch_len as f64 / dataset_size.max(1) as f64,
    };
    if !(scale > 0.0) {
        return Err(Error::contract(format!("kl_scale must be > 0, got {scale}")));
    }
    Ok(scale)
}

fn build(
    model: &Pbcnn,
    batch: &Dataset,
    config: &TrainConfig,
    dataset_size: usize,
    rng: &mut Rng,
) -> Result<TapedElbo> {
    if batch.is_empty() {
        return Err(Error::contract("ELBO of an empty batch"));
    }
    if batch.n_classes() != model.n_classes() {
        return Err(Error::contract(format!(
            "batch has {} classes, model predicts {}",
            batch.n_classes(),
            model.n_classes()
        )));
    }
    let n = model.check_images(batch.images())?;
    let kl_scale = kl_scale_for(config, n, dataset_size)?;
    let prior = *model.prior();

    let mut tape = Tape::new();
    let vars: Vec<LayerVars> = model
        .layers()
        .iter()
        .map(|l| LayerVars::register(&mut tape, l))
        .collect();

    let last = model.layers().len() - 1;
    let mut x = tape.constant(batch.images().clone());
    let mut traces = Vec::with_capacity(vars.len());
    for spec in &model.spec().layers {
        x = match spec {
            LayerSpec::ConvFlipout { .. } | LayerSpec::DenseFlipout { .. } => {
                let p = traces.len();
                let layer = &model.layers()[p];
                let noise = FlipoutNoise::sample(&layer.kind, n, rng);
                let trace = flipout_on_tape(&mut tape, &layer.kind, &vars[p], x, &noise)?;
                traces.push(trace);
                if p == last {
                    trace.out
                } else {
                    tape.relu(trace.out)
                }
            }
            LayerSpec::MaxPool => tape.maxpool2d(x)?,
            LayerSpec::Flatten => {
                let d = tape.value(x).row_len();
                tape.reshape(x, vec![n, d])?
            }
        };
    }
    let probs = tape.softmax(x)?;
    let nll = tape.softmax_nll(x, batch.labels().clone())?;

    let mut kl_terms = Vec::with_capacity(2 * traces.len());
    for (v, t) in vars.iter().zip(&traces) {
        match config.kl_mode {
            KlMode::Analytic => {
                kl_terms.push(tape.kl_gaussian(v.mu_w, t.sigma_w, prior.mean, prior.std)?);
                kl_terms.push(tape.kl_gaussian(v.mu_b, t.sigma_b, prior.mean, prior.std)?);
            }
            KlMode::MonteCarlo => {
                let w = tape.add(v.mu_w, t.delta_w)?;
                kl_terms.push(log_q_minus_log_p(&mut tape, w, v.mu_w, t.sigma_w, prior.mean, prior.std)?);
                kl_terms.push(log_q_minus_log_p(&mut tape, t.bias, v.mu_b, t.sigma_b, prior.mean, prior.std)?);
            }
        }
    }
    let mut kl = kl_terms[0];
    for &k in &kl_terms[1..] {
        kl = tape.add(kl, k)?;
    }
    let scaled = tape.scale(kl, kl_scale);
    let loss = tape.add(scaled, nll)?;
    Ok(TapedElbo {
        tape,
        vars,
        loss,
        kl,
        nll,
        probs,
        traces,
        kl_scale,
    })
}

/// `log q(w|mu,sigma) - log p(w)` for Gaussian q and prior; the `ln 2π`
/// terms cancel.
fn log_q_minus_log_p(
    tape: &mut Tape,
    w: Var,
    mu: Var,
    sigma: Var,
    prior_mean: f64,
    prior_std: f64,
) -> Result<Var> {
    let count = tape.value(w).len() as f64;
    let diff = tape.sub(w, mu)?;
    let z = tape.div(diff, sigma)?;
    let z2 = tape.square(z);
    let sum_z2 = tape.sum(z2);
    let log_sigma = tape.log(sigma);
    let sum_log_sigma = tape.sum(log_sigma);
    let centred = tape.add_scalar(w, -prior_mean);
    let c2 = tape.square(centred);
    let sum_c2 = tape.sum(c2);

    let a = tape.scale(sum_log_sigma, -1.0);
    let b = tape.scale(sum_z2, -0.5);
    let c = tape.scale(sum_c2, 0.5 / (prior_std * prior_std));
    let ab = tape.add(a, b)?;
    let abc = tape.add(ab, c)?;
    Ok(tape.add_scalar(abc, count * prior_std.ln()))
}

impl TapedElbo {
    fn terms(&self) -> ElboTerms {
        let item = |v: Var| self.tape.value(v).data()[0];
        ElboTerms {
            kl: item(self.kl),
            kl_scale: self.kl_scale,
            nll: item(self.nll),
            loss: item(self.loss),
        }
    }
}

/// Stochastic estimate of `kl_scale·KL + NLL(batch)`. The KL weight defaults
/// to `batch.len() / dataset_size` so one epoch counts the KL once.
pub fn elbo_loss(
    model: &Pbcnn,
    batch: &Dataset,
    config: &TrainConfig,
    dataset_size: usize,
    rng: &mut Rng,
) -> Result<ElboTerms> {
    Ok(build(model, batch, config, dataset_size, rng)?.terms())
}

/// Loss evaluation that also returns the drawn weights and probabilities.
pub fn elbo_detail(
    model: &Pbcnn,
    batch: &Dataset,
    config: &TrainConfig,
    dataset_size: usize,
    rng: &mut Rng,
) -> Result<ElboDetail> {
    let t = build(model, batch, config, dataset_size, rng)?;
    let mut weight_samples = Vec::with_capacity(t.traces.len());
    for (v, tr) in t.vars.iter().zip(&t.traces) {
        let w = t
            .tape
            .value(v.mu_w)
            .zip_map(t.tape.value(tr.delta_w), |m, d| m + d)?;
        weight_samples.push((w, t.tape.value(tr.bias).clone()));
    }
    Ok(ElboDetail {
        terms: t.terms(),
        probs: t.tape.value(t.probs).clone(),
        weight_samples,
    })
}

/// Loss plus its gradient with respect to every mu and rho.
pub fn elbo_gradients(
    model: &Pbcnn,
    batch: &Dataset,
    config: &TrainConfig,
    dataset_size: usize,
    rng: &mut Rng,
) -> Result<(ElboTerms, Vec<LayerGrads>)> {
    let t = build(model, batch, config, dataset_size, rng)?;
    let terms = t.terms();
    let mut g = t.tape.gradient(t.loss)?;
    let grads = t
        .vars
        .iter()
        .map(|v| {
            let mut take = |x: Var| g.take(x).expect("parameters always receive a gradient");
            LayerGrads {
                mu_w: take(v.mu_w),
                rho_w: take(v.rho_w),
                mu_b: take(v.mu_b),
                rho_b: take(v.rho_b),
            }
        })
        .collect();
    Ok((terms, grads))
}
