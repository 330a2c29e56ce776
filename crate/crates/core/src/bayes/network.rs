use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::variational::{rho_for_sigma, softplus_sigma, GaussianVariational, PriorSpec};
use crate::diffcore::{conv2d, dense_affine, maxpool2d, relu, softmax, Array};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Standard deviation of the initial posterior means.
pub const INIT_MU_STD: f64 = 0.05;
/// Initial posterior scale; rho starts at `softplus⁻¹(INIT_SIGMA)`.
pub const INIT_SIGMA: f64 = 0.01;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    ConvFlipout { filters: usize, kernel: usize },
    MaxPool,
    Flatten,
    DenseFlipout { units: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input image extents `[h, w, c]`.
    pub input: [usize; 3],
    pub layers: Vec<LayerSpec>,
}

/// Shape of a trainable layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv {
        kh: usize,
        kw: usize,
        cin: usize,
        cout: usize,
    },
    Dense {
        din: usize,
        dout: usize,
    },
}

impl LayerKind {
    pub fn weight_extents(&self) -> Vec<usize> {
        match *self {
            LayerKind::Conv { kh, kw, cin, cout } => vec![kh, kw, cin, cout],
            LayerKind::Dense { din, dout } => vec![din, dout],
        }
    }

    pub fn in_channels(&self) -> usize {
        match *self {
            LayerKind::Conv { cin, .. } => cin,
            LayerKind::Dense { din, .. } => din,
        }
    }

    pub fn out_channels(&self) -> usize {
        match *self {
            LayerKind::Conv { cout, .. } => cout,
            LayerKind::Dense { dout, .. } => dout,
        }
    }

    /// Weights plus biases of the deterministic counterpart.
    pub fn param_count(&self) -> usize {
        self.weight_extents().iter().product::<usize>() + self.out_channels()
    }
}

impl NetworkSpec {
    /// The three-stage convFlipout/denseFlipout architecture on 33x33x1 inputs.
    pub fn pbcnn(n_classes: usize) -> Self {
        use LayerSpec::*;
        NetworkSpec {
            input: [33, 33, 1],
            layers: vec![
                ConvFlipout { filters: 32, kernel: 3 },
                ConvFlipout { filters: 32, kernel: 3 },
                MaxPool,
                ConvFlipout { filters: 64, kernel: 3 },
                ConvFlipout { filters: 64, kernel: 3 },
                MaxPool,
                Flatten,
                DenseFlipout { units: 100 },
                DenseFlipout { units: 100 },
                DenseFlipout { units: n_classes },
            ],
        }
    }

    /// Checks that every layer fits its predecessor and returns the
    /// trainable layer shapes in forward order.
    pub fn trainable_layers(&self) -> Result<Vec<LayerKind>> {
        enum Act {
            Spatial(usize, usize, usize),
            Flat(usize),
        }
        let [h, w, c] = self.input;
        if h == 0 || w == 0 || c == 0 {
            return Err(Error::shape(format!("input extents {:?} must be positive", self.input)));
        }
        let mut act = Act::Spatial(h, w, c);
        let mut kinds = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            act = match (layer, act) {
                (LayerSpec::ConvFlipout { filters, kernel }, Act::Spatial(h, w, c)) => {
                    if *filters == 0 || kernel % 2 == 0 {
                        return Err(Error::shape(format!(
                            "layer {i}: conv needs filters > 0 and an odd kernel, got {filters} / {kernel}"
                        )));
                    }
                    kinds.push(LayerKind::Conv {
                        kh: *kernel,
                        kw: *kernel,
                        cin: c,
                        cout: *filters,
                    });
                    Act::Spatial(h, w, *filters)
                }
                (LayerSpec::MaxPool, Act::Spatial(h, w, c)) if h >= 2 && w >= 2 => {
                    Act::Spatial(h / 2, w / 2, c)
                }
                (LayerSpec::Flatten, Act::Spatial(h, w, c)) => Act::Flat(h * w * c),
                (LayerSpec::DenseFlipout { units }, Act::Flat(d)) if *units > 0 => {
                    kinds.push(LayerKind::Dense { din: d, dout: *units });
                    Act::Flat(*units)
                }
                (layer, _) => {
                    return Err(Error::shape(format!(
                        "layer {i} ({layer:?}) does not fit its input"
                    )))
                }
            };
        }
        match self.layers.last() {
            Some(LayerSpec::DenseFlipout { .. }) => Ok(kinds),
            _ => Err(Error::shape("network must end with a dense layer")),
        }
    }

    pub fn n_classes(&self) -> Option<usize> {
        match self.layers.last() {
            Some(LayerSpec::DenseFlipout { units }) => Some(*units),
            _ => None,
        }
    }
}

/// One convFlipout or denseFlipout layer; weights and biases are both
/// variational.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalLayer {
    pub kind: LayerKind,
    pub weight: GaussianVariational,
    pub bias: GaussianVariational,
}

impl VariationalLayer {
    fn init(kind: LayerKind, rng: &mut Rng) -> Self {
        let normal = Normal::new(0.0, INIT_MU_STD).expect("valid std");
        let wext = kind.weight_extents();
        let n: usize = wext.iter().product();
        let mu = Array::new(wext.clone(), (0..n).map(|_| normal.sample(rng)).collect())
            .expect("extents match");
        let rho0 = rho_for_sigma(INIT_SIGMA);
        let cout = kind.out_channels();
        VariationalLayer {
            kind,
            weight: GaussianVariational {
                mu,
                rho: Array::full(&wext, rho0),
            },
            bias: GaussianVariational {
                mu: Array::zeros(&[cout]),
                rho: Array::full(&[cout], rho0),
            },
        }
    }

    /// Layer output for fixed weights and bias, without activation.
    pub fn apply(&self, input: &Array, weight: &Array, bias: &Array) -> Result<Array> {
        match self.kind {
            LayerKind::Conv { .. } => conv2d(input, weight, bias),
            LayerKind::Dense { .. } => dense_affine(input, weight, bias),
        }
    }
}

/// Probabilistic Bayesian CNN.
#[derive(Clone, Debug, PartialEq)]
pub struct Pbcnn {
    spec: NetworkSpec,
    prior: PriorSpec,
    layers: Vec<VariationalLayer>,
    trained: bool,
}

pub fn build_pbcnn(spec: &NetworkSpec, prior: &PriorSpec, seed: u64) -> Result<Pbcnn> {
    prior.validate()?;
    let kinds = spec.trainable_layers()?;
    let mut rng = rng::seeded(seed);
    let layers = kinds
        .into_iter()
        .map(|k| VariationalLayer::init(k, &mut rng))
        .collect();
    Ok(Pbcnn {
        spec: spec.clone(),
        prior: *prior,
        layers,
        trained: false,
    })
}

impl Pbcnn {
    pub(crate) fn from_parts(
        spec: NetworkSpec,
        prior: PriorSpec,
        layers: Vec<VariationalLayer>,
        trained: bool,
    ) -> Result<Self> {
        let kinds = spec.trainable_layers()?;
        if kinds.len() != layers.len()
            || kinds.iter().zip(&layers).any(|(k, l)| {
                *k != l.kind
                    || l.weight.mu.extents() != k.weight_extents()
                    || l.weight.rho.extents() != k.weight_extents()
                    || l.bias.mu.extents() != [k.out_channels()]
                    || l.bias.rho.extents() != [k.out_channels()]
            })
        {
            return Err(Error::shape("layer parameters do not match the network spec"));
        }
        Ok(Pbcnn {
            spec,
            prior,
            layers,
            trained,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn prior(&self) -> &PriorSpec {
        &self.prior
    }

    pub fn layers(&self) -> &[VariationalLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [VariationalLayer] {
        &mut self.layers
    }

    pub fn n_classes(&self) -> usize {
        self.layers.last().map_or(0, |l| l.kind.out_channels())
    }

    pub fn is_trained(&self) -> bool {
        self.trained
    }

    /// Marks externally supplied parameters as ready for prediction.
    pub fn assume_trained(mut self) -> Self {
        self.trained = true;
        self
    }

    /// Parameter count of the deterministic network with the same layers.
    pub fn frequentist_param_count(&self) -> usize {
        self.layers.iter().map(|l| l.kind.param_count()).sum()
    }

    /// Trainable parameters: a mean and a rho per deterministic parameter.
    pub fn variational_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.mu.len() + l.weight.rho.len() + l.bias.mu.len() + l.bias.rho.len())
            .sum()
    }

    pub(crate) fn check_images(&self, images: &Array) -> Result<usize> {
        let e = images.extents();
        if e.len() != 4 || e[1..] != self.spec.input {
            return Err(Error::shape(format!(
                "expected images [n,{},{},{}], got {e:?}",
                self.spec.input[0], self.spec.input[1], self.spec.input[2]
            )));
        }
        Ok(e[0])
    }

    /// Runs the layer stack, delegating each trainable layer to `layer_fn`.
    pub(crate) fn forward_with<F>(&self, images: &Array, mut layer_fn: F) -> Result<Array>
    where
        F: FnMut(&VariationalLayer, &Array) -> Result<Array>,
    {
        self.check_images(images)?;
        let last = self.layers.len() - 1;
        let mut x = images.clone();
        let mut p = 0;
        for spec in &self.spec.layers {
            x = match spec {
                LayerSpec::ConvFlipout { .. } => {
                    let y = relu(&layer_fn(&self.layers[p], &x)?);
                    p += 1;
                    y
                }
                LayerSpec::MaxPool => maxpool2d(&x)?,
                LayerSpec::Flatten => {
                    let n = x.extents()[0];
                    let d = x.row_len();
                    x.reshape(vec![n, d])?
                }
                LayerSpec::DenseFlipout { .. } => {
                    let y = layer_fn(&self.layers[p], &x)?;
                    let y = if p == last { y } else { relu(&y) };
                    p += 1;
                    y
                }
            };
        }
        Ok(x)
    }

    /// Class probabilities of the posterior-mean network, in chunks.
    pub fn predict_mean(&self, images: &Array) -> Result<Array> {
        let n = self.check_images(images)?;
        let mut out = Vec::with_capacity(n * self.n_classes());
        for start in (0..n).step_by(64) {
            let idx: Vec<usize> = (start..(start + 64).min(n)).collect();
            let chunk = images.select_rows(&idx);
            let logits =
                self.forward_with(&chunk, |l, x| l.apply(x, &l.weight.mu, &l.bias.mu))?;
            out.extend_from_slice(softmax(&logits)?.data());
        }
        Array::new(vec![n, self.n_classes()], out)
    }
}

/// Draws network outputs from the weight posterior.
///
/// Convolution weights are sampled explicitly. Dense layers are sampled
/// through their pre-activations: for a single input row those are exactly
/// Gaussian with mean `x·mu + mu_b` and variance `x²·sigma² + sigma_b²`,
/// which has the same law as drawing the weights.
pub struct PosteriorSampler<'a> {
    model: &'a Pbcnn,
    // (sigma_w, sigma_b) for conv layers, (sigma_w², sigma_b²) for dense.
    scales: Vec<(Array, Array)>,
}

impl<'a> PosteriorSampler<'a> {
    pub fn new(model: &'a Pbcnn) -> Self {
        let scales = model
            .layers
            .iter()
            .map(|l| {
                let (sw, sb) = (softplus_sigma(&l.weight.rho), softplus_sigma(&l.bias.rho));
                match l.kind {
                    LayerKind::Conv { .. } => (sw, sb),
                    LayerKind::Dense { .. } => (sw.map(|s| s * s), sb.map(|s| s * s)),
                }
            })
            .collect();
        PosteriorSampler { model, scales }
    }

    /// Logits of one posterior draw; every row of `images` gets independent
    /// dense-layer noise.
    pub fn sample_logits(&self, images: &Array, rng: &mut Rng) -> Result<Array> {
        let mut p = 0;
        self.model.forward_with(images, |layer, x| {
            let (s_w, s_b) = &self.scales[p];
            p += 1;
            match layer.kind {
                LayerKind::Conv { .. } => {
                    let w = perturb(&layer.weight.mu, s_w, rng);
                    let b = perturb(&layer.bias.mu, s_b, rng);
                    conv2d(x, &w, &b)
                }
                LayerKind::Dense { .. } => {
                    let mean = dense_affine(x, &layer.weight.mu, &layer.bias.mu)?;
                    let var = dense_affine(&x.map(|v| v * v), s_w, s_b)?;
                    let data = mean
                        .data()
                        .iter()
                        .zip(var.data())
                        .map(|(&m, &v)| {
                            let e: f64 = rng.sample(StandardNormal);
                            m + v.sqrt() * e
                        })
                        .collect();
                    Array::new(mean.extents().to_vec(), data)
                }
            }
        })
    }
}

fn perturb(mu: &Array, sigma: &Array, rng: &mut Rng) -> Array {
    let data = mu
        .data()
        .iter()
        .zip(sigma.data())
        .map(|(&m, &s)| {
            let e: f64 = rng.sample(StandardNormal);
            m + s * e
        })
        .collect();
    Array::new(mu.extents().to_vec(), data).expect("same extents")
}
