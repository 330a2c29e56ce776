//! Flipout weight perturbation.
//!
//! A mini-batch shares one Gaussian draw `eps` per kernel; example `i` sees
//! the perturbation `(sigma ∘ eps) ∘ (r_i s_iᵀ)` through random ±1 sign
//! vectors on the input (`s_i`) and output (`r_i`) channels:
//!
//! ```text
//! out_i = f(x_i; mu) + f(x_i ∘ s_i; sigma ∘ eps) ∘ r_i + b
//! ```
//!
//! Biases are sampled once per batch, `b = mu_b + sigma_b ∘ eps_b`, without
//! sign flips.

use rand::Rng as _;
use rand_distr::StandardNormal;

use super::network::{LayerKind, VariationalLayer};
use crate::diffcore::ops::{add_channel_bias, gemm, ConvGeom};
use crate::diffcore::{softplus, Array, Tape, Var};
use crate::error::{Error, Result};
use crate::rng::Rng;

/// The random draws one flipout layer consumes for a batch of `n` examples.
#[derive(Clone, Debug, PartialEq)]
pub struct FlipoutNoise {
    pub eps_w: Array,
    pub eps_b: Array,
    /// `[n, in_channels]`, entries ±1.
    pub sign_in: Array,
    /// `[n, out_channels]`, entries ±1.
    pub sign_out: Array,
}

fn normals(extents: &[usize], rng: &mut Rng) -> Array {
    let n = extents.iter().product();
    let data = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    Array::new(extents.to_vec(), data).expect("extents match")
}

fn signs(rows: usize, cols: usize, rng: &mut Rng) -> Array {
    let data = (0..rows * cols)
        .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
        .collect();
    Array::new(vec![rows, cols], data).expect("extents match")
}

impl FlipoutNoise {
    pub fn sample(kind: &LayerKind, n: usize, rng: &mut Rng) -> Self {
        let eps_w = normals(&kind.weight_extents(), rng);
        let eps_b = normals(&[kind.out_channels()], rng);
        let sign_in = signs(n, kind.in_channels(), rng);
        let sign_out = signs(n, kind.out_channels(), rng);
        FlipoutNoise {
            eps_w,
            eps_b,
            sign_in,
            sign_out,
        }
    }
}

/// Pre-activation of a flipout layer for a batch (`[n,h,w,c]` for conv,
/// `[n,d]` for dense), drawing fresh noise from `rng`.
pub fn flipout_forward(layer: &VariationalLayer, input: &Array, rng: &mut Rng) -> Result<Array> {
    let n = *input.extents().first().ok_or_else(|| Error::shape("empty input"))?;
    let noise = FlipoutNoise::sample(&layer.kind, n, rng);
    flipout_apply(layer, input, &noise)
}

/// Deterministic part of the layer: the same linear map for any weights.
fn linear(kind: &LayerKind, input: &Array, weight: &Array) -> Result<Array> {
    let e = input.extents();
    match *kind {
        LayerKind::Conv { .. } => {
            if e.len() != 4 {
                return Err(Error::shape(format!("conv flipout wants [n,h,w,c], got {e:?}")));
            }
            let geom = ConvGeom::new(&e[1..], weight.extents())?;
            let mut out = vec![0.0; e[0] * geom.out_len()];
            geom.forward(e[0], input.data(), weight.data(), &mut out);
            Array::new(vec![e[0], geom.h, geom.w, geom.cout], out)
        }
        LayerKind::Dense { din, dout } => {
            if e != [e[0], din] {
                return Err(Error::shape(format!("dense flipout wants [n,{din}], got {e:?}")));
            }
            let mut out = vec![0.0; e[0] * dout];
            gemm(e[0], din, dout, input.data(), false, weight.data(), false, 0.0, &mut out);
            Array::new(vec![e[0], dout], out)
        }
    }
}

fn scale_channels(mut a: Array, signs: &Array) -> Array {
    let c = signs.extents()[1];
    let n = signs.extents()[0];
    if n > 0 && c > 0 {
        let per = a.len() / n;
        for (img, s) in a.data_mut().chunks_exact_mut(per).zip(signs.data().chunks_exact(c)) {
            for px in img.chunks_exact_mut(c) {
                for (v, sv) in px.iter_mut().zip(s) {
                    *v *= sv;
                }
            }
        }
    }
    a
}

/// Flipout pre-activation with explicit noise. Performs the same floating
/// point operations, in the same order, as the taped version.
pub fn flipout_apply(layer: &VariationalLayer, input: &Array, noise: &FlipoutNoise) -> Result<Array> {
    let n = input.extents()[0];
    if noise.sign_in.extents() != [n, layer.kind.in_channels()] {
        return Err(Error::shape("flipout noise drawn for a different batch size"));
    }
    let sigma_w = layer.weight.rho.map(softplus);
    let delta_w = sigma_w.zip_map(&noise.eps_w, |s, e| s * e)?;
    let base = linear(&layer.kind, input, &layer.weight.mu)?;
    let xs = scale_channels(input.clone(), &noise.sign_in);
    let pert = scale_channels(linear(&layer.kind, &xs, &delta_w)?, &noise.sign_out);
    let mut out = base.zip_map(&pert, |a, b| a + b)?;
    let sigma_b = layer.bias.rho.map(softplus);
    let pert_b = sigma_b.zip_map(&noise.eps_b, |s, e| s * e)?;
    let bias = layer.bias.mu.zip_map(&pert_b, |m, p| m + p)?;
    add_channel_bias(out.data_mut(), bias.data());
    Ok(out)
}

/// Tape handles for one layer's variational parameters.
#[derive(Clone, Copy, Debug)]
pub(crate) struct LayerVars {
    pub mu_w: Var,
    pub rho_w: Var,
    pub mu_b: Var,
    pub rho_b: Var,
}

impl LayerVars {
    pub fn register(tape: &mut Tape, layer: &VariationalLayer) -> Self {
        LayerVars {
            mu_w: tape.param(layer.weight.mu.clone()),
            rho_w: tape.param(layer.weight.rho.clone()),
            mu_b: tape.param(layer.bias.mu.clone()),
            rho_b: tape.param(layer.bias.rho.clone()),
        }
    }
}

/// Nodes a taped flipout layer exposes to the KL term.
#[derive(Clone, Copy, Debug)]
pub(crate) struct FlipoutTrace {
    pub out: Var,
    pub sigma_w: Var,
    pub sigma_b: Var,
    pub delta_w: Var,
    pub bias: Var,
}

pub(crate) fn flipout_on_tape(
    tape: &mut Tape,
    kind: &LayerKind,
    vars: &LayerVars,
    x: Var,
    noise: &FlipoutNoise,
) -> Result<FlipoutTrace> {
    let sigma_w = tape.softplus(vars.rho_w);
    let eps_w = tape.constant(noise.eps_w.clone());
    let delta_w = tape.mul(sigma_w, eps_w)?;
    let (base, pert) = match kind {
        LayerKind::Conv { .. } => {
            let base = tape.conv2d(x, vars.mu_w)?;
            let xs = tape.channel_signs(x, noise.sign_in.clone())?;
            (base, tape.conv2d(xs, delta_w)?)
        }
        LayerKind::Dense { .. } => {
            let base = tape.matmul(x, vars.mu_w)?;
            let xs = tape.channel_signs(x, noise.sign_in.clone())?;
            (base, tape.matmul(xs, delta_w)?)
        }
    };
    let pert = tape.channel_signs(pert, noise.sign_out.clone())?;
    let sum = tape.add(base, pert)?;
    let sigma_b = tape.softplus(vars.rho_b);
    let eps_b = tape.constant(noise.eps_b.clone());
    let pert_b = tape.mul(sigma_b, eps_b)?;
    let bias = tape.add(vars.mu_b, pert_b)?;
    let out = tape.add_bias(sum, bias)?;
    Ok(FlipoutTrace {
        out,
        sigma_w,
        sigma_b,
        delta_w,
        bias,
    })
}
