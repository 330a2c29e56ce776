//! Reverse-mode differentiation over a linear record of primitive calls.
//!
//! Nodes are appended in evaluation order, so the record is already a
//! topological order and the reverse sweep is a single backwards pass.

use super::ops::{self, gemm, ConvGeom};
use super::Array;
use crate::error::{Error, Result};

/// Probabilities below this are clamped before taking logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Div(usize, usize),
    Scale(usize, f64),
    AddScalar(usize),
    Square(usize),
    Log(usize),
    Softplus(usize),
    Relu(usize),
    Sum(usize),
    Conv2d {
        input: usize,
        kernel: usize,
        geom: ConvGeom,
        n: usize,
    },
    MaxPool {
        input: usize,
        argmax: Vec<usize>,
    },
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    AddBias {
        x: usize,
        bias: usize,
    },
    ChannelSigns {
        x: usize,
        signs: Array,
    },
    Reshape(usize),
    Softmax(usize),
    NllOneHot {
        probs: usize,
        labels: Array,
    },
    SoftmaxNll {
        logits: usize,
        labels: Array,
    },
    KlGaussian {
        mu: usize,
        sigma: usize,
        mean: f64,
        std: f64,
    },
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
    needs_grad: bool,
}

/// Single-use record of a forward computation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

fn same_extents(a: &Array, b: &Array, what: &str) -> Result<()> {
    if a.extents() != b.extents() {
        return Err(Error::shape(format!(
            "{what}: operand extents differ, {:?} vs {:?}",
            a.extents(),
            b.extents()
        )));
    }
    Ok(())
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Overflow-safe `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; gradients are reported for it.
    pub fn param(&mut self, value: Array) -> Var {
        self.push_leaf(value, true)
    }

    pub fn constant(&mut self, value: Array) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Array, needs_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Array, op: Op, inputs: &[usize]) -> Var {
        let needs_grad = inputs.iter().any(|&i| self.nodes[i].needs_grad);
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Array {
        &self.nodes[v.0].value
    }

    fn val(&self, i: usize) -> &Array {
        &self.nodes[i].value
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.val(a.0).zip_map(self.val(b.0), |x, y| x + y)?;
        Ok(self.push(v, Op::Add(a.0, b.0), &[a.0, b.0]))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.val(a.0).zip_map(self.val(b.0), |x, y| x - y)?;
        Ok(self.push(v, Op::Sub(a.0, b.0), &[a.0, b.0]))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.val(a.0).zip_map(self.val(b.0), |x, y| x * y)?;
        Ok(self.push(v, Op::Mul(a.0, b.0), &[a.0, b.0]))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        let v = self.val(a.0).zip_map(self.val(b.0), |x, y| x / y)?;
        Ok(self.push(v, Op::Div(a.0, b.0), &[a.0, b.0]))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a.0).map(|x| c * x);
        self.push(v, Op::Scale(a.0, c), &[a.0])
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.val(a.0).map(|x| x + c);
        self.push(v, Op::AddScalar(a.0), &[a.0])
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.val(a.0).map(|x| x * x);
        self.push(v, Op::Square(a.0), &[a.0])
    }

    pub fn log(&mut self, a: Var) -> Var {
        let v = self.val(a.0).map(f64::ln);
        self.push(v, Op::Log(a.0), &[a.0])
    }

    pub fn softplus(&mut self, a: Var) -> Var {
        let v = self.val(a.0).map(softplus);
        self.push(v, Op::Softplus(a.0), &[a.0])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = ops::relu(self.val(a.0));
        self.push(v, Op::Relu(a.0), &[a.0])
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let v = Array::scalar(self.val(a.0).sum());
        self.push(v, Op::Sum(a.0), &[a.0])
    }

    /// Same-padded convolution of a `[n,h,w,cin]` batch with a
    /// `[kh,kw,cin,cout]` kernel (no bias; see [`Tape::add_bias`]).
    pub fn conv2d(&mut self, input: Var, kernel: Var) -> Result<Var> {
        let ext = self.val(input.0).extents();
        if ext.len() != 4 {
            return Err(Error::shape(format!(
                "tape conv2d wants a [n,h,w,c] batch, got {ext:?}"
            )));
        }
        let n = ext[0];
        let geom = ConvGeom::new(&ext[1..], self.val(kernel.0).extents())?;
        let mut out = vec![0.0; n * geom.out_len()];
        geom.forward(n, self.val(input.0).data(), self.val(kernel.0).data(), &mut out);
        let v = Array::new(vec![n, geom.h, geom.w, geom.cout], out)?;
        Ok(self.push(
            v,
            Op::Conv2d {
                input: input.0,
                kernel: kernel.0,
                geom,
                n,
            },
            &[input.0, kernel.0],
        ))
    }

    pub fn maxpool2d(&mut self, input: Var) -> Result<Var> {
        let (v, argmax) = ops::maxpool_with_argmax(self.val(input.0))?;
        Ok(self.push(
            v,
            Op::MaxPool {
                input: input.0,
                argmax,
            },
            &[input.0],
        ))
    }

    /// `[m,k]·[k,n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k, n) = match (self.val(a.0).extents(), self.val(b.0).extents()) {
            (&[m, k], &[k2, n]) if k == k2 => (m, k, n),
            (ea, eb) => {
                return Err(Error::shape(format!(
                    "matmul extents incompatible: {ea:?} x {eb:?}"
                )))
            }
        };
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.val(a.0).data(), false, self.val(b.0).data(), false, 0.0, &mut out);
        let v = Array::new(vec![m, n], out)?;
        Ok(self.push(v, Op::MatMul { a: a.0, b: b.0, m, k, n }, &[a.0, b.0]))
    }

    /// Adds a `[c]` bias along the trailing axis.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let c = *self.val(x.0).extents().last().unwrap_or(&0);
        if self.val(bias.0).extents() != [c] {
            return Err(Error::shape(format!(
                "bias {:?} does not match trailing extent {c}",
                self.val(bias.0).extents()
            )));
        }
        let mut v = self.val(x.0).clone();
        ops::add_channel_bias(v.data_mut(), self.val(bias.0).data());
        Ok(self.push(v, Op::AddBias { x: x.0, bias: bias.0 }, &[x.0, bias.0]))
    }

    /// Multiplies `x[i, .., c]` by the constant `signs[i, c]`.
    pub fn channel_signs(&mut self, x: Var, signs: Array) -> Result<Var> {
        let ext = self.val(x.0).extents();
        let (n, c) = (ext[0], *ext.last().unwrap_or(&0));
        if ext.len() < 2 || signs.extents() != [n, c] {
            return Err(Error::shape(format!(
                "signs {:?} incompatible with activation {ext:?}",
                signs.extents()
            )));
        }
        let mut v = self.val(x.0).clone();
        apply_channel_signs(v.data_mut(), n, c, signs.data());
        Ok(self.push(v, Op::ChannelSigns { x: x.0, signs }, &[x.0]))
    }

    pub fn reshape(&mut self, x: Var, extents: Vec<usize>) -> Result<Var> {
        let v = self.val(x.0).clone().reshape(extents)?;
        Ok(self.push(v, Op::Reshape(x.0), &[x.0]))
    }

    pub fn softmax(&mut self, logits: Var) -> Result<Var> {
        let v = ops::softmax(self.val(logits.0))?;
        Ok(self.push(v, Op::Softmax(logits.0), &[logits.0]))
    }

    /// `-Σ y·ln(max(p, PROB_FLOOR))` over a batch of one-hot rows.
    pub fn nll_one_hot(&mut self, probs: Var, labels: Array) -> Result<Var> {
        let loss = super::nll_one_hot_value(self.val(probs.0), &labels)?;
        Ok(self.push(
            Array::scalar(loss),
            Op::NllOneHot {
                probs: probs.0,
                labels,
            },
            &[probs.0],
        ))
    }

    /// `nll_one_hot(softmax(logits))` fused and evaluated from logits. The
    /// gradient `softmax(z) - y` stays informative for confidently wrong
    /// rows, where the floored form has none.
    pub fn softmax_nll(&mut self, logits: Var, labels: Array) -> Result<Var> {
        let loss = super::softmax_nll_value(self.val(logits.0), &labels)?;
        Ok(self.push(
            Array::scalar(loss),
            Op::SoftmaxNll {
                logits: logits.0,
                labels,
            },
            &[logits.0],
        ))
    }

    /// Closed-form `Σ KL(N(mu, sigma²) ‖ N(mean, std²))`.
    pub fn kl_gaussian(&mut self, mu: Var, sigma: Var, mean: f64, std: f64) -> Result<Var> {
        let (m, s) = (self.val(mu.0), self.val(sigma.0));
        same_extents(m, s, "kl_gaussian")?;
        if let Some(bad) = s.data().iter().find(|&&x| !(x > 0.0)) {
            return Err(Error::numeric(format!("posterior sigma must be positive, got {bad}")));
        }
        let kl = kl_sum(m.data(), s.data(), mean, std);
        Ok(self.push(
            Array::scalar(kl),
            Op::KlGaussian {
                mu: mu.0,
                sigma: sigma.0,
                mean,
                std,
            },
            &[mu.0, sigma.0],
        ))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn gradient(&self, loss: Var) -> Result<Gradients> {
        let seed = self.val(loss.0);
        if seed.len() != 1 {
            return Err(Error::contract(format!(
                "gradient needs a scalar loss, got extents {:?}",
                seed.extents()
            )));
        }
        let mut grads: Vec<Option<Array>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::full(seed.extents(), 1.0));

        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad {
                continue;
            }
            let g = match &node.op {
                Op::Leaf => continue,
                _ => match grads[i].take() {
                    Some(g) => g,
                    None => continue,
                },
            };
            self.backward_node(i, g, &mut grads)?;
        }

        let grads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| match (&n.op, n.needs_grad) {
                (Op::Leaf, true) => Some(
                    grads[i]
                        .take()
                        .unwrap_or_else(|| Array::zeros(n.value.extents())),
                ),
                _ => None,
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    fn backward_node(&self, i: usize, g: Array, grads: &mut [Option<Array>]) -> Result<()> {
        let out = &self.nodes[i].value;
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.clone());
                }
                if self.wants(b) {
                    accumulate(grads, b, g);
                }
            }
            Op::Sub(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.clone());
                }
                if self.wants(b) {
                    accumulate(grads, b, g.map(|x| -x));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.zip_map(self.val(b), |g, y| g * y)?);
                }
                if self.wants(b) {
                    accumulate(grads, b, g.zip_map(self.val(a), |g, x| g * x)?);
                }
            }
            Op::Div(a, b) => {
                if self.wants(a) {
                    accumulate(grads, a, g.zip_map(self.val(b), |g, y| g / y)?);
                }
                if self.wants(b) {
                    // d(x/y)/dy = -(x/y)/y
                    let q = out.zip_map(self.val(b), |q, y| -q / y)?;
                    accumulate(grads, b, g.zip_map(&q, |g, d| g * d)?);
                }
            }
            Op::Scale(a, c) => accumulate(grads, a, g.map(|x| c * x)),
            Op::AddScalar(a) => accumulate(grads, a, g),
            Op::Square(a) => accumulate(grads, a, g.zip_map(self.val(a), |g, x| 2.0 * x * g)?),
            Op::Log(a) => accumulate(grads, a, g.zip_map(self.val(a), |g, x| g / x)?),
            Op::Softplus(a) => {
                accumulate(grads, a, g.zip_map(self.val(a), |g, x| g * sigmoid(x))?)
            }
            Op::Relu(a) => accumulate(
                grads,
                a,
                g.zip_map(self.val(a), |g, x| if x > 0.0 { g } else { 0.0 })?,
            ),
            Op::Sum(a) => {
                let g0 = g.data()[0];
                accumulate(grads, a, Array::full(self.val(a).extents(), g0));
            }
            Op::Conv2d {
                input,
                kernel,
                geom,
                n,
            } => {
                let x = self.val(input);
                let k = self.val(kernel);
                let mut dx = self.wants(input).then(|| Array::zeros(x.extents()));
                let mut dk = self.wants(kernel).then(|| Array::zeros(k.extents()));
                geom.backward(
                    n,
                    x.data(),
                    k.data(),
                    g.data(),
                    dx.as_mut().map(|a| a.data_mut()),
                    dk.as_mut().map(|a| a.data_mut()),
                );
                if let Some(dx) = dx {
                    accumulate(grads, input, dx);
                }
                if let Some(dk) = dk {
                    accumulate(grads, kernel, dk);
                }
            }
            Op::MaxPool { input, ref argmax } => {
                let mut dx = Array::zeros(self.val(input).extents());
                let d = dx.data_mut();
                for (&src, &gv) in argmax.iter().zip(g.data()) {
                    d[src] += gv;
                }
                accumulate(grads, input, dx);
            }
            Op::MatMul { a, b, m, k, n } => {
                if self.wants(a) {
                    let mut da = vec![0.0; m * k];
                    gemm(m, n, k, g.data(), false, self.val(b).data(), true, 0.0, &mut da);
                    accumulate(grads, a, Array::new(vec![m, k], da)?);
                }
                if self.wants(b) {
                    let mut db = vec![0.0; k * n];
                    gemm(k, m, n, self.val(a).data(), true, g.data(), false, 0.0, &mut db);
                    accumulate(grads, b, Array::new(vec![k, n], db)?);
                }
            }
            Op::AddBias { x, bias } => {
                if self.wants(bias) {
                    let c = self.val(bias).len();
                    let mut db = vec![0.0; c];
                    for row in g.data().chunks_exact(c) {
                        for (d, v) in db.iter_mut().zip(row) {
                            *d += v;
                        }
                    }
                    accumulate(grads, bias, Array::from_vec(db));
                }
                if self.wants(x) {
                    accumulate(grads, x, g);
                }
            }
            Op::ChannelSigns { x, ref signs } => {
                let [n, c] = signs.extents() else {
                    unreachable!("validated at record time")
                };
                let mut dx = g;
                apply_channel_signs(dx.data_mut(), *n, *c, signs.data());
                accumulate(grads, x, dx);
            }
            Op::Reshape(a) => {
                accumulate(grads, a, g.reshape(self.val(a).extents().to_vec())?);
            }
            Op::Softmax(a) => {
                let cols = out.extents()[1];
                let mut da = g.into_data();
                for (drow, prow) in da.chunks_exact_mut(cols).zip(out.data().chunks_exact(cols)) {
                    let dot: f64 = drow.iter().zip(prow).map(|(g, p)| g * p).sum();
                    for (d, p) in drow.iter_mut().zip(prow) {
                        *d = p * (*d - dot);
                    }
                }
                accumulate(grads, a, Array::new(out.extents().to_vec(), da)?);
            }
            Op::NllOneHot { probs, ref labels } => {
                let g0 = g.data()[0];
                let dp = self.val(probs).zip_map(labels, |p, y| {
                    if y != 0.0 && p > PROB_FLOOR {
                        -g0 * y / p
                    } else {
                        0.0
                    }
                })?;
                accumulate(grads, probs, dp);
            }
            Op::SoftmaxNll { logits, ref labels } => {
                let g0 = g.data()[0];
                let p = ops::softmax(self.val(logits))?;
                accumulate(grads, logits, p.zip_map(labels, |p, y| g0 * (p - y))?);
            }
            Op::KlGaussian {
                mu,
                sigma,
                mean,
                std,
            } => {
                let g0 = g.data()[0];
                let var = std * std;
                if self.wants(mu) {
                    accumulate(grads, mu, self.val(mu).map(|m| g0 * (m - mean) / var));
                }
                if self.wants(sigma) {
                    accumulate(grads, sigma, self.val(sigma).map(|s| g0 * (s / var - 1.0 / s)));
                }
            }
        }
        Ok(())
    }
}

fn apply_channel_signs(data: &mut [f64], n: usize, c: usize, signs: &[f64]) {
    if n == 0 || c == 0 {
        return;
    }
    let per_image = data.len() / n;
    for (img, s) in data.chunks_exact_mut(per_image).zip(signs.chunks_exact(c)) {
        for px in img.chunks_exact_mut(c) {
            for (v, sv) in px.iter_mut().zip(s) {
                *v *= sv;
            }
        }
    }
}

pub(crate) fn kl_sum(mu: &[f64], sigma: &[f64], mean: f64, std: f64) -> f64 {
    let var = std * std;
    mu.iter()
        .zip(sigma)
        .map(|(&m, &s)| (std / s).ln() + (s * s + (m - mean) * (m - mean)) / (2.0 * var) - 0.5)
        .sum()
}

fn accumulate(grads: &mut [Option<Array>], i: usize, g: Array) {
    match &mut grads[i] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

/// Gradients of a scalar loss with respect to every trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    /// Gradient for a parameter created with [`Tape::param`]; `None` for
    /// constants and intermediate nodes.
    pub fn wrt(&self, v: Var) -> Option<&Array> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Array> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}
