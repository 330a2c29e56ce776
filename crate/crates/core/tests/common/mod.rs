//! Independent reference implementations shared by the integration tests.
//! Nothing here calls the code under test except to build inputs.

#![allow(dead_code)]

use bayesdiag::diffcore::{Array, Tape, Var};
use bayesdiag::rng::{seeded, Rng};
use rand::Rng as _;
use rand_distr::{StandardNormal, Uniform};

pub fn normal_array(extents: &[usize], rng: &mut Rng) -> Array {
    let n = extents.iter().product();
    Array::new(extents.to_vec(), (0..n).map(|_| rng.sample(StandardNormal)).collect()).unwrap()
}

pub fn uniform_array(extents: &[usize], lo: f64, hi: f64, rng: &mut Rng) -> Array {
    let n = extents.iter().product();
    let d = Uniform::new(lo, hi).unwrap();
    Array::new(extents.to_vec(), (0..n).map(|_| rng.sample(d)).collect()).unwrap()
}

/// Values bounded away from zero, for inputs that pass through kinks.
pub fn off_zero_array(extents: &[usize], rng: &mut Rng) -> Array {
    let n = extents.iter().product();
    let data = (0..n)
        .map(|_| {
            let m = 0.1 + rng.random::<f64>();
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Array::new(extents.to_vec(), data).unwrap()
}

/// Pairwise-distinct values (gaps of at least 0.05), for max pooling.
pub fn distinct_array(extents: &[usize], rng: &mut Rng) -> Array {
    let n: usize = extents.iter().product();
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        idx.swap(i, rng.random_range(0..=i));
    }
    let data = idx.iter().map(|&k| 0.1 * k as f64 - 0.05 * n as f64 + 0.01 * rng.random::<f64>()).collect();
    Array::new(extents.to_vec(), data).unwrap()
}

pub fn one_hot(classes: &[usize], n: usize) -> Array {
    let mut a = Array::zeros(&[classes.len(), n]);
    for (i, &c) in classes.iter().enumerate() {
        a.set(&[i, c], 1.0);
    }
    a
}

/// Normwise relative error `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_error(a: &[f64], b: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = norm(a).max(norm(b));
    if scale == 0.0 {
        0.0
    } else {
        norm(&diff) / scale
    }
}

/// Up to `cap` coordinates of an array of length `n`.
pub fn probe_indices(n: usize, cap: usize, rng: &mut Rng) -> Vec<usize> {
    if n <= cap {
        return (0..n).collect();
    }
    (0..cap).map(|_| rng.random_range(0..n)).collect()
}

/// Gradient check of an op `f(inputs) -> tensor` through the scalar
/// `Σ f(inputs) ∘ r` for a fixed random weighting `r`. Returns the worst
/// relative error over all inputs.
pub fn check_op(
    inputs: &[Array],
    f: &dyn Fn(&mut Tape, &[Var]) -> Var,
    seed: u64,
) -> f64 {
    let mut rng = seeded(seed ^ 0xA5A5);
    let weighting: std::cell::RefCell<Option<Array>> = std::cell::RefCell::new(None);
    let eval = |vals: &[Array], want_grad: bool| -> (f64, Vec<Array>) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|v| tape.param(v.clone())).collect();
        let out = f(&mut tape, &vars);
        let ext = tape.value(out).extents().to_vec();
        let mut w = weighting.borrow_mut();
        let r = w.get_or_insert_with(|| normal_array(&ext, &mut seeded(seed ^ 0x5A5A))).clone();
        let rc = tape.constant(r);
        let prod = tape.mul(out, rc).unwrap();
        let loss = tape.sum(prod);
        let value = tape.value(loss).data()[0];
        if !want_grad {
            return (value, Vec::new());
        }
        let g = tape.gradient(loss).unwrap();
        let grads = vars
            .iter()
            .zip(vals)
            .map(|(&v, a)| g.wrt(v).cloned().unwrap_or_else(|| Array::zeros(a.extents())))
            .collect();
        (value, grads)
    };
    let (_, analytic) = eval(inputs, true);
    let h = 1e-6;
    let mut worst = 0.0f64;
    for (k, input) in inputs.iter().enumerate() {
        let idx = probe_indices(input.len(), 24, &mut rng);
        let mut numeric = Vec::with_capacity(idx.len());
        for &j in &idx {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[j] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[j] -= h;
            numeric.push((eval(&plus, false).0 - eval(&minus, false).0) / (2.0 * h));
        }
        let a: Vec<f64> = idx.iter().map(|&j| analytic[k].data()[j]).collect();
        worst = worst.max(rel_error(&a, &numeric));
    }
    worst
}

/// Composite Simpson quadrature of `∫ q ln(q/p)` for Gaussians, over
/// `mu ± 14 sigma`.
pub fn kl_quadrature(mu: f64, sigma: f64, prior_mean: f64, prior_std: f64) -> f64 {
    let pdf = |x: f64, m: f64, s: f64| {
        (-0.5 * ((x - m) / s).powi(2)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
    };
    let log_pdf = |x: f64, m: f64, s: f64| -0.5 * ((x - m) / s).powi(2) - s.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
    let (a, b) = (mu - 14.0 * sigma, mu + 14.0 * sigma);
    let n = 20_000;
    let h = (b - a) / n as f64;
    let f = |x: f64| pdf(x, mu, sigma) * (log_pdf(x, mu, sigma) - log_pdf(x, prior_mean, prior_std));
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Mann-Whitney probability that an OOD score exceeds an ID score, ties
/// counted as one half, by direct pairwise comparison.
pub fn mann_whitney(scores: &[f64], is_id: &[bool]) -> f64 {
    let id: Vec<f64> = scores.iter().zip(is_id).filter(|(_, &b)| b).map(|(&s, _)| s).collect();
    let ood: Vec<f64> = scores.iter().zip(is_id).filter(|(_, &b)| !b).map(|(&s, _)| s).collect();
    let mut wins = 0.0;
    for &o in &ood {
        for &i in &id {
            if o > i {
                wins += 1.0;
            } else if o == i {
                wins += 0.5;
            }
        }
    }
    wins / (id.len() * ood.len()) as f64
}

/// Loop-level reference values of the four uncertainty measures for an
/// `M x N` row-major probability matrix: (p*, H in bits, V_T, V_c, R_c).
pub fn brute_measures(p: &[Vec<f64>]) -> (Vec<f64>, f64, f64, f64, f64) {
    let m = p.len();
    let n = p[0].len();
    let mut mean = vec![0.0; n];
    for i in 0..n {
        let mut s = 0.0;
        for row in p {
            s += row[i];
        }
        mean[i] = s / m as f64;
    }
    let mut h = 0.0;
    for &q in &mean {
        if q > 0.0 {
            h -= q * q.log2();
        }
    }
    let mut var_sum = 0.0;
    let mut var_max = 0.0f64;
    let mut range_max = 0.0f64;
    for i in 0..n {
        let mut v = 0.0;
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for row in p {
            v += (row[i] - mean[i]) * (row[i] - mean[i]);
            lo = lo.min(row[i]);
            hi = hi.max(row[i]);
        }
        v /= (m - 1) as f64;
        var_sum += v;
        var_max = var_max.max(v);
        range_max = range_max.max(hi - lo);
    }
    (mean, h, var_sum.sqrt(), var_max.sqrt(), range_max)
}

/// Random `M x N` probability matrix; some rows are sharply peaked and a few
/// entries are exactly zero so the edge cases get exercised.
pub fn random_prob_matrix(m: usize, n: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..m)
        .map(|_| {
            let temp = if rng.random::<f64>() < 0.3 { 8.0 } else { 1.0 };
            let mut row: Vec<f64> = (0..n)
                .map(|_| {
                    if rng.random::<f64>() < 0.1 {
                        0.0
                    } else {
                        (temp * rng.sample::<f64, _>(StandardNormal)).exp()
                    }
                })
                .collect();
            if row.iter().all(|&v| v == 0.0) {
                row[0] = 1.0;
            }
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= s);
            row
        })
        .collect()
}

/// Error rate among the examples with uncertainty `<= threshold`, by
/// scanning the whole set.
pub fn brute_risk(uncertainty: &[f64], correct: &[bool], threshold: f64) -> (f64, f64) {
    let kept: Vec<bool> = uncertainty
        .iter()
        .zip(correct)
        .filter(|(&u, _)| u <= threshold)
        .map(|(_, &c)| c)
        .collect();
    let coverage = kept.len() as f64 / uncertainty.len() as f64;
    let risk = if kept.is_empty() {
        0.0
    } else {
        kept.iter().filter(|&&c| !c).count() as f64 / kept.len() as f64
    };
    (risk, coverage)
}
