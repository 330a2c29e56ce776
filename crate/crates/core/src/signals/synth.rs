//! Synthetic bearing-vibration fleet.
//!
//! Every signal carries broadband sensor noise and a shaft tone whose speed
//! sweeps linearly through 20-40 Hz (up or down, alternating by signal).
//! Fault class `k` adds impacts at `order_k` times the shaft rate, each
//! ringing at a class resonance `res_k` with exponential decay. Orders grow
//! geometrically by 1.5 and resonances are evenly spaced, so classes are
//! separable by construction.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::record::{SignalRecord, DEFAULT_SAMPLE_RATE};
use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded, Rng};

const NOISE_STD: f64 = 0.005;
const SHAFT_AMPLITUDE: f64 = 0.01;
const IMPACT_AMPLITUDE: f64 = 0.03;
const BASE_ORDER: f64 = 20.0;
const ORDER_RATIO: f64 = 1.5;
/// Highest resonance, as a fraction of Nyquist.
const TOP_RESONANCE: f64 = 0.8;
const RING_DECAY_S: f64 = 1.5e-4;

/// Impact rate per shaft revolution for fault class `k ≥ 1`.
pub fn fault_order(k: usize) -> f64 {
    BASE_ORDER * ORDER_RATIO.powi(k as i32 - 1)
}

/// Ringing frequency of fault class `k ≥ 1` among `n_faults`.
pub fn fault_resonance(k: usize, n_faults: usize, sample_rate: f64) -> f64 {
    TOP_RESONANCE * (sample_rate / 2.0) * k as f64 / n_faults as f64
}

pub fn condition_name(class: usize) -> String {
    if class == 0 {
        "healthy".to_string()
    } else {
        format!("fault_{class}")
    }
}

/// `signals_per_class` records of `duration_s` seconds for each of
/// `n_classes` classes, at 200 kHz. Samples are rounded to f32 so that the
/// raw file format stores them exactly.
pub fn generate_synthetic_fleet(
    n_classes: usize,
    signals_per_class: usize,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<SignalRecord>> {
    if n_classes < 2 {
        return Err(Error::contract("synthetic fleet needs at least 2 classes"));
    }
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::contract(format!("duration must be positive, got {duration_s}")));
    }
    let fs = DEFAULT_SAMPLE_RATE;
    let t = (duration_s * fs).round() as usize;
    if t == 0 {
        return Err(Error::contract("duration shorter than one sample"));
    }
    let mut out = Vec::with_capacity(n_classes * signals_per_class);
    for class in 0..n_classes {
        for j in 0..signals_per_class {
            let mut rng = seeded(derive_seed(seed, "fleet", (class * signals_per_class + j) as u64));
            let samples = synth_signal(class, n_classes - 1, j % 2 == 0, t, fs, &mut rng);
            out.push(SignalRecord::new(samples, fs, class, condition_name(class))?);
        }
    }
    Ok(out)
}

fn synth_signal(class: usize, n_faults: usize, increasing: bool, t: usize, fs: f64, rng: &mut Rng) -> Vec<f64> {
    let low = Uniform::new(20.0, 30.0).expect("valid range");
    let high = Uniform::new(30.0, 40.0).expect("valid range");
    let (mut f0, mut f1) = (low.sample(rng), high.sample(rng));
    if !increasing {
        std::mem::swap(&mut f0, &mut f1);
    }
    let duration = t as f64 / fs;
    let shaft_phase0: f64 = rng.random::<f64>();
    // Revolutions elapsed at time s.
    let revs = |s: f64| f0 * s + (f1 - f0) * s * s / (2.0 * duration) + shaft_phase0;

    let mut x: Vec<f64> = (0..t)
        .map(|k| {
            let s = k as f64 / fs;
            let n: f64 = rng.sample(StandardNormal);
            SHAFT_AMPLITUDE * (2.0 * PI * revs(s)).sin() + NOISE_STD * n
        })
        .collect();

    if class > 0 {
        let order = fault_order(class);
        let res = fault_resonance(class, n_faults, fs);
        let ring = (5.0 * RING_DECAY_S * fs) as usize;
        let impact_offset: f64 = rng.random::<f64>();
        // Impacts fall where order·revs crosses an integer.
        let mut next = (order * revs(0.0) + impact_offset).floor() + 1.0;
        for k in 0..t {
            let s = k as f64 / fs;
            if order * revs(s) + impact_offset < next {
                continue;
            }
            next += 1.0;
            let amp = IMPACT_AMPLITUDE * (1.0 + 0.2 * rng.sample::<f64, _>(StandardNormal)).max(0.2);
            let phase: f64 = 2.0 * PI * rng.random::<f64>();
            for (i, v) in x[k..(k + ring).min(t)].iter_mut().enumerate() {
                let dt = i as f64 / fs;
                *v += amp * (-dt / RING_DECAY_S).exp() * (2.0 * PI * res * dt + phase).sin();
            }
        }
    }
    x.into_iter().map(|v| v as f32 as f64).collect()
}

/// I.i.d. uniform `[-1, 1]` images `[count, 33, 33, 1]`.
pub fn generate_uniform_ood(count: usize, seed: u64) -> Result<Array> {
    generate_uniform_images(count, [33, 33, 1], seed)
}

pub fn generate_uniform_images(count: usize, extents: [usize; 3], seed: u64) -> Result<Array> {
    if count == 0 {
        return Err(Error::contract("uniform OOD count must be >= 1"));
    }
    let mut rng = seeded(derive_seed(seed, "uniform_ood", 0));
    let dist = Uniform::new_inclusive(-1.0, 1.0).expect("valid range");
    let n = count * extents.iter().product::<usize>();
    let data = (0..n).map(|_| dist.sample(&mut rng)).collect();
    Array::new(vec![count, extents[0], extents[1], extents[2]], data)
}
