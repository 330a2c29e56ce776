//! Dense f64 arrays, the handful of CNN primitives the PBCNN needs, a
//! reverse-mode tape over them, and Adam.

mod adam;
mod array;
pub(crate) mod ops;
mod tape;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use array::Array;
pub use ops::{conv2d, dense_affine, maxpool2d, relu, softmax};
pub use tape::{softplus, Gradients, Tape, Var, PROB_FLOOR};

pub(crate) use tape::kl_sum;

use crate::error::{Error, Result};

fn check_one_hot(values: &Array, labels: &Array, what: &str) -> Result<usize> {
    if values.extents() != labels.extents() || values.ndim() != 2 {
        return Err(Error::shape(format!(
            "nll: {what} {:?} and labels {:?} must be matching [n,N]",
            values.extents(),
            labels.extents()
        )));
    }
    let cols = labels.extents()[1].max(1);
    for yrow in labels.data().chunks_exact(cols) {
        let ones = yrow.iter().filter(|&&y| y == 1.0).count();
        let zeros = yrow.iter().filter(|&&y| y == 0.0).count();
        if ones != 1 || ones + zeros != yrow.len() {
            return Err(Error::contract(format!("label row {yrow:?} is not one-hot")));
        }
    }
    Ok(cols)
}

/// `-Σ_rows Σ_i y_i·ln(max(p_i, PROB_FLOOR))`, natural log.
pub(crate) fn nll_one_hot_value(probs: &Array, labels: &Array) -> Result<f64> {
    check_one_hot(probs, labels, "probabilities")?;
    Ok(probs
        .data()
        .iter()
        .zip(labels.data())
        .filter(|(_, &y)| y == 1.0)
        .map(|(&p, _)| -p.max(PROB_FLOOR).ln())
        .sum())
}

/// `Σ_rows (logsumexp(z) - z_label)`: the NLL of `softmax(z)` computed
/// from logits, so it never reaches the probability floor.
pub(crate) fn softmax_nll_value(logits: &Array, labels: &Array) -> Result<f64> {
    let cols = check_one_hot(logits, labels, "logits")?;
    if logits.data().iter().any(|x| !x.is_finite()) {
        return Err(Error::numeric("cross-entropy received a non-finite logit"));
    }
    let mut total = 0.0;
    for (zrow, yrow) in logits.data().chunks_exact(cols).zip(labels.data().chunks_exact(cols)) {
        let max = zrow.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + zrow.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        total += zrow.iter().zip(yrow).map(|(z, y)| y * (lse - z)).sum::<f64>();
    }
    Ok(total)
}
