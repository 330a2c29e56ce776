use super::measures::PredictiveSamples;
use crate::bayes::{Pbcnn, PosteriorSampler};
use crate::diffcore::{softmax, Array};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, seeded};

/// Default number of stochastic forward passes.
pub const DEFAULT_MC_SAMPLES: usize = 100;

fn check(model: &Pbcnn, m: usize) -> Result<()> {
    if !model.is_trained() {
        return Err(Error::contract("predict_mc needs a trained model"));
    }
    if m < 2 {
        return Err(Error::contract(format!("predict_mc needs M >= 2, got {m}")));
    }
    Ok(())
}

fn draw(sampler: &PosteriorSampler<'_>, image: &Array, m: usize, seed: u64) -> Result<PredictiveSamples> {
    let mut rng = seeded(seed);
    let mut rows = Vec::with_capacity(m);
    for _ in 0..m {
        let logits = sampler.sample_logits(image, &mut rng)?;
        rows.extend_from_slice(softmax(&logits)?.data());
    }
    let n = rows.len() / m;
    PredictiveSamples::new(Array::new(vec![m, n], rows)?)
}

/// `M` independent posterior draws for one `[h,w,c]` image.
pub fn predict_mc(model: &Pbcnn, image: &Array, m: usize, seed: u64) -> Result<PredictiveSamples> {
    check(model, m)?;
    let mut ext = vec![1];
    ext.extend_from_slice(image.extents());
    let batch = image.clone().reshape(ext)?;
    draw(&PosteriorSampler::new(model), &batch, m, seed)
}

/// [`predict_mc`] for each row of `[n,h,w,c]`; image `i` uses the stream
/// `derive_seed(base_seed, "mc", i)`, so results do not depend on batching.
pub fn predict_mc_batch(model: &Pbcnn, images: &Array, m: usize, base_seed: u64) -> Result<Vec<PredictiveSamples>> {
    check(model, m)?;
    let n = model.check_images(images)?;
    let sampler = PosteriorSampler::new(model);
    (0..n)
        .map(|i| {
            let img = images.select_rows(&[i]);
            draw(&sampler, &img, m, derive_seed(base_seed, "mc", i as u64))
        })
        .collect()
}
