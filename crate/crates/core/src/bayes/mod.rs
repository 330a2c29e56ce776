//! Variational Bayesian CNN: mean-field Gaussian posteriors over every
//! weight and bias, flipout layers, ELBO training and checkpoints.

mod checkpoint;
mod dataset;
mod flipout;
mod loss;
mod network;
mod train;
mod variational;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use dataset::Dataset;
pub use flipout::{flipout_apply, flipout_forward, FlipoutNoise};
pub use loss::{elbo_detail, elbo_gradients, elbo_loss, nll_one_hot, ElboDetail, ElboTerms, KlMode, LayerGrads};
pub use network::{
    build_pbcnn, LayerKind, LayerSpec, NetworkSpec, Pbcnn, PosteriorSampler, VariationalLayer,
    INIT_MU_STD, INIT_SIGMA,
};
pub use train::{accuracy, train, train_with_progress, EpochRecord, TrainConfig};
pub(crate) use train::argmax;
pub use variational::{
    kl_from_sigma, kl_mean_field, rho_for_sigma, softplus_sigma, GaussianVariational, PriorSpec,
};
