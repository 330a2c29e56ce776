//! Monte-Carlo predictive sampling and the four scalar uncertainty
//! measures computed from it.

mod dump;
mod measures;
mod predict;

pub use dump::{read_uncertainty_csv, uncertainty_csv, write_uncertainty_csv, UncertaintyRecord};
pub use measures::{
    classwise_range_max, classwise_std_max, mean_probability, predictive_entropy, total_std, Measure,
    PredictiveSamples, UncertaintySummary,
};
pub use predict::{predict_mc, predict_mc_batch, DEFAULT_MC_SAMPLES};
