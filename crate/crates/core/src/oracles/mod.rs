//! Exact reference models: a discrete IO-HMM with its Bayes filter and
//! extended observation tensors, and a linear-Gaussian system with its
//! Kalman filter.

mod embedding;
mod iohmm;
mod lds;

pub use embedding::iohmm_embedding;
pub use iohmm::{iohmm_exact_filter, iohmm_extended_obs, iohmm_predictive_state, IoHmm};
pub use lds::{kalman_filter_exact, lds_gamma, lds_u, KalmanOutput, Lds};

pub(crate) use lds::warn_if_unstable;
