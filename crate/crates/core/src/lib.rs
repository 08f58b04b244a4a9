//! Spatially varying empirical Bayes estimation for area-level models whose
//! first stage is a natural exponential family with quadratic variance
//! function and whose prior is conjugate.
//!
//! Hyperparameters are fitted by kernel-weighted local likelihood at every
//! area, the bandwidth is chosen by leave-one-out cross validation, and
//! uncertainty is assessed by parametric bootstrap.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bandwidth;
pub mod data;
pub mod error;
pub mod family;
pub mod local_fit;
pub mod rng;
pub mod sim;
pub mod special;
pub mod uncertainty;

pub use data::AreaRecord;
pub use error::{Error, Result};
pub use family::{Family, HyperParams};
pub use local_fit::{FitOptions, KernelConfig, LocalFit, SvFit};
pub use rng::Stream;

/// `(0..n).map(f)` collected in order, spread over threads when enabled.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}
