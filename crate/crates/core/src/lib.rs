//! Cross-fitted one-step estimation of treatment effects on cause-specific
//! years of life lost under competing risks and right censoring.

pub mod eif;
pub mod error;
pub mod estimators;
pub mod learners;
pub mod lifeyears;
pub mod rng;
pub mod simlab;
pub mod survdata;

pub use error::{Error, Result};

/// Ordered map over `0..n`, in parallel when the `parallel` feature is on.
#[cfg(feature = "parallel")]
pub(crate) fn par_map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
pub(crate) fn par_map<R: Send>(n: usize, f: impl Fn(usize) -> R + Sync + Send) -> Vec<R> {
    (0..n).map(f).collect()
}
