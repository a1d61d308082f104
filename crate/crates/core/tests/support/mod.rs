#![allow(dead_code)]

pub mod oracle;
pub mod scenario;

use mlca_core::EmTrace;

/// Largest drop between consecutive log-likelihoods over all traces.
pub fn worst_decrease<'a>(traces: impl IntoIterator<Item = &'a EmTrace>) -> f64 {
    traces.into_iter().map(EmTrace::max_decrease).fold(0.0, f64::max)
}
